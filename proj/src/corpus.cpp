#include "vlink/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <unordered_set>

#include "vlink/error.hpp"
#include "vlink/util.hpp"

namespace vlink::corpus {

using nlohmann::json;

Ad make_ad(std::string id, std::string market, std::string vendor, std::string title,
           std::string description) {
  Ad ad;
  ad.id = std::move(id);
  ad.market = std::move(market);
  ad.vendor_norm = util::to_lower_ascii(vendor);
  ad.vendor_raw = std::move(vendor);
  ad.title = std::move(title);
  ad.description = std::move(description);
  ad.merged_text = ad.title + " " + std::string(kSeparator) + " " + ad.description;
  ad.token_count = util::split_whitespace(ad.merged_text).size();
  return ad;
}

Corpus::Corpus(std::vector<Ad> ads, std::string provenance)
    : ads_(std::move(ads)), provenance_(std::move(provenance)) {
  for (const auto& ad : ads_) markets_.insert(ad.market);
}

std::vector<std::string> Corpus::vendors() const {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& ad : ads_) {
    if (seen.insert(ad.vendor_norm).second) out.push_back(ad.vendor_norm);
  }
  return out;
}

std::map<std::string, std::size_t> Corpus::vendor_counts() const {
  std::map<std::string, std::size_t> out;
  for (const auto& ad : ads_) ++out[ad.vendor_norm];
  return out;
}

std::vector<std::size_t> Corpus::indices_of(std::string_view vendor, std::string_view market) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < ads_.size(); ++i) {
    if (ads_[i].vendor_norm == vendor && ads_[i].market == market) out.push_back(i);
  }
  return out;
}

Format parse_format(std::string_view name) {
  if (name == "jsonl") return Format::jsonl;
  if (name == "csv") return Format::csv;
  throw ConfigError("unknown corpus format: " + std::string(name));
}

Format format_from_path(std::string_view path) {
  return path.size() >= 4 && path.substr(path.size() - 4) == ".csv" ? Format::csv : Format::jsonl;
}

namespace {

constexpr std::array<std::string_view, 4> kRequired = {"market", "vendor", "title", "description"};

std::string field_string(const json& v, std::size_t line, std::string_view key) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  throw RecordError(line, "field '" + std::string(key) + "' must be a string");
}

std::vector<Ad> parse_jsonl(std::string_view bytes, std::string_view id_prefix) {
  std::vector<Ad> ads;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    std::size_t end = bytes.find('\n', pos);
    if (end == std::string_view::npos) end = bytes.size();
    std::string_view line = bytes.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (util::split_whitespace(line).empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw RecordError(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) throw RecordError(line_no, "record is not a JSON object");
    for (auto key : kRequired) {
      if (!obj.contains(key)) throw RecordError(line_no, "missing field '" + std::string(key) + "'");
    }
    std::string id = obj.contains("id") ? field_string(obj["id"], line_no, "id")
                                        : std::string(id_prefix) + ":" + std::to_string(ads.size());
    ads.push_back(make_ad(std::move(id), field_string(obj["market"], line_no, "market"),
                          field_string(obj["vendor"], line_no, "vendor"),
                          field_string(obj["title"], line_no, "title"),
                          field_string(obj["description"], line_no, "description")));
  }
  return ads;
}

struct CsvRecord {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

// RFC 4180: quoted fields may contain commas, doubled quotes and line breaks.
std::vector<CsvRecord> parse_csv_records(std::string_view bytes) {
  std::vector<CsvRecord> records;
  std::size_t line = 1;
  std::size_t i = 0;
  while (i < bytes.size()) {
    CsvRecord rec;
    rec.line = line;
    std::string field;
    bool record_done = false;
    while (!record_done) {
      field.clear();
      if (i < bytes.size() && bytes[i] == '"') {
        ++i;
        for (;;) {
          if (i >= bytes.size()) throw RecordError(rec.line, "unterminated quoted field");
          const char c = bytes[i++];
          if (c == '"') {
            if (i < bytes.size() && bytes[i] == '"') {
              field.push_back('"');
              ++i;
            } else {
              break;
            }
          } else {
            if (c == '\n') ++line;
            field.push_back(c);
          }
        }
        if (i < bytes.size() && bytes[i] != ',' && bytes[i] != '\n' && bytes[i] != '\r') {
          throw RecordError(rec.line, "unexpected character after closing quote");
        }
      } else {
        while (i < bytes.size() && bytes[i] != ',' && bytes[i] != '\n' && bytes[i] != '\r') {
          field.push_back(bytes[i++]);
        }
      }
      rec.fields.push_back(field);
      if (i >= bytes.size()) {
        record_done = true;
      } else if (bytes[i] == ',') {
        ++i;
      } else {
        if (bytes[i] == '\r') ++i;
        if (i < bytes.size() && bytes[i] == '\n') ++i;
        ++line;
        record_done = true;
      }
    }
    const bool blank = rec.fields.size() == 1 && rec.fields[0].empty();
    if (!blank) records.push_back(std::move(rec));
  }
  return records;
}

std::vector<Ad> parse_csv(std::string_view bytes, std::string_view id_prefix) {
  auto records = parse_csv_records(bytes);
  std::vector<Ad> ads;
  if (records.empty()) return ads;
  const auto& header = records.front().fields;
  auto column = [&](std::string_view name) -> std::ptrdiff_t {
    auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : it - header.begin();
  };
  std::array<std::ptrdiff_t, 4> cols{};
  for (std::size_t k = 0; k < kRequired.size(); ++k) {
    cols[k] = column(kRequired[k]);
    if (cols[k] < 0) {
      throw RecordError(records.front().line, "header lacks column '" + std::string(kRequired[k]) + "'");
    }
  }
  const std::ptrdiff_t id_col = column("id");
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.fields.size() != header.size()) {
      throw RecordError(rec.line, "expected " + std::to_string(header.size()) + " fields, got " +
                                      std::to_string(rec.fields.size()));
    }
    auto get = [&](std::ptrdiff_t c) { return rec.fields[static_cast<std::size_t>(c)]; };
    std::string id = id_col >= 0 ? get(id_col) : std::string(id_prefix) + ":" + std::to_string(ads.size());
    ads.push_back(make_ad(std::move(id), get(cols[0]), get(cols[1]), get(cols[2]), get(cols[3])));
  }
  return ads;
}

void require_unique_ids(const std::vector<Ad>& ads) {
  std::unordered_set<std::string_view> seen;
  for (const auto& ad : ads) {
    if (!seen.insert(ad.id).second) throw ConfigError("duplicate ad id: " + ad.id);
  }
}

}  // namespace

Corpus parse(std::string_view bytes, Format format, std::string_view id_prefix) {
  auto ads = format == Format::jsonl ? parse_jsonl(bytes, id_prefix) : parse_csv(bytes, id_prefix);
  require_unique_ids(ads);
  return Corpus(std::move(ads), util::digest(bytes));
}

Corpus ingest(const std::string& path, Format format) {
  if (!std::filesystem::exists(path)) throw NotFoundError("corpus file not found: " + path);
  const std::string bytes = util::read_file(path);
  return parse(bytes, format, std::filesystem::path(path).stem().string());
}

std::string to_jsonl(const Corpus& corpus) {
  std::string out;
  for (const auto& ad : corpus.ads()) {
    const json j = {{"id", ad.id},
                    {"market", ad.market},
                    {"vendor", ad.vendor_raw},
                    {"title", ad.title},
                    {"description", ad.description}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

Corpus concat(const std::vector<Corpus>& parts) {
  std::vector<Ad> ads;
  std::string prov;
  for (const auto& part : parts) {
    ads.insert(ads.end(), part.ads().begin(), part.ads().end());
    prov += part.provenance();
  }
  require_unique_ids(ads);
  return Corpus(std::move(ads), parts.size() == 1 ? prov : util::digest(prov));
}

Corpus dedupe(const Corpus& corpus) {
  std::set<std::tuple<std::string_view, std::string_view, std::string_view>> seen;
  std::vector<Ad> kept;
  kept.reserve(corpus.size());
  for (const auto& ad : corpus.ads()) {
    if (seen.emplace(ad.market, ad.vendor_norm, ad.merged_text).second) kept.push_back(ad);
  }
  return Corpus(std::move(kept), corpus.provenance());
}

Corpus truncate(const Corpus& corpus, std::size_t limit) {
  if (limit < 1) throw ConfigError("truncation limit must be at least 1");
  std::vector<Ad> ads = corpus.ads();
  for (auto& ad : ads) {
    const auto tokens = util::split_whitespace(ad.merged_text);
    if (tokens.size() <= limit) continue;
    // Cut right after the limit-th token so original spacing inside the kept span survives.
    const auto& last = tokens[limit - 1];
    const std::size_t end = static_cast<std::size_t>(last.data() - ad.merged_text.data()) + last.size();
    const std::size_t begin = static_cast<std::size_t>(tokens.front().data() - ad.merged_text.data());
    ad.merged_text = ad.merged_text.substr(begin, end - begin);
    ad.token_count = limit;
  }
  return Corpus(std::move(ads), corpus.provenance());
}

Corpus remove_vendors(const Corpus& corpus, const std::vector<std::string>& vendors) {
  const std::set<std::string, std::less<>> drop(vendors.begin(), vendors.end());
  std::vector<Ad> kept;
  for (const auto& ad : corpus.ads()) {
    if (!drop.contains(ad.vendor_norm)) kept.push_back(ad);
  }
  return Corpus(std::move(kept), corpus.provenance());
}

Corpus filter_market(const Corpus& corpus, std::string_view market) {
  std::vector<Ad> kept;
  for (const auto& ad : corpus.ads()) {
    if (ad.market == market) kept.push_back(ad);
  }
  return Corpus(std::move(kept), corpus.provenance());
}

LabelSpace::LabelSpace(std::vector<std::string> class_vendors, std::size_t min_ads)
    : class_vendors_(std::move(class_vendors)), min_ads_(min_ads) {
  for (std::size_t i = 0; i < class_vendors_.size(); ++i) {
    if (!index_.emplace(class_vendors_[i], i).second) {
      throw ConfigError("duplicate vendor in label space: " + class_vendors_[i]);
    }
  }
}

std::size_t LabelSpace::class_of(std::string_view vendor_norm) const {
  auto it = index_.find(vendor_norm);
  return it == index_.end() ? others_index() : it->second;
}

bool LabelSpace::contains(std::string_view vendor_norm) const { return index_.find(vendor_norm) != index_.end(); }

std::string LabelSpace::class_name(std::size_t index) const {
  if (index < class_vendors_.size()) return class_vendors_[index];
  if (index == others_index()) return std::string(kOthersLabel);
  throw DimensionError("class index out of range: " + std::to_string(index));
}

std::vector<int> LabelSpace::labels(const Corpus& corpus) const {
  std::vector<int> out;
  out.reserve(corpus.size());
  for (const auto& ad : corpus.ads()) out.push_back(static_cast<int>(class_of(ad.vendor_norm)));
  return out;
}

json LabelSpace::to_json() const {
  return json{{"classes", class_vendors_}, {"min_ads", min_ads_}, {"others_index", others_index()}};
}

LabelSpace LabelSpace::from_json(const json& j) {
  return LabelSpace(j.at("classes").get<std::vector<std::string>>(), j.at("min_ads").get<std::size_t>());
}

LabelSpace bucket_others(const Corpus& corpus, std::size_t min_ads) {
  if (min_ads < 1) throw ConfigError("min_ads must be at least 1");
  std::vector<std::string> keep;
  for (const auto& [vendor, count] : corpus.vendor_counts()) {
    if (count >= min_ads) keep.push_back(vendor);
  }
  return LabelSpace(std::move(keep), min_ads);
}

namespace {

// Largest-remainder apportionment of `total` units over per-class exact shares, bounded by caps.
std::vector<std::size_t> apportion(const std::vector<double>& exact, const std::vector<std::size_t>& caps,
                                   std::size_t total) {
  const std::size_t k = exact.size();
  std::vector<std::size_t> alloc(k);
  std::size_t used = 0;
  for (std::size_t c = 0; c < k; ++c) {
    alloc[c] = std::min(caps[c], static_cast<std::size_t>(std::floor(exact[c] + 1e-9)));
    used += alloc[c];
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return exact[a] - std::floor(exact[a] + 1e-9) > exact[b] - std::floor(exact[b] + 1e-9);
  });
  while (used < total) {
    bool progressed = false;
    for (std::size_t c : order) {
      if (used >= total) break;
      if (alloc[c] < caps[c]) {
        ++alloc[c];
        ++used;
        progressed = true;
      }
    }
    if (!progressed) break;
  }
  return alloc;
}

}  // namespace

SplitSet split(const std::vector<int>& labels, std::array<double, 3> ratios, std::uint64_t seed,
               std::size_t others_index) {
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw ConfigError("split ratios must be non-negative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

  util::Rng rng(seed);
  std::vector<std::vector<std::size_t>> members;
  std::vector<int> class_ids;
  for (auto& [cls, idx] : by_class) {
    rng.shuffle(std::span<std::size_t>(idx));
    members.push_back(idx);
    class_ids.push_back(cls);
  }

  const std::size_t n = labels.size();
  const std::size_t k = members.size();
  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios[0] + 0.5));
  const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios[1] + 0.5)));

  std::vector<double> exact(k);
  std::vector<std::size_t> caps(k);
  for (std::size_t c = 0; c < k; ++c) {
    exact[c] = static_cast<double>(members[c].size()) * ratios[0];
    caps[c] = members[c].size();
  }
  auto train_alloc = apportion(exact, caps, n_train);
  // Classes with at least 3 ads always keep one training example.
  if (ratios[0] > 0.0) {
    for (std::size_t c = 0; c < k; ++c) {
      const bool named = static_cast<std::size_t>(class_ids[c]) != others_index;
      if (named && members[c].size() >= 3 && train_alloc[c] == 0) train_alloc[c] = 1;
    }
  }
  for (std::size_t c = 0; c < k; ++c) {
    exact[c] = static_cast<double>(members[c].size()) * ratios[1];
    caps[c] = members[c].size() - train_alloc[c];
  }
  const auto val_alloc = apportion(exact, caps, n_val);

  SplitSet out;
  out.ratios = ratios;
  out.seed = seed;
  for (std::size_t c = 0; c < k; ++c) {
    const auto& idx = members[c];
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (i < train_alloc[c]) {
        out.train.push_back(idx[i]);
      } else if (i < train_alloc[c] + val_alloc[c]) {
        out.val.push_back(idx[i]);
      } else {
        out.test.push_back(idx[i]);
      }
    }
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

json manifest(const Corpus& corpus, const LabelSpace& labels) {
  json per_market = json::object();
  for (const auto& m : corpus.markets()) per_market[m] = 0;
  std::size_t others_ads = 0;
  std::set<std::string> others_vendors;
  for (const auto& ad : corpus.ads()) {
    per_market[ad.market] = per_market[ad.market].get<std::size_t>() + 1;
    if (labels.class_of(ad.vendor_norm) == labels.others_index()) {
      ++others_ads;
      others_vendors.insert(ad.vendor_norm);
    }
  }
  return json{{"n_ads", corpus.size()},
              {"n_vendors", corpus.vendor_counts().size()},
              {"n_classes", labels.n_classes()},
              {"others_count", others_ads},
              {"others_vendors", others_vendors.size()},
              {"min_ads", labels.min_ads()},
              {"per_market", per_market},
              {"provenance", corpus.provenance()}};
}

}  // namespace vlink::corpus
