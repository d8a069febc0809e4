#include "vlink/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "vlink/error.hpp"
#include "vlink/util.hpp"

namespace vlink::synth {

namespace {

const std::vector<std::string> kGeneric = {
    "quality", "shipping", "stealth",  "grams",   "pills",    "tested",   "pure",    "fast",    "escrow",
    "discount", "bulk",    "order",    "price",   "tracking", "reship",   "vacuum",  "sealed",  "lab",
    "batch",   "strong",   "grade",    "express", "domestic", "worldwide", "refund", "policy",  "contact",
    "message", "available", "stock",   "new",     "premium",  "free",     "sample",  "weight",  "accurate",
    "scale",   "safe",     "guaranteed", "the",   "and",      "for",      "with",    "our",     "you",
    "please",  "read",     "before",   "buying",  "best"};

const std::vector<std::string> kSyllables = {"ka", "lo", "mi", "ze", "tor", "vin", "qu", "sha", "dre", "bu",
                                             "nix", "pa", "rel", "gor", "fi", "yen", "wal", "os", "tic", "ume",
                                             "bra", "cel", "dor", "ext", "hum", "jav", "kry", "lun", "mox", "nep"};

const std::vector<std::string> kPunct = {"!", "!!", "~", "*", "::", ".", "+", "$$", "--", "??", ";)", "<3"};

struct Style {
  std::vector<std::string> signature;
  std::vector<std::string> favored;
  int casing = 0;
  std::string punct;
  std::string closing;
};

std::string pseudo_word(util::Rng& rng, std::size_t min_syl, std::size_t max_syl) {
  const std::size_t n = min_syl + rng.index(max_syl - min_syl + 1);
  std::string w;
  for (std::size_t i = 0; i < n; ++i) w += kSyllables[rng.index(kSyllables.size())];
  return w;
}

std::string fresh_word(util::Rng& rng, std::set<std::string>& used, std::size_t min_syl, std::size_t max_syl) {
  for (;;) {
    auto w = pseudo_word(rng, min_syl, max_syl);
    if (used.insert(w).second) return w;
  }
}

Style make_style(util::Rng& rng, std::set<std::string>& used) {
  Style s;
  for (int i = 0; i < 8; ++i) s.signature.push_back(fresh_word(rng, used, 2, 3));
  for (auto i : rng.sample(kGeneric.size(), 6)) s.favored.push_back(kGeneric[i]);
  s.casing = static_cast<int>(rng.index(4));
  s.punct = kPunct[rng.index(kPunct.size())];
  s.closing = s.signature[0] + " " + s.signature[1] + " " + s.punct;
  return s;
}

std::string cased(const std::string& w, int casing) {
  std::string out = w;
  switch (casing) {
    case 1:
      for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      break;
    case 2:
      if (!out.empty()) out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
      break;
    case 3:
      if (!out.empty()) out.back() = static_cast<char>(std::toupper(static_cast<unsigned char>(out.back())));
      break;
    default:
      break;
  }
  return out;
}

std::string styled_word(util::Rng& rng, const Style& s) {
  const double u = rng.uniform();
  if (u < 0.35) return cased(s.signature[rng.index(s.signature.size())], s.casing);
  if (u < 0.6) return cased(s.favored[rng.index(s.favored.size())], s.casing);
  return cased(kGeneric[rng.index(kGeneric.size())], s.casing);
}

std::pair<std::string, std::string> styled_ad(util::Rng& rng, const Style& s) {
  std::string title = cased(s.signature[rng.index(s.signature.size())], s.casing);
  for (int i = 0; i < 3; ++i) title += " " + styled_word(rng, s);
  title += " " + s.punct;
  std::string desc;
  const std::size_t n = 18 + rng.index(15);
  std::size_t sentence = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!desc.empty()) desc += ' ';
    desc += styled_word(rng, s);
    if (++sentence >= 5 + rng.index(5)) {
      desc += s.punct;
      sentence = 0;
    }
  }
  desc += " " + s.closing;
  return {title, desc};
}

std::pair<std::string, std::string> generic_ad(util::Rng& rng) {
  std::string title;
  for (int i = 0; i < 4; ++i) title += (i ? " " : "") + kGeneric[rng.index(kGeneric.size())];
  std::string desc;
  const std::size_t n = 14 + rng.index(10);
  for (std::size_t i = 0; i < n; ++i) {
    if (!desc.empty()) desc += ' ';
    desc += kGeneric[rng.index(kGeneric.size())];
  }
  desc += ".";
  return {title, desc};
}

Eigen::VectorXd gaussian(util::Rng& rng, std::size_t dim) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.normal();
  return v;
}

Eigen::VectorXd unit(util::Rng& rng, std::size_t dim) {
  auto v = gaussian(rng, dim);
  return v / v.norm();
}

void append(std::vector<float>& out, const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(static_cast<float>(v(i)));
}

}  // namespace

std::vector<std::string> small_vendors(const StyleCorpusConfig& config) {
  const auto corpus = style_corpus(config);
  std::vector<std::string> out;
  for (const auto& [v, n] : corpus.vendor_counts()) {
    if (n == config.small_ads) out.push_back(v);
  }
  return out;
}

corpus::Corpus style_corpus(const StyleCorpusConfig& config) {
  if (config.n_vendors == 0 || config.ads_per_vendor == 0) throw ConfigError("style corpus needs vendors and ads");
  util::Rng rng(util::derive_seed(config.seed, "style-corpus"));
  std::set<std::string> used;
  const auto n_small = static_cast<std::size_t>(std::llround(config.small_fraction * static_cast<double>(config.n_vendors)));
  std::vector<corpus::Ad> ads;
  for (std::size_t v = 0; v < config.n_vendors; ++v) {
    const auto handle = fresh_word(rng, used, 2, 3) + std::to_string(v);
    const auto style = make_style(rng, used);
    const std::size_t n = v >= config.n_vendors - n_small ? config.small_ads : config.ads_per_vendor;
    for (std::size_t a = 0; a < n; ++a) {
      auto [title, desc] = styled_ad(rng, style);
      ads.push_back(corpus::make_ad(config.market + "-" + std::to_string(ads.size()), config.market, handle,
                                    std::move(title), std::move(desc)));
    }
  }
  return corpus::Corpus(std::move(ads), "synthetic:style:" + std::to_string(config.seed));
}

nlohmann::json Planted::to_json() const {
  auto pairs = [](const std::vector<std::pair<std::string, std::string>>& ps) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& [a, b] : ps) out.push_back({a, b});
    return out;
  };
  return {{"migrants", migrants},
          {"identical", identical},
          {"aliases", pairs(aliases)},
          {"copycats", pairs(copycats)},
          {"clone", {clone.first, clone.second}}};
}

MarketFixture market_corpus(const MarketCorpusConfig& config) {
  if (config.markets.size() < 3) throw ConfigError("market fixture needs at least three markets");
  if (config.min_ads < 2 || config.max_ads < config.min_ads) throw ConfigError("invalid ad count range");
  util::Rng rng(util::derive_seed(config.seed, "market-corpus"));
  const auto& m = config.markets;

  struct Account {
    std::string market;
    std::string handle;
    std::size_t entity;
    std::size_t n_ads;
  };
  std::set<std::string> used = {"agentq", "cyanspore", "houseofdank", "houseofdank2.0", "fence", "tinsel",
                                "mutant_gear", "mutantgear", "europills", "europills2", "bluelotus", "bluelotus_shop"};
  std::vector<Style> styles;
  auto new_entity = [&] {
    styles.push_back(make_style(rng, used));
    return styles.size() - 1;
  };
  auto span_ads = [&] { return config.min_ads + rng.index(config.max_ads - config.min_ads + 1); };

  std::vector<Account> accounts;
  for (const auto& market : m) {
    for (std::size_t v = 0; v < config.vendors_per_market; ++v) {
      accounts.push_back({market, fresh_word(rng, used, 3, 4), new_entity(), span_ads()});
    }
    for (std::size_t v = 0; v < config.small_per_market; ++v) {
      accounts.push_back({market, fresh_word(rng, used, 3, 4), new_entity(), config.small_ads});
    }
  }
  const auto agentq = new_entity();
  accounts.push_back({m[0], "AgentQ", agentq, 25});
  accounts.push_back({m[1], "agentq", agentq, 22});
  const auto dank = new_entity();
  accounts.push_back({m[0], "houseofdank", dank, 30});
  accounts.push_back({m[2], "houseofdank2.0", dank, 24});
  const auto fence = new_entity();
  accounts.push_back({m[1], "fence", fence, 28});
  accounts.push_back({m[2], "tinsel", fence, 26});
  const auto mutant = new_entity();
  accounts.push_back({m[0], "mutant_gear", mutant, 26});
  accounts.push_back({m[1], "mutantgear", mutant, 22});
  accounts.push_back({m[1], "europills", new_entity(), 30});
  accounts.push_back({m[2], "europills2", new_entity(), 25});
  const auto lotus = new_entity();
  accounts.push_back({m[0], "bluelotus", lotus, 27});
  const auto cyan = new_entity();

  MarketFixture fx;
  std::vector<corpus::Ad> ads;
  std::vector<std::string> lotus_ids;
  auto next_id = [&](const std::string& market) { return market + "-" + std::to_string(ads.size()); };
  for (const auto& acc : accounts) {
    fx.entity_of[util::to_lower_ascii(acc.handle)] = acc.entity;
    for (std::size_t a = 0; a < acc.n_ads; ++a) {
      auto [title, desc] = styled_ad(rng, styles[acc.entity]);
      ads.push_back(corpus::make_ad(next_id(acc.market), acc.market, acc.handle, std::move(title), std::move(desc)));
      if (acc.handle == "bluelotus") lotus_ids.push_back(ads.back().id);
    }
  }
  // The clone reposts every ad of its parent in another market.
  const std::size_t lotus_first = ads.size() - lotus_ids.size();
  for (std::size_t a = 0; a < lotus_ids.size(); ++a) {
    const auto src = ads[lotus_first + a];
    ads.push_back(corpus::make_ad(next_id(m[2]), m[2], "bluelotus_shop", src.title, src.description));
    fx.copied_from[ads.back().id] = src.id;
  }
  fx.entity_of["bluelotus_shop"] = lotus;
  // One verbatim ad posted repeatedly in two markets.
  const auto [ctitle, cdesc] = styled_ad(rng, styles[cyan]);
  for (int k = 0; k < 3; ++k) ads.push_back(corpus::make_ad(next_id(m[0]), m[0], "cyanspore", ctitle, cdesc));
  for (int k = 0; k < 2; ++k) ads.push_back(corpus::make_ad(next_id(m[1]), m[1], "cyanspore", ctitle, cdesc));
  fx.entity_of["cyanspore"] = cyan;

  fx.corpus = corpus::Corpus(std::move(ads), "synthetic:markets:" + std::to_string(config.seed));
  fx.planted.migrants = {"agentq", "cyanspore"};
  fx.planted.identical = "cyanspore";
  fx.planted.aliases = {{"houseofdank", "houseofdank2.0"}, {"fence", "tinsel"}, {"mutant_gear", "mutantgear"}};
  fx.planted.copycats = {{"europills", "europills2"}};
  fx.planted.clone = {"bluelotus", "bluelotus_shop"};
  return fx;
}

std::pair<repspace::EmbeddingTensor, repspace::EmbeddingTensor> cls_tensors(const MarketFixture& fixture,
                                                                            const ClsTensorConfig& config) {
  if (config.n_layers < 2 || config.dim < 1) throw ConfigError("cls tensors need at least 2 layers and dim 1");
  if (config.changed_layers > config.n_layers) throw ConfigError("changed_layers exceeds n_layers");
  util::Rng rng(util::derive_seed(config.seed, "cls-tensors"));
  const std::size_t L = config.n_layers;
  const std::size_t D = config.dim;
  const Eigen::VectorXd common = unit(rng, D) * config.common_scale;
  std::map<std::size_t, Eigen::VectorXd> author;
  for (const auto& [vendor, e] : fixture.entity_of) {
    if (!author.count(e)) author[e] = Eigen::VectorXd();
  }
  for (auto& [e, v] : author) v = unit(rng, D) * config.author_scale;

  const auto& ads = fixture.corpus.ads();
  std::vector<std::vector<float>> before(ads.size());
  std::vector<std::vector<float>> after(ads.size());
  std::map<std::string, std::size_t> row_of;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < ads.size(); ++i) {
    const auto& ad = ads[i];
    row_of[ad.id] = i;
    ids.push_back(ad.id);
    if (auto c = fixture.copied_from.find(ad.id); c != fixture.copied_from.end()) {
      const auto src = row_of.at(c->second);
      before[i] = before[src];
      after[i] = after[src];
      continue;
    }
    const auto z = gaussian(rng, D);
    const Eigen::VectorXd style = common + author.at(fixture.entity_of.at(ad.vendor_norm)) + gaussian(rng, D) * config.noise;
    for (std::size_t l = 0; l < L; ++l) {
      const Eigen::VectorXd b = z + gaussian(rng, D) * 0.5;
      append(before[i], b);
      if (l + config.changed_layers < L) {
        append(after[i], b);
      } else {
        append(after[i], style + gaussian(rng, D) * (config.noise * 0.5));
      }
    }
  }
  auto flatten = [](const std::vector<std::vector<float>>& parts) {
    std::vector<float> out;
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
  };
  const auto tag = std::to_string(config.seed);
  return {repspace::EmbeddingTensor(repspace::Mode::cls, L, D, ids, {}, flatten(before), "synthetic-before:" + tag),
          repspace::EmbeddingTensor(repspace::Mode::cls, L, D, ids, {}, flatten(after), "synthetic-after:" + tag)};
}

TargetFixture target_fixture(const std::vector<std::string>& known_vendors, const TargetConfig& config) {
  if (config.n_layers < 2 || config.dim < 1 || config.max_positions < 1) throw ConfigError("invalid target tensor shape");
  util::Rng rng(util::derive_seed(config.seed, "target"));
  TargetFixture fx;
  fx.known = known_vendors;
  std::set<std::string> used(known_vendors.begin(), known_vendors.end());
  for (std::size_t i = 0; i < config.n_new; ++i) fx.unseen.push_back(fresh_word(rng, used, 3, 4) + "_new");
  std::vector<std::string> vendors = fx.known;
  vendors.insert(vendors.end(), fx.unseen.begin(), fx.unseen.end());

  std::vector<Eigen::VectorXd> offsets;
  for (std::size_t v = 0; v < vendors.size(); ++v) offsets.push_back(unit(rng, config.dim) * config.signal);

  std::vector<corpus::Ad> ads;
  std::vector<std::string> ids;
  std::vector<std::uint32_t> lens;
  std::vector<float> values;
  const std::size_t L = config.n_layers;
  for (std::size_t a = 0; a < config.ads_per_vendor; ++a) {
    for (std::size_t v = 0; v < vendors.size(); ++v) {
      auto [title, desc] = generic_ad(rng);
      ads.push_back(corpus::make_ad(config.market + "-" + std::to_string(ads.size()), config.market, vendors[v],
                                    std::move(title), std::move(desc)));
      const auto& ad = ads.back();
      ids.push_back(ad.id);
      const std::size_t T = std::min(ad.token_count, config.max_positions);
      lens.push_back(static_cast<std::uint32_t>(T));
      for (std::size_t t = 0; t < T; ++t) {
        Eigen::VectorXd x = gaussian(rng, config.dim);
        append(values, x);
        for (std::size_t l = 1; l < L; ++l) {
          x = 0.8 * x + 0.6 * gaussian(rng, config.dim);
          if (l + 1 == L) x += offsets[v];
          append(values, x);
        }
      }
    }
  }
  fx.corpus = corpus::Corpus(std::move(ads), "synthetic:target:" + std::to_string(config.seed));
  fx.tokens = repspace::EmbeddingTensor(repspace::Mode::token, L, config.dim, std::move(ids), std::move(lens),
                                        std::move(values), "synthetic-token:" + std::to_string(config.seed));
  return fx;
}

nlohmann::json write_fixtures(const std::string& dir, std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto path = [&](const std::string& name) { return (fs::path(dir) / name).string(); };

  StyleCorpusConfig sc;
  sc.seed = util::derive_seed(seed, "style");
  const auto style = style_corpus(sc);
  util::write_file(path("closed_set.jsonl"), corpus::to_jsonl(style));

  MarketCorpusConfig mc;
  mc.seed = util::derive_seed(seed, "markets");
  const auto fx = market_corpus(mc);
  util::write_file(path("markets.jsonl"), corpus::to_jsonl(fx.corpus));
  ClsTensorConfig cc;
  cc.seed = util::derive_seed(seed, "cls");
  const auto [before, after] = cls_tensors(fx, cc);
  repspace::save_embeddings(before, path("cls_before.vlemb"));
  repspace::save_embeddings(after, path("cls_after.vlemb"));

  const auto labels = corpus::bucket_others(style, 20);
  std::vector<std::string> known(labels.class_vendors().begin(),
                                 labels.class_vendors().begin() +
                                     static_cast<std::ptrdiff_t>(std::min<std::size_t>(5, labels.class_vendors().size())));
  TargetConfig tc;
  tc.seed = util::derive_seed(seed, "target");
  const auto target = target_fixture(known, tc);
  util::write_file(path("target.jsonl"), corpus::to_jsonl(target.corpus));
  repspace::save_embeddings(target.tokens, path("target_tokens.vlemb"));

  nlohmann::json manifest = {
      {"seed", seed},
      {"files",
       {{"closed_set", "closed_set.jsonl"},
        {"markets", "markets.jsonl"},
        {"cls_before", "cls_before.vlemb"},
        {"cls_after", "cls_after.vlemb"},
        {"target", "target.jsonl"},
        {"target_tokens", "target_tokens.vlemb"}}},
      {"planted", fx.planted.to_json()},
      {"small_vendors", small_vendors(sc)},
      {"target_known", target.known},
      {"target_unseen", target.unseen}};
  util::write_file(path("manifest.json"), manifest.dump(2) + "\n");
  return manifest;
}

}  // namespace vlink::synth
