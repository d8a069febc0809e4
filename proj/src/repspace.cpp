#include "vlink/repspace.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include <json.hpp>

#include "vlink/error.hpp"
#include "vlink/util.hpp"

namespace vlink::repspace {

namespace {
constexpr char kMagic[8] = {'V', 'L', 'E', 'M', 'B', '1', '\0', '\0'};
constexpr std::size_t kPrefix = 12;

std::string_view mode_name(Mode m) { return m == Mode::cls ? "cls" : "token"; }
}  // namespace

EmbeddingTensor::EmbeddingTensor(Mode mode, std::size_t n_layers, std::size_t dim, std::vector<std::string> ad_ids,
                                 std::vector<std::uint32_t> seq_lens, std::vector<float> values,
                                 std::string checkpoint_tag)
    : mode_(mode),
      n_layers_(n_layers),
      dim_(dim),
      ad_ids_(std::move(ad_ids)),
      seq_lens_(std::move(seq_lens)),
      values_(std::move(values)),
      checkpoint_tag_(std::move(checkpoint_tag)) {
  if (mode_ == Mode::cls && !seq_lens_.empty()) throw DimensionError("seq_lens given for a cls tensor");
  if (mode_ == Mode::token && seq_lens_.size() != ad_ids_.size()) {
    throw DimensionError("seq_lens length does not match ad count");
  }
  std::size_t offset = 0;
  offsets_.reserve(ad_ids_.size() + 1);
  for (std::size_t a = 0; a < ad_ids_.size(); ++a) {
    offsets_.push_back(offset);
    const std::size_t pos = mode_ == Mode::cls ? 1 : seq_lens_[a];
    offset += pos * n_layers_ * dim_;
  }
  offsets_.push_back(offset);
  if (values_.size() != offset) {
    throw DimensionError("value count " + std::to_string(values_.size()) + " does not match shape (" +
                         std::to_string(offset) + ")");
  }
  for (std::size_t a = 0; a < ad_ids_.size(); ++a) {
    if (!index_.emplace(ad_ids_[a], a).second) throw DimensionError("duplicate ad id: " + ad_ids_[a]);
  }
}

std::size_t EmbeddingTensor::positions(std::size_t ad) const { return mode_ == Mode::cls ? 1 : seq_lens_.at(ad); }

std::span<const float> EmbeddingTensor::vector(std::size_t ad, std::size_t layer, std::size_t position) const {
  if (ad >= n_ads() || layer >= n_layers_ || position >= positions(ad)) {
    throw DimensionError("embedding index out of range");
  }
  return {values_.data() + offsets_[ad] + (position * n_layers_ + layer) * dim_, dim_};
}

std::ptrdiff_t EmbeddingTensor::find(std::string_view ad_id) const {
  auto it = index_.find(std::string(ad_id));
  return it == index_.end() ? -1 : static_cast<std::ptrdiff_t>(it->second);
}

Mat EmbeddingTensor::layer_matrix(std::size_t layer, std::span<const std::size_t> rows) const {
  if (mode_ != Mode::cls) throw DimensionError("layer matrices require a cls tensor");
  std::vector<std::size_t> all;
  if (rows.empty()) {
    all.resize(n_ads());
    std::iota(all.begin(), all.end(), 0);
    rows = all;
  }
  Mat out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim_));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto v = vector(rows[i], layer);
    for (std::size_t d = 0; d < dim_; ++d) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = v[d];
  }
  return out;
}

std::string serialize(const EmbeddingTensor& t) {
  nlohmann::json header = {{"version", 1},
                           {"mode", mode_name(t.mode())},
                           {"n_ads", t.n_ads()},
                           {"n_layers", t.n_layers()},
                           {"dim", t.dim()},
                           {"ad_ids", t.ad_ids()},
                           {"checkpoint_tag", t.checkpoint_tag()}};
  if (t.mode() == Mode::token) header["seq_lens"] = t.seq_lens();
  const std::string text = header.dump();
  std::string out(kMagic, sizeof(kMagic));
  util::put_u32_le(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  out.reserve(out.size() + 4 * t.values().size());
  for (float v : t.values()) util::put_f32_le(out, v);
  return out;
}

EmbeddingTensor deserialize(std::string_view bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError(0, "missing VLEMB1 magic");
  }
  if (bytes.size() < kPrefix) throw FormatError(bytes.size(), "truncated header length");
  const std::size_t hlen = util::get_u32_le(p + 8);
  if (kPrefix + hlen > bytes.size()) throw FormatError(bytes.size(), "header extends past end of file");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(bytes.substr(kPrefix, hlen));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(kPrefix + (e.byte > 0 ? e.byte - 1 : 0), "invalid JSON header");
  }
  Mode mode;
  std::size_t n_ads, n_layers, dim;
  std::vector<std::string> ids;
  std::vector<std::uint32_t> seq_lens;
  std::string tag;
  try {
    if (h.at("version").get<int>() != 1) throw FormatError(kPrefix, "unsupported VLEMB1 version");
    const auto m = h.at("mode").get<std::string>();
    if (m != "cls" && m != "token") throw FormatError(kPrefix, "unknown mode '" + m + "'");
    mode = m == "cls" ? Mode::cls : Mode::token;
    n_ads = h.at("n_ads").get<std::size_t>();
    n_layers = h.at("n_layers").get<std::size_t>();
    dim = h.at("dim").get<std::size_t>();
    ids = h.at("ad_ids").get<std::vector<std::string>>();
    tag = h.value("checkpoint_tag", std::string());
    if (mode == Mode::token) seq_lens = h.at("seq_lens").get<std::vector<std::uint32_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(kPrefix, std::string("malformed VLEMB1 header: ") + e.what());
  }
  if (ids.size() != n_ads) throw FormatError(kPrefix, "ad_ids length does not match n_ads");
  if (mode == Mode::token && seq_lens.size() != n_ads) throw FormatError(kPrefix, "seq_lens length does not match n_ads");
  std::size_t count = 0;
  for (std::size_t a = 0; a < n_ads; ++a) count += (mode == Mode::cls ? 1 : seq_lens[a]) * n_layers * dim;
  const std::size_t payload = kPrefix + hlen;
  const std::size_t expected = payload + 4 * count;
  if (bytes.size() < expected) {
    throw FormatError(bytes.size(), "truncated payload, expected " + std::to_string(expected) + " bytes");
  }
  if (bytes.size() > expected) throw FormatError(expected, "trailing bytes after payload");
  std::vector<float> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    values[i] = util::get_f32_le(p + payload + 4 * i);
    if (!std::isfinite(values[i])) throw FormatError(payload + 4 * i, "non-finite value");
  }
  try {
    return EmbeddingTensor(mode, n_layers, dim, std::move(ids), std::move(seq_lens), std::move(values), std::move(tag));
  } catch (const DimensionError& e) {
    throw FormatError(kPrefix, e.what());
  }
}

void save_embeddings(const EmbeddingTensor& tensor, const std::string& path) {
  util::write_file(path, serialize(tensor));
}

EmbeddingTensor load_embeddings(const std::string& path) { return deserialize(util::read_file(path)); }

double linear_cka(const Mat& x, const Mat& y) {
  if (x.rows() != y.rows()) {
    throw DimensionError("CKA inputs have " + std::to_string(x.rows()) + " and " + std::to_string(y.rows()) + " rows");
  }
  if (x.rows() < 2) throw DimensionError("CKA needs at least two rows");
  const Mat xc = x.rowwise() - x.colwise().mean();
  const Mat yc = y.rowwise() - y.colwise().mean();
  const double cross = (yc.transpose() * xc).squaredNorm();
  const double xx = (xc.transpose() * xc).norm();
  const double yy = (yc.transpose() * yc).norm();
  if (xx == 0.0 || yy == 0.0) return 0.0;
  return std::min(1.0, cross / (xx * yy));
}

CkaProfile cka_profile(const EmbeddingTensor& before, const EmbeddingTensor& after, std::size_t max_ads,
                       std::uint64_t seed) {
  if (before.mode() != Mode::cls || after.mode() != Mode::cls) throw DimensionError("CKA profiles need cls tensors");
  if (before.n_layers() != after.n_layers() || before.dim() != after.dim() || before.n_ads() != after.n_ads()) {
    throw DimensionError("before/after tensors differ in shape");
  }
  if (before.ad_ids() != after.ad_ids()) throw DimensionError("before/after tensors are not aligned on ad_ids");
  std::vector<std::size_t> rows;
  if (max_ads > 0 && max_ads < before.n_ads()) {
    util::Rng rng(seed);
    rows = rng.sample(before.n_ads(), max_ads);
  }
  CkaProfile prof;
  for (std::size_t l = 0; l < before.n_layers(); ++l) {
    const double s = linear_cka(before.layer_matrix(l, rows), after.layer_matrix(l, rows));
    prof.similarity.push_back(s);
    prof.distance.push_back(1.0 - s);
  }
  return prof;
}

LayerWeights select_layers(const CkaProfile& profile, std::size_t k) {
  const std::size_t n = profile.distance.size();
  if (k < 1) throw ConfigError("layer count k must be at least 1");
  if (k > n) throw ConfigError("cannot select " + std::to_string(k) + " of " + std::to_string(n) + " layers");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (profile.distance[a] != profile.distance[b]) return profile.distance[a] > profile.distance[b];
    return a > b;
  });
  LayerWeights w{std::vector<double>(n, 0.0)};
  for (std::size_t i = 0; i < k; ++i) w.weights[order[i]] = 1.0 / static_cast<double>(k);
  return w;
}

LayerWeights last_layers(std::size_t n_layers, std::size_t k) {
  if (k < 1 || k > n_layers) throw ConfigError("invalid trailing layer count");
  LayerWeights w{std::vector<double>(n_layers, 0.0)};
  for (std::size_t l = n_layers - k; l < n_layers; ++l) w.weights[l] = 1.0 / static_cast<double>(k);
  return w;
}

Vec style_vector(const EmbeddingTensor& tensor, const LayerWeights& weights, std::size_t ad) {
  if (tensor.mode() != Mode::cls) throw DimensionError("style vectors need a cls tensor");
  if (weights.weights.size() != tensor.n_layers()) {
    throw DimensionError("layer weight count " + std::to_string(weights.weights.size()) + " does not match " +
                         std::to_string(tensor.n_layers()) + " layers");
  }
  Vec out = Vec::Zero(static_cast<Eigen::Index>(tensor.dim()));
  for (std::size_t l = 0; l < tensor.n_layers(); ++l) {
    const double w = weights.weights[l];
    if (w == 0.0) continue;
    const auto v = tensor.vector(ad, l);
    for (std::size_t d = 0; d < tensor.dim(); ++d) out(static_cast<Eigen::Index>(d)) += w * static_cast<double>(v[d]);
  }
  return out;
}

Mat style_matrix(const EmbeddingTensor& tensor, const LayerWeights& weights) {
  Mat out(static_cast<Eigen::Index>(tensor.n_ads()), static_cast<Eigen::Index>(tensor.dim()));
  for (std::size_t a = 0; a < tensor.n_ads(); ++a) {
    out.row(static_cast<Eigen::Index>(a)) = style_vector(tensor, weights, a).transpose();
  }
  return out;
}

std::string profile_csv(const CkaProfile& profile) {
  std::string out = "layer,similarity,distance\n";
  for (std::size_t l = 0; l < profile.similarity.size(); ++l) {
    out += std::to_string(l) + "," + util::format_double(profile.similarity[l]) + "," +
           util::format_double(profile.distance[l]) + "\n";
  }
  return out;
}

}  // namespace vlink::repspace
