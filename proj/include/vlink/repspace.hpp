#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace vlink::repspace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

enum class Mode { cls, token };

/// Per-ad, per-layer representations. Payload layout is ad-major, then token (token mode),
/// then layer, then dim.
class EmbeddingTensor {
 public:
  EmbeddingTensor() = default;
  /// Validates sizes and id uniqueness. seq_lens must be empty in cls mode.
  EmbeddingTensor(Mode mode, std::size_t n_layers, std::size_t dim, std::vector<std::string> ad_ids,
                  std::vector<std::uint32_t> seq_lens, std::vector<float> values, std::string checkpoint_tag);

  Mode mode() const noexcept { return mode_; }
  std::size_t n_ads() const noexcept { return ad_ids_.size(); }
  std::size_t n_layers() const noexcept { return n_layers_; }
  std::size_t dim() const noexcept { return dim_; }
  const std::vector<std::string>& ad_ids() const noexcept { return ad_ids_; }
  const std::vector<std::uint32_t>& seq_lens() const noexcept { return seq_lens_; }
  const std::string& checkpoint_tag() const noexcept { return checkpoint_tag_; }
  const std::vector<float>& values() const noexcept { return values_; }

  /// Number of positions stored for an ad (1 in cls mode).
  std::size_t positions(std::size_t ad) const;
  std::span<const float> vector(std::size_t ad, std::size_t layer, std::size_t position = 0) const;
  /// Row of an ad id, or -1.
  std::ptrdiff_t find(std::string_view ad_id) const;

  /// n_ads x dim matrix for one layer of a cls tensor, optionally restricted to rows.
  Mat layer_matrix(std::size_t layer, std::span<const std::size_t> rows = {}) const;

  bool operator==(const EmbeddingTensor& o) const {
    return mode_ == o.mode_ && n_layers_ == o.n_layers_ && dim_ == o.dim_ && ad_ids_ == o.ad_ids_ &&
           seq_lens_ == o.seq_lens_ && checkpoint_tag_ == o.checkpoint_tag_ && values_ == o.values_;
  }

 private:
  Mode mode_ = Mode::cls;
  std::size_t n_layers_ = 0;
  std::size_t dim_ = 0;
  std::vector<std::string> ad_ids_;
  std::vector<std::uint32_t> seq_lens_;
  std::vector<std::size_t> offsets_;
  std::vector<float> values_;
  std::string checkpoint_tag_;
  std::unordered_map<std::string, std::size_t> index_;
};

// VLEMB1: "VLEMB1\0\0", u32 LE header length H, H bytes of JSON header, LE float32 payload.
std::string serialize(const EmbeddingTensor& tensor);
/// Throws FormatError naming the byte offset of the first inconsistency.
EmbeddingTensor deserialize(std::string_view bytes);
void save_embeddings(const EmbeddingTensor& tensor, const std::string& path);
EmbeddingTensor load_embeddings(const std::string& path);

/// ||Yc^T Xc||_F^2 / (||Xc^T Xc||_F ||Yc^T Yc||_F) with column-centered inputs; 0 when either
/// centered matrix vanishes.
double linear_cka(const Mat& x, const Mat& y);

struct CkaProfile {
  std::vector<double> similarity;
  std::vector<double> distance;
};

/// Per-layer CKA between two cls tensors over the same ads. When max_ads is non-zero and smaller
/// than n_ads, a seeded subset of rows is used.
CkaProfile cka_profile(const EmbeddingTensor& before, const EmbeddingTensor& after, std::size_t max_ads = 0,
                       std::uint64_t seed = 0);

struct LayerWeights {
  std::vector<double> weights;
};

/// Uniform weight 1/k on the k layers with the greatest distance; ties favor deeper layers.
LayerWeights select_layers(const CkaProfile& profile, std::size_t k = 4);

/// Uniform weights over the last k of n layers.
LayerWeights last_layers(std::size_t n_layers, std::size_t k = 4);

/// sum_l w_l * v(ad, l) for a cls tensor.
Vec style_vector(const EmbeddingTensor& tensor, const LayerWeights& weights, std::size_t ad);

/// style_vector for every ad, one row per ad.
Mat style_matrix(const EmbeddingTensor& tensor, const LayerWeights& weights);

std::string profile_csv(const CkaProfile& profile);

}  // namespace vlink::repspace
