#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "vlink/features.hpp"
#include "vlink/nnet/params.hpp"
#include "vlink/util.hpp"

namespace vlink::nnet {

/// Ragged batch of dense sequences; each entry is T x dim with one row per position.
struct SequenceSet {
  std::vector<Mat> seqs;
  Index dim = 0;

  std::size_t size() const noexcept { return seqs.size(); }
};

/// Sparse document rows feed nb/softmax/mlp; sequences feed bigru.
using Inputs = std::variant<features::SparseDocMatrix, SequenceSet>;

std::size_t input_rows(const Inputs& inputs);

enum class ModelKind { nb, softmax, mlp, bigru };
std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

struct BiGRUConfig {
  Index layers = 2;
  Index hidden = 64;
  /// Width of the first dense layer of the head; 0 means `hidden`.
  Index head_hidden = 0;
  double dropout = 0.65;
  bool bidirectional = true;

  /// Full-size settings: 768 hidden units.
  static BiGRUConfig paper_preset() { return {2, 768, 0, 0.65, true}; }
};

struct MlpConfig {
  Index hidden = 64;
  double dropout = 0.0;
};

struct Classifier {
  ModelKind kind = ModelKind::softmax;
  Index input_dim = 0;
  Index n_classes = 0;
  Index hidden = 0;       // mlp hidden width or GRU state size
  Index head_hidden = 0;  // bigru dense head width
  Index layers = 0;       // bigru stacked layers
  double dropout = 0.0;
  bool bidirectional = true;
  ParamSet params;
  /// Free-form metadata carried through serialization (vocabulary, label space, provenance).
  nlohmann::json meta = nlohmann::json::object();

  bool operator==(const Classifier& other) const {
    return kind == other.kind && input_dim == other.input_dim && n_classes == other.n_classes &&
           hidden == other.hidden && head_hidden == other.head_hidden && layers == other.layers &&
           dropout == other.dropout && bidirectional == other.bidirectional && params == other.params && meta == other.meta;
  }
};

Classifier make_softmax(Index input_dim, Index n_classes);
Classifier make_mlp(Index input_dim, Index n_classes, const MlpConfig& config, std::uint64_t seed);
Classifier make_bigru(Index input_dim, Index n_classes, const BiGRUConfig& config, std::uint64_t seed);

/// Multinomial naive Bayes with Laplace/Lidstone smoothing over raw counts.
Classifier train_nb(const features::SparseDocMatrix& counts, std::span<const int> labels, Index n_classes,
                    double alpha = 1.0);

/// Per-row unnormalized log-probabilities (rows x K), in the order of `rows`.
Mat logits(const Classifier& model, const Inputs& inputs, std::span<const std::size_t> rows);

/// Class-weighted mean cross-entropy sum_i w_{y_i} l_i / sum_i w_{y_i} over `rows`, where labels
/// are indexed by row. Adds the gradient into `grad` when given. Dropout is active only when
/// `dropout_rng` is non-null.
double loss_and_grad(const Classifier& model, const Inputs& inputs, std::span<const std::size_t> rows,
                     std::span<const int> labels, std::span<const double> class_weights, ParamSet* grad,
                     util::Rng* dropout_rng = nullptr);

struct Prediction {
  std::vector<int> labels;
  Mat probabilities;
};

/// Softmax probabilities with argmax labels (lowest index wins ties). Empty `rows` means all rows.
Prediction predict(const Classifier& model, const Inputs& inputs, std::span<const std::size_t> rows = {});

/// Row-wise softmax, stable under constant shifts.
Mat softmax_rows(const Mat& logits);

/// Largest |g_analytic - g_numeric| / max(|g_analytic|, |g_numeric|, 1e-8) over `n_samples`
/// parameters drawn with `seed` (all parameters when there are fewer), using central differences.
double gradient_check(const Classifier& model, const Inputs& inputs, std::span<const std::size_t> rows,
                      std::span<const int> labels, std::span<const double> class_weights,
                      std::size_t n_samples = 100, double eps = 1e-4, std::uint64_t seed = 0);

// VLMODEL1 container: 8-byte magic, u32 LE header length, JSON header, LE float32 blocks.
std::string serialize(const Classifier& model);
Classifier deserialize(std::string_view bytes);
void save(const Classifier& model, const std::string& path);
Classifier load(const std::string& path);

}  // namespace vlink::nnet
