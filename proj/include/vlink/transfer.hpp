#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "vlink/corpus.hpp"
#include "vlink/evalmetrics.hpp"
#include "vlink/nnet/classifier.hpp"
#include "vlink/nnet/train.hpp"
#include "vlink/repspace.hpp"

namespace vlink::transfer {

/// Layer 0 is the embedding layer; 1..L are transformer blocks.
enum class CombineKind { embedding, last, second_to_last, wsum_all, wsum_last4 };

inline constexpr std::array<CombineKind, 5> kAllModes = {CombineKind::embedding, CombineKind::last,
                                                         CombineKind::second_to_last, CombineKind::wsum_all,
                                                         CombineKind::wsum_last4};

std::string_view to_string(CombineKind kind);
CombineKind parse_combine_kind(std::string_view name);

struct LayerCombineMode {
  CombineKind kind = CombineKind::last;
  /// When non-empty, used instead of the kind's weights (one per layer).
  std::vector<double> weights;
};

/// Per-layer weights for a mode. Throws ConfigError when the mode needs more layers than present
/// or explicit weights have the wrong length.
repspace::LayerWeights mode_weights(const LayerCombineMode& mode, std::size_t n_layers);

/// One T x dim sequence per ad of a token tensor, in tensor order.
nnet::SequenceSet layer_combination(const repspace::EmbeddingTensor& tokens, const LayerCombineMode& mode);

/// Sequences reordered to corpus order; throws NotFoundError when an ad is missing from the tensor.
nnet::SequenceSet aligned_sequences(const repspace::EmbeddingTensor& tokens, const corpus::Corpus& corpus,
                                    const LayerCombineMode& mode);

/// Scores a source model on a target corpus whose gold labels are remapped into the source label
/// space. Input rows must follow corpus order; `rows` restricts scoring (empty means all).
/// The headline metric is micro-F1.
evalmetrics::EvalReport zero_shot_verify(const nnet::Classifier& model, const corpus::LabelSpace& source_labels,
                                         const corpus::Corpus& target, const nnet::Inputs& target_inputs,
                                         std::span<const std::size_t> rows = {},
                                         evalmetrics::MacroAverage average = evalmetrics::MacroAverage::all_classes);

/// BiGRU + dense head over frozen combined token representations.
nnet::TrainResult train_transfer_bigru(const repspace::EmbeddingTensor& tokens, const corpus::Corpus& target,
                                       const LayerCombineMode& mode, std::span<const int> labels,
                                       std::size_t n_classes, const corpus::SplitSet& split,
                                       const nnet::TrainConfig& train, const nnet::BiGRUConfig& bigru);

/// Word-to-vector table for the end-to-end baseline.
struct StaticEmbeddings {
  std::size_t dim = 0;
  std::unordered_map<std::string, std::vector<float>> vectors;
};

/// Reads whitespace-separated text vectors ("word v1 .. vd" per line; an optional "count dim" first line).
StaticEmbeddings load_static_vectors(const std::string& path);

struct EndToEndConfig {
  std::size_t dim = 32;
  /// Tokens kept per ad.
  std::size_t max_len = 64;
  std::size_t min_df = 1;
};

/// Token sequences for the from-scratch baseline: each token maps to a seeded random (or supplied)
/// static vector scaled by its training-split idf; out-of-vocabulary tokens map to zero.
nnet::SequenceSet end_to_end_sequences(const corpus::Corpus& corpus, std::span<const std::size_t> train_rows,
                                       const EndToEndConfig& config, std::uint64_t seed,
                                       const StaticEmbeddings* pretrained = nullptr);

struct ZeroShotInput {
  const nnet::Classifier* model = nullptr;
  const corpus::LabelSpace* labels = nullptr;
  /// Target featurized with the source pipeline, corpus order.
  const nnet::Inputs* inputs = nullptr;
  std::string tag;
  /// Reported when the row cannot run.
  std::string skip_reason = "no source model";
};

struct BenchmarkConfig {
  nnet::TrainConfig train;
  nnet::BiGRUConfig bigru;
  EndToEndConfig end_to_end;
  std::vector<LayerCombineMode> modes = {{CombineKind::embedding, {}},
                                         {CombineKind::last, {}},
                                         {CombineKind::second_to_last, {}},
                                         {CombineKind::wsum_all, {}},
                                         {CombineKind::wsum_last4, {}}};
  std::uint64_t seed = 0;
};

struct BenchmarkRow {
  std::string model;
  std::string mode;
  std::optional<evalmetrics::EvalReport> report;
  std::size_t params = 0;
  double wall_seconds = 0.0;
  /// Why the row has no metrics.
  std::string skipped;
};

struct TransferRun {
  std::string source_tag;
  std::string target_tag;
  std::string tensor_tag;
  std::vector<BenchmarkRow> rows;
};

/// Zero-shot, end-to-end BiGRU and one transfer-BiGRU row per mode, all scored on the test split
/// with macro-F1 over the classes present in gold or predictions.
/// Missing inputs yield rows with a `skipped` reason. Rows run sequentially.
TransferRun run_lr_benchmark(const corpus::Corpus& target, std::span<const int> labels, std::size_t n_classes,
                             const corpus::SplitSet& split, const ZeroShotInput& zero_shot,
                             const repspace::EmbeddingTensor* tokens, const BenchmarkConfig& config,
                             const StaticEmbeddings* pretrained = nullptr);

/// model, mode, micro_f1, macro_f1, accuracy, params, wall_seconds ("skipped" in metric cells).
std::string benchmark_csv(const TransferRun& run, bool include_wall_seconds = true);
nlohmann::json to_json(const TransferRun& run, bool include_wall_seconds = true);

}  // namespace vlink::transfer
