#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "vlink/features.hpp"
#include "vlink/identify.hpp"
#include "vlink/nnet/classifier.hpp"
#include "vlink/nnet/train.hpp"
#include "vlink/transfer.hpp"

namespace vlink::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitUsage = 64;

struct CorpusSection {
  std::vector<std::string> paths;
  /// "jsonl", "csv" or "auto" (by extension).
  std::string format = "auto";
  std::size_t truncate = 512;
  std::size_t min_ads = 20;
  std::array<double, 3> split{0.75, 0.05, 0.20};
  bool dedupe = true;
  /// Drop vendors whose cross-market ads are verbatim copies.
  bool remove_identical = true;
};

struct ClassifierSection {
  nnet::ModelKind kind = nnet::ModelKind::softmax;
  features::VocabConfig vocab;
  nnet::TrainConfig train;
  nnet::BiGRUConfig bigru;
  nnet::MlpConfig mlp;
  double nb_alpha = 1.0;
  /// Token sequences for the bigru kind.
  transfer::EndToEndConfig sequence;
};

struct EmbeddingSection {
  std::string before;
  std::string after;
  std::string tokens;
  std::string static_vectors;
};

struct SanitySection {
  std::size_t cap = 200;
  /// Overrides corpus.paths when non-empty.
  std::vector<std::string> corpus;
};

struct IdentifySection {
  /// Overrides corpus.paths when non-empty.
  std::vector<std::string> corpus;
  double sim_norm_threshold = 0.8;
  double name_threshold = 0.7;
  std::size_t layers = 4;
  identify::Aggregation aggregation = identify::Aggregation::mean_pairwise;
  std::size_t top_k = 10;
  /// Seeded CKA row subset size; 0 uses every ad.
  std::size_t cka_max_ads = 2000;
};

struct TransferSection {
  std::string target;
  std::string source_model;
  std::size_t min_ads = 20;
  std::array<double, 3> split{0.75, 0.05, 0.20};
  nnet::TrainConfig train;
  nnet::BiGRUConfig bigru;
  transfer::EndToEndConfig end_to_end;
  /// Write measured wall-clock seconds; off gives byte-stable tables.
  bool timing = true;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::string out = "out";
  unsigned workers = 1;
  CorpusSection corpus;
  SanitySection sanity;
  ClassifierSection classifier;
  EmbeddingSection embeddings;
  IdentifySection identify;
  TransferSection transfer;

  nlohmann::json to_json() const;
  /// Relative paths are resolved against `base_dir`. Unknown keys are rejected.
  static PipelineConfig from_json(const nlohmann::json& j, const std::string& base_dir = "");
  /// Range checks that do not touch the filesystem.
  void validate() const;
};

/// Runs one subcommand; returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vlink::cli
