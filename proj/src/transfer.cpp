#include "vlink/transfer.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "vlink/error.hpp"
#include "vlink/features.hpp"
#include "vlink/util.hpp"

namespace vlink::transfer {

using nnet::Mat;
using nnet::SequenceSet;

std::string_view to_string(CombineKind kind) {
  switch (kind) {
    case CombineKind::embedding: return "embedding";
    case CombineKind::last: return "last";
    case CombineKind::second_to_last: return "second_to_last";
    case CombineKind::wsum_all: return "wsum_all";
    case CombineKind::wsum_last4: return "wsum_last4";
  }
  return "unknown";
}

CombineKind parse_combine_kind(std::string_view name) {
  for (auto k : kAllModes) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown layer mode '" + std::string(name) +
                    "' (expected embedding, last, second_to_last, wsum_all or wsum_last4)");
}

repspace::LayerWeights mode_weights(const LayerCombineMode& mode, std::size_t n_layers) {
  if (n_layers < 2) throw ConfigError("layer combination needs at least 2 layers");
  repspace::LayerWeights w{std::vector<double>(n_layers, 0.0)};
  if (!mode.weights.empty()) {
    if (mode.weights.size() != n_layers) {
      throw ConfigError("explicit layer weights have " + std::to_string(mode.weights.size()) + " entries for " +
                        std::to_string(n_layers) + " layers");
    }
    w.weights = mode.weights;
    return w;
  }
  auto require = [&](std::size_t needed) {
    if (n_layers < needed) {
      throw ConfigError("mode " + std::string(to_string(mode.kind)) + " needs " + std::to_string(needed) +
                        " layers, tensor has " + std::to_string(n_layers));
    }
  };
  switch (mode.kind) {
    case CombineKind::embedding:
      w.weights[0] = 1.0;
      break;
    case CombineKind::last:
      w.weights[n_layers - 1] = 1.0;
      break;
    case CombineKind::second_to_last:
      require(3);
      w.weights[n_layers - 2] = 1.0;
      break;
    case CombineKind::wsum_all:
      for (auto& v : w.weights) v = 1.0 / static_cast<double>(n_layers);
      break;
    case CombineKind::wsum_last4:
      require(5);
      return repspace::last_layers(n_layers, 4);
  }
  return w;
}

namespace {

Mat combine_ad(const repspace::EmbeddingTensor& tokens, const repspace::LayerWeights& w, std::size_t ad) {
  const std::size_t T = tokens.positions(ad);
  const auto dim = static_cast<Eigen::Index>(tokens.dim());
  // A zero-length ad still yields one zero row so recurrent models see a valid sequence.
  Mat out = Mat::Zero(static_cast<Eigen::Index>(std::max<std::size_t>(T, 1)), dim);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t l = 0; l < tokens.n_layers(); ++l) {
      const double wl = w.weights[l];
      if (wl == 0.0) continue;
      const auto v = tokens.vector(ad, l, t);
      for (Eigen::Index d = 0; d < dim; ++d) out(static_cast<Eigen::Index>(t), d) += wl * static_cast<double>(v[d]);
    }
  }
  return out;
}

}  // namespace

SequenceSet layer_combination(const repspace::EmbeddingTensor& tokens, const LayerCombineMode& mode) {
  if (tokens.mode() != repspace::Mode::token) throw DimensionError("layer combination requires a token-mode tensor");
  const auto w = mode_weights(mode, tokens.n_layers());
  SequenceSet out;
  out.dim = static_cast<nnet::Index>(tokens.dim());
  out.seqs.reserve(tokens.n_ads());
  for (std::size_t a = 0; a < tokens.n_ads(); ++a) out.seqs.push_back(combine_ad(tokens, w, a));
  return out;
}

SequenceSet aligned_sequences(const repspace::EmbeddingTensor& tokens, const corpus::Corpus& corpus,
                              const LayerCombineMode& mode) {
  if (tokens.mode() != repspace::Mode::token) throw DimensionError("layer combination requires a token-mode tensor");
  const auto w = mode_weights(mode, tokens.n_layers());
  SequenceSet out;
  out.dim = static_cast<nnet::Index>(tokens.dim());
  out.seqs.reserve(corpus.size());
  for (const auto& ad : corpus.ads()) {
    const auto row = tokens.find(ad.id);
    if (row < 0) throw NotFoundError("token tensor has no entry for ad '" + ad.id + "'");
    out.seqs.push_back(combine_ad(tokens, w, static_cast<std::size_t>(row)));
  }
  return out;
}

evalmetrics::EvalReport zero_shot_verify(const nnet::Classifier& model, const corpus::LabelSpace& source_labels,
                                         const corpus::Corpus& target, const nnet::Inputs& target_inputs,
                                         std::span<const std::size_t> rows, evalmetrics::MacroAverage average) {
  if (static_cast<std::size_t>(model.n_classes) != source_labels.n_classes()) {
    throw DimensionError("model has " + std::to_string(model.n_classes) + " classes, label space has " +
                         std::to_string(source_labels.n_classes()));
  }
  if (nnet::input_rows(target_inputs) != target.size()) {
    throw DimensionError("target inputs have " + std::to_string(nnet::input_rows(target_inputs)) + " rows for " +
                         std::to_string(target.size()) + " ads");
  }
  const auto remap = evalmetrics::zero_shot_remap(source_labels, target);
  const auto pred = nnet::predict(model, target_inputs, rows);
  std::vector<int> gold;
  if (rows.empty()) {
    gold = remap.gold;
  } else {
    for (auto r : rows) gold.push_back(remap.gold.at(r));
  }
  auto report = evalmetrics::evaluate(gold, pred.labels, source_labels.n_classes(), average);
  evalmetrics::name_classes(report, source_labels);
  report.headline = "micro_f1";
  return report;
}

nnet::TrainResult train_transfer_bigru(const repspace::EmbeddingTensor& tokens, const corpus::Corpus& target,
                                       const LayerCombineMode& mode, std::span<const int> labels,
                                       std::size_t n_classes, const corpus::SplitSet& split,
                                       const nnet::TrainConfig& train, const nnet::BiGRUConfig& bigru) {
  if (labels.size() != target.size()) throw DimensionError("label count does not match target corpus");
  const nnet::Inputs inputs = aligned_sequences(tokens, target, mode);
  auto init = nnet::make_bigru(static_cast<nnet::Index>(tokens.dim()), static_cast<nnet::Index>(n_classes), bigru,
                               util::derive_seed(train.seed, "transfer-init"));
  auto result = nnet::train_gradient_model(std::move(init), inputs, labels, split.train, split.val, train);
  result.model.meta["transfer"] = {{"mode", to_string(mode.kind)},
                                   {"weights", mode_weights(mode, tokens.n_layers()).weights},
                                   {"checkpoint_tag", tokens.checkpoint_tag()}};
  return result;
}

StaticEmbeddings load_static_vectors(const std::string& path) {
  std::istringstream in(util::read_file(path));
  StaticEmbeddings out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto parts = util::split_whitespace(line);
    if (parts.empty()) continue;
    if (line_no == 1 && parts.size() == 2) continue;
    if (parts.size() < 2) throw RecordError(line_no, "vector line has no values");
    std::vector<float> v;
    v.reserve(parts.size() - 1);
    for (std::size_t i = 1; i < parts.size(); ++i) {
      try {
        v.push_back(std::stof(std::string(parts[i])));
      } catch (const std::exception&) {
        throw RecordError(line_no, "bad vector value '" + std::string(parts[i]) + "'");
      }
    }
    if (out.dim == 0) out.dim = v.size();
    if (v.size() != out.dim) throw RecordError(line_no, "vector dimension differs from first line");
    out.vectors.emplace(std::string(parts[0]), std::move(v));
  }
  return out;
}

SequenceSet end_to_end_sequences(const corpus::Corpus& corpus, std::span<const std::size_t> train_rows,
                                 const EndToEndConfig& config, std::uint64_t seed, const StaticEmbeddings* pretrained) {
  if (config.max_len < 1) throw ConfigError("end-to-end max_len must be at least 1");
  const std::size_t dim = pretrained ? pretrained->dim : config.dim;
  if (dim < 1) throw ConfigError("end-to-end embedding dim must be at least 1");
  std::vector<std::string> train_texts;
  train_texts.reserve(train_rows.size());
  for (auto r : train_rows) train_texts.push_back(corpus[r].merged_text);
  features::VocabConfig vc;
  vc.ngram_min = 1;
  vc.ngram_max = 1;
  vc.min_df = config.min_df;
  const auto vocab = features::Vocabulary::fit(train_texts, vc);

  util::Rng rng(util::derive_seed(seed, "static-embeddings"));
  Mat table(static_cast<Eigen::Index>(vocab.size()), static_cast<Eigen::Index>(dim));
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  for (std::size_t c = 0; c < vocab.size(); ++c) {
    const std::vector<float>* known = nullptr;
    if (pretrained) {
      auto it = pretrained->vectors.find(vocab.terms()[c]);
      if (it != pretrained->vectors.end()) known = &it->second;
    }
    for (std::size_t d = 0; d < dim; ++d) {
      const double v = known ? static_cast<double>((*known)[d]) : rng.normal() * scale;
      table(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(d)) = v;
    }
    table.row(static_cast<Eigen::Index>(c)) *= vocab.idf(c);
  }

  SequenceSet out;
  out.dim = static_cast<nnet::Index>(dim);
  out.seqs.reserve(corpus.size());
  for (const auto& ad : corpus.ads()) {
    const auto terms = vocab.extract_terms(ad.merged_text);
    const std::size_t T = std::min(terms.size(), config.max_len);
    Mat seq = Mat::Zero(static_cast<Eigen::Index>(std::max<std::size_t>(T, 1)), static_cast<Eigen::Index>(dim));
    for (std::size_t t = 0; t < T; ++t) {
      const auto c = vocab.index_of(terms[t]);
      if (c >= 0) seq.row(static_cast<Eigen::Index>(t)) = table.row(static_cast<Eigen::Index>(c));
    }
    out.seqs.push_back(std::move(seq));
  }
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

evalmetrics::EvalReport score_test(const nnet::Classifier& model, const nnet::Inputs& inputs, std::span<const int> labels,
                                   std::size_t n_classes, const corpus::SplitSet& split) {
  const auto pred = nnet::predict(model, inputs, split.test);
  std::vector<int> gold;
  gold.reserve(split.test.size());
  for (auto r : split.test) gold.push_back(labels[r]);
  return evalmetrics::evaluate(gold, pred.labels, n_classes, evalmetrics::MacroAverage::present_classes);
}

}  // namespace

TransferRun run_lr_benchmark(const corpus::Corpus& target, std::span<const int> labels, std::size_t n_classes,
                             const corpus::SplitSet& split, const ZeroShotInput& zero_shot,
                             const repspace::EmbeddingTensor* tokens, const BenchmarkConfig& config,
                             const StaticEmbeddings* pretrained) {
  if (labels.size() != target.size()) throw DimensionError("label count does not match target corpus");
  if (split.test.empty()) throw ConfigError("benchmark needs a non-empty test split");
  TransferRun run;
  run.target_tag = target.provenance();
  run.source_tag = zero_shot.tag;
  run.tensor_tag = tokens ? tokens->checkpoint_tag() : std::string();

  {
    BenchmarkRow row{"zero_shot", "-", std::nullopt, 0, 0.0, {}};
    if (zero_shot.model && zero_shot.labels && zero_shot.inputs) {
      const auto start = Clock::now();
      row.report = zero_shot_verify(*zero_shot.model, *zero_shot.labels, target, *zero_shot.inputs, split.test,
                                    evalmetrics::MacroAverage::present_classes);
      row.params = zero_shot.model->params.size();
      row.wall_seconds = seconds_since(start);
    } else {
      row.skipped = zero_shot.skip_reason;
    }
    run.rows.push_back(std::move(row));
  }

  {
    BenchmarkRow row{"end_to_end_bigru", pretrained ? "static_vectors" : "tfidf_random", std::nullopt, 0, 0.0, {}};
    const auto start = Clock::now();
    const nnet::Inputs inputs = end_to_end_sequences(target, split.train, config.end_to_end, config.seed, pretrained);
    auto train = config.train;
    train.seed = util::derive_seed(config.seed, "end_to_end");
    const auto init = nnet::make_bigru(std::get<SequenceSet>(inputs).dim, static_cast<nnet::Index>(n_classes),
                                       config.bigru, util::derive_seed(train.seed, "init"));
    const auto result = nnet::train_gradient_model(init, inputs, labels, split.train, split.val, train);
    row.report = score_test(result.model, inputs, labels, n_classes, split);
    row.params = result.model.params.size();
    row.wall_seconds = seconds_since(start);
    run.rows.push_back(std::move(row));
  }

  for (const auto& mode : config.modes) {
    BenchmarkRow row{"transfer_bigru", std::string(to_string(mode.kind)), std::nullopt, 0, 0.0, {}};
    if (!mode.weights.empty()) row.mode += "+weights";
    if (!tokens) {
      row.skipped = "no token tensor";
      run.rows.push_back(std::move(row));
      continue;
    }
    const auto start = Clock::now();
    auto train = config.train;
    train.seed = util::derive_seed(config.seed, "transfer");
    const auto result = train_transfer_bigru(*tokens, target, mode, labels, n_classes, split, train, config.bigru);
    const nnet::Inputs inputs = aligned_sequences(*tokens, target, mode);
    row.report = score_test(result.model, inputs, labels, n_classes, split);
    row.params = result.model.params.size();
    row.wall_seconds = seconds_since(start);
    run.rows.push_back(std::move(row));
  }
  return run;
}

std::string benchmark_csv(const TransferRun& run, bool include_wall_seconds) {
  std::string out = "model,mode,micro_f1,macro_f1,accuracy,params,wall_seconds\n";
  for (const auto& r : run.rows) {
    out += util::csv_field(r.model) + "," + util::csv_field(r.mode) + ",";
    if (r.report) {
      out += util::format_double(r.report->micro_f1) + "," + util::format_double(r.report->macro_f1) + "," +
             util::format_double(r.report->accuracy) + "," + std::to_string(r.params) + ",";
      out += include_wall_seconds ? util::format_double(r.wall_seconds) : std::string("-");
    } else {
      out += "skipped,skipped,skipped,skipped,skipped";
    }
    out += "\n";
  }
  return out;
}

nlohmann::json to_json(const TransferRun& run, bool include_wall_seconds) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : run.rows) {
    nlohmann::json j = {{"model", r.model}, {"mode", r.mode}};
    if (r.report) {
      j["micro_f1"] = r.report->micro_f1;
      j["macro_f1"] = r.report->macro_f1;
      j["accuracy"] = r.report->accuracy;
      j["headline"] = r.report->headline;
      j["params"] = r.params;
      if (include_wall_seconds) j["wall_seconds"] = r.wall_seconds;
    } else {
      j["skipped"] = r.skipped;
    }
    rows.push_back(std::move(j));
  }
  return {{"source_tag", run.source_tag}, {"target_tag", run.target_tag}, {"tensor_tag", run.tensor_tag}, {"rows", rows}};
}

}  // namespace vlink::transfer
