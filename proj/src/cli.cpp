#include "vlink/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>

#include <CLI11.hpp>

#include "vlink/corpus.hpp"
#include "vlink/error.hpp"
#include "vlink/evalmetrics.hpp"
#include "vlink/repspace.hpp"
#include "vlink/stylometry.hpp"
#include "vlink/synth.hpp"
#include "vlink/util.hpp"

#ifndef VLINK_VERSION
#define VLINK_VERSION "0.0.0"
#endif

namespace vlink::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Config (de)serialization

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view section) {
  if (!j.is_object()) throw ConfigError("config section '" + std::string(section) + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (auto a : allowed) known = known || a == key;
    if (!known) throw ConfigError("unknown config key '" + std::string(section) + "." + key + "'");
  }
}

std::string resolve(const std::string& base, const std::string& p) {
  if (p.empty() || base.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base) / p).lexically_normal().string();
}

std::vector<std::string> resolve_all(const std::string& base, std::vector<std::string> paths) {
  for (auto& p : paths) p = resolve(base, p);
  return paths;
}

std::array<double, 3> ratios_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw ConfigError("split must list three ratios (train, val, test)");
  return {v[0], v[1], v[2]};
}

json vocab_json(const features::VocabConfig& v) {
  return {{"ngram_min", v.ngram_min},
          {"ngram_max", v.ngram_max},
          {"min_df", v.min_df},
          {"case_mode", v.case_mode == features::CaseMode::lower ? "lower" : "preserve"}};
}

features::VocabConfig vocab_from(const json& j, features::VocabConfig v) {
  check_keys(j, {"ngram_min", "ngram_max", "min_df", "case_mode"}, "classifier.vocab");
  v.ngram_min = j.value("ngram_min", v.ngram_min);
  v.ngram_max = j.value("ngram_max", v.ngram_max);
  v.min_df = j.value("min_df", v.min_df);
  if (j.contains("case_mode")) {
    const auto m = j["case_mode"].get<std::string>();
    if (m != "lower" && m != "preserve") throw ConfigError("case_mode must be 'preserve' or 'lower'");
    v.case_mode = m == "lower" ? features::CaseMode::lower : features::CaseMode::preserve;
  }
  return v;
}

json bigru_json(const nnet::BiGRUConfig& b) {
  return {{"layers", b.layers},
          {"hidden", b.hidden},
          {"head_hidden", b.head_hidden},
          {"dropout", b.dropout},
          {"bidirectional", b.bidirectional}};
}

nnet::BiGRUConfig bigru_from(const json& j, nnet::BiGRUConfig b, std::string_view section) {
  check_keys(j, {"layers", "hidden", "head_hidden", "dropout", "bidirectional", "preset"}, section);
  if (j.value("preset", std::string()) == "paper") b = nnet::BiGRUConfig::paper_preset();
  b.layers = j.value("layers", b.layers);
  b.hidden = j.value("hidden", b.hidden);
  b.head_hidden = j.value("head_hidden", b.head_hidden);
  b.dropout = j.value("dropout", b.dropout);
  b.bidirectional = j.value("bidirectional", b.bidirectional);
  return b;
}

json sequence_json(const transfer::EndToEndConfig& e) {
  return {{"dim", e.dim}, {"max_len", e.max_len}, {"min_df", e.min_df}};
}

transfer::EndToEndConfig sequence_from(const json& j, transfer::EndToEndConfig e, std::string_view section) {
  check_keys(j, {"dim", "max_len", "min_df"}, section);
  e.dim = j.value("dim", e.dim);
  e.max_len = j.value("max_len", e.max_len);
  e.min_df = j.value("min_df", e.min_df);
  return e;
}

nnet::TrainConfig train_from(const json& j, const nnet::TrainConfig& defaults, std::string_view section) {
  check_keys(j,
             {"learning_rate", "beta1", "beta2", "epsilon", "weight_decay", "decoupled_weight_decay", "warmup_steps",
              "batch_size", "max_epochs", "seed", "class_weights", "patience"},
             section);
  return nnet::TrainConfig::from_json(j, defaults);
}

std::string_view aggregation_name(identify::Aggregation a) {
  return a == identify::Aggregation::centroid ? "centroid" : "mean_pairwise";
}

}  // namespace

json PipelineConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["out"] = out;
  j["workers"] = workers;
  j["corpus"] = {{"paths", corpus.paths},
                 {"format", corpus.format},
                 {"truncate", corpus.truncate},
                 {"min_ads", corpus.min_ads},
                 {"split", corpus.split},
                 {"dedupe", corpus.dedupe},
                 {"remove_identical", corpus.remove_identical}};
  j["sanity"] = {{"cap", sanity.cap}, {"corpus", sanity.corpus}};
  j["classifier"] = {{"kind", nnet::to_string(classifier.kind)},
                     {"vocab", vocab_json(classifier.vocab)},
                     {"train", classifier.train.to_json()},
                     {"bigru", bigru_json(classifier.bigru)},
                     {"mlp", {{"hidden", classifier.mlp.hidden}, {"dropout", classifier.mlp.dropout}}},
                     {"nb_alpha", classifier.nb_alpha},
                     {"sequence", sequence_json(classifier.sequence)}};
  j["embeddings"] = {{"before", embeddings.before},
                     {"after", embeddings.after},
                     {"tokens", embeddings.tokens},
                     {"static_vectors", embeddings.static_vectors}};
  j["identify"] = {{"corpus", identify.corpus},
                   {"sim_norm_threshold", identify.sim_norm_threshold},
                   {"name_threshold", identify.name_threshold},
                   {"layers", identify.layers},
                   {"aggregation", aggregation_name(identify.aggregation)},
                   {"top_k", identify.top_k},
                   {"cka_max_ads", identify.cka_max_ads}};
  j["transfer"] = {{"target", transfer.target},
                   {"source_model", transfer.source_model},
                   {"min_ads", transfer.min_ads},
                   {"split", transfer.split},
                   {"train", transfer.train.to_json()},
                   {"bigru", bigru_json(transfer.bigru)},
                   {"end_to_end", sequence_json(transfer.end_to_end)},
                   {"timing", transfer.timing}};
  return j;
}

PipelineConfig PipelineConfig::from_json(const json& j, const std::string& base) {
  check_keys(j, {"seed", "out", "workers", "corpus", "sanity", "classifier", "embeddings", "identify", "transfer"},
             "config");
  PipelineConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    c.out = resolve(base, j.value("out", c.out));
    c.workers = j.value("workers", c.workers);
    if (j.contains("corpus")) {
      const auto& s = j["corpus"];
      check_keys(s, {"paths", "format", "truncate", "min_ads", "split", "dedupe", "remove_identical"}, "corpus");
      c.corpus.paths = resolve_all(base, s.value("paths", c.corpus.paths));
      c.corpus.format = s.value("format", c.corpus.format);
      c.corpus.truncate = s.value("truncate", c.corpus.truncate);
      c.corpus.min_ads = s.value("min_ads", c.corpus.min_ads);
      if (s.contains("split")) c.corpus.split = ratios_from(s["split"]);
      c.corpus.dedupe = s.value("dedupe", c.corpus.dedupe);
      c.corpus.remove_identical = s.value("remove_identical", c.corpus.remove_identical);
    }
    if (j.contains("sanity")) {
      const auto& s = j["sanity"];
      check_keys(s, {"cap", "corpus"}, "sanity");
      c.sanity.cap = s.value("cap", c.sanity.cap);
      c.sanity.corpus = resolve_all(base, s.value("corpus", c.sanity.corpus));
    }
    if (j.contains("classifier")) {
      const auto& s = j["classifier"];
      check_keys(s, {"kind", "vocab", "train", "bigru", "mlp", "nb_alpha", "sequence"}, "classifier");
      if (s.contains("kind")) c.classifier.kind = nnet::parse_model_kind(s["kind"].get<std::string>());
      if (s.contains("vocab")) c.classifier.vocab = vocab_from(s["vocab"], c.classifier.vocab);
      if (s.contains("train")) c.classifier.train = train_from(s["train"], c.classifier.train, "classifier.train");
      if (s.contains("bigru")) c.classifier.bigru = bigru_from(s["bigru"], c.classifier.bigru, "classifier.bigru");
      if (s.contains("mlp")) {
        check_keys(s["mlp"], {"hidden", "dropout"}, "classifier.mlp");
        c.classifier.mlp.hidden = s["mlp"].value("hidden", c.classifier.mlp.hidden);
        c.classifier.mlp.dropout = s["mlp"].value("dropout", c.classifier.mlp.dropout);
      }
      c.classifier.nb_alpha = s.value("nb_alpha", c.classifier.nb_alpha);
      if (s.contains("sequence")) {
        c.classifier.sequence = sequence_from(s["sequence"], c.classifier.sequence, "classifier.sequence");
      }
    }
    if (j.contains("embeddings")) {
      const auto& s = j["embeddings"];
      check_keys(s, {"before", "after", "tokens", "static_vectors"}, "embeddings");
      c.embeddings.before = resolve(base, s.value("before", c.embeddings.before));
      c.embeddings.after = resolve(base, s.value("after", c.embeddings.after));
      c.embeddings.tokens = resolve(base, s.value("tokens", c.embeddings.tokens));
      c.embeddings.static_vectors = resolve(base, s.value("static_vectors", c.embeddings.static_vectors));
    }
    if (j.contains("identify")) {
      const auto& s = j["identify"];
      check_keys(s,
                 {"corpus", "sim_norm_threshold", "name_threshold", "layers", "aggregation", "top_k", "cka_max_ads"},
                 "identify");
      c.identify.corpus = resolve_all(base, s.value("corpus", c.identify.corpus));
      c.identify.sim_norm_threshold = s.value("sim_norm_threshold", c.identify.sim_norm_threshold);
      c.identify.name_threshold = s.value("name_threshold", c.identify.name_threshold);
      c.identify.layers = s.value("layers", c.identify.layers);
      if (s.contains("aggregation")) {
        const auto a = s["aggregation"].get<std::string>();
        if (a != "mean_pairwise" && a != "centroid") {
          throw ConfigError("identify.aggregation must be 'mean_pairwise' or 'centroid'");
        }
        c.identify.aggregation = a == "centroid" ? identify::Aggregation::centroid : identify::Aggregation::mean_pairwise;
      }
      c.identify.top_k = s.value("top_k", c.identify.top_k);
      c.identify.cka_max_ads = s.value("cka_max_ads", c.identify.cka_max_ads);
    }
    if (j.contains("transfer")) {
      const auto& s = j["transfer"];
      check_keys(s, {"target", "source_model", "min_ads", "split", "train", "bigru", "end_to_end", "timing"},
                 "transfer");
      c.transfer.target = resolve(base, s.value("target", c.transfer.target));
      c.transfer.source_model = resolve(base, s.value("source_model", c.transfer.source_model));
      c.transfer.min_ads = s.value("min_ads", c.transfer.min_ads);
      if (s.contains("split")) c.transfer.split = ratios_from(s["split"]);
      if (s.contains("train")) c.transfer.train = train_from(s["train"], c.transfer.train, "transfer.train");
      if (s.contains("bigru")) c.transfer.bigru = bigru_from(s["bigru"], c.transfer.bigru, "transfer.bigru");
      if (s.contains("end_to_end")) {
        c.transfer.end_to_end = sequence_from(s["end_to_end"], c.transfer.end_to_end, "transfer.end_to_end");
      }
      c.transfer.timing = s.value("timing", c.transfer.timing);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config value has the wrong type: ") + e.what());
  }
  return c;
}

void PipelineConfig::validate() const {
  if (workers < 1) throw ConfigError("workers must be at least 1");
  if (corpus.truncate < 1) throw ConfigError("corpus.truncate must be at least 1");
  if (corpus.min_ads < 1 || transfer.min_ads < 1) throw ConfigError("min_ads must be at least 1");
  if (corpus.format != "auto" && corpus.format != "jsonl" && corpus.format != "csv") {
    throw ConfigError("corpus.format must be auto, jsonl or csv");
  }
  for (double t : {identify.sim_norm_threshold, identify.name_threshold}) {
    if (!(t >= 0.0 && t <= 2.0)) throw ConfigError("similarity thresholds must lie in [0, 2]");
  }
  if (identify.layers < 1) throw ConfigError("identify.layers must be at least 1");
  if (classifier.vocab.ngram_min < 1 || classifier.vocab.ngram_max < classifier.vocab.ngram_min) {
    throw ConfigError("invalid n-gram range");
  }
  if (classifier.bigru.layers < 1 || classifier.bigru.hidden < 1 || transfer.bigru.layers < 1 ||
      transfer.bigru.hidden < 1) {
    throw ConfigError("BiGRU layers and hidden size must be positive");
  }
  for (double d : {classifier.bigru.dropout, transfer.bigru.dropout, classifier.mlp.dropout}) {
    if (!(d >= 0.0 && d < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  }
  classifier.train.validate();
  transfer.train.validate();
}

namespace {

// ---------------------------------------------------------------------------
// Shared pipeline steps

struct Context {
  PipelineConfig cfg;
  std::ostream& out;
  std::ostream& err;

  std::string path(const std::string& name) const { return (fs::path(cfg.out) / name).string(); }
};

void require_file(const std::string& p, std::string_view what) {
  if (p.empty()) throw ConfigError("no " + std::string(what) + " configured");
  if (!fs::exists(p)) throw NotFoundError(std::string(what) + " not found: " + p);
}

corpus::Corpus read_corpora(const std::vector<std::string>& paths, const std::string& format) {
  if (paths.empty()) throw ConfigError("no corpus paths configured (corpus.paths or --corpus)");
  std::vector<corpus::Corpus> parts;
  for (const auto& p : paths) {
    const auto fmt = format == "auto" ? corpus::format_from_path(p) : corpus::parse_format(format);
    parts.push_back(corpus::ingest(p, fmt));
  }
  return corpus::concat(parts);
}

struct Prepared {
  corpus::Corpus corpus;
  std::vector<std::string> removed;
};

Prepared prepare(const Context& ctx, const std::vector<std::string>& paths, bool remove_identical) {
  const auto& c = ctx.cfg.corpus;
  Prepared p;
  p.corpus = read_corpora(paths, c.format);
  if (c.dedupe) p.corpus = corpus::dedupe(p.corpus);
  p.corpus = corpus::truncate(p.corpus, c.truncate);
  if (remove_identical && c.remove_identical) {
    stylometry::ProfileOptions opt;
    opt.cap = ctx.cfg.sanity.cap;
    opt.seed = util::derive_seed(ctx.cfg.seed, "sanity");
    opt.workers = ctx.cfg.workers;
    p.removed = stylometry::flag_identical_vendors(p.corpus, opt);
    if (!p.removed.empty()) p.corpus = corpus::remove_vendors(p.corpus, p.removed);
  }
  return p;
}

std::string corpus_digest(const corpus::Corpus& c) {
  std::string all;
  for (const auto& ad : c.ads()) {
    all += ad.id;
    all += '\x1f';
    all += ad.vendor_norm;
    all += '\x1f';
    all += ad.merged_text;
    all += '\x1e';
  }
  return util::digest(all);
}

json split_json(const corpus::SplitSet& s) {
  return {{"train", s.train}, {"val", s.val}, {"test", s.test}, {"ratios", s.ratios}, {"seed", s.seed}};
}

std::vector<std::string> texts_of(const corpus::Corpus& c) {
  std::vector<std::string> t;
  t.reserve(c.size());
  for (const auto& ad : c.ads()) t.push_back(ad.merged_text);
  return t;
}

/// Rebuilds the model's input representation for a corpus from the metadata written at training time.
nnet::Inputs featurize(const nnet::Classifier& model, const corpus::Corpus& c, std::span<const std::size_t> train_rows) {
  const auto kind = model.meta.value("features", std::string());
  if (kind == "tfidf" || kind == "counts") {
    const auto vocab = features::Vocabulary::from_json(model.meta.at("vocabulary"));
    return kind == "tfidf" ? vocab.transform_tfidf(texts_of(c)) : vocab.transform_counts(texts_of(c));
  }
  if (kind == "sequence") {
    const auto& s = model.meta.at("sequence");
    transfer::EndToEndConfig e;
    e.dim = s.at("dim").get<std::size_t>();
    e.max_len = s.at("max_len").get<std::size_t>();
    e.min_df = s.at("min_df").get<std::size_t>();
    return transfer::end_to_end_sequences(c, train_rows, e, s.at("seed").get<std::uint64_t>());
  }
  throw ConfigError("model metadata lacks a known feature pipeline");
}

evalmetrics::EvalReport score(const nnet::Classifier& model, const nnet::Inputs& inputs, std::span<const int> labels,
                              std::span<const std::size_t> rows, const corpus::LabelSpace& space) {
  const auto pred = nnet::predict(model, inputs, rows);
  std::vector<int> gold;
  gold.reserve(rows.size());
  for (auto r : rows) gold.push_back(labels[r]);
  auto report = evalmetrics::evaluate(gold, pred.labels, space.n_classes());
  evalmetrics::name_classes(report, space);
  return report;
}

void write_report(const Context& ctx, const evalmetrics::EvalReport& report) {
  util::write_file(ctx.path("eval_report.json"), evalmetrics::to_json(report).dump(2) + "\n");
  util::write_file(ctx.path("eval_table.txt"), evalmetrics::to_table(report));
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_synth(const Context& ctx) {
  const auto manifest = synth::write_fixtures(ctx.cfg.out, ctx.cfg.seed);
  PipelineConfig demo;
  demo.seed = ctx.cfg.seed;
  demo.out = "run";
  demo.corpus.paths = {"closed_set.jsonl"};
  demo.sanity.corpus = {"markets.jsonl"};
  demo.identify.corpus = {"markets.jsonl"};
  demo.classifier.train.learning_rate = 0.05;
  demo.classifier.train.warmup_steps = 10;
  demo.classifier.train.max_epochs = 30;
  demo.classifier.train.weight_decay = 0.0;
  demo.embeddings.before = "cls_before.vlemb";
  demo.embeddings.after = "cls_after.vlemb";
  demo.embeddings.tokens = "target_tokens.vlemb";
  demo.transfer.target = "target.jsonl";
  demo.transfer.source_model = "run/model.vlmodel";
  demo.transfer.train.learning_rate = 0.01;
  demo.transfer.train.warmup_steps = 20;
  demo.transfer.train.max_epochs = 30;
  demo.transfer.train.batch_size = 16;
  demo.transfer.bigru.layers = 2;
  demo.transfer.bigru.hidden = 16;
  demo.transfer.bigru.dropout = 0.2;
  util::write_file(ctx.path("config.json"), demo.to_json().dump(2) + "\n");
  ctx.out << "wrote fixtures to " << ctx.cfg.out << " (" << manifest["files"].size() << " files, config.json)\n";
  return kExitOk;
}

int cmd_ingest(const Context& ctx) {
  const auto p = prepare(ctx, ctx.cfg.corpus.paths, true);
  const auto labels = corpus::bucket_others(p.corpus, ctx.cfg.corpus.min_ads);
  const auto y = labels.labels(p.corpus);
  const auto split = corpus::split(y, ctx.cfg.corpus.split, util::derive_seed(ctx.cfg.seed, "split"),
                                   labels.others_index());
  auto manifest = corpus::manifest(p.corpus, labels);
  manifest["removed_identical"] = p.removed;
  manifest["corpus_digest"] = corpus_digest(p.corpus);
  util::write_file(ctx.path("corpus_manifest.json"), manifest.dump(2) + "\n");
  util::write_file(ctx.path("labels.json"), labels.to_json().dump(2) + "\n");
  util::write_file(ctx.path("split.json"), split_json(split).dump() + "\n");
  ctx.out << "ingested " << p.corpus.size() << " ads, " << labels.n_classes() << " classes ("
          << p.removed.size() << " identical vendors removed)\n";
  return kExitOk;
}

int cmd_sanity(const Context& ctx) {
  const auto& paths = ctx.cfg.sanity.corpus.empty() ? ctx.cfg.corpus.paths : ctx.cfg.sanity.corpus;
  const auto p = prepare(ctx, paths, false);
  stylometry::ProfileOptions opt;
  opt.cap = ctx.cfg.sanity.cap;
  opt.seed = util::derive_seed(ctx.cfg.seed, "sanity");
  opt.workers = ctx.cfg.workers;
  const auto rows = stylometry::sanity_profiles(p.corpus, opt);
  const auto flagged = stylometry::flag_identical_vendors(p.corpus, opt);
  util::write_file(ctx.path("sanity.csv"), stylometry::sanity_csv(rows));
  util::write_file(ctx.path("identical_vendors.json"), json(flagged).dump() + "\n");
  ctx.out << rows.size() << " profile rows; identical vendors: " << (flagged.empty() ? "none" : util::join(flagged, ", "))
          << "\n";
  return kExitOk;
}

int cmd_train(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto p = prepare(ctx, cfg.corpus.paths, true);
  const auto labels = corpus::bucket_others(p.corpus, cfg.corpus.min_ads);
  const auto y = labels.labels(p.corpus);
  const auto split_seed = util::derive_seed(cfg.seed, "split");
  const auto split = corpus::split(y, cfg.corpus.split, split_seed, labels.others_index());
  const auto K = static_cast<nnet::Index>(labels.n_classes());

  json meta = {{"labels", labels.to_json()},
               {"split", {{"seed", split_seed}, {"ratios", cfg.corpus.split}}},
               {"corpus_digest", corpus_digest(p.corpus)},
               {"root_seed", cfg.seed}};
  nnet::Inputs inputs;
  std::vector<std::string> train_texts;
  for (auto r : split.train) train_texts.push_back(p.corpus[r].merged_text);
  const auto kind = cfg.classifier.kind;
  if (kind == nnet::ModelKind::bigru) {
    const auto seq_seed = util::derive_seed(cfg.seed, "sequence");
    inputs = transfer::end_to_end_sequences(p.corpus, split.train, cfg.classifier.sequence, seq_seed);
    meta["features"] = "sequence";
    meta["sequence"] = sequence_json(cfg.classifier.sequence);
    meta["sequence"]["seed"] = seq_seed;
  } else {
    const auto vocab = features::Vocabulary::fit(train_texts, cfg.classifier.vocab);
    if (vocab.size() == 0) throw ConfigError("vocabulary is empty; lower classifier.vocab.min_df");
    const bool counts = kind == nnet::ModelKind::nb;
    inputs = counts ? vocab.transform_counts(texts_of(p.corpus)) : vocab.transform_tfidf(texts_of(p.corpus));
    meta["features"] = counts ? "counts" : "tfidf";
    meta["vocabulary"] = vocab.to_json();
  }

  nnet::Classifier model;
  auto train = cfg.classifier.train;
  train.seed = util::derive_seed(cfg.seed, "train");
  const auto init_seed = util::derive_seed(cfg.seed, "init");
  const auto dim = kind == nnet::ModelKind::bigru ? std::get<nnet::SequenceSet>(inputs).dim
                                                  : static_cast<nnet::Index>(std::get<features::SparseDocMatrix>(inputs).n_cols);
  switch (kind) {
    case nnet::ModelKind::nb: {
      const auto& x = std::get<features::SparseDocMatrix>(inputs);
      std::vector<int> ytr;
      for (auto r : split.train) ytr.push_back(y[r]);
      model = nnet::train_nb(x.select_rows(split.train), ytr, K, cfg.classifier.nb_alpha);
      break;
    }
    case nnet::ModelKind::softmax:
      model = nnet::train_gradient_model(nnet::make_softmax(dim, K), inputs, y, split.train, split.val, train).model;
      break;
    case nnet::ModelKind::mlp:
      model = nnet::train_gradient_model(nnet::make_mlp(dim, K, cfg.classifier.mlp, init_seed), inputs, y, split.train,
                                         split.val, train)
                  .model;
      break;
    case nnet::ModelKind::bigru:
      model = nnet::train_gradient_model(nnet::make_bigru(dim, K, cfg.classifier.bigru, init_seed), inputs, y,
                                         split.train, split.val, train)
                  .model;
      break;
  }
  for (auto& [k, v] : meta.items()) model.meta[k] = v;
  nnet::save(model, ctx.path("model.vlmodel"));
  util::write_file(ctx.path("labels.json"), labels.to_json().dump(2) + "\n");
  util::write_file(ctx.path("split.json"), split_json(split).dump() + "\n");
  const auto report = score(model, inputs, y, split.test, labels);
  write_report(ctx, report);
  ctx.out << "trained " << nnet::to_string(kind) << " on " << split.train.size() << " ads; test macro-F1 "
          << util::format_double(report.macro_f1) << ", accuracy " << util::format_double(report.accuracy) << "\n";
  return kExitOk;
}

std::string model_path(const Context& ctx, const std::string& flag) {
  const auto p = flag.empty() ? ctx.path("model.vlmodel") : flag;
  require_file(p, "model file");
  return p;
}

int cmd_eval(const Context& ctx, const std::string& model_flag, bool all_rows) {
  const auto model = nnet::load(model_path(ctx, model_flag));
  const auto p = prepare(ctx, ctx.cfg.corpus.paths, true);
  const auto labels = corpus::LabelSpace::from_json(model.meta.at("labels"));
  const auto y = labels.labels(p.corpus);
  const auto& s = model.meta.at("split");
  const auto split = corpus::split(y, ratios_from(s.at("ratios")), s.at("seed").get<std::uint64_t>(),
                                   labels.others_index());
  const auto inputs = featurize(model, p.corpus, split.train);
  std::vector<std::size_t> rows = split.test;
  if (all_rows) {
    rows.resize(p.corpus.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  }
  const auto report = score(model, inputs, y, rows, labels);
  write_report(ctx, report);
  ctx.out << evalmetrics::to_table(report);
  return kExitOk;
}

repspace::LayerWeights weights_from_file(const std::string& path) {
  require_file(path, "layer weights file");
  const auto j = json::parse(util::read_file(path));
  return {j.at("weights").get<std::vector<double>>()};
}

int cmd_cka(const Context& ctx) {
  const auto& e = ctx.cfg.embeddings;
  require_file(e.before, "before embeddings");
  require_file(e.after, "after embeddings");
  const auto before = repspace::load_embeddings(e.before);
  const auto after = repspace::load_embeddings(e.after);
  const auto profile =
      repspace::cka_profile(before, after, ctx.cfg.identify.cka_max_ads, util::derive_seed(ctx.cfg.seed, "cka"));
  const auto weights = repspace::select_layers(profile, ctx.cfg.identify.layers);
  std::vector<std::size_t> selected;
  for (std::size_t l = 0; l < weights.weights.size(); ++l) {
    if (weights.weights[l] != 0.0) selected.push_back(l);
  }
  util::write_file(ctx.path("cka_profile.csv"), repspace::profile_csv(profile));
  util::write_file(ctx.path("layer_weights.json"),
                   json{{"weights", weights.weights}, {"selected_layers", selected}, {"distance", profile.distance}}.dump(2) +
                       "\n");
  ctx.out << "selected layers:";
  for (auto l : selected) ctx.out << ' ' << l;
  ctx.out << "\n";
  return kExitOk;
}

int cmd_identify(const Context& ctx, const std::string& weights_flag) {
  const auto& cfg = ctx.cfg;
  require_file(cfg.embeddings.after, "after embeddings");
  const auto after = repspace::load_embeddings(cfg.embeddings.after);
  repspace::LayerWeights weights;
  std::string weight_source;
  if (!weights_flag.empty()) {
    weights = weights_from_file(weights_flag);
    weight_source = "file";
  } else if (!cfg.embeddings.before.empty()) {
    require_file(cfg.embeddings.before, "before embeddings");
    const auto before = repspace::load_embeddings(cfg.embeddings.before);
    weights = repspace::select_layers(
        repspace::cka_profile(before, after, cfg.identify.cka_max_ads, util::derive_seed(cfg.seed, "cka")),
        cfg.identify.layers);
    weight_source = "cka";
  } else {
    weights = repspace::last_layers(after.n_layers(), cfg.identify.layers);
    weight_source = "last_layers";
  }
  const auto& paths = cfg.identify.corpus.empty() ? cfg.corpus.paths : cfg.identify.corpus;
  const auto p = prepare(ctx, paths, true);
  identify::SimilarityIndex index(identify::build_style_sets(p.corpus, after, weights), cfg.identify.aggregation,
                                  cfg.workers);
  const auto report = identify::alias_report(p.corpus, index, cfg.identify.sim_norm_threshold, cfg.identify.top_k);
  const auto names = identify::name_similarity_pairs(p.corpus.vendors(), cfg.identify.name_threshold, &index);

  util::write_file(ctx.path("aliases.csv"), identify::records_csv(report.aliases, p.corpus));
  util::write_file(ctx.path("ranked.csv"), identify::records_csv(report.ranked, p.corpus));
  util::write_file(ctx.path("scatter.csv"), identify::scatter_csv(report.ranked));
  util::write_file(ctx.path("migrants.csv"), identify::migrants_csv(report.migrants));
  util::write_file(ctx.path("name_pairs.csv"), identify::name_pairs_csv(names));

  json cache;
  cache["sim_norm_threshold"] = cfg.identify.sim_norm_threshold;
  cache["name_threshold"] = cfg.identify.name_threshold;
  cache["aggregation"] = aggregation_name(cfg.identify.aggregation);
  cache["weights"] = weights.weights;
  cache["weight_source"] = weight_source;
  cache["removed_identical"] = p.removed;
  cache["n_vendors"] = index.sets().size();
  cache["aliases"] = json::array();
  for (const auto& r : report.aliases) cache["aliases"].push_back(identify::to_json(r));
  cache["ranked"] = json::array();
  for (const auto& r : report.ranked) cache["ranked"].push_back(identify::to_json(r));
  cache["migrants"] = json::array();
  for (const auto& m : report.migrants) cache["migrants"].push_back({{"vendor", m.vendor}, {"markets", m.markets}});
  cache["name_pairs"] = json::array();
  for (const auto& n : names) {
    json row = {{"a", n.a}, {"b", n.b}, {"name_sim", n.name_sim}};
    row["sim_norm"] = n.sim_norm ? json(*n.sim_norm) : json(nullptr);
    cache["name_pairs"].push_back(std::move(row));
  }
  util::write_file(ctx.path("similarity.json"), cache.dump(1) + "\n");
  ctx.out << index.sets().size() << " vendors; " << report.aliases.size() << " alias pairs at sim_norm >= "
          << util::format_double(cfg.identify.sim_norm_threshold) << "; " << report.migrants.size() << " migrants\n";
  return kExitOk;
}

int cmd_report(const Context& ctx) {
  const auto cache_path = ctx.path("similarity.json");
  if (!fs::exists(cache_path)) {
    throw NotFoundError("similarity cache not found: " + cache_path + " (run identify first)");
  }
  const auto cache = json::parse(util::read_file(cache_path));
  std::string md = "# Vendor linking report\n\n";
  md += std::string(identify::kDisclaimer.substr(2)) + "\n\n";
  md += "## Migrants (exact handle match across markets)\n\n";
  if (cache.at("migrants").empty()) md += "None.\n";
  for (const auto& m : cache.at("migrants")) {
    md += "- " + m.at("vendor").get<std::string>() + ": " +
          util::join(m.at("markets").get<std::vector<std::string>>(), ", ") + "\n";
  }
  md += "\n## Alias candidates (sim_norm >= " + util::format_double(cache.at("sim_norm_threshold").get<double>()) +
        ")\n\n";
  md += "| parent | candidate | sim_norm | rank | name_sim |\n|---|---|---|---|---|\n";
  for (const auto& j : cache.at("aliases")) {
    const auto r = identify::record_from_json(j);
    md += "| " + r.parent + " | " + r.candidate + " | " + util::format_double(r.sim_norm) + " | " +
          std::to_string(r.rank) + " | " + util::format_double(r.name_sim) + " |\n";
  }
  md += "\n## Similar handles (name_sim >= " + util::format_double(cache.at("name_threshold").get<double>()) + ")\n\n";
  md += "| a | b | name_sim | sim_norm | reading |\n|---|---|---|---|---|\n";
  const double thr = cache.at("sim_norm_threshold").get<double>();
  for (const auto& n : cache.at("name_pairs")) {
    const bool has = !n.at("sim_norm").is_null();
    const double s = has ? n.at("sim_norm").get<double>() : 0.0;
    const std::string reading = !has ? "no style data" : (s >= thr ? "consistent style" : "possible copycat");
    md += "| " + n.at("a").get<std::string>() + " | " + n.at("b").get<std::string>() + " | " +
          util::format_double(n.at("name_sim").get<double>()) + " | " + (has ? util::format_double(s) : "-") + " | " +
          reading + " |\n";
  }
  const auto removed = cache.value("removed_identical", std::vector<std::string>{});
  if (!removed.empty()) md += "\nExcluded as verbatim cross-market duplicates: " + util::join(removed, ", ") + "\n";
  util::write_file(ctx.path("report.md"), md);
  ctx.out << "wrote " << ctx.path("report.md") << "\n";
  return kExitOk;
}

int cmd_transfer(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto& t = cfg.transfer;
  require_file(t.target, "target corpus");
  const auto target = prepare(ctx, {t.target}, false).corpus;
  const auto labels = corpus::bucket_others(target, t.min_ads);
  const auto y = labels.labels(target);
  const auto split = corpus::split(y, t.split, util::derive_seed(cfg.seed, "transfer-split"), labels.others_index());

  std::optional<nnet::Classifier> source;
  std::optional<corpus::LabelSpace> source_labels;
  std::optional<nnet::Inputs> source_inputs;
  transfer::ZeroShotInput zs;
  if (!t.source_model.empty()) {
    require_file(t.source_model, "source model");
    source = nnet::load(t.source_model);
    source_labels = corpus::LabelSpace::from_json(source->meta.at("labels"));
    zs.tag = util::digest(util::read_file(t.source_model));
    if (source->meta.value("features", std::string()) == "sequence") {
      zs.skip_reason = "source model uses its own token sequences";
    } else {
      source_inputs = featurize(*source, target, {});
      zs.model = &*source;
      zs.labels = &*source_labels;
      zs.inputs = &*source_inputs;
    }
  }
  std::optional<repspace::EmbeddingTensor> tokens;
  if (!cfg.embeddings.tokens.empty()) {
    require_file(cfg.embeddings.tokens, "token embeddings");
    tokens = repspace::load_embeddings(cfg.embeddings.tokens);
  }
  std::optional<transfer::StaticEmbeddings> vectors;
  if (!cfg.embeddings.static_vectors.empty()) {
    require_file(cfg.embeddings.static_vectors, "static vectors");
    vectors = transfer::load_static_vectors(cfg.embeddings.static_vectors);
  }
  transfer::BenchmarkConfig bc;
  bc.train = t.train;
  bc.bigru = t.bigru;
  bc.end_to_end = t.end_to_end;
  bc.seed = util::derive_seed(cfg.seed, "transfer");
  const auto run = transfer::run_lr_benchmark(target, y, labels.n_classes(), split, zs, tokens ? &*tokens : nullptr, bc,
                                              vectors ? &*vectors : nullptr);
  util::write_file(ctx.path("benchmark.csv"), transfer::benchmark_csv(run, t.timing));
  util::write_file(ctx.path("benchmark.json"), transfer::to_json(run, t.timing).dump(2) + "\n");
  if (source_labels) {
    const auto remap = evalmetrics::zero_shot_remap(*source_labels, target);
    ctx.out << "zero-shot: " << remap.remapped_vendors.size() << " target vendors routed to others\n";
  }
  ctx.out << transfer::benchmark_csv(run, t.timing);
  return kExitOk;
}

void append_run_log(const Context& ctx, const std::string& command, const std::vector<std::string>& args, int code) {
  const auto cfg_json = ctx.cfg.to_json();
  const json line = {{"command", command},
                     {"args", args},
                     {"config", cfg_json},
                     {"config_digest", util::digest(cfg_json.dump())},
                     {"seed", ctx.cfg.seed},
                     {"version", VLINK_VERSION},
                     {"exit_code", code}};
  util::append_file(ctx.path("run_log.jsonl"), line.dump() + "\n");
}

std::uint64_t parse_seed(const std::string& s, std::string_view source) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != s.size() || s.empty() || s[0] == '-') {
    throw ConfigError(std::string(source) + " must be a non-negative integer, got '" + s + "'");
  }
  return v;
}

/// Maps the in-flight exception to an exit code and prints it.
int report_error(std::ostream& err, const std::string& name) {
  try {
    throw;
  } catch (const ConfigError& e) {
    err << "vlink " << name << ": invalid configuration: " << e.what() << "\n";
  } catch (const NotFoundError& e) {
    err << "vlink " << name << ": missing input: " << e.what() << "\n";
  } catch (const RecordError& e) {
    err << "vlink " << name << ": bad record: " << e.what() << "\n";
  } catch (const FormatError& e) {
    err << "vlink " << name << ": corrupt file: " << e.what() << "\n";
  } catch (const DimensionError& e) {
    err << "vlink " << name << ": incompatible inputs: " << e.what() << "\n";
  } catch (const std::exception& e) {
    err << "vlink " << name << ": " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitValidation;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Vendor linking across marketplace advertisement corpora", "vlink"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", VLINK_VERSION);

  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed_flag;
  unsigned workers = 0;
  std::vector<std::string> corpus_flag;
  app.add_option("-c,--config", config_path, "Pipeline config (JSON)");
  app.add_option("-o,--out", out_dir, "Output directory");
  app.add_option("--seed", seed_flag, "Root seed (overrides config and VL_SEED)");
  app.add_option("-w,--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--corpus", corpus_flag, "Corpus file(s), overriding the config");

  auto* synth_cmd = app.add_subcommand("synth", "Write seeded synthetic fixtures and a demo config");
  auto* ingest_cmd = app.add_subcommand("ingest", "Preprocess a corpus and write its manifest, labels and split");
  auto* sanity_cmd = app.add_subcommand("sanity", "Traditional stylometric similarity profiles");
  std::optional<std::size_t> cap_flag;
  sanity_cmd->add_option("--cap", cap_flag, "Maximum ads per vendor per market (0 = all)");

  auto* train_cmd = app.add_subcommand("train", "Train a closed-set vendor classifier");
  std::string kind_flag;
  std::optional<std::size_t> epochs_flag;
  std::optional<double> lr_flag;
  std::optional<std::size_t> min_ads_flag;
  train_cmd->add_option("--model-kind", kind_flag, "nb, softmax, mlp or bigru");
  train_cmd->add_option("--epochs", epochs_flag, "Maximum epochs");
  train_cmd->add_option("--lr", lr_flag, "Peak learning rate");
  train_cmd->add_option("--min-ads", min_ads_flag, "Ads needed for a vendor class");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a trained classifier");
  std::string model_flag;
  bool all_rows = false;
  eval_cmd->add_option("--model", model_flag, "Model file (default OUT/model.vlmodel)");
  eval_cmd->add_flag("--all", all_rows, "Score every ad instead of the test split");

  auto* cka_cmd = app.add_subcommand("cka", "Per-layer CKA between before/after representations");
  std::string before_flag;
  std::string after_flag;
  std::optional<std::size_t> layers_flag;
  cka_cmd->add_option("--before", before_flag, "Before-fine-tuning cls embeddings");
  cka_cmd->add_option("--after", after_flag, "After-fine-tuning cls embeddings");
  cka_cmd->add_option("--layers", layers_flag, "Number of layers to select");

  auto* identify_cmd = app.add_subcommand("identify", "Rank alias candidates by normalized style similarity");
  std::string weights_flag;
  std::optional<double> threshold_flag;
  std::optional<double> name_threshold_flag;
  std::optional<std::size_t> top_k_flag;
  identify_cmd->add_option("--before", before_flag, "Before-fine-tuning cls embeddings");
  identify_cmd->add_option("--after", after_flag, "After-fine-tuning cls embeddings");
  identify_cmd->add_option("--layers", layers_flag, "Number of layers to select");
  identify_cmd->add_option("--weights", weights_flag, "Layer weights JSON (from cka)");
  identify_cmd->add_option("--threshold", threshold_flag, "sim_norm threshold for alias pairs");
  identify_cmd->add_option("--name-threshold", name_threshold_flag, "Handle similarity threshold");
  identify_cmd->add_option("--top-k", top_k_flag, "Ranked candidates kept per parent (0 = all)");

  auto* transfer_cmd = app.add_subcommand("transfer", "Low-resource market benchmark");
  std::string target_flag;
  std::string source_flag;
  std::string tokens_flag;
  bool no_timing = false;
  transfer_cmd->add_option("--target", target_flag, "Target market corpus");
  transfer_cmd->add_option("--source-model", source_flag, "Source classifier for zero-shot rows");
  transfer_cmd->add_option("--tokens", tokens_flag, "Token-mode embeddings of the target corpus");
  transfer_cmd->add_option("--epochs", epochs_flag, "Maximum epochs");
  transfer_cmd->add_flag("--no-timing", no_timing, "Omit wall-clock seconds for byte-stable tables");

  auto* report_cmd = app.add_subcommand("report", "Summarize the last identify run");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << VLINK_VERSION << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  CLI::App* cmd = app.get_subcommands().front();
  const std::string name = cmd->get_name();
  PipelineConfig cfg;
  try {
    if (!config_path.empty()) {
      require_file(config_path, "config file");
      json j;
      try {
        j = json::parse(util::read_file(config_path));
      } catch (const json::parse_error& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
      }
      cfg = PipelineConfig::from_json(j, fs::path(config_path).parent_path().string());
    }
    if (const char* env = std::getenv("VL_SEED"); env && *env) cfg.seed = parse_seed(env, "VL_SEED");
    if (seed_flag) cfg.seed = *seed_flag;
    if (!out_dir.empty()) cfg.out = out_dir;
    if (workers > 0) cfg.workers = workers;
    if (!corpus_flag.empty()) {
      cfg.corpus.paths = corpus_flag;
      cfg.sanity.corpus.clear();
      cfg.identify.corpus.clear();
    }
    if (cap_flag) cfg.sanity.cap = *cap_flag;
    if (!kind_flag.empty()) cfg.classifier.kind = nnet::parse_model_kind(kind_flag);
    if (epochs_flag) (name == "transfer" ? cfg.transfer.train : cfg.classifier.train).max_epochs = *epochs_flag;
    if (lr_flag) cfg.classifier.train.learning_rate = *lr_flag;
    if (min_ads_flag) cfg.corpus.min_ads = *min_ads_flag;
    if (!before_flag.empty()) cfg.embeddings.before = before_flag;
    if (!after_flag.empty()) cfg.embeddings.after = after_flag;
    if (layers_flag) cfg.identify.layers = *layers_flag;
    if (threshold_flag) cfg.identify.sim_norm_threshold = *threshold_flag;
    if (name_threshold_flag) cfg.identify.name_threshold = *name_threshold_flag;
    if (top_k_flag) cfg.identify.top_k = *top_k_flag;
    if (!target_flag.empty()) cfg.transfer.target = target_flag;
    if (!source_flag.empty()) cfg.transfer.source_model = source_flag;
    if (!tokens_flag.empty()) cfg.embeddings.tokens = tokens_flag;
    if (no_timing) cfg.transfer.timing = false;
    cfg.validate();
    fs::create_directories(cfg.out);
  } catch (...) {
    return report_error(err, name);
  }

  Context ctx{cfg, out, err};
  int code = kExitFailure;
  try {
    if (cmd == synth_cmd) code = cmd_synth(ctx);
    if (cmd == ingest_cmd) code = cmd_ingest(ctx);
    if (cmd == sanity_cmd) code = cmd_sanity(ctx);
    if (cmd == train_cmd) code = cmd_train(ctx);
    if (cmd == eval_cmd) code = cmd_eval(ctx, model_flag, all_rows);
    if (cmd == cka_cmd) code = cmd_cka(ctx);
    if (cmd == identify_cmd) code = cmd_identify(ctx, weights_flag);
    if (cmd == transfer_cmd) code = cmd_transfer(ctx);
    if (cmd == report_cmd) code = cmd_report(ctx);
  } catch (...) {
    code = report_error(err, name);
  }
  try {
    append_run_log(ctx, name, args, code);
  } catch (const std::exception& e) {
    err << "vlink " << name << ": could not append run log: " << e.what() << "\n";
  }
  return code;
}

}  // namespace vlink::cli
