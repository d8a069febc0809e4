// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cka_oracle.hpp"
#include "metrics_oracle.hpp"
#include "nnet_fixtures.hpp"
#include "string_oracles.hpp"
#include "test_support.hpp"
#include "vlink/cli.hpp"
#include "vlink/error.hpp"
#include "vlink/evalmetrics.hpp"
#include "vlink/identify.hpp"
#include "vlink/nnet/classifier.hpp"
#include "vlink/repspace.hpp"
#include "vlink/stylometry.hpp"
#include "vlink/synth.hpp"
#include "vlink/transfer.hpp"
#include "vlink/util.hpp"

using namespace vlink;
namespace fs = std::filesystem;
using json = nlohmann::json;
using repspace::Mat;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

/// Collects failed sub-checks so a criterion reports every miss, not just the first.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) failed_.push_back(what);
  }
  Outcome outcome(std::string detail) const {
    if (failed_.empty()) return {true, std::move(detail)};
    return {false, util::join(failed_, "; ") + " | " + detail};
  }

 private:
  std::vector<std::string> failed_;
};

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2e", v);
  return buf;
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

int run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (code != cli::kExitOk) std::cerr << err.str();
  return code;
}

std::vector<std::size_t> iota_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = i;
  return r;
}

Mat random_mat(Eigen::Index r, Eigen::Index c, util::Rng& rng) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.normal();
  }
  return m;
}

std::set<std::string> token_set(std::string_view s) {
  std::set<std::string> out;
  for (auto t : util::split_whitespace(s)) out.emplace(t);
  return out;
}

std::string fixtures;

Outcome stylometric_oracles() {
  Checks c;
  util::Rng rng(util::derive_seed(1, "acceptance-strings"));
  const std::u32string alphabet = U"abcab éü";
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 500; ++trial) {
    std::u32string a, b;
    const auto la = rng.index(13), lb = rng.index(13);
    for (std::size_t i = 0; i < la; ++i) a.push_back(alphabet[rng.index(alphabet.size())]);
    for (std::size_t i = 0; i < lb; ++i) b.push_back(alphabet[rng.index(alphabet.size())]);
    const auto sa = util::utf8_encode(a), sb = util::utf8_encode(b);
    if (stylometry::dl_similarity(sa, sb) != oracle::dl_similarity(a, b)) ++mismatches;
    if (stylometry::jaccard_similarity(sa, sb) != oracle::jaccard(token_set(sa), token_set(sb))) ++mismatches;
    if (stylometry::ratcliff_obershelp(sa, sb) != oracle::ratcliff(a, b)) ++mismatches;
    if (stylometry::avg_pair_similarity(sa, sa).avg != 1.0) ++mismatches;
  }
  c.expect(mismatches == 0, std::to_string(mismatches) + " oracle mismatches");
  const double expected = (oracle::dl_similarity(U"night", U"nacht") + oracle::jaccard({"night"}, {"nacht"}) +
                           oracle::ratcliff(U"night", U"nacht")) /
                          3.0;
  const double got = stylometry::avg_pair_similarity("night", "nacht").avg;
  c.expect(std::abs(got - expected) <= 1e-9, "night/nacht avg " + fmt(got, 6) + " vs oracle " + fmt(expected, 6));
  return c.outcome("500 pairs exact; night/nacht avg " + fmt(got) + " = oracle " + fmt(expected) +
                   " (OSA distance 2, dl 0.6; a 1/3 average would need distance 3)");
}

Outcome identical_filter() {
  Checks c;
  const auto fx = synth::market_corpus({});
  const auto flagged = stylometry::flag_identical_vendors(fx.corpus);
  c.expect(flagged == std::vector<std::string>{fx.planted.identical}, "flagged: " + util::join(flagged, ","));
  const auto p = stylometry::vendor_similarity_profile(fx.corpus, fx.planted.identical, "alpha", "beta");
  c.expect(p && *p == 1.0, "planted profile is not exactly 1.0");
  return c.outcome("flagged {" + util::join(flagged, ",") + "}, profile " + (p ? fmt(*p, 12) : "none"));
}

Outcome cka_properties() {
  Checks c;
  util::Rng rng(util::derive_seed(1, "acceptance-cka"));
  double worst_orth = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Mat x = random_mat(40, 6, rng), y = random_mat(40, 5, rng);
    c.expect(std::abs(repspace::linear_cka(x, x) - 1.0) <= 1e-9, "CKA(X,X) != 1");
    c.expect(std::abs(repspace::linear_cka(x, y) - repspace::linear_cka(y, x)) <= 1e-12, "asymmetric");
    c.expect(std::abs(repspace::linear_cka(4.2 * x, y) - repspace::linear_cka(x, y)) <= 1e-9, "scaling");
    const Eigen::HouseholderQR<Mat> qr(random_mat(6, 6, rng));
    const Mat q = qr.householderQ();
    const double d = std::abs(repspace::linear_cka(x * q, y) - repspace::linear_cka(x, y));
    worst_orth = std::max(worst_orth, d);
    c.expect(d <= 1e-6, "orthogonal invariance");
  }
  Mat x(4, 2), y(4, 2);
  x << 1, 2, 3, 1, 0, -1, 2, 5;
  y << 0.5, 1, -1, 2, 3, 0, 1, 1;
  const double hand = repspace::linear_cka(x, y), dense = oracle::cka_hsic(x, y);
  c.expect(std::abs(hand - dense) <= 1e-9, "4x2 hand case");
  return c.outcome("20 random pairs; max orthogonal drift " + sci(worst_orth) + "; 4x2 case " + fmt(hand, 9) +
                   " vs dense " + fmt(dense, 9));
}

Outcome similarity_identities() {
  Checks c;
  util::Rng rng(util::derive_seed(1, "acceptance-sim"));
  std::vector<identify::VendorStyleSet> sets;
  for (int v = 0; v < 100; ++v) {
    sets.emplace_back("v" + std::to_string(v), random_mat(static_cast<Eigen::Index>(1 + rng.index(12)), 16, rng));
  }
  const identify::SimilarityIndex index(sets);
  std::size_t not_one = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    if (index.sim_norm(i, i) != 1.0) ++not_one;
  }
  c.expect(not_one == 0, std::to_string(not_one) + " self sim_norm != 1");

  const auto fx = synth::market_corpus({});
  const auto [before, after] = synth::cls_tensors(fx, {});
  const auto weights = repspace::select_layers(repspace::cka_profile(before, after), 4);
  const auto style = identify::build_style_sets(fx.corpus, after, weights);
  const identify::SimilarityIndex fx_index(style);
  const auto& [parent, clone] = fx.planted.clone;
  const auto ranked = fx_index.rank_aliases(parent);
  c.expect(!ranked.empty() && ranked[0].candidate == clone && ranked[0].rank == 1, "clone is not rank 1");
  const double clone_sim = ranked.empty() ? 0.0 : ranked[0].sim_norm;
  c.expect(std::abs(clone_sim - 1.0) <= 1e-6, "clone sim_norm " + fmt(clone_sim, 9));

  std::vector<identify::VendorStyleSet> scaled;
  for (const auto& s : style) scaled.emplace_back(s.vendor(), 1e3 * s.vectors());
  const identify::SimilarityIndex scaled_index(scaled);
  std::size_t changed = 0;
  for (const auto& s : style) {
    const auto a = fx_index.rank_aliases(s.vendor(), 0), b = scaled_index.rank_aliases(s.vendor(), 0);
    for (std::size_t k = 0; k < a.size(); ++k) {
      if (a[k].candidate != b[k].candidate) ++changed;
    }
  }
  c.expect(changed == 0, std::to_string(changed) + " ranking positions changed under scaling");
  return c.outcome("100 vendors self=1; " + clone + " rank 1 for " + parent + " at sim_norm " + fmt(clone_sim, 9) +
                   "; " + std::to_string(style.size()) + " rankings stable under x1000");
}

Outcome metrics_oracle() {
  Checks c;
  util::Rng rng(util::derive_seed(1, "acceptance-metrics"));
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 1 + rng.index(8);
    const std::size_t n = 1 + rng.index(60);
    std::vector<int> t(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = static_cast<int>(rng.index(k));
      p[i] = rng.uniform() < 0.5 ? t[i] : static_cast<int>(rng.index(k));
    }
    const auto r = evalmetrics::evaluate(t, p, k);
    const auto o = oracle::confusion_metrics(t, p, k, false);
    worst = std::max({worst, std::abs(r.accuracy - o.accuracy), std::abs(r.micro_f1 - o.micro_f1),
                      std::abs(r.macro_f1 - o.macro_f1)});
    c.expect(std::abs(r.micro_f1 - r.accuracy) <= 1e-12, "micro-F1 != accuracy");
  }
  c.expect(worst <= 1e-12, "oracle deviation " + fmt(worst, 15));
  const std::vector<int> t = {0, 0, 1, 2}, p = {0, 1, 1, 2};
  const double macro = evalmetrics::evaluate(t, p, 3).macro_f1;
  c.expect(std::abs(macro - 0.7778) <= 1e-4, "worked example " + fmt(macro, 6));
  return c.outcome("1000 instances, max deviation " + sci(worst) + "; worked example macro-F1 " + fmt(macro, 4));
}

Outcome gradient_checks() {
  Checks c;
  const std::vector<double> w(3, 1.0);
  const nnet::Inputs sparse = test::random_sparse(12, 60, 7);
  std::vector<int> y(12);
  for (int i = 0; i < 12; ++i) y[i] = i % 3;
  auto soft = nnet::make_softmax(60, 3);
  util::Rng rng(1);
  for (auto& v : soft.params.values()) v = rng.uniform(-0.5, 0.5);
  const double e_soft = nnet::gradient_check(soft, sparse, iota_rows(12), y, w, 150, 1e-4, 3);

  const nnet::Inputs small = test::random_sparse(10, 12, 8);
  const auto mlp = nnet::make_mlp(12, 3, {10, 0.0}, 4);
  const std::vector<int> ym = {0, 1, 2, 0, 1, 2, 0, 1, 2, 0};
  const double e_mlp = nnet::gradient_check(mlp, small, iota_rows(10), ym, w, 150, 1e-4, 3);

  const nnet::Inputs seqs = test::random_sequences({3, 1, 4}, 3, 9);
  const auto gru = nnet::make_bigru(3, 3, {2, 4, 0, 0.0, true}, 6);
  const std::vector<int> yg = {0, 2, 1};
  const double e_gru = nnet::gradient_check(gru, seqs, iota_rows(3), yg, w, 150, 1e-4, 3);

  c.expect(soft.params.size() >= 150 && mlp.params.size() >= 150 && gru.params.size() >= 150,
           "fewer than 150 parameters to sample");
  c.expect(e_soft <= 1e-4, "softmax");
  c.expect(e_mlp <= 1e-4, "mlp");
  c.expect(e_gru <= 1e-3, "bigru");
  return c.outcome("150 params each; max rel err softmax " + sci(e_soft) + ", mlp " + sci(e_mlp) +
                   ", bigru " + sci(e_gru));
}

Outcome closed_set() {
  Checks c;
  const auto manifest = json::parse(util::read_file(fixtures + "/manifest.json"));
  c.expect(run_cli({"train", "-c", fixtures + "/config.json"}) == cli::kExitOk, "train failed");
  const auto report = json::parse(util::read_file(fixtures + "/run/eval_report.json"));
  const double macro = report.at("macro_f1").get<double>();
  c.expect(macro >= 0.85, "macro-F1 below 0.85");

  const auto labels = corpus::LabelSpace::from_json(json::parse(util::read_file(fixtures + "/run/labels.json")));
  const auto corpus = corpus::ingest(fixtures + "/closed_set.jsonl", corpus::Format::jsonl);
  std::set<std::string> others;
  for (const auto& v : corpus.vendors()) {
    if (!labels.contains(v)) others.insert(v);
  }
  const auto small = manifest.at("small_vendors").get<std::set<std::string>>();
  c.expect(others == small, "others class differs from the sub-threshold vendors");
  return c.outcome(std::to_string(corpus.vendors().size()) + " vendors, " + std::to_string(corpus.size()) +
                   " ads; test macro-F1 " + fmt(macro) + "; others = {" +
                   util::join(std::vector<std::string>(others.begin(), others.end()), ",") + "}");
}

Outcome zero_shot_routing() {
  Checks c;
  const auto manifest = json::parse(util::read_file(fixtures + "/manifest.json"));
  const auto model = nnet::load(fixtures + "/run/model.vlmodel");
  const auto labels = corpus::LabelSpace::from_json(model.meta.at("labels"));
  const auto vocab = features::Vocabulary::from_json(model.meta.at("vocabulary"));
  const auto target = corpus::ingest(fixtures + "/target.jsonl", corpus::Format::jsonl);
  const auto known = manifest.at("target_known").get<std::vector<std::string>>();
  auto unseen = manifest.at("target_unseen").get<std::vector<std::string>>();
  c.expect(known.size() == 5 && unseen.size() == 5, "fixture is not 5 known + 5 new");

  auto remap = evalmetrics::zero_shot_remap(labels, target);
  std::sort(unseen.begin(), unseen.end());
  std::sort(remap.remapped_vendors.begin(), remap.remapped_vendors.end());
  c.expect(remap.remapped_vendors == unseen, "remapped vendors differ from the new vendors");

  std::vector<std::string> texts;
  for (const auto& ad : target.ads()) texts.push_back(ad.merged_text);
  const nnet::Inputs in = vocab.transform_tfidf(texts);
  const auto r = transfer::zero_shot_verify(model, labels, target, in);
  c.expect(r.headline == "micro_f1", "headline is " + r.headline);
  return c.outcome("remapped {" + util::join(remap.remapped_vendors, ",") + "}; headline " + r.headline + " = " +
                   fmt(r.micro_f1));
}

Outcome transfer_ordering() {
  Checks c;
  const auto manifest = json::parse(util::read_file(fixtures + "/manifest.json"));
  const auto known = manifest.at("target_known").get<std::vector<std::string>>();
  const auto cfg = cli::PipelineConfig::from_json(json::parse(util::read_file(fixtures + "/config.json")));
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    synth::TargetConfig tc;
    tc.seed = util::derive_seed(seed, "target");
    const auto fx = synth::target_fixture(known, tc);
    const auto labels = corpus::bucket_others(fx.corpus, cfg.transfer.min_ads);
    const auto y = labels.labels(fx.corpus);
    const auto split = corpus::split(y, cfg.transfer.split, util::derive_seed(seed, "split"), labels.others_index());
    auto train = cfg.transfer.train;
    train.seed = util::derive_seed(seed, "train");
    std::vector<int> gold;
    for (auto r : split.test) gold.push_back(y[r]);
    auto macro = [&](transfer::CombineKind kind) {
      const transfer::LayerCombineMode mode{kind, {}};
      const auto result = transfer::train_transfer_bigru(fx.tokens, fx.corpus, mode, y, labels.n_classes(), split,
                                                         train, cfg.transfer.bigru);
      const nnet::Inputs in = transfer::aligned_sequences(fx.tokens, fx.corpus, mode);
      const auto pred = nnet::predict(result.model, in, split.test);
      return evalmetrics::evaluate(gold, pred.labels, labels.n_classes(), evalmetrics::MacroAverage::present_classes)
          .macro_f1;
    };
    const double emb = macro(transfer::CombineKind::embedding);
    const double last = macro(transfer::CombineKind::last);
    const double w4 = macro(transfer::CombineKind::wsum_last4);
    c.expect(last > emb, "seed " + std::to_string(seed) + ": last <= embedding");
    c.expect(w4 > emb, "seed " + std::to_string(seed) + ": wsum_last4 <= embedding");
    detail += (detail.empty() ? "" : "; ") + std::string("seed ") + std::to_string(seed) + " emb " + fmt(emb, 3) +
              " last " + fmt(last, 3) + " wsum_last4 " + fmt(w4, 3);
  }
  return c.outcome("macro-F1 " + detail);
}

std::string reject_offset(const std::function<void()>& parse, bool& rejected) {
  rejected = false;
  try {
    parse();
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    rejected = msg.find("offset " + std::to_string(e.offset())) != std::string::npos;
    return std::to_string(e.offset());
  } catch (const std::exception&) {
  }
  return "none";
}

Outcome format_roundtrips() {
  Checks c;
  const auto emb_bytes = util::read_file(fixtures + "/cls_after.vlemb");
  const auto tensor = repspace::deserialize(emb_bytes);
  c.expect(repspace::serialize(tensor) == emb_bytes, "VLEMB1 bytes changed");
  const auto scratch = test::scratch_dir("acceptance_formats");
  repspace::save_embeddings(tensor, scratch + "/t.vlemb");
  c.expect(util::read_file(scratch + "/t.vlemb") == emb_bytes && repspace::load_embeddings(scratch + "/t.vlemb") == tensor,
           "VLEMB1 file round trip");
  const auto tok_bytes = util::read_file(fixtures + "/target_tokens.vlemb");
  c.expect(repspace::serialize(repspace::deserialize(tok_bytes)) == tok_bytes, "token VLEMB1 bytes changed");

  const auto model_bytes = util::read_file(fixtures + "/run/model.vlmodel");
  const auto model = nnet::deserialize(model_bytes);
  c.expect(nnet::serialize(model) == model_bytes, "model bytes changed");
  nnet::save(model, scratch + "/m.vlmodel");
  c.expect(util::read_file(scratch + "/m.vlmodel") == model_bytes, "model file round trip");

  bool emb_rejected = false, model_rejected = false;
  const auto emb_off = reject_offset(
      [&] { repspace::deserialize(std::string_view(emb_bytes).substr(0, emb_bytes.size() - 4)); }, emb_rejected);
  const auto model_off = reject_offset(
      [&] { nnet::deserialize(std::string_view(model_bytes).substr(0, model_bytes.size() - 4)); }, model_rejected);
  c.expect(emb_rejected, "truncated VLEMB1 not rejected with an offset");
  c.expect(model_rejected, "truncated model not rejected with an offset");
  return c.outcome("VLEMB1 " + std::to_string(emb_bytes.size()) + " B and model " + std::to_string(model_bytes.size()) +
                   " B bit-identical; -4 B rejected at offsets " + emb_off + " / " + model_off);
}

std::map<std::string, std::string> artifacts(const std::string& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name != "run_log.jsonl") out[name] = util::read_file(e.path().string());
  }
  return out;
}

Outcome determinism() {
  Checks c;
  const auto cfg = fixtures + "/config.json";
  std::vector<std::map<std::string, std::string>> runs;
  for (const char* name : {"det_a", "det_b"}) {
    const auto out = fixtures + "/" + name;
    fs::remove_all(out);
    c.expect(run_cli({"train", "-c", cfg, "-o", out}) == cli::kExitOk, std::string(name) + " train failed");
    c.expect(run_cli({"identify", "-c", cfg, "-o", out}) == cli::kExitOk, std::string(name) + " identify failed");
    runs.push_back(artifacts(out));
  }
  std::vector<std::string> differ;
  for (const auto& [name, bytes] : runs[0]) {
    auto it = runs[1].find(name);
    if (it == runs[1].end() || it->second != bytes) differ.push_back(name);
  }
  c.expect(runs[0].size() == runs[1].size(), "artifact sets differ");
  c.expect(differ.empty(), "differing: " + util::join(differ, ","));
  std::vector<std::string> names;
  for (const auto& [name, bytes] : runs[0]) names.push_back(name);
  return c.outcome(std::to_string(names.size()) + " artifacts byte-identical (" + util::join(names, ",") + ")");
}

struct Criterion {
  std::string name;
  std::function<Outcome()> fn;
  double limit_seconds;
};

}  // namespace

int main() {
  fixtures = test::scratch_dir("acceptance");
  if (run_cli({"synth", "--seed", "1", "-o", fixtures}) != cli::kExitOk) {
    std::cout << "FAIL setup: synth fixtures could not be written\n";
    return 1;
  }
  const std::vector<Criterion> criteria = {
      {"stylometric oracle suite", stylometric_oracles, 10.0},
      {"identical-vendor filter", identical_filter, 0.0},
      {"CKA properties", cka_properties, 0.0},
      {"similarity identities", similarity_identities, 0.0},
      {"metrics oracle", metrics_oracle, 0.0},
      {"gradient checks", gradient_checks, 60.0},
      {"closed-set verification", closed_set, 120.0},
      {"zero-shot routing", zero_shot_routing, 0.0},
      {"transfer ordering", transfer_ordering, 300.0},
      {"format round-trips", format_roundtrips, 0.0},
      {"determinism", determinism, 0.0},
  };
  int failures = 0;
  for (const auto& cr : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = cr.fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (cr.limit_seconds > 0.0 && secs >= cr.limit_seconds) {
      o.pass = false;
      o.detail += " | runtime over " + fmt(cr.limit_seconds, 0) + " s";
    }
    std::string timing = fmt(secs, 2) + " s";
    if (cr.limit_seconds > 0.0) timing += " < " + fmt(cr.limit_seconds, 0) + " s";
    std::cout << (o.pass ? "PASS " : "FAIL ") << cr.name << ": " << o.detail << " [" << timing << "]\n" << std::flush;
    if (!o.pass) ++failures;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failures)) << "/" << criteria.size() << " criteria passed\n";
  return failures == 0 ? 0 : 1;
}
