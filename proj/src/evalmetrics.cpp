#include "vlink/evalmetrics.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "vlink/error.hpp"

namespace vlink::evalmetrics {

namespace {
double f1_of(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }
double ratio(std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); }
}  // namespace

EvalReport evaluate(std::span<const int> y_true, std::span<const int> y_pred, std::size_t n_classes,
                    MacroAverage average) {
  if (y_true.size() != y_pred.size()) {
    throw DimensionError("y_true has " + std::to_string(y_true.size()) + " labels but y_pred has " +
                         std::to_string(y_pred.size()));
  }
  std::vector<std::size_t> tp(n_classes, 0), fp(n_classes, 0), fn(n_classes, 0), support(n_classes, 0),
      predicted(n_classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int t = y_true[i];
    const int p = y_pred[i];
    if (t < 0 || static_cast<std::size_t>(t) >= n_classes || p < 0 || static_cast<std::size_t>(p) >= n_classes) {
      throw DimensionError("label out of range at position " + std::to_string(i));
    }
    ++support[static_cast<std::size_t>(t)];
    ++predicted[static_cast<std::size_t>(p)];
    if (t == p) {
      ++tp[static_cast<std::size_t>(t)];
      ++correct;
    } else {
      ++fp[static_cast<std::size_t>(p)];
      ++fn[static_cast<std::size_t>(t)];
    }
  }
  EvalReport rep;
  rep.n = y_true.size();
  rep.accuracy = ratio(correct, y_true.size());
  std::size_t tp_all = 0, fp_all = 0, fn_all = 0;
  double macro_sum = 0.0;
  std::size_t macro_n = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    ClassReport cr;
    cr.cls = c;
    cr.name = std::to_string(c);
    cr.precision = ratio(tp[c], tp[c] + fp[c]);
    cr.recall = ratio(tp[c], tp[c] + fn[c]);
    cr.f1 = f1_of(cr.precision, cr.recall);
    cr.support = support[c];
    rep.per_class.push_back(cr);
    tp_all += tp[c];
    fp_all += fp[c];
    fn_all += fn[c];
    if (average == MacroAverage::all_classes || support[c] > 0 || predicted[c] > 0) {
      macro_sum += cr.f1;
      ++macro_n;
    }
  }
  rep.macro_f1 = macro_n == 0 ? 0.0 : macro_sum / static_cast<double>(macro_n);
  rep.micro_f1 = f1_of(ratio(tp_all, tp_all + fp_all), ratio(tp_all, tp_all + fn_all));
  std::stable_sort(rep.per_class.begin(), rep.per_class.end(),
                   [](const ClassReport& a, const ClassReport& b) { return a.support > b.support; });
  return rep;
}

void name_classes(EvalReport& report, const corpus::LabelSpace& labels) {
  for (auto& cr : report.per_class) cr.name = labels.class_name(cr.cls);
}

ZeroShotLabels zero_shot_remap(const corpus::LabelSpace& source, const corpus::Corpus& target) {
  ZeroShotLabels out;
  std::set<std::string> remapped;
  for (const auto& ad : target.ads()) {
    const bool known = source.contains(ad.vendor_norm);
    out.gold.push_back(static_cast<int>(known ? source.class_of(ad.vendor_norm) : source.others_index()));
    if (!known) remapped.insert(ad.vendor_norm);
  }
  out.remapped_vendors.assign(remapped.begin(), remapped.end());
  return out;
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json per_class = nlohmann::json::array();
  for (const auto& c : report.per_class) {
    per_class.push_back({{"class", c.cls},
                         {"name", c.name},
                         {"precision", c.precision},
                         {"recall", c.recall},
                         {"f1", c.f1},
                         {"support", c.support}});
  }
  return {{"accuracy", report.accuracy}, {"micro_f1", report.micro_f1}, {"macro_f1", report.macro_f1},
          {"n", report.n},               {"headline", report.headline}, {"per_class", per_class}};
}

std::string to_table(const EvalReport& report) {
  std::size_t width = 5;
  for (const auto& c : report.per_class) width = std::max(width, c.name.size());
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-*s %9s %9s %9s %8s\n", static_cast<int>(width), "class", "precision", "recall",
                "f1", "support");
  out += buf;
  for (const auto& c : report.per_class) {
    std::snprintf(buf, sizeof(buf), "%-*s %9.4f %9.4f %9.4f %8zu\n", static_cast<int>(width), c.name.c_str(),
                  c.precision, c.recall, c.f1, c.support);
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "\naccuracy %.4f  micro-F1 %.4f  macro-F1 %.4f  (n=%zu, headline %s)\n",
                report.accuracy, report.micro_f1, report.macro_f1, report.n, report.headline.c_str());
  out += buf;
  return out;
}

}  // namespace vlink::evalmetrics
