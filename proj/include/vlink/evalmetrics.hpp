#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vlink/corpus.hpp"

namespace vlink::evalmetrics {

struct ClassReport {
  std::size_t cls = 0;
  std::string name;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct EvalReport {
  double accuracy = 0.0;
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
  /// Sorted by support descending, then class index.
  std::vector<ClassReport> per_class;
  std::size_t n = 0;
  /// Which metric a caller should headline ("macro_f1" or "micro_f1").
  std::string headline = "macro_f1";
};

enum class MacroAverage {
  all_classes,     // every one of the K classes, zero-support classes contribute 0
  present_classes  // only classes that occur in y_true or y_pred
};

/// Throws DimensionError on length mismatch or labels outside [0, K).
EvalReport evaluate(std::span<const int> y_true, std::span<const int> y_pred, std::size_t n_classes,
                    MacroAverage average = MacroAverage::all_classes);

/// Attaches class display names from a label space to a report.
void name_classes(EvalReport& report, const corpus::LabelSpace& labels);

struct ZeroShotLabels {
  std::vector<int> gold;
  /// Target vendors unknown to the source label space.
  std::vector<std::string> remapped_vendors;
};

/// Gold labels for a target corpus under a source label space; unseen vendors become "others".
ZeroShotLabels zero_shot_remap(const corpus::LabelSpace& source, const corpus::Corpus& target);

nlohmann::json to_json(const EvalReport& report);
/// Aligned plain-text table.
std::string to_table(const EvalReport& report);

}  // namespace vlink::evalmetrics
