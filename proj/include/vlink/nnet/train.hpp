#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "vlink/nnet/classifier.hpp"

namespace vlink::nnet {

enum class ClassWeighting { uniform, balanced };

struct TrainConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
  /// Decay applied as direct shrinkage (AdamW) rather than folded into the gradient.
  bool decoupled_weight_decay = true;
  std::size_t warmup_steps = 500;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 40;
  std::uint64_t seed = 0;
  ClassWeighting class_weights = ClassWeighting::uniform;
  /// Epochs without validation macro-F1 improvement before stopping; 0 disables.
  std::size_t patience = 5;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j, TrainConfig defaults);
  static TrainConfig from_json(const nlohmann::json& j);
};

/// lr * min(step / warmup, 1) * max(0, 1 - step / total) for a 1-based step.
double scheduled_lr(const TrainConfig& config, std::size_t step, std::size_t total_steps);

/// Adam moments over a flat parameter vector.
class Adam {
 public:
  explicit Adam(std::size_t n) : m_(n, 0.0), v_(n, 0.0) {}
  void step(std::span<double> params, std::span<const double> grad, double lr, const TrainConfig& config);
  std::size_t steps() const noexcept { return t_; }

 private:
  std::vector<double> m_;
  std::vector<double> v_;
  std::size_t t_ = 0;
};

/// N / (K_present * count_k) for balanced weighting over the given rows; 1 for uniform.
std::vector<double> class_weights(std::span<const int> labels, std::span<const std::size_t> rows,
                                  std::size_t n_classes, ClassWeighting mode);

struct TrainResult {
  Classifier model;
  std::size_t epochs_run = 0;
  std::size_t steps = 0;
  std::vector<double> epoch_losses;
  double best_val_macro_f1 = -1.0;
};

/// Mini-batch Adam on class-weighted cross-entropy starting from `init`. Labels are indexed by
/// row. With validation rows and non-zero patience, the best-validation parameters are returned.
/// Parameters are rounded to float32 at the end so the trained model equals its serialized form.
/// Throws TrainingError on a non-finite loss.
TrainResult train_gradient_model(Classifier init, const Inputs& inputs, std::span<const int> labels,
                                 std::span<const std::size_t> train_rows, std::span<const std::size_t> val_rows,
                                 const TrainConfig& config);

}  // namespace vlink::nnet
