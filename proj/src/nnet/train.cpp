#include "vlink/nnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "vlink/error.hpp"
#include "vlink/evalmetrics.hpp"

namespace vlink::nnet {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate},
          {"beta1", beta1},
          {"beta2", beta2},
          {"epsilon", epsilon},
          {"weight_decay", weight_decay},
          {"decoupled_weight_decay", decoupled_weight_decay},
          {"warmup_steps", warmup_steps},
          {"batch_size", batch_size},
          {"max_epochs", max_epochs},
          {"seed", seed},
          {"class_weights", class_weights == ClassWeighting::balanced ? "balanced" : "uniform"},
          {"patience", patience}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j, TrainConfig c) {
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.decoupled_weight_decay = j.value("decoupled_weight_decay", c.decoupled_weight_decay);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.seed = j.value("seed", c.seed);
  c.patience = j.value("patience", c.patience);
  if (j.contains("class_weights")) {
    const auto mode = j["class_weights"].get<std::string>();
    if (mode == "balanced") {
      c.class_weights = ClassWeighting::balanced;
    } else if (mode == "uniform") {
      c.class_weights = ClassWeighting::uniform;
    } else {
      throw ConfigError("class_weights must be 'uniform' or 'balanced'");
    }
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }

double scheduled_lr(const TrainConfig& config, std::size_t step, std::size_t total_steps) {
  const double s = static_cast<double>(step);
  const double warm = config.warmup_steps == 0 ? 1.0 : std::min(s / static_cast<double>(config.warmup_steps), 1.0);
  const double decay = total_steps == 0 ? 1.0 : std::max(0.0, 1.0 - s / static_cast<double>(total_steps));
  return config.learning_rate * warm * decay;
}

void Adam::step(std::span<double> params, std::span<const double> grad, double lr, const TrainConfig& c) {
  ++t_;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double g = grad[i];
    if (!c.decoupled_weight_decay) g += c.weight_decay * params[i];
    m_[i] = c.beta1 * m_[i] + (1.0 - c.beta1) * g;
    v_[i] = c.beta2 * v_[i] + (1.0 - c.beta2) * g * g;
    double update = (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + c.epsilon);
    if (c.decoupled_weight_decay) update += c.weight_decay * params[i];
    params[i] -= lr * update;
  }
}

std::vector<double> class_weights(std::span<const int> labels, std::span<const std::size_t> rows,
                                  std::size_t n_classes, ClassWeighting mode) {
  std::vector<double> w(n_classes, 1.0);
  if (mode == ClassWeighting::uniform) return w;
  std::vector<std::size_t> counts(n_classes, 0);
  for (auto r : rows) ++counts.at(static_cast<std::size_t>(labels[r]));
  const auto present = static_cast<double>(std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }));
  for (std::size_t k = 0; k < n_classes; ++k) {
    w[k] = counts[k] == 0 ? 0.0 : static_cast<double>(rows.size()) / (present * static_cast<double>(counts[k]));
  }
  return w;
}

namespace {

double grad_norm(std::span<const double> g) {
  double s = 0.0;
  for (double v : g) s += v * v;
  return std::sqrt(s);
}

double val_macro_f1(const Classifier& model, const Inputs& inputs, std::span<const int> labels,
                    std::span<const std::size_t> rows) {
  const auto pred = predict(model, inputs, rows);
  std::vector<int> gold;
  gold.reserve(rows.size());
  for (auto r : rows) gold.push_back(labels[r]);
  return evalmetrics::evaluate(gold, pred.labels, static_cast<std::size_t>(model.n_classes)).macro_f1;
}

}  // namespace

TrainResult train_gradient_model(Classifier init, const Inputs& inputs, std::span<const int> labels,
                                 std::span<const std::size_t> train_rows, std::span<const std::size_t> val_rows,
                                 const TrainConfig& config) {
  config.validate();
  if (init.kind == ModelKind::nb) throw ConfigError("naive Bayes is trained with train_nb");
  if (labels.size() != input_rows(inputs)) throw DimensionError("label count does not match input rows");
  TrainResult result;
  result.model = std::move(init);
  Classifier& model = result.model;

  const auto weights = class_weights(labels, train_rows, static_cast<std::size_t>(model.n_classes), config.class_weights);
  const std::size_t n = train_rows.size();
  const std::size_t batches = n == 0 ? 0 : (n + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = batches * config.max_epochs;
  const bool early_stop = config.patience > 0 && !val_rows.empty();

  util::Rng shuffle_rng(util::derive_seed(config.seed, "shuffle"));
  util::Rng dropout_rng(util::derive_seed(config.seed, "dropout"));
  Adam adam(model.params.size());
  ParamSet grad = model.params.zeros_like();
  ParamSet best = model.params;
  std::size_t since_best = 0;
  std::vector<std::size_t> order(train_rows.begin(), train_rows.end());

  for (std::size_t epoch = 0; epoch < config.max_epochs && n > 0; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t begin = b * config.batch_size;
      const std::size_t end = std::min(n, begin + config.batch_size);
      const std::span<const std::size_t> batch(order.data() + begin, end - begin);
      grad.set_zero();
      const double loss = loss_and_grad(model, inputs, batch, labels, weights, &grad, &dropout_rng);
      ++result.steps;
      const double lr = scheduled_lr(config, result.steps, total_steps);
      if (!std::isfinite(loss)) {
        char msg[192];
        std::snprintf(msg, sizeof(msg), "non-finite loss at step %zu (lr %.6g, grad-norm %.6g)", result.steps, lr,
                      grad_norm(grad.values()));
        throw TrainingError(msg);
      }
      adam.step(model.params.values(), grad.values(), lr, config);
      epoch_loss += loss * static_cast<double>(end - begin);
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(n));
    ++result.epochs_run;
    if (early_stop) {
      const double f1 = val_macro_f1(model, inputs, labels, val_rows);
      if (f1 > result.best_val_macro_f1) {
        result.best_val_macro_f1 = f1;
        best = model.params;
        since_best = 0;
      } else if (++since_best >= config.patience) {
        break;
      }
    }
  }
  if (early_stop && result.epochs_run > 0) model.params = best;
  model.params.round_to_float();
  model.meta["training"] = {{"config", config.to_json()},
                            {"epochs_run", result.epochs_run},
                            {"steps", result.steps},
                            {"final_loss", result.epoch_losses.empty() ? 0.0 : result.epoch_losses.back()},
                            {"best_val_macro_f1", result.best_val_macro_f1}};
  return result;
}

}  // namespace vlink::nnet
