#include "vlink/nnet/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "detail.hpp"
#include "vlink/error.hpp"

namespace vlink::nnet {

namespace {

std::vector<std::size_t> all_rows(const Inputs& inputs) {
  std::vector<std::size_t> rows(input_rows(inputs));
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

}  // namespace

Mat logits(const Classifier& model, const Inputs& inputs, std::span<const std::size_t> rows) {
  detail::check_inputs(model, inputs);
  Mat out(static_cast<Index>(rows.size()), model.n_classes);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Index>(i)) = detail::row_logits(model, inputs, rows[i]).transpose();
  }
  return out;
}

Mat softmax_rows(const Mat& z) {
  Mat p(z.rows(), z.cols());
  for (Index i = 0; i < z.rows(); ++i) {
    const double zmax = z.row(i).maxCoeff();
    p.row(i) = (z.row(i).array() - zmax).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

double loss_and_grad(const Classifier& model, const Inputs& inputs, std::span<const std::size_t> rows,
                     std::span<const int> labels, std::span<const double> class_weights, ParamSet* grad,
                     util::Rng* dropout_rng) {
  detail::check_inputs(model, inputs);
  if (class_weights.size() != static_cast<std::size_t>(model.n_classes)) {
    throw DimensionError("class weight vector length does not match class count");
  }
  double weight_sum = 0.0;
  for (auto r : rows) {
    const int y = labels[r];
    if (y < 0 || y >= model.n_classes) throw DimensionError("label out of range: " + std::to_string(y));
    weight_sum += class_weights[static_cast<std::size_t>(y)];
  }
  if (rows.empty() || weight_sum <= 0.0) return 0.0;
  double loss = 0.0;
  for (auto r : rows) {
    const int y = labels[r];
    const double w = class_weights[static_cast<std::size_t>(y)] / weight_sum;
    loss += w * detail::row_loss_grad(model, inputs, r, y, w, grad, dropout_rng);
  }
  return loss;
}

Prediction predict(const Classifier& model, const Inputs& inputs, std::span<const std::size_t> rows) {
  std::vector<std::size_t> owned;
  if (rows.empty()) {
    owned = all_rows(inputs);
    rows = owned;
  }
  Prediction out;
  out.probabilities = softmax_rows(logits(model, inputs, rows));
  out.labels.resize(rows.size());
  for (Index i = 0; i < out.probabilities.rows(); ++i) {
    Index best = 0;
    for (Index c = 1; c < out.probabilities.cols(); ++c) {
      if (out.probabilities(i, c) > out.probabilities(i, best)) best = c;
    }
    out.labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

double gradient_check(const Classifier& model, const Inputs& inputs, std::span<const std::size_t> rows,
                      std::span<const int> labels, std::span<const double> class_weights, std::size_t n_samples,
                      double eps, std::uint64_t seed) {
  ParamSet grad = model.params.zeros_like();
  loss_and_grad(model, inputs, rows, labels, class_weights, &grad, nullptr);
  util::Rng rng(seed);
  const auto picks = rng.sample(model.params.size(), n_samples);
  Classifier probe = model;
  double worst = 0.0;
  for (auto idx : picks) {
    const double original = probe.params.values()[idx];
    probe.params.values()[idx] = original + eps;
    const double up = loss_and_grad(probe, inputs, rows, labels, class_weights, nullptr, nullptr);
    probe.params.values()[idx] = original - eps;
    const double down = loss_and_grad(probe, inputs, rows, labels, class_weights, nullptr, nullptr);
    probe.params.values()[idx] = original;
    const double numeric = (up - down) / (2.0 * eps);
    const double analytic = grad.values()[idx];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  }
  return worst;
}

}  // namespace vlink::nnet
