#pragma once

#include "vlink/nnet/params.hpp"

namespace vlink::nnet {

// Gate rows are stacked in the order reset, update, candidate:
//   r = sigmoid(Wi_r x + bi_r + Wh_r h + bh_r)
//   z = sigmoid(Wi_z x + bi_z + Wh_z h + bh_z)
//   n = tanh(Wi_n x + bi_n + r * (Wh_n h + bh_n))
//   h' = (1 - z) * n + z * h

struct GruWeights {
  Eigen::Ref<const Mat> w_input;   // 3H x in
  Eigen::Ref<const Mat> w_hidden;  // 3H x H
  Eigen::Ref<const Vec> b_input;   // 3H
  Eigen::Ref<const Vec> b_hidden;  // 3H
};

struct GruGrads {
  Eigen::Ref<Mat> w_input;
  Eigen::Ref<Mat> w_hidden;
  Eigen::Ref<Vec> b_input;
  Eigen::Ref<Vec> b_hidden;
};

enum class Direction { forward, backward };

/// Per-step activations kept for backpropagation, indexed by sequence position.
struct GruCache {
  Mat h_prev, r, z, n, gh_n;
};

/// Runs the recurrence over the rows of `x` (T x in), from h0 = 0. The result is T x H with
/// row t holding the hidden state after consuming position t. Throws on an empty sequence.
Mat gru_forward(const Mat& x, const GruWeights& w, Direction dir, GruCache* cache = nullptr);

/// Backpropagates dL/dH (T x H, aligned to positions) through one direction. Parameter
/// gradients are accumulated; the returned matrix is dL/dx.
Mat gru_backward(const Mat& x, const GruWeights& w, Direction dir, const GruCache& cache, const Mat& d_hidden,
                 GruGrads& grads);

}  // namespace vlink::nnet
