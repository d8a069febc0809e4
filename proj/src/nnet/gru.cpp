#include "vlink/nnet/gru.hpp"

#include "vlink/error.hpp"

namespace vlink::nnet {

namespace {
double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }
}  // namespace

Mat gru_forward(const Mat& x, const GruWeights& w, Direction dir, GruCache* cache) {
  const Index steps = x.rows();
  const Index hidden = w.w_hidden.cols();
  if (steps == 0) throw DimensionError("GRU input sequence is empty");
  if (x.cols() != w.w_input.cols()) throw DimensionError("GRU input width does not match weights");
  Mat out(steps, hidden);
  if (cache) {
    cache->h_prev.resize(steps, hidden);
    cache->r.resize(steps, hidden);
    cache->z.resize(steps, hidden);
    cache->n.resize(steps, hidden);
    cache->gh_n.resize(steps, hidden);
  }
  Vec h = Vec::Zero(hidden);
  Vec gi(3 * hidden), gh(3 * hidden);
  for (Index s = 0; s < steps; ++s) {
    const Index t = dir == Direction::forward ? s : steps - 1 - s;
    gi.noalias() = w.w_input * x.row(t).transpose();
    gi += w.b_input;
    gh.noalias() = w.w_hidden * h;
    gh += w.b_hidden;
    Vec h_new(hidden);
    for (Index k = 0; k < hidden; ++k) {
      const double r = sigmoid(gi(k) + gh(k));
      const double z = sigmoid(gi(hidden + k) + gh(hidden + k));
      const double n = std::tanh(gi(2 * hidden + k) + r * gh(2 * hidden + k));
      h_new(k) = (1.0 - z) * n + z * h(k);
      if (cache) {
        cache->h_prev(t, k) = h(k);
        cache->r(t, k) = r;
        cache->z(t, k) = z;
        cache->n(t, k) = n;
        cache->gh_n(t, k) = gh(2 * hidden + k);
      }
    }
    h = h_new;
    out.row(t) = h.transpose();
  }
  return out;
}

Mat gru_backward(const Mat& x, const GruWeights& w, Direction dir, const GruCache& cache, const Mat& d_hidden,
                 GruGrads& grads) {
  const Index steps = x.rows();
  const Index hidden = w.w_hidden.cols();
  Mat dx(steps, x.cols());
  Vec carry = Vec::Zero(hidden);
  Vec dgi(3 * hidden), dgh(3 * hidden);
  for (Index s = steps - 1; s >= 0; --s) {
    const Index t = dir == Direction::forward ? s : steps - 1 - s;
    Vec dh = d_hidden.row(t).transpose() + carry;
    Vec dh_prev(hidden);
    for (Index k = 0; k < hidden; ++k) {
      const double r = cache.r(t, k);
      const double z = cache.z(t, k);
      const double n = cache.n(t, k);
      const double hp = cache.h_prev(t, k);
      const double dn_pre = dh(k) * (1.0 - z) * (1.0 - n * n);
      const double dz_pre = dh(k) * (hp - n) * z * (1.0 - z);
      const double dr_pre = dn_pre * cache.gh_n(t, k) * r * (1.0 - r);
      dgi(k) = dr_pre;
      dgi(hidden + k) = dz_pre;
      dgi(2 * hidden + k) = dn_pre;
      dgh(k) = dr_pre;
      dgh(hidden + k) = dz_pre;
      dgh(2 * hidden + k) = dn_pre * r;
      dh_prev(k) = dh(k) * z;
    }
    grads.w_input.noalias() += dgi * x.row(t);
    grads.b_input += dgi;
    grads.w_hidden.noalias() += dgh * cache.h_prev.row(t);
    grads.b_hidden += dgh;
    dx.row(t).noalias() = (w.w_input.transpose() * dgi).transpose();
    dh_prev.noalias() += w.w_hidden.transpose() * dgh;
    carry = dh_prev;
  }
  return dx;
}

}  // namespace vlink::nnet
