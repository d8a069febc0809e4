#include <cmath>
#include <limits>

#include "vlink/error.hpp"
#include "vlink/nnet/classifier.hpp"
#include "vlink/nnet/gru.hpp"
#include "detail.hpp"

namespace vlink::nnet {

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::nb: return "nb";
    case ModelKind::softmax: return "softmax";
    case ModelKind::mlp: return "mlp";
    case ModelKind::bigru: return "bigru";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "nb") return ModelKind::nb;
  if (name == "softmax") return ModelKind::softmax;
  if (name == "mlp") return ModelKind::mlp;
  if (name == "bigru") return ModelKind::bigru;
  throw ConfigError("unknown classifier kind: " + std::string(name));
}

std::size_t input_rows(const Inputs& inputs) {
  return std::visit(
      [](const auto& x) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(x)>, features::SparseDocMatrix>) {
          return x.n_rows;
        } else {
          return x.size();
        }
      },
      inputs);
}

namespace {

void fill_uniform(Eigen::Map<Mat> m, double bound, util::Rng& rng) {
  for (Index j = 0; j < m.cols(); ++j) {
    for (Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-bound, bound);
  }
}

std::string gru_block(Index layer, int dir, std::string_view what) {
  return "gru" + std::to_string(layer) + (dir == 0 ? "_f_" : "_b_") + std::string(what);
}

}  // namespace

Classifier make_softmax(Index input_dim, Index n_classes) {
  if (input_dim < 0 || n_classes < 1) throw ConfigError("invalid softmax dimensions");
  Classifier m;
  m.kind = ModelKind::softmax;
  m.input_dim = input_dim;
  m.n_classes = n_classes;
  m.params.add("W", n_classes, input_dim);
  m.params.add("b", n_classes, 1);
  return m;
}

Classifier make_mlp(Index input_dim, Index n_classes, const MlpConfig& config, std::uint64_t seed) {
  if (config.hidden < 1) throw ConfigError("MLP hidden width must be at least 1");
  if (!(config.dropout >= 0.0 && config.dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  Classifier m;
  m.kind = ModelKind::mlp;
  m.input_dim = input_dim;
  m.n_classes = n_classes;
  m.hidden = config.hidden;
  m.dropout = config.dropout;
  util::Rng rng(seed);
  const double b_in = 1.0 / std::sqrt(static_cast<double>(std::max<Index>(input_dim, 1)));
  const double b_hid = 1.0 / std::sqrt(static_cast<double>(config.hidden));
  fill_uniform(m.params.mat(m.params.add("W1", config.hidden, input_dim)), b_in, rng);
  fill_uniform(m.params.mat(m.params.add("b1", config.hidden, 1)), b_in, rng);
  fill_uniform(m.params.mat(m.params.add("W2", n_classes, config.hidden)), b_hid, rng);
  fill_uniform(m.params.mat(m.params.add("b2", n_classes, 1)), b_hid, rng);
  m.params.round_to_float();
  return m;
}

Classifier make_bigru(Index input_dim, Index n_classes, const BiGRUConfig& config, std::uint64_t seed) {
  if (config.hidden < 1) throw ConfigError("BiGRU hidden size must be at least 1");
  if (config.layers < 1) throw ConfigError("BiGRU needs at least one layer");
  if (!(config.dropout >= 0.0 && config.dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (input_dim < 1) throw ConfigError("BiGRU input dimension must be at least 1");
  Classifier m;
  m.kind = ModelKind::bigru;
  m.input_dim = input_dim;
  m.n_classes = n_classes;
  m.hidden = config.hidden;
  m.head_hidden = config.head_hidden > 0 ? config.head_hidden : config.hidden;
  m.layers = config.layers;
  m.dropout = config.dropout;
  m.bidirectional = config.bidirectional;
  const Index dirs = m.bidirectional ? 2 : 1;
  const Index h = m.hidden;
  util::Rng rng(seed);
  const double b_gru = 1.0 / std::sqrt(static_cast<double>(h));
  for (Index l = 0; l < m.layers; ++l) {
    const Index in = l == 0 ? input_dim : dirs * h;
    for (int d = 0; d < dirs; ++d) {
      fill_uniform(m.params.mat(m.params.add(gru_block(l, d, "Wi"), 3 * h, in)), b_gru, rng);
      fill_uniform(m.params.mat(m.params.add(gru_block(l, d, "Wh"), 3 * h, h)), b_gru, rng);
      fill_uniform(m.params.mat(m.params.add(gru_block(l, d, "bi"), 3 * h, 1)), b_gru, rng);
      fill_uniform(m.params.mat(m.params.add(gru_block(l, d, "bh"), 3 * h, 1)), b_gru, rng);
    }
  }
  const double b_feat = 1.0 / std::sqrt(static_cast<double>(dirs * h));
  const double b_head = 1.0 / std::sqrt(static_cast<double>(m.head_hidden));
  fill_uniform(m.params.mat(m.params.add("head_W1", m.head_hidden, dirs * h)), b_feat, rng);
  fill_uniform(m.params.mat(m.params.add("head_b1", m.head_hidden, 1)), b_feat, rng);
  fill_uniform(m.params.mat(m.params.add("head_W2", n_classes, m.head_hidden)), b_head, rng);
  fill_uniform(m.params.mat(m.params.add("head_b2", n_classes, 1)), b_head, rng);
  m.params.round_to_float();
  return m;
}

Classifier train_nb(const features::SparseDocMatrix& counts, std::span<const int> labels, Index n_classes,
                    double alpha) {
  if (labels.size() != counts.n_rows) throw DimensionError("label count does not match document count");
  if (counts.n_rows == 0) throw ConfigError("naive Bayes needs at least one document");
  if (!(alpha > 0.0)) throw ConfigError("smoothing alpha must be positive");
  const auto d = static_cast<Index>(counts.n_cols);
  Mat feature_counts = Mat::Zero(n_classes, d);
  Vec class_docs = Vec::Zero(n_classes);
  for (std::size_t r = 0; r < counts.n_rows; ++r) {
    const int y = labels[r];
    if (y < 0 || y >= n_classes) throw DimensionError("label out of range");
    class_docs(y) += 1.0;
    auto cols = counts.row_cols(r);
    auto vals = counts.row_vals(r);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      if (vals[k] < 0.0) throw ConfigError("naive Bayes requires non-negative feature counts");
      feature_counts(y, static_cast<Index>(cols[k])) += vals[k];
    }
  }
  Classifier m;
  m.kind = ModelKind::nb;
  m.input_dim = d;
  m.n_classes = n_classes;
  const auto prior_id = m.params.add("log_prior", n_classes, 1);
  const auto lik_id = m.params.add("log_lik", n_classes, d);
  auto prior = m.params.mat(prior_id);
  auto lik = m.params.mat(lik_id);
  const double n_docs = static_cast<double>(counts.n_rows);
  for (Index c = 0; c < n_classes; ++c) {
    // Empty classes get a large finite penalty so the container stays finite.
    prior(c, 0) = class_docs(c) > 0.0 ? std::log(class_docs(c) / n_docs) : -1e30;
    const double denom = feature_counts.row(c).sum() + alpha * static_cast<double>(d);
    for (Index j = 0; j < d; ++j) lik(c, j) = std::log((feature_counts(c, j) + alpha) / denom);
  }
  m.params.round_to_float();
  return m;
}

namespace detail {

namespace {

const features::SparseDocMatrix& sparse_of(const Inputs& inputs) {
  if (const auto* m = std::get_if<features::SparseDocMatrix>(&inputs)) return *m;
  throw DimensionError("model expects sparse document rows");
}

const SequenceSet& sequences_of(const Inputs& inputs) {
  if (const auto* s = std::get_if<SequenceSet>(&inputs)) return *s;
  throw DimensionError("model expects token sequences");
}

// x' = W x for a sparse row.
Vec sparse_matvec(const Eigen::Map<const Mat>& w, const features::SparseDocMatrix& x, std::size_t row) {
  Vec out = Vec::Zero(w.rows());
  auto cols = x.row_cols(row);
  auto vals = x.row_vals(row);
  for (std::size_t k = 0; k < cols.size(); ++k) out.noalias() += vals[k] * w.col(static_cast<Index>(cols[k]));
  return out;
}

void sparse_outer_add(Eigen::Map<Mat> g, const Vec& delta, const features::SparseDocMatrix& x, std::size_t row) {
  auto cols = x.row_cols(row);
  auto vals = x.row_vals(row);
  for (std::size_t k = 0; k < cols.size(); ++k) g.col(static_cast<Index>(cols[k])).noalias() += vals[k] * delta;
}

Mat dropout_mask(Index rows, Index cols, double p, util::Rng* rng) {
  if (rng == nullptr || p <= 0.0) return Mat::Ones(rows, cols);
  Mat mask(rows, cols);
  const double keep = 1.0 - p;
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) mask(i, j) = rng->uniform() < keep ? 1.0 / keep : 0.0;
  }
  return mask;
}

struct GruIds {
  std::size_t wi, wh, bi, bh;
};

GruIds gru_ids(const ParamSet& p, Index layer, int dir) {
  return {p.find(gru_block(layer, dir, "Wi")), p.find(gru_block(layer, dir, "Wh")),
          p.find(gru_block(layer, dir, "bi")), p.find(gru_block(layer, dir, "bh"))};
}

GruWeights gru_weights(const ParamSet& p, const GruIds& ids) {
  return {p.mat(ids.wi), p.mat(ids.wh), p.mat(ids.bi).col(0), p.mat(ids.bh).col(0)};
}

struct BiGruTrace {
  std::vector<Mat> layer_inputs;             // per layer, input sequence after dropout
  std::vector<std::vector<GruCache>> caches;  // [layer][dir]
  std::vector<std::vector<Mat>> outputs;      // [layer][dir] hidden states
  std::vector<Mat> masks;                     // dropout masks between layers
  Vec feature, feature_mask, feature_in;
  Vec act, act_mask, act_in;
};

Vec bigru_forward(const Classifier& m, const Mat& x, util::Rng* rng, BiGruTrace* trace) {
  if (x.cols() != m.input_dim) throw DimensionError("sequence width does not match model input dimension");
  const Index dirs = m.bidirectional ? 2 : 1;
  const Index h = m.hidden;
  const Index steps = x.rows();
  Mat input = x;
  std::vector<Mat> outs;
  for (Index l = 0; l < m.layers; ++l) {
    outs.assign(static_cast<std::size_t>(dirs), Mat());
    std::vector<GruCache> caches(static_cast<std::size_t>(dirs));
    for (int d = 0; d < dirs; ++d) {
      const auto w = gru_weights(m.params, gru_ids(m.params, l, d));
      outs[d] = gru_forward(input, w, d == 0 ? Direction::forward : Direction::backward, trace ? &caches[d] : nullptr);
    }
    if (trace) {
      trace->layer_inputs.push_back(input);
      trace->caches.push_back(std::move(caches));
      trace->outputs.push_back(outs);
    }
    if (l + 1 < m.layers) {
      Mat cat(steps, dirs * h);
      for (int d = 0; d < dirs; ++d) cat.middleCols(d * h, h) = outs[d];
      const Mat mask = dropout_mask(steps, dirs * h, m.dropout, rng);
      input = cat.cwiseProduct(mask);
      if (trace) trace->masks.push_back(mask);
    }
  }
  Vec feature(dirs * h);
  feature.head(h) = outs[0].row(steps - 1).transpose();
  if (dirs == 2) feature.tail(h) = outs[1].row(0).transpose();
  const Vec fmask = dropout_mask(dirs * h, 1, m.dropout, rng).col(0);
  const Vec f_in = feature.cwiseProduct(fmask);
  const auto w1 = m.params.mat(m.params.find("head_W1"));
  const auto b1 = m.params.mat(m.params.find("head_b1"));
  const auto w2 = m.params.mat(m.params.find("head_W2"));
  const auto b2 = m.params.mat(m.params.find("head_b2"));
  Vec act = (w1 * f_in + b1.col(0)).array().tanh().matrix();
  const Vec amask = dropout_mask(m.head_hidden, 1, m.dropout, rng).col(0);
  const Vec a_in = act.cwiseProduct(amask);
  if (trace) {
    trace->feature = feature;
    trace->feature_mask = fmask;
    trace->feature_in = f_in;
    trace->act = act;
    trace->act_mask = amask;
    trace->act_in = a_in;
  }
  return w2 * a_in + b2.col(0);
}

void bigru_backward(const Classifier& m, const BiGruTrace& tr, const Vec& dz, ParamSet& grad) {
  const Index dirs = m.bidirectional ? 2 : 1;
  const Index h = m.hidden;
  const auto w1 = m.params.mat(m.params.find("head_W1"));
  const auto w2 = m.params.mat(m.params.find("head_W2"));
  grad.mat(grad.find("head_W2")).noalias() += dz * tr.act_in.transpose();
  grad.mat(grad.find("head_b2")).col(0) += dz;
  const Vec da = (w2.transpose() * dz).cwiseProduct(tr.act_mask);
  const Vec dpre = da.cwiseProduct((1.0 - tr.act.array().square()).matrix());
  grad.mat(grad.find("head_W1")).noalias() += dpre * tr.feature_in.transpose();
  grad.mat(grad.find("head_b1")).col(0) += dpre;
  const Vec df = (w1.transpose() * dpre).cwiseProduct(tr.feature_mask);

  const Index steps = tr.layer_inputs.front().rows();
  std::vector<Mat> d_hidden(static_cast<std::size_t>(dirs), Mat::Zero(steps, h));
  d_hidden[0].row(steps - 1) = df.head(h).transpose();
  if (dirs == 2) d_hidden[1].row(0) = df.tail(h).transpose();

  for (Index l = m.layers - 1; l >= 0; --l) {
    const Mat& input = tr.layer_inputs[static_cast<std::size_t>(l)];
    Mat d_input = Mat::Zero(input.rows(), input.cols());
    for (int d = 0; d < dirs; ++d) {
      const auto ids = gru_ids(m.params, l, d);
      const auto w = gru_weights(m.params, ids);
      GruGrads g{grad.mat(ids.wi), grad.mat(ids.wh), grad.mat(ids.bi).col(0), grad.mat(ids.bh).col(0)};
      d_input += gru_backward(input, w, d == 0 ? Direction::forward : Direction::backward,
                              tr.caches[static_cast<std::size_t>(l)][d], d_hidden[d], g);
    }
    if (l > 0) {
      const Mat d_cat = d_input.cwiseProduct(tr.masks[static_cast<std::size_t>(l - 1)]);
      for (int d = 0; d < dirs; ++d) d_hidden[d] = d_cat.middleCols(d * h, h);
    }
  }
}

}  // namespace

Vec row_logits(const Classifier& m, const Inputs& inputs, std::size_t row) {
  switch (m.kind) {
    case ModelKind::nb: {
      const auto& x = sparse_of(inputs);
      return m.params.mat(m.params.find("log_prior")).col(0) +
             sparse_matvec(m.params.mat(m.params.find("log_lik")), x, row);
    }
    case ModelKind::softmax: {
      const auto& x = sparse_of(inputs);
      return sparse_matvec(m.params.mat(m.params.find("W")), x, row) + m.params.mat(m.params.find("b")).col(0);
    }
    case ModelKind::mlp: {
      const auto& x = sparse_of(inputs);
      const Vec hid = (sparse_matvec(m.params.mat(m.params.find("W1")), x, row) +
                       m.params.mat(m.params.find("b1")).col(0))
                          .array()
                          .tanh()
                          .matrix();
      return m.params.mat(m.params.find("W2")) * hid + m.params.mat(m.params.find("b2")).col(0);
    }
    case ModelKind::bigru:
      return bigru_forward(m, sequences_of(inputs).seqs.at(row), nullptr, nullptr);
  }
  throw ConfigError("unknown model kind");
}

// Cross-entropy of one row; backpropagates scale * (p - onehot) when grad is given.
double row_loss_grad(const Classifier& m, const Inputs& inputs, std::size_t row, int label, double scale,
                     ParamSet* grad, util::Rng* rng) {
  auto loss_of = [&](const Vec& z, Vec* dz) {
    const double zmax = z.maxCoeff();
    const Vec e = (z.array() - zmax).exp().matrix();
    const double sum = e.sum();
    if (dz) {
      *dz = e / sum;
      (*dz)(label) -= 1.0;
      *dz *= scale;
    }
    return std::log(sum) + zmax - z(label);
  };
  if (grad == nullptr && rng == nullptr) return loss_of(row_logits(m, inputs, row), nullptr);
  Vec dz;
  switch (m.kind) {
    case ModelKind::nb:
      throw ConfigError("naive Bayes is fitted in closed form, not by gradient descent");
    case ModelKind::softmax: {
      const auto& x = sparse_of(inputs);
      const double loss = loss_of(row_logits(m, inputs, row), grad ? &dz : nullptr);
      if (!grad) return loss;
      sparse_outer_add(grad->mat(grad->find("W")), dz, x, row);
      grad->mat(grad->find("b")).col(0) += dz;
      return loss;
    }
    case ModelKind::mlp: {
      const auto& x = sparse_of(inputs);
      const auto w2 = m.params.mat(m.params.find("W2"));
      const Vec hid = (sparse_matvec(m.params.mat(m.params.find("W1")), x, row) +
                       m.params.mat(m.params.find("b1")).col(0))
                          .array()
                          .tanh()
                          .matrix();
      const Vec mask = dropout_mask(m.hidden, 1, m.dropout, rng).col(0);
      const Vec h_in = hid.cwiseProduct(mask);
      const Vec z = w2 * h_in + m.params.mat(m.params.find("b2")).col(0);
      const double loss = loss_of(z, grad ? &dz : nullptr);
      if (!grad) return loss;
      grad->mat(grad->find("W2")).noalias() += dz * h_in.transpose();
      grad->mat(grad->find("b2")).col(0) += dz;
      const Vec da = (w2.transpose() * dz).cwiseProduct(mask).cwiseProduct((1.0 - hid.array().square()).matrix());
      sparse_outer_add(grad->mat(grad->find("W1")), da, x, row);
      grad->mat(grad->find("b1")).col(0) += da;
      return loss;
    }
    case ModelKind::bigru: {
      BiGruTrace trace;
      const Vec z = bigru_forward(m, sequences_of(inputs).seqs.at(row), rng, grad ? &trace : nullptr);
      const double loss = loss_of(z, grad ? &dz : nullptr);
      if (!grad) return loss;
      bigru_backward(m, trace, dz, *grad);
      return loss;
    }
  }
  throw ConfigError("unknown model kind");
}

void check_inputs(const Classifier& m, const Inputs& inputs) {
  if (m.kind == ModelKind::bigru) {
    const auto& s = sequences_of(inputs);
    if (s.dim != m.input_dim) {
      throw DimensionError("sequence dimension " + std::to_string(s.dim) + " does not match model input " +
                           std::to_string(m.input_dim));
    }
  } else {
    const auto& x = sparse_of(inputs);
    if (static_cast<Index>(x.n_cols) != m.input_dim) {
      throw DimensionError("feature dimension " + std::to_string(x.n_cols) + " does not match model input " +
                           std::to_string(m.input_dim));
    }
  }
}

}  // namespace detail

}  // namespace vlink::nnet
