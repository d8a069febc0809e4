#include "vlink/nnet/params.hpp"

#include <algorithm>

#include "vlink/error.hpp"

namespace vlink::nnet {

std::size_t ParamSet::add(std::string name, Index rows, Index cols) {
  if (rows < 0 || cols < 0) throw DimensionError("negative block shape for " + name);
  if (std::any_of(blocks_.begin(), blocks_.end(), [&](const Block& b) { return b.name == name; })) {
    throw ConfigError("duplicate parameter block: " + name);
  }
  blocks_.push_back({std::move(name), rows, cols, data_.size()});
  data_.resize(data_.size() + static_cast<std::size_t>(rows * cols), 0.0);
  return blocks_.size() - 1;
}

Eigen::Map<Mat> ParamSet::mat(std::size_t id) {
  const auto& b = blocks_.at(id);
  return {data_.data() + b.offset, b.rows, b.cols};
}

Eigen::Map<const Mat> ParamSet::mat(std::size_t id) const {
  const auto& b = blocks_.at(id);
  return {data_.data() + b.offset, b.rows, b.cols};
}

std::size_t ParamSet::find(std::string_view name) const {
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (blocks_[i].name == name) return i;
  }
  throw NotFoundError("no parameter block named " + std::string(name));
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out = *this;
  out.set_zero();
  return out;
}

void ParamSet::set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

void ParamSet::round_to_float() {
  for (double& v : data_) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace vlink::nnet
