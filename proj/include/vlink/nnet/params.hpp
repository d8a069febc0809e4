#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace vlink::nnet {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Index = Eigen::Index;

/// Named matrices packed into one flat, column-major buffer.
class ParamSet {
 public:
  struct Block {
    std::string name;
    Index rows = 0;
    Index cols = 0;
    std::size_t offset = 0;

    bool operator==(const Block&) const = default;
  };

  /// Registers a zero-filled block and returns its id.
  std::size_t add(std::string name, Index rows, Index cols);

  Eigen::Map<Mat> mat(std::size_t id);
  Eigen::Map<const Mat> mat(std::size_t id) const;
  std::size_t find(std::string_view name) const;

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<Block>& blocks() const noexcept { return blocks_; }
  std::size_t size() const noexcept { return data_.size(); }

  ParamSet zeros_like() const;
  void set_zero();
  /// Rounds every value to the nearest float32.
  void round_to_float();

  bool operator==(const ParamSet&) const = default;

 private:
  std::vector<Block> blocks_;
  std::vector<double> data_;
};

}  // namespace vlink::nnet
