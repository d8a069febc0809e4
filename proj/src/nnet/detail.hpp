#pragma once

#include "vlink/nnet/classifier.hpp"

namespace vlink::nnet::detail {

Vec row_logits(const Classifier& m, const Inputs& inputs, std::size_t row);
double row_loss_grad(const Classifier& m, const Inputs& inputs, std::size_t row, int label, double scale,
                     ParamSet* grad, util::Rng* rng);
void check_inputs(const Classifier& m, const Inputs& inputs);

}  // namespace vlink::nnet::detail
