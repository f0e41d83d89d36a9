#pragma once

#include <cstdint>
#include <vector>

#include "flgn/tensor.hpp"

namespace flgn {

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

// Decoupled-weight-decay Adam over a fixed parameter list. With zero
// gradients, zero weight decay and fresh moments a step leaves parameters
// bit-identical.
class AdamW {
  public:
    AdamW(std::vector<Tensor> params, AdamWConfig cfg);

    void step();
    void zero_grad();
    int64_t step_count() const { return t_; }

  private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    AdamWConfig cfg_;
    int64_t t_ = 0;
};

}  // namespace flgn
