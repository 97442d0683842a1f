#pragma once

#include <vector>

#include "trajmask/tensor.hpp"

namespace trajmask::nn {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam with bias correction. Moments are kept in float64 regardless of the
// parameter dtype. step() consumes the gradients currently accumulated on
// the parameters; callers zero_grad() between steps.
class Adam {
public:
    Adam(std::vector<Tensor> params, AdamConfig cfg = {});

    void step();
    void zero_grad();
    std::int64_t steps_taken() const { return t_; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    AdamConfig cfg_;
    std::int64_t t_ = 0;
};

}  // namespace trajmask::nn
