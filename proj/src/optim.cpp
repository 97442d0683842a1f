#include "trajmask/optim.hpp"

#include <cmath>

namespace trajmask::nn {

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    if (cfg_.beta1 < 0 || cfg_.beta1 >= 1 || cfg_.beta2 < 0 || cfg_.beta2 >= 1)
        throw ContractError("adam: betas must lie in [0,1)");
    if (cfg_.eps <= 0) throw ContractError("adam: eps must be > 0");
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(p.numel(), 0.0);
        v_.emplace_back(p.numel(), 0.0);
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        Tensor& p = params_[pi];
        auto& m = m_[pi];
        auto& v = v_[pi];
        for (std::size_t i = 0; i < m.size(); ++i) {
            double g = p.grad_at(i);
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
            double mh = m[i] / bc1;
            double vh = v[i] / bc2;
            p.set(i, p.at(i) - cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps));
        }
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

}  // namespace trajmask::nn
