#include "flgn/optim.hpp"

#include <cmath>
#include <string>

namespace flgn {

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    if (cfg_.lr <= 0.0) {
        throw PreconditionError("AdamW learning rate must be positive, got " +
                                std::to_string(cfg_.lr));
    }
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        if (!p->requires_grad) {
            throw PreconditionError("AdamW given a parameter without requires_grad");
        }
        m_.emplace_back(p->data.size(), 0.0);
        v_.emplace_back(p->data.size(), 0.0);
    }
}

void AdamW::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t k = 0; k < params_.size(); ++k) {
        auto& p = *params_[k];
        if (p.grad.size() != m_[k].size()) {
            throw PreconditionError("AdamW moment/parameter shape mismatch for parameter " +
                                    std::to_string(k));
        }
        auto& m = m_[k];
        auto& v = v_[k];
        for (size_t i = 0; i < m.size(); ++i) {
            const double g = p.grad[i];
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p.data[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                                    cfg_.weight_decay * p.data[i]);
        }
    }
}

void AdamW::zero_grad() {
    for (auto& p : params_) flgn::zero_grad(p);
}

}  // namespace flgn
