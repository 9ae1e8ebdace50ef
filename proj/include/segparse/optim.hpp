#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "segparse/error.hpp"

namespace segparse {

struct OptimizerConfig {
    double learning_rate = 1e-4;
    double clip = 10.0;  // per-component gradient clip, applied before Adam
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Adam with per-component gradient clipping. Non-finite gradients are
// rejected without touching the parameters or the moment estimates.
class AdamOptimizer {
public:
    AdamOptimizer(OptimizerConfig config, std::size_t n)
        : cfg_(config), m_(n, 0.0), v_(n, 0.0) {
        if (cfg_.learning_rate <= 0.0) throw ConfigError("learning rate must be positive");
        if (cfg_.clip <= 0.0) throw ConfigError("gradient clip must be positive");
    }

    const OptimizerConfig& config() const { return cfg_; }
    long long steps() const { return step_; }

    void step(std::vector<double>& params, std::span<const double> grad) {
        if (params.size() != m_.size() || grad.size() != m_.size()) {
            throw BoundsError("optimizer state does not match parameter vector");
        }
        for (double g : grad) {
            if (!std::isfinite(g)) throw NumericError("non-finite gradient rejected");
        }
        ++step_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            const double g = std::clamp(grad[i], -cfg_.clip, cfg_.clip);
            m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
            v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m_[i] / bc1;
            const double vhat = v_[i] / bc2;
            params[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
        }
    }

private:
    OptimizerConfig cfg_;
    std::vector<double> m_;
    std::vector<double> v_;
    long long step_ = 0;
};

}  // namespace segparse
