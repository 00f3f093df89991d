// Adamax optimizer (infinity-norm Adam variant).
//
// Update per parameter element:
//   m <- b1*m + (1-b1)*g
//   u <- max(b2*u, |g|)
//   theta <- theta - (lr / (1 - b1^t)) * m / (u + eps)
//
// eps sits in the denominator to keep the very first step defined when a
// gradient element is exactly zero.

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "food/tensor.hpp"

namespace food {

struct AdamaxConfig {
    double lr = 0.002;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename T>
class Adamax {
public:
    Adamax(std::vector<Tensor<T>> params, AdamaxConfig config = {})
        : params_(std::move(params)), config_(config) {
        m_.resize(params_.size());
        u_.resize(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(params_[i].numel(), T(0));
            u_[i].assign(params_[i].numel(), T(0));
        }
    }

    void step() {
        ++t_;
        const T b1 = static_cast<T>(config_.beta1);
        const T b2 = static_cast<T>(config_.beta2);
        const T eps = static_cast<T>(config_.eps);
        const T rate = static_cast<T>(config_.lr / (1.0 - std::pow(config_.beta1,
                                                                   static_cast<double>(t_))));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& p = params_[i];
            if (p.node()->grad.size() != p.numel()) {
                throw std::logic_error("adamax: parameter " + std::to_string(i) +
                                       " has no gradient; run backward() first");
            }
            const T* g = p.node()->grad.data();
            T* theta = p.data().data();
            T* m = m_[i].data();
            T* u = u_[i].data();
            const std::size_t n = p.numel();
            for (std::size_t k = 0; k < n; ++k) {
                m[k] = b1 * m[k] + (T(1) - b1) * g[k];
                const T ag = g[k] < T(0) ? -g[k] : g[k];
                const T decayed = b2 * u[k];
                u[k] = decayed > ag ? decayed : ag;
                theta[k] -= rate * m[k] / (u[k] + eps);
            }
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

    std::uint64_t step_count() const { return t_; }
    const AdamaxConfig& config() const { return config_; }
    const std::vector<Tensor<T>>& params() const { return params_; }

    // Serialization access; moments are stored in parameter order.
    std::vector<std::vector<T>>& first_moments() { return m_; }
    std::vector<std::vector<T>>& inf_norms() { return u_; }
    const std::vector<std::vector<T>>& first_moments() const { return m_; }
    const std::vector<std::vector<T>>& inf_norms() const { return u_; }
    void restore_step_count(std::uint64_t t) { t_ = t; }

private:
    std::vector<Tensor<T>> params_;
    AdamaxConfig config_;
    std::vector<std::vector<T>> m_;
    std::vector<std::vector<T>> u_;
    std::uint64_t t_ = 0;
};

} // namespace food
