#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "stseg/tensor.hpp"

namespace stseg {

// Adam with bias correction. Moment buffers are keyed by parameter order;
// the step counter increases by one per step() call.
template <typename T>
class Adam {
public:
    struct Hyper {
        T beta1 = T(0.9);
        T beta2 = T(0.999);
        T eps = T(1e-8);
    };

    Adam() = default;
    explicit Adam(Hyper h) : hyper_(h) {}

    const Hyper& hyper() const { return hyper_; }
    int64_t step_count() const { return step_; }

    // params: the tensors being optimized, in a stable order. Gradients are
    // read from each tensor's grad buffer.
    void step(std::vector<Tensor<T>>& params, T lr) {
        if (!(lr > T(0))) throw std::invalid_argument("adam: lr must be positive");
        if (m_.empty()) {
            m_.resize(params.size());
            v_.resize(params.size());
            for (size_t i = 0; i < params.size(); ++i) {
                m_[i].assign(params[i].numel(), T(0));
                v_[i].assign(params[i].numel(), T(0));
            }
        }
        if (m_.size() != params.size()) throw std::invalid_argument("adam: parameter count changed");
        ++step_;
        const T b1 = hyper_.beta1, b2 = hyper_.beta2;
        const T bc1 = T(1) - std::pow(b1, static_cast<T>(step_));
        const T bc2 = T(1) - std::pow(b2, static_cast<T>(step_));
        for (size_t i = 0; i < params.size(); ++i) {
            if (m_[i].size() != params[i].numel()) throw std::invalid_argument("adam: parameter shape changed");
            T* p = params[i].data().data();
            const T* g = params[i].grad().data();
            T* m = m_[i].data();
            T* v = v_[i].data();
            for (size_t j = 0; j < m_[i].size(); ++j) {
                m[j] = b1 * m[j] + (T(1) - b1) * g[j];
                v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
                const T mhat = m[j] / bc1;
                const T vhat = v[j] / bc2;
                p[j] -= lr * mhat / (std::sqrt(vhat) + hyper_.eps);
            }
        }
    }

    // checkpoint access
    std::vector<std::vector<T>>& first_moments() { return m_; }
    std::vector<std::vector<T>>& second_moments() { return v_; }
    void restore(std::vector<std::vector<T>> m, std::vector<std::vector<T>> v, int64_t step) {
        m_ = std::move(m);
        v_ = std::move(v);
        step_ = step;
    }

private:
    Hyper hyper_;
    int64_t step_ = 0;
    std::vector<std::vector<T>> m_;
    std::vector<std::vector<T>> v_;
};

struct OneCycleConfig {
    double pct_start = 0.3;
    double div_factor = 25.0;
    double final_div_factor = 1e4;
};

// 1cycle schedule: linear warmup from max_lr/div_factor to max_lr over the
// first pct_start fraction of steps, then cosine annealing down to
// max_lr/final_div_factor at the last step.
inline double onecycle_lr(int64_t step, int64_t total_steps, double max_lr, OneCycleConfig cfg = {}) {
    if (total_steps < 1) throw std::invalid_argument("onecycle_lr: total_steps must be >= 1");
    if (step < 0 || step >= total_steps)
        throw std::invalid_argument("onecycle_lr: step " + std::to_string(step) + " outside [0," +
                                    std::to_string(total_steps) + ")");
    if (!(max_lr > 0)) throw std::invalid_argument("onecycle_lr: max_lr must be positive");
    const double lo = max_lr / cfg.div_factor;
    const double fin = max_lr / cfg.final_div_factor;
    const int64_t peak = std::llround(cfg.pct_start * static_cast<double>(total_steps));
    if (total_steps == 1) return max_lr;
    if (step < peak) {
        return lo + (max_lr - lo) * static_cast<double>(step) / static_cast<double>(peak);
    }
    const int64_t span = total_steps - 1 - peak;
    if (span <= 0) return step == peak ? max_lr : fin;
    const double phase = static_cast<double>(step - peak) / static_cast<double>(span);
    return fin + (max_lr - fin) * 0.5 * (1.0 + std::cos(3.14159265358979323846 * phase));
}

}  // namespace stseg
