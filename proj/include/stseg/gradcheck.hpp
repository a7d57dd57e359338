#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>

#include "stseg/tensor.hpp"

namespace stseg {

// Compares the reverse-mode gradient of a scalar-valued function against
// central finite differences and returns the max elementwise relative error
// (absolute floor 1e-8 in the denominator). Intended for double precision.
template <typename T>
double grad_check(const std::function<Tensor<T>(const Tensor<T>&)>& f, Tensor<T> point, T h = T(1e-5)) {
    point.set_requires_grad(true);
    point.zero_grad();
    Tensor<T> out = f(point);
    if (out.numel() != 1) throw std::invalid_argument("grad_check: f must be scalar-valued");
    if (!std::isfinite(static_cast<double>(out.value())))
        throw std::domain_error("grad_check: f is not finite at the probe point");
    out.backward();
    std::vector<T> analytic(point.grad().begin(), point.grad().end());

    double max_rel = 0.0;
    auto x = point.data();
    for (size_t j = 0; j < point.numel(); ++j) {
        const T keep = x[j];
        x[j] = keep + h;
        const T f_plus = f(point).value();
        x[j] = keep - h;
        const T f_minus = f(point).value();
        x[j] = keep;
        if (!std::isfinite(static_cast<double>(f_plus)) || !std::isfinite(static_cast<double>(f_minus)))
            throw std::domain_error("grad_check: f is not finite near the probe point");
        const double numeric = (static_cast<double>(f_plus) - static_cast<double>(f_minus)) / (2.0 * h);
        const double a = static_cast<double>(analytic[j]);
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
        max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
    }
    return max_rel;
}

}  // namespace stseg
