#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "landet/common.hpp"
#include "landet/tensor.hpp"

namespace landet::testing {

// Central-difference gradient of a scalar-valued function of one tensor.
inline std::vector<float> finite_diff(
    const std::function<float(const Tensor&)>& f, const Tensor& x, float h = 1e-3f) {
    std::vector<float> g(x.size());
    Tensor probe = x;
    for (size_t i = 0; i < x.size(); ++i) {
        const float keep = probe.data[i];
        probe.data[i] = keep + h;
        const float fp = f(probe);
        probe.data[i] = keep - h;
        const float fm = f(probe);
        probe.data[i] = keep;
        g[i] = (fp - fm) / (2.0f * h);
    }
    return g;
}

// Elementwise check against a float32 central-difference reference, which
// carries ~|f|*eps/h of rounding noise; an element passes on either the
// relative or the absolute tolerance. (The acceptance suite holds gradients
// to the tighter 1e-3 relative rule against a double-precision oracle.)
// Returns the first failing index or -1.
inline int grad_mismatch(const std::vector<float>& analytic,
                         const std::vector<float>& reference, float rel_tol = 1e-2f,
                         float abs_tol = 1e-3f) {
    for (size_t i = 0; i < analytic.size(); ++i) {
        const float diff = std::fabs(analytic[i] - reference[i]);
        if (diff >= abs_tol && diff >= rel_tol * std::fabs(reference[i])) return int(i);
    }
    return -1;
}

inline Tensor random_tensor(std::vector<int> shape, Rng& rng, float lo = -1.0f,
                            float hi = 1.0f) {
    Tensor t(std::move(shape));
    for (float& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

}  // namespace landet::testing
