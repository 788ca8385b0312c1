#pragma once

// Scalar loss formulas. The graph-level counterparts with analytic
// gradients live on Graph (masked_ce, binary_focal).

#include <cmath>

#include "error.hpp"

namespace exbehrt {

// -alpha * (1-p)^gamma * ln(p), where p is the predicted probability of the
// true class. gamma=0 and alpha=1 reduce it to cross-entropy.
inline double focal_loss(double p, double gamma, double alpha) {
    if (!(p > 0.0 && p < 1.0)) throw usage_error("focal loss domain error: p must lie in (0,1)");
    if (gamma < 0.0) throw usage_error("focal loss gamma must be non-negative");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw usage_error("focal loss alpha must lie in (0,1]");
    return -alpha * std::pow(1.0 - p, gamma) * std::log(p);
}

inline double cross_entropy(double p) { return focal_loss(p, 0.0, 1.0); }

} // namespace exbehrt
