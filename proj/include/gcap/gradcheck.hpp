#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "gcap/tensor.hpp"

namespace gcap {

struct GradientReport {
    struct Entry {
        std::string name;
        double max_rel_error = 0.0;
        double analytic_at_worst = 0.0;
        double numeric_at_worst = 0.0;
        std::size_t coords_checked = 0;
    };
    std::vector<Entry> per_param;
    double max_rel_error = 0.0;
    double eps = 0.0;

    const Entry* worst() const;
};

using NamedParams = std::vector<std::pair<std::string, Tensor*>>;

// Compares tape gradients of `loss_fn` against central finite differences
// (f(t+eps) - f(t-eps)) / (2 eps). `loss_fn` must be deterministic: freeze
// stochastic ops (fixed dropout masks) before calling. Relative error is
// |ga - gn| / max(|ga|, |gn|, 1e-8).
//
// When a parameter has more than `max_coords_per_tensor` coordinates, a
// seeded subsample of that many coordinates is checked; set 0 to check all.
//
// The difference quotient needs the loss far more accurately than the
// gradients under test: cancellation leaves roughly ulp(loss)/(2 eps) of
// noise, which drowns genuinely small coordinates when the loss itself is
// evaluated in double. Passing `hp_loss_fn`, an independent long-double
// route to the same value, moves that floor out of the way.
GradientReport finite_difference_check(const std::function<Tensor()>& loss_fn,
                                       const NamedParams& params, double eps,
                                       std::size_t max_coords_per_tensor = 200,
                                       std::uint64_t subsample_seed = 0,
                                       const std::function<long double()>& hp_loss_fn = {});

}  // namespace gcap
