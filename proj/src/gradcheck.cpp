#include "gcap/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace gcap {

const GradientReport::Entry* GradientReport::worst() const {
    const Entry* w = nullptr;
    for (const Entry& e : per_param)
        if (!w || e.max_rel_error > w->max_rel_error) w = &e;
    return w;
}

namespace {

long double eval_scalar(const std::function<Tensor()>& f,
                        const std::function<long double()>& hp) {
    const long double v = hp ? hp() : static_cast<long double>(f().value());
    if (!std::isfinite(static_cast<double>(v)))
        throw NumericError("finite_difference_check: loss is not finite");
    return v;
}

}  // namespace

GradientReport finite_difference_check(const std::function<Tensor()>& loss_fn,
                                       const NamedParams& params, double eps,
                                       std::size_t max_coords_per_tensor,
                                       std::uint64_t subsample_seed,
                                       const std::function<long double()>& hp_loss_fn) {
    if (sizeof(real) != 8)
        throw ConfigError("finite_difference_check requires the 64-bit build");
    if (!(eps > 0.0)) throw ConfigError("finite_difference_check: eps must be positive");

    // Analytic pass.
    Tape tape;
    std::vector<std::vector<real>> analytic;
    {
        Tape::Scope scope(tape);
        Tensor loss = loss_fn();
        if (!std::isfinite(static_cast<double>(loss.value())))
            throw NumericError("finite_difference_check: loss is not finite");
        tape.backward(loss);
    }
    analytic.reserve(params.size());
    for (const auto& [name, t] : params) analytic.push_back(tape.grad(*t));

    GradientReport report;
    report.eps = eps;
    Rng rng(subsample_seed);

    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& tensor = *params[p].second;
        const std::size_t n = tensor.numel();

        std::vector<std::size_t> coords;
        if (max_coords_per_tensor == 0 || n <= max_coords_per_tensor) {
            coords.resize(n);
            for (std::size_t i = 0; i < n; ++i) coords[i] = i;
        } else {
            // sample without replacement
            std::vector<std::size_t> all(n);
            for (std::size_t i = 0; i < n; ++i) all[i] = i;
            for (std::size_t i = 0; i < max_coords_per_tensor; ++i)
                std::swap(all[i], all[i + rng.index(n - i)]);
            coords.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(max_coords_per_tensor));
            std::sort(coords.begin(), coords.end());
        }

        GradientReport::Entry entry;
        entry.name = params[p].first;
        entry.coords_checked = coords.size();

        auto data = tensor.mutable_data();
        for (std::size_t c : coords) {
            const real saved = data[c];
            data[c] = saved + static_cast<real>(eps);
            const long double plus = eval_scalar(loss_fn, hp_loss_fn);
            data[c] = saved - static_cast<real>(eps);
            const long double minus = eval_scalar(loss_fn, hp_loss_fn);
            data[c] = saved;

            const double numeric =
                static_cast<double>((plus - minus) / (2.0L * static_cast<long double>(eps)));
            const double exact = static_cast<double>(analytic[p][c]);
            const double denom = std::max({std::fabs(exact), std::fabs(numeric), 1e-8});
            const double rel = std::fabs(exact - numeric) / denom;
            if (rel > entry.max_rel_error) {
                entry.max_rel_error = rel;
                entry.analytic_at_worst = exact;
                entry.numeric_at_worst = numeric;
            }
        }
        report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
        report.per_param.push_back(std::move(entry));
    }
    return report;
}

}  // namespace gcap
