#include "ccvit/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "ccvit/common/random.hpp"

namespace ccvit::numerics {
namespace {

double evaluate(const ScalarFunction& f) {
    Tape<double> tape;
    const double v = f(tape).value()[0];
    if (!std::isfinite(v)) throw NumericError("grad_check: function value is not finite");
    return v;
}

} // namespace

GradCheckResult grad_check(const ScalarFunction& f, const std::vector<Parameter<double>*>& params,
                           const GradCheckOptions& options) {
    if (options.eps < 1e-6 || options.eps > 1e-3) throw InvalidArgument("grad_check eps must lie in [1e-6, 1e-3]");
    if (params.empty()) throw InvalidArgument("grad_check needs at least one parameter");

    for (auto* p : params) p->zero_grad();
    {
        Tape<double> tape;
        auto loss = f(tape);
        if (!loss.value().all_finite()) throw NumericError("grad_check: function value is not finite");
        tape.backward(loss);
    }
    for (auto* p : params)
        if (!p->grad.all_finite()) throw NumericError("grad_check: non-finite gradient in " + p->name);

    std::vector<std::pair<std::size_t, std::size_t>> coords;
    Rng rng(options.seed);
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        std::uniform_int_distribution<std::size_t> pick(0, params[pi]->value.size() - 1);
        for (std::size_t s = 0; s < options.min_per_parameter; ++s) coords.emplace_back(pi, pick(rng));
    }
    std::size_t total = 0;
    for (auto* p : params) total += p->value.size();
    std::uniform_int_distribution<std::size_t> flat(0, total - 1);
    while (coords.size() < options.samples) {
        std::size_t c = flat(rng);
        std::size_t pi = 0;
        while (c >= params[pi]->value.size()) c -= params[pi++]->value.size();
        coords.emplace_back(pi, c);
    }

    GradCheckResult result;
    for (auto [pi, idx] : coords) {
        Parameter<double>& p = *params[pi];
        const double saved = p.value[idx];
        p.value[idx] = saved + options.eps;
        const double up = evaluate(f);
        p.value[idx] = saved - options.eps;
        const double down = evaluate(f);
        p.value[idx] = saved;
        const double numeric = (up - down) / (2.0 * options.eps);
        const double analytic = p.grad[idx];
        const double denom = std::max({std::abs(analytic), std::abs(numeric), options.floor});
        const double rel = std::abs(analytic - numeric) / denom;
        ++result.coordinates;
        if (rel >= result.max_rel_error) {
            result.max_rel_error = rel;
            result.worst_parameter = p.name;
            result.worst_index = idx;
            result.worst_analytic = analytic;
            result.worst_numeric = numeric;
        }
    }
    return result;
}

} // namespace ccvit::numerics
