#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ccvit/numerics/ops.hpp"

namespace ccvit::numerics {

struct GradCheckOptions {
    double eps = 1e-5;                    // central-difference step, within [1e-6, 1e-3]
    std::size_t samples = 50;             // total coordinates examined
    std::size_t min_per_parameter = 0;    // guaranteed coordinates per parameter
    std::uint64_t seed = 0;
    // Gradients smaller than this are compared absolutely: the relative error
    // denominator is max(|analytic|, |numeric|, floor).
    double floor = 1e-6;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t coordinates = 0;
    std::string worst_parameter;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

using ScalarFunction = std::function<Var<double>(Tape<double>&)>;

// Compares tape gradients of `f` against central differences at sampled
// coordinates of `params`. `f` must build a fresh graph each call and read the
// parameters through Tape::parameter.
GradCheckResult grad_check(const ScalarFunction& f, const std::vector<Parameter<double>*>& params,
                           const GradCheckOptions& options = {});

} // namespace ccvit::numerics
