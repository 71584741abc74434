#pragma once

#include <functional>
#include <string>
#include <vector>

#include "brainof/ad.hpp"

namespace brainof {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::size_t n_checked = 0;
    // worst relative error per input tensor, aligned with the inputs list
    std::vector<double> per_input_max;
};

// Central finite differences against the analytic backward pass. fn must be a
// pure map from fresh parameter Vars to a scalar Var. Relative error per
// scalar: |analytic - numeric| / (|analytic| + |numeric| + 1e-12).
GradCheckReport grad_check(const std::function<ad::Var(const std::vector<ad::Var>&)>& fn,
                           const std::vector<Tensor>& inputs, double step = 1e-5);

}  // namespace brainof
