#pragma once

#include <functional>

#include "gmerge/tape.hpp"

namespace gmerge {

class Rng;

/// Builds a scalar loss on a caller-provided tape; must be pure in the sense
/// that two calls at the same parameter values produce the same value.
using LossFn = std::function<Tensor(Tape&)>;

/// Central finite-difference check of the analytic gradient of `loss_fn`
/// with respect to `x`. Returns the max over checked entries of
///   |analytic - central_difference| / (|analytic| + 1e-8).
/// When `max_coords` > 0, only that many randomly chosen entries of x are
/// perturbed (required for large composites); `rng` must then be non-null.
double finite_diff_check(const LossFn& loss_fn, Tensor x, double h = 1e-5,
                         int max_coords = -1, Rng* rng = nullptr);

}  // namespace gmerge
