// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "pnoma/errors.hpp"
#include "pnoma/grad_check.hpp"
#include "pnoma/ops.hpp"
#include "pnoma/rng.hpp"
#include "pnoma/tensor.hpp"

namespace pnoma {

/// I.i.d. normal values of the given shape drawn from `stream`.
Tensor sample_gaussian(RngStream& stream, const Shape& shape, double mean, double stddev);

}  // namespace pnoma
