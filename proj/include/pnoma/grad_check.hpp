// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pnoma/tensor.hpp"

namespace pnoma {

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

struct GradCheckEntry {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    bool passed = true;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double tolerance = 0.0;
    bool passed() const;
    /// First failing entry name, empty when all pass.
    std::string first_failure() const;
};

struct GradCheckOptions {
    double tolerance = 1e-4;
    double step = 1e-5;
    /// Denominator floor for the relative error, so elements whose true
    /// gradient is at round-off level are judged by absolute error.
    double floor = 1e-6;
    /// Check at most this many elements per tensor (evenly strided); 0 = all.
    std::size_t max_elements = 0;
};

/// Compares reverse-mode gradients of `build()` with central differences for
/// every element of every tensor in `params`. `build` must rebuild the scalar
/// loss from the current parameter values deterministically; a mismatch
/// between two calls raises DeterminismError.
GradCheckReport grad_check(const std::function<Tensor()>& build, std::vector<NamedTensor> params,
                           const GradCheckOptions& options = {});

}  // namespace pnoma
