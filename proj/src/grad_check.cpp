// SPDX-License-Identifier: Apache-2.0
#include "pnoma/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "pnoma/errors.hpp"

namespace pnoma {

bool GradCheckReport::passed() const {
    return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
}

std::string GradCheckReport::first_failure() const {
    for (const auto& e : entries)
        if (!e.passed) return e.name;
    return {};
}

GradCheckReport grad_check(const std::function<Tensor()>& build, std::vector<NamedTensor> params,
                           const GradCheckOptions& options) {
    GradCheckReport report;
    report.tolerance = options.tolerance;
    if (params.empty()) return report;

    for (auto& p : params) p.tensor.zero_grad();
    const Tensor root = build();
    const Tensor again = build();
    if (root.item() != again.item())
        throw DeterminismError("grad_check: graph builder is not deterministic (" + std::to_string(root.item()) +
                               " vs " + std::to_string(again.item()) + ")");
    backward(root);

    for (auto& p : params) {
        GradCheckEntry entry;
        entry.name = p.name;
        const auto analytic = p.tensor.grad();
        auto values = p.tensor.mutable_data();
        const std::size_t n = values.size();
        const std::size_t stride =
            options.max_elements == 0 || n <= options.max_elements ? 1 : n / options.max_elements;
        for (std::size_t i = 0; i < n; i += stride) {
            const double saved = values[i];
            values[i] = saved + options.step;
            const double plus = build().item();
            values[i] = saved - options.step;
            const double minus = build().item();
            values[i] = saved;
            const double numeric = (plus - minus) / (2.0 * options.step);
            const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), options.floor});
            const double rel = std::abs(analytic[i] - numeric) / denom;
            if (rel > entry.max_rel_error) {
                entry.max_rel_error = rel;
                entry.worst_index = i;
            }
        }
        entry.passed = entry.max_rel_error < options.tolerance;
        report.entries.push_back(entry);
        p.tensor.zero_grad();
    }
    return report;
}

}  // namespace pnoma
