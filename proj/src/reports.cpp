#include "difftester/reports.hpp"

#include <algorithm>
#include <numeric>

namespace difftester {

namespace {

std::size_t sum(const std::vector<std::size_t>& v) { return std::accumulate(v.begin(), v.end(), std::size_t{0}); }

}  // namespace

std::size_t StepReport::total_baseline() const { return sum(baseline_retained); }
std::size_t StepReport::total_pattern() const { return sum(pattern_retained); }
std::size_t StepReport::total_pad() const { return sum(pad_fastforwarded); }
std::size_t StepReport::total_masked() const { return sum(masked_remaining); }

std::size_t RunReport::grouping_passes() const {
    return static_cast<std::size_t>(
        std::count_if(per_step.begin(), per_step.end(), [](const StepReport& s) { return s.accelerated; }));
}

std::size_t RunReport::pattern_retained_total() const {
    std::size_t n = 0;
    for (const auto& s : per_step) n += s.total_pattern();
    return n;
}

std::size_t RunReport::pad_fastforwarded_total() const {
    std::size_t n = 0;
    for (const auto& s : per_step) n += s.total_pad();
    return n;
}

}  // namespace difftester
