#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace difftester {

/// Per-step telemetry; every vector has one entry per instance.
struct StepReport {
    int step = 0;
    bool accelerated = false;  // a grouping pass ran this step
    std::size_t repetitive_groups = 0;
    std::vector<std::size_t> baseline_retained;
    std::vector<std::size_t> pattern_retained;
    std::vector<std::size_t> pad_fastforwarded;
    std::vector<std::size_t> masked_remaining;

    std::size_t total_baseline() const;
    std::size_t total_pattern() const;
    std::size_t total_pad() const;
    std::size_t total_masked() const;

    friend bool operator==(const StepReport&, const StepReport&) = default;
};

struct RunReport {
    int steps_used = 0;
    bool completed = false;
    bool simulated = true;
    std::vector<StepReport> per_step;
    double wall_time = 0.0;  // seconds
    double parse_time = 0.0;  // seconds spent detokenizing, parsing and matching
    std::size_t tokens_generated = 0;
    double flops_estimate = 0.0;
    std::vector<std::string> final_texts;
    std::vector<bool> syntax_valid;

    std::size_t grouping_passes() const;
    std::size_t pattern_retained_total() const;
    std::size_t pad_fastforwarded_total() const;
};

}  // namespace difftester
