#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "difftester/core_model.hpp"
#include "difftester/reports.hpp"

namespace difftester {

struct Summary {
    std::size_t runs = 0;
    double mean_steps = 0.0;
    double median_steps = 0.0;
    std::map<int, std::size_t> steps_histogram;  // steps_used -> run count
    /// Index t: mean pattern-licensed tokens at step t over the runs that reached it.
    std::vector<double> mean_extra_tokens;
    std::vector<std::size_t> runs_reaching_step;
    std::size_t total_tokens = 0;
    /// Tokens per second over real-backend runs; empty when every run was simulated.
    std::optional<double> throughput;
    double mean_flops = 0.0;
    double syntax_validity_rate = 0.0;  // over all instances of all runs
    double completion_rate = 0.0;

    friend bool operator==(const Summary&, const Summary&) = default;
};

/// Throws UsageError on an empty collection.
Summary summarize(const std::vector<RunReport>& reports);

enum class ReportFormat { Json, Csv };
ReportFormat report_format_from_string(const std::string& name);

nlohmann::ordered_json summary_to_json(const Summary& summary);
Summary summary_from_json(const nlohmann::json& doc);

/// Per-step table: step, runs_reaching, mean_extra_tokens.
std::string summary_csv(const Summary& summary);

/// JSON writes the summary object; CSV writes the per-step table.
/// I/O failures raise IoError naming the path.
void emit(const Summary& summary, ReportFormat format, const std::filesystem::path& path);

/// Full run report with the resolved config embedded.
nlohmann::ordered_json run_report_to_json(const RunReport& report, const SchedulerConfig& config);
/// Per-step table: step, accelerated, repetitive_groups, baseline, pattern, pad, masked_remaining.
std::string run_report_csv(const RunReport& report);

void write_text(const std::filesystem::path& path, std::string_view contents);

}  // namespace difftester
