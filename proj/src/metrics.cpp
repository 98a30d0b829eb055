#include "difftester/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "difftester/config_io.hpp"
#include "difftester/errors.hpp"

namespace difftester {

using nlohmann::json;
using ordered = nlohmann::ordered_json;

Summary summarize(const std::vector<RunReport>& reports) {
    if (reports.empty()) throw UsageError("cannot summarize an empty set of runs");
    Summary s;
    s.runs = reports.size();
    std::vector<int> steps;
    std::vector<double> extra_sum;
    double real_tokens = 0.0, real_time = 0.0, flops = 0.0;
    bool any_real = false;
    std::size_t instances = 0, valid = 0, completed = 0;
    for (const RunReport& r : reports) {
        steps.push_back(r.steps_used);
        ++s.steps_histogram[r.steps_used];
        for (std::size_t t = 0; t < r.per_step.size(); ++t) {
            if (extra_sum.size() <= t) {
                extra_sum.resize(t + 1, 0.0);
                s.runs_reaching_step.resize(t + 1, 0);
            }
            extra_sum[t] += static_cast<double>(r.per_step[t].total_pattern());
            ++s.runs_reaching_step[t];
        }
        s.total_tokens += r.tokens_generated;
        if (!r.simulated) {
            any_real = true;
            real_tokens += static_cast<double>(r.tokens_generated);
            real_time += r.wall_time;
        }
        flops += r.flops_estimate;
        instances += r.syntax_valid.size();
        valid += static_cast<std::size_t>(std::count(r.syntax_valid.begin(), r.syntax_valid.end(), true));
        if (r.completed) ++completed;
    }
    const double n = static_cast<double>(reports.size());
    double total_steps = 0.0;
    for (int v : steps) total_steps += v;
    s.mean_steps = total_steps / n;
    std::sort(steps.begin(), steps.end());
    const std::size_t mid = steps.size() / 2;
    s.median_steps = steps.size() % 2 ? steps[mid] : (steps[mid - 1] + steps[mid]) / 2.0;
    for (std::size_t t = 0; t < extra_sum.size(); ++t)
        s.mean_extra_tokens.push_back(extra_sum[t] / static_cast<double>(s.runs_reaching_step[t]));
    if (any_real && real_time > 0.0) s.throughput = real_tokens / real_time;
    s.mean_flops = flops / n;
    s.syntax_validity_rate = instances ? static_cast<double>(valid) / static_cast<double>(instances) : 0.0;
    s.completion_rate = static_cast<double>(completed) / n;
    return s;
}

ReportFormat report_format_from_string(const std::string& name) {
    if (name == "json") return ReportFormat::Json;
    if (name == "csv") return ReportFormat::Csv;
    throw UsageError("unknown report format '" + name + "' (expected json or csv)");
}

ordered summary_to_json(const Summary& s) {
    ordered j;
    j["runs"] = s.runs;
    j["mean_steps"] = s.mean_steps;
    j["median_steps"] = s.median_steps;
    ordered hist = ordered::object();
    for (const auto& [steps, count] : s.steps_histogram) hist[std::to_string(steps)] = count;
    j["steps_histogram"] = hist;
    j["mean_extra_tokens"] = s.mean_extra_tokens;
    j["runs_reaching_step"] = s.runs_reaching_step;
    j["total_tokens"] = s.total_tokens;
    j["throughput"] = s.throughput ? ordered(*s.throughput) : ordered(nullptr);
    j["mean_flops"] = s.mean_flops;
    j["syntax_validity_rate"] = s.syntax_validity_rate;
    j["completion_rate"] = s.completion_rate;
    return j;
}

Summary summary_from_json(const json& j) {
    try {
        Summary s;
        s.runs = j.at("runs").get<std::size_t>();
        s.mean_steps = j.at("mean_steps").get<double>();
        s.median_steps = j.at("median_steps").get<double>();
        for (const auto& [steps, count] : j.at("steps_histogram").items())
            s.steps_histogram[std::stoi(steps)] = count.get<std::size_t>();
        s.mean_extra_tokens = j.at("mean_extra_tokens").get<std::vector<double>>();
        s.runs_reaching_step = j.at("runs_reaching_step").get<std::vector<std::size_t>>();
        s.total_tokens = j.at("total_tokens").get<std::size_t>();
        if (!j.at("throughput").is_null()) s.throughput = j.at("throughput").get<double>();
        s.mean_flops = j.at("mean_flops").get<double>();
        s.syntax_validity_rate = j.at("syntax_validity_rate").get<double>();
        s.completion_rate = j.at("completion_rate").get<double>();
        return s;
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed summary: ") + e.what(), 1);
    }
}

std::string summary_csv(const Summary& s) {
    std::ostringstream out;
    out.precision(17);
    out << "step,runs_reaching,mean_extra_tokens\n";
    for (std::size_t t = 0; t < s.mean_extra_tokens.size(); ++t)
        out << t << ',' << s.runs_reaching_step[t] << ',' << s.mean_extra_tokens[t] << '\n';
    return out.str();
}

void write_text(const std::filesystem::path& path, std::string_view contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << contents;
    out.flush();
    if (!out) throw IoError("write failed for " + path.string());
}

void emit(const Summary& summary, ReportFormat format, const std::filesystem::path& path) {
    if (format == ReportFormat::Json) write_text(path, summary_to_json(summary).dump(2) + "\n");
    else write_text(path, summary_csv(summary));
}

ordered run_report_to_json(const RunReport& r, const SchedulerConfig& config) {
    ordered j;
    j["config"] = config_to_json(config);
    j["steps_used"] = r.steps_used;
    j["completed"] = r.completed;
    j["simulated"] = r.simulated;
    j["wall_time"] = r.wall_time;
    j["parse_time"] = r.parse_time;
    j["tokens_generated"] = r.tokens_generated;
    j["flops_estimate"] = r.flops_estimate;
    j["grouping_passes"] = r.grouping_passes();
    j["pattern_retained_total"] = r.pattern_retained_total();
    j["pad_fastforwarded_total"] = r.pad_fastforwarded_total();
    j["final_texts"] = r.final_texts;
    j["syntax_valid"] = r.syntax_valid;
    ordered steps = ordered::array();
    for (const StepReport& s : r.per_step) {
        ordered e;
        e["step"] = s.step;
        e["accelerated"] = s.accelerated;
        e["repetitive_groups"] = s.repetitive_groups;
        e["baseline_retained"] = s.baseline_retained;
        e["pattern_retained"] = s.pattern_retained;
        e["pad_fastforwarded"] = s.pad_fastforwarded;
        e["masked_remaining"] = s.masked_remaining;
        steps.push_back(e);
    }
    j["per_step"] = steps;
    return j;
}

std::string run_report_csv(const RunReport& r) {
    std::ostringstream out;
    out << "step,accelerated,repetitive_groups,baseline,pattern,pad,masked_remaining\n";
    for (const StepReport& s : r.per_step)
        out << s.step << ',' << (s.accelerated ? 1 : 0) << ',' << s.repetitive_groups << ',' << s.total_baseline()
            << ',' << s.total_pattern() << ',' << s.total_pad() << ',' << s.total_masked() << '\n';
    return out.str();
}

}  // namespace difftester
