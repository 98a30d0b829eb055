// Command-line driver: simulate, drive, sweep, conformance.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "difftester/bridge.hpp"
#include "difftester/config_io.hpp"
#include "difftester/conformance.hpp"
#include "difftester/errors.hpp"
#include "difftester/metrics.hpp"
#include "difftester/parser.hpp"
#include "difftester/scheduler.hpp"
#include "difftester/sim_backend.hpp"

namespace fs = std::filesystem;
using namespace difftester;

namespace {

enum Exit { kOk = 0, kFailed = 1, kUsage = 2, kError = 3 };

struct Overrides {
    std::string config_path;
    std::optional<std::size_t> length;
    std::optional<int> max_steps;
    std::optional<std::size_t> k;
    std::optional<double> tau;
    std::optional<int> step_size;
    std::optional<std::string> schedule;
    std::optional<std::string> literal_types;
    std::optional<std::uint64_t> seed;
    bool no_accel = false;
    bool no_pad = false;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "Flat JSON config file; flags override its values");
        cmd->add_option("-L,--length", length, "Sequence length L");
        cmd->add_option("-T,--max-steps", max_steps, "Step budget T");
        cmd->add_option("-k,--retain", k, "Baseline tokens retained per step");
        cmd->add_option("--tau", tau, "Confidence threshold for pattern retention");
        cmd->add_option("--step-size", step_size, "Steps between grouping passes");
        cmd->add_option("--schedule", schedule, "fixed or linear");
        cmd->add_option("--literal-types", literal_types, "Comma-separated node types excluded from merging");
        cmd->add_option("--seed", seed, "Seed for simulated confidences");
        cmd->add_flag("--no-accel", no_accel, "Disable pattern acceleration");
        cmd->add_flag("--no-pad", no_pad, "Disable pad fast-forward");
    }

    SchedulerConfig resolve() const {
        SchedulerConfig c;
        if (!config_path.empty()) c = load_config(config_path);
        nlohmann::json j = nlohmann::json::object();
        if (length) j["length"] = *length;
        if (max_steps) j["max_steps"] = *max_steps;
        if (k) j["retain_per_step"] = *k;
        if (tau) j["tau"] = *tau;
        if (step_size) j["step_size"] = *step_size;
        if (schedule) j["schedule"] = *schedule;
        if (literal_types) {
            std::vector<std::string> types;
            std::stringstream ss(*literal_types);
            for (std::string t; std::getline(ss, t, ',');)
                if (!t.empty()) types.push_back(t);
            j["literal_types"] = types;
        }
        if (seed) j["seed"] = *seed;
        if (no_accel) j["acceleration"] = false;
        if (no_pad) j["pad_fastforward"] = false;
        return config_from_json(j, c);
    }

    bool seed_given() const {
        if (seed) return true;
        if (config_path.empty()) return false;
        std::ifstream in(config_path);
        return nlohmann::json::parse(in, nullptr, false).contains("seed");
    }
};

std::vector<std::string> split_words(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

std::unique_ptr<LineTransport> open_transport(const std::string& server_cmd, const std::string& connect) {
    if (!server_cmd.empty() == !connect.empty()) throw UsageError("give exactly one of --server-cmd or --connect");
    if (!server_cmd.empty()) return std::make_unique<ChildProcessTransport>(split_words(server_cmd));
    const auto colon = connect.rfind(':');
    if (colon == std::string::npos) throw UsageError("--connect expects host:port");
    return std::make_unique<TcpTransport>(connect.substr(0, colon), std::stoi(connect.substr(colon + 1)));
}

// Binds the trace to the resolved config: the trace fixes L, the config seed
// (when given) replaces the trace seed, and the report echoes the result.
Trace bind_trace(Trace trace, SchedulerConfig& config, const Overrides& o, std::size_t n) {
    if (o.length && *o.length != trace.length())
        throw ConfigError("-L " + std::to_string(*o.length) + " does not match trace length " +
                          std::to_string(trace.length()));
    config.length = trace.length();
    if (o.seed_given()) trace.seed = config.seed;
    else config.seed = trace.seed;
    if (n > trace.targets.size())
        throw UsageError("trace '" + trace.name + "' has only " + std::to_string(trace.targets.size()) + " targets");
    return trace.with_instances(n);
}

RunReport simulate_once(const Trace& trace, const SchedulerConfig& config, std::size_t n) {
    const auto parser = make_parser(config.language_id);
    SimBackend backend(trace);
    BatchState batch = new_batch({}, n, config);
    return Scheduler(config, *parser).run(batch, backend);
}

void write_run(const fs::path& dir, const std::string& stem, const RunReport& report, const SchedulerConfig& config) {
    write_text(dir / (stem + ".json"), run_report_to_json(report, config).dump(2) + "\n");
    write_text(dir / (stem + "_steps.csv"), run_report_csv(report));
}

int cmd_simulate(const std::string& trace_path, std::size_t n, const Overrides& o, const fs::path& out) {
    SchedulerConfig accel = o.resolve();
    const Trace trace = bind_trace(load_trace(trace_path), accel, o, n);
    SchedulerConfig base = accel;
    base.acceleration = false;
    base.pad_fastforward = false;

    const RunReport b = simulate_once(trace, base, n);
    const RunReport a = simulate_once(trace, accel, n);
    fs::create_directories(out);
    write_run(out, "baseline", b, base);
    write_run(out, "accelerated", a, accel);

    nlohmann::ordered_json diff;
    diff["trace"] = trace.name;
    diff["instances"] = n;
    diff["baseline_steps"] = b.steps_used;
    diff["accelerated_steps"] = a.steps_used;
    diff["speedup"] = a.steps_used > 0 ? static_cast<double>(b.steps_used) / a.steps_used : 0.0;
    diff["pattern_retained_total"] = a.pattern_retained_total();
    diff["pad_fastforwarded_total"] = a.pad_fastforwarded_total();
    diff["identical_texts"] = a.final_texts == b.final_texts;
    write_text(out / "diff.json", diff.dump(2) + "\n");
    std::cout << trace.name << " n=" << n << ": baseline " << b.steps_used << " steps, accelerated " << a.steps_used
              << " steps, speedup " << diff["speedup"].get<double>() << "x\n";
    return kOk;
}

int cmd_drive(const std::string& server_cmd, const std::string& connect, std::size_t n, const Overrides& o,
              const fs::path& out) {
    SchedulerConfig config = o.resolve();
    BridgeConnection conn(open_transport(server_cmd, connect));
    const BackendInfo info = conn.init();
    config.pad_id = info.pad_id;
    config.eos_id = info.eos_id;
    config.validate();
    const auto parser = make_parser(config.language_id);
    BatchState batch = new_batch({}, n, config);
    RunReport report;
    try {
        report = Scheduler(config, *parser).run(batch, conn);
    } catch (const RunError& e) {
        fs::create_directories(out);
        write_run(out, "run_partial", e.partial(), config);
        throw;
    }
    fs::create_directories(out);
    write_run(out, "run", report, config);
    emit(summarize({report}), ReportFormat::Json, out / "summary.json");
    std::cout << "steps " << report.steps_used << ", tokens " << report.tokens_generated << "\n";
    return kOk;
}

int cmd_sweep(const std::string& axis, const std::vector<std::string>& values, const std::vector<std::string>& traces,
              std::size_t n, const Overrides& o, const fs::path& out) {
    if (axis != "tau" && axis != "step_size" && axis != "n")
        throw UsageError("unknown sweep axis '" + axis + "' (expected tau, step_size or n)");
    if (values.empty()) throw UsageError("sweep needs at least one value");
    if (traces.empty()) throw UsageError("sweep needs at least one trace");
    fs::create_directories(out);
    nlohmann::ordered_json table = nlohmann::ordered_json::array();
    for (const std::string& value : values) {
        std::vector<RunReport> reports;
        std::size_t pattern = 0, passes = 0;
        for (const std::string& path : traces) {
            SchedulerConfig config = o.resolve();
            std::size_t instances = n;
            nlohmann::json j = nlohmann::json::object();
            if (axis == "tau") j["tau"] = std::stod(value);
            if (axis == "step_size") j["step_size"] = std::stoi(value);
            if (axis == "n") instances = static_cast<std::size_t>(std::stoul(value));
            config = config_from_json(j, config);
            const Trace trace = bind_trace(load_trace(path), config, o, instances);
            reports.push_back(simulate_once(trace, config, instances));
            pattern += reports.back().pattern_retained_total();
            passes += reports.back().grouping_passes();
        }
        const Summary s = summarize(reports);
        const std::string stem = "summary_" + axis + "_" + value;
        emit(s, ReportFormat::Json, out / (stem + ".json"));
        emit(s, ReportFormat::Csv, out / (stem + ".csv"));
        nlohmann::ordered_json row;
        row["value"] = value;
        row["mean_steps"] = s.mean_steps;
        row["pattern_retained_total"] = pattern;
        row["grouping_passes"] = passes;
        table.push_back(row);
        std::cout << axis << "=" << value << ": mean steps " << s.mean_steps << ", pattern tokens " << pattern
                  << ", grouping passes " << passes << "\n";
    }
    nlohmann::ordered_json doc;
    doc["axis"] = axis;
    doc["resolved_config"] = config_to_json(o.resolve());
    doc["values"] = table;
    write_text(out / "sweep.json", doc.dump(2) + "\n");
    return kOk;
}

int cmd_conformance(const std::string& server_cmd, const std::string& connect, const std::string& replay,
                    const std::string& record, const ConformanceOptions& options) {
    std::unique_ptr<LineTransport> transport;
    std::ifstream replay_in;
    if (!replay.empty()) {
        if (!server_cmd.empty() || !connect.empty()) throw UsageError("--replay excludes --server-cmd/--connect");
        replay_in.open(replay);
        if (!replay_in) throw IoError("cannot open recording " + replay);
        transport = std::make_unique<ReplayTransport>(replay_in);
    } else {
        transport = open_transport(server_cmd, connect);
    }
    std::ofstream record_out;
    if (!record.empty()) {
        record_out.open(record, std::ios::trunc);
        if (!record_out) throw IoError("cannot open " + record + " for writing");
        transport = std::make_unique<RecordingTransport>(std::move(transport), record_out);
    }
    BridgeConnection conn(std::move(transport));
    const auto checks = run_conformance(conn, options);
    for (const ConformanceCheck& c : checks)
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << (c.detail.empty() ? "" : ": " + c.detail) << "\n";
    return all_passed(checks) ? kOk : kFailed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"AST-pattern accelerated diffusion decoding for unit tests"};
    app.require_subcommand(1);

    std::string trace_path, server_cmd, connect, replay, record, axis, out = "reports";
    std::size_t n = 3;
    std::string values_raw;
    std::vector<std::string> traces;
    Overrides sim_o, drive_o, sweep_o;
    ConformanceOptions conf;

    auto* sim = app.add_subcommand("simulate", "Run baseline and accelerated decoding on a trace");
    sim->add_option("trace", trace_path, "Trace file")->required();
    sim->add_option("-n,--instances", n, "Batch size");
    sim->add_option("--out", out, "Report directory");
    sim_o.attach(sim);

    auto* drive = app.add_subcommand("drive", "Decode with an external model server");
    drive->add_option("--server-cmd", server_cmd, "Command line of a stdio server");
    drive->add_option("--connect", connect, "host:port of a TCP server");
    drive->add_option("-n,--instances", n, "Batch size");
    drive->add_option("--out", out, "Report directory");
    drive_o.attach(drive);

    auto* sweep = app.add_subcommand("sweep", "Ablation sweep over one axis");
    sweep->add_option("--axis", axis, "tau, step_size or n")->required();
    sweep->add_option("--values", values_raw, "Comma-separated values of the axis")->required();
    sweep->add_option("traces", traces, "Trace files")->required();
    sweep->add_option("-n,--instances", n, "Batch size (when the axis is not n)");
    sweep->add_option("--out", out, "Report directory");
    sweep_o.attach(sweep);

    auto* conformance = app.add_subcommand("conformance", "Check a server against the wire protocol");
    conformance->add_option("--server-cmd", server_cmd, "Command line of a stdio server");
    conformance->add_option("--connect", connect, "host:port of a TCP server");
    conformance->add_option("--replay", replay, "Replay a recorded session instead of connecting");
    conformance->add_option("--record", record, "Record the session as JSONL");
    conformance->add_option("-n,--instances", conf.instances, "Instances in the probe batch");
    conformance->add_option("-L,--length", conf.length, "Length of the probe batch");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*sim) return cmd_simulate(trace_path, n, sim_o, out);
        if (*drive) return cmd_drive(server_cmd, connect, n, drive_o, out);
        if (*sweep) {
            std::vector<std::string> values;
            std::stringstream ss(values_raw);
            for (std::string v; std::getline(ss, v, ',');)
                if (!v.empty()) values.push_back(v);
            return cmd_sweep(axis, values, traces, n, sweep_o, out);
        }
        if (*conformance) return cmd_conformance(server_cmd, connect, replay, record, conf);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kUsage;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kError;
    }
    return kUsage;
}
