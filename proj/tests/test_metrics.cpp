#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "difftester/config_io.hpp"
#include "difftester/errors.hpp"
#include "difftester/metrics.hpp"

using namespace difftester;

namespace {

RunReport run_of(int steps, bool simulated = true) {
    RunReport r;
    r.steps_used = steps;
    r.completed = true;
    r.simulated = simulated;
    for (int t = 0; t < steps; ++t) {
        StepReport s;
        s.step = t;
        s.baseline_retained = {2};
        s.pattern_retained = {t == 0 ? std::size_t{4} : std::size_t{0}};
        s.pad_fastforwarded = {0};
        s.masked_remaining = {0};
        r.per_step.push_back(s);
    }
    r.tokens_generated = 100;
    r.wall_time = 2.0;
    r.flops_estimate = steps * 1.0;
    r.final_texts = {"x = 1"};
    r.syntax_valid = {true};
    return r;
}

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("difftester_test_" + name);
}

}  // namespace

TEST_SUITE("metrics_report") {

TEST_CASE("single 64-step run puts all histogram mass at 64") {
    const Summary s = summarize({run_of(64)});
    CHECK(s.steps_histogram == std::map<int, std::size_t>{{64, 1}});
    CHECK(s.mean_steps == 64.0);
    CHECK_FALSE(s.throughput.has_value());
}

TEST_CASE("mean and median") {
    const Summary s = summarize({run_of(30), run_of(40)});
    CHECK(s.mean_steps == 35.0);
    CHECK(s.median_steps == 35.0);
    CHECK(s.runs == 2);
    CHECK(s.mean_flops == 35.0);
    CHECK(summarize({run_of(10), run_of(30), run_of(20)}).median_steps == 20.0);
}

TEST_CASE("validity, completion and extra tokens") {
    RunReport bad = run_of(10);
    bad.syntax_valid = {false};
    bad.completed = false;
    const Summary s = summarize({run_of(20), bad});
    CHECK(s.syntax_validity_rate == 0.5);
    CHECK(s.completion_rate == 0.5);
    CHECK(summarize({run_of(3), run_of(4)}).syntax_validity_rate == 1.0);
    REQUIRE(s.mean_extra_tokens.size() == 20);
    CHECK(s.mean_extra_tokens[0] == 4.0);
    CHECK(s.runs_reaching_step[15] == 1);
}

TEST_CASE("throughput only over real-backend runs") {
    const Summary s = summarize({run_of(10, false), run_of(10, true)});
    REQUIRE(s.throughput.has_value());
    CHECK(*s.throughput == doctest::Approx(50.0));
}

TEST_CASE("empty input is a usage error") { CHECK_THROWS_AS(summarize({}), UsageError); }

TEST_CASE("json emit round-trips") {
    const Summary s = summarize({run_of(30, false), run_of(41), run_of(7)});
    const auto path = temp_path("summary.json");
    emit(s, ReportFormat::Json, path);
    std::ifstream in(path);
    CHECK(summary_from_json(nlohmann::json::parse(in)) == s);
    std::filesystem::remove(path);
}

TEST_CASE("csv emit has a header and one row per step index") {
    const Summary s = summarize({run_of(12), run_of(5)});
    const auto path = temp_path("summary.csv");
    emit(s, ReportFormat::Csv, path);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "step,runs_reaching,mean_extra_tokens");
    std::size_t rows = 0;
    for (std::string line; std::getline(in, line);) ++rows;
    CHECK(rows == 12);
    std::filesystem::remove(path);
}

TEST_CASE("unwritable path names the path") {
    const std::string bad = "/nonexistent-dir/summary.json";
    try {
        emit(summarize({run_of(1)}), ReportFormat::Json, bad);
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find(bad) != std::string::npos);
    }
}

TEST_CASE("run report embeds the resolved config") {
    SchedulerConfig c;
    c.tau = 0.05;
    const auto j = run_report_to_json(run_of(3), c);
    CHECK(j["config"]["tau"] == 0.05);
    CHECK(j["per_step"].size() == 3);
    const std::string csv = run_report_csv(run_of(3));
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}

TEST_CASE("config round trip and validation") {
    SchedulerConfig c;
    c.tau = 0.1;
    c.step_size = 4;
    c.schedule = StepSchedule::Linear;
    c.literal_types = {"integer"};
    c.seed = 77;
    c.acceleration = false;
    const SchedulerConfig back = config_from_json(config_to_json(c));
    CHECK(config_to_json(back) == config_to_json(c));

    CHECK_THROWS_AS(parse_config(R"({"tua": 0.1})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"tau": 2.0})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"tau": "high"})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"retain_per_step": 0})"), ConfigError);
    CHECK_THROWS_AS(parse_config("{\n\"tau\": \n}"), ParseError);
    CHECK(parse_config(R"({"tau": 0.5})", c).step_size == 4);
}

}
