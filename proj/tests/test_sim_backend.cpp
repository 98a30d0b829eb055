#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "difftester/errors.hpp"
#include "difftester/sim_backend.hpp"

using namespace difftester;

namespace {

Trace trace(ConfidenceModel model, double p_correct = 1.0) {
    TraceOptions o;
    o.length = 24;
    o.seed = 17;
    o.confidence_model = model;
    o.p_correct = p_correct;
    return make_trace({"assert f(1) == 2\n", "assert f(3) == 4\n"}, o);
}

BatchState fresh(std::size_t n, std::size_t L) {
    BatchState b;
    for (std::size_t i = 0; i < n; ++i) b.instances.emplace_back(L);
    return b;
}

}  // namespace

TEST_SUITE("sim_backend") {

TEST_CASE("tokenize_words keeps whitespace with the following piece") {
    CHECK(tokenize_words("assert True") == std::vector<std::string>{"assert", " True"});
    CHECK(tokenize_words("x = f(1)\n  y") == std::vector<std::string>{"x", " =", " f", "(", "1", ")", "\n", "  y"});
    std::string joined;
    for (const auto& p : tokenize_words("a  \"s t\" 2.5e3 ->z  ")) joined += p;
    CHECK(joined == "a  \"s t\" 2.5e3 ->z  ");
}

TEST_CASE("make_trace pads to length and reserves specials") {
    const Trace t = trace(ConfidenceModel::SeededUniform);
    CHECK(t.length() == 24);
    CHECK(t.vocab.text(Trace::kPad).empty());
    CHECK(t.targets[0].back() == Trace::kPad);
    CHECK(t.target_texts()[1] == "assert f(3) == 4\n");
    TraceOptions o;
    o.length = 2;
    CHECK_THROWS_AS(make_trace({"a b c"}, o), ConfigError);
}

TEST_CASE("oracle mode proposes targets") {
    const Trace t = trace(ConfidenceModel::SeededUniform);
    SimBackend b(t);
    BatchState batch = fresh(2, 24);
    for (int step : {0, 3, 9}) {
        const auto p = b.propose_at(batch, step, 17);
        for (std::size_t i = 0; i < 2; ++i) {
            CHECK(p[i].candidates == t.targets[i]);
            for (double c : p[i].confidences) CHECK((c >= 0.0 && c <= 1.0));
        }
    }
}

TEST_CASE("determinism") {
    for (auto model : {ConfidenceModel::SeededUniform, ConfidenceModel::LocalityBiased}) {
        SimBackend b(trace(model, 0.7));
        BatchState batch = fresh(2, 24);
        batch.instances[0].commit(3, TokenId(2), 0);
        const auto x = b.propose_at(batch, 4, 99);
        const auto y = b.propose_at(batch, 4, 99);
        for (std::size_t i = 0; i < 2; ++i) {
            CHECK(x[i].candidates == y[i].candidates);
            CHECK(x[i].confidences == y[i].confidences);
        }
    }
}

TEST_CASE("locality bonus never lowers confidence") {
    SimBackend b(trace(ConfidenceModel::LocalityBiased));
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        BatchState batch = fresh(2, 24);
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t p = 0; p < 24; ++p)
                if (rng() % 3 == 0) batch.instances[i].commit(p, TokenId(2), 0);
        const auto props = b.propose_at(batch, 0, 17);
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t p = 0; p < 24; ++p)
                if (batch.instances[i].slots[p].is_masked())
                    CHECK(props[i].confidences[p] >= b.base_confidence(i, p, 17));
    }
}

TEST_CASE("p_correct below one yields some wrong candidates, never specials") {
    const Trace t = trace(ConfidenceModel::SeededUniform, 0.3);
    SimBackend b(t);
    const auto p = b.propose_at(fresh(2, 24), 1, 17);
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t pos = 0; pos < 24; ++pos)
            if (p[i].candidates[pos] != t.targets[i][pos]) {
                ++wrong;
                CHECK(p[i].candidates[pos].value >= 2);
            }
    CHECK(wrong > 0);
}

TEST_CASE("file replay") {
    Trace t = trace(ConfidenceModel::FileReplay);
    t.targets.resize(1);
    for (std::size_t p = 0; p < 24; ++p) t.replay.push_back({0, 0, p, TokenId(2), 0.25});
    SimBackend b(t);
    const auto p = b.propose_at(fresh(1, 24), 0, 0);
    CHECK(p[0].confidences[5] == 0.25);
    CHECK(p[0].candidates[5] == TokenId(2));
    CHECK_THROWS_AS(b.propose_at(fresh(1, 24), 1, 0), BackendError);

    std::stringstream ss;
    write_replay(ss, t.replay);
    CHECK(parse_replay(ss).size() == 24);
    std::stringstream bad("{\"step\": 0}\n");
    CHECK_THROWS_AS(parse_replay(bad), BackendError);
}

TEST_CASE("length mismatch is a backend error") {
    SimBackend b(trace(ConfidenceModel::SeededUniform));
    CHECK_THROWS_AS(b.propose_at(fresh(1, 10), 0, 0), BackendError);
}

TEST_CASE("trace documents round-trip and report line numbers") {
    const Trace t = trace(ConfidenceModel::LocalityBiased);
    const Trace back = parse_trace(trace_to_json(t));
    CHECK(back.targets == t.targets);
    CHECK(back.vocab.texts() == t.vocab.texts());
    CHECK(back.confidence_model == ConfidenceModel::LocalityBiased);

    try {
        parse_trace("{\n  \"length\": 8,\n  \"targets\": [\"x\",\n}\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 4);
    }
    CHECK_THROWS_AS(parse_trace("{\"targets\": []}"), ParseError);
}

TEST_CASE("bundled traces load and parse") {
    const std::filesystem::path dir = DIFFTESTER_DATA_DIR "/traces";
    std::size_t count = 0;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() != ".json") continue;
        const Trace t = load_trace(entry.path());
        CHECK(t.targets.size() >= 7);
        CHECK(t.length() == 128);
        ++count;
    }
    CHECK(count >= 3);
}

}
