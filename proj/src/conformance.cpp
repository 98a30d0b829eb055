#include "difftester/conformance.hpp"

#include <algorithm>
#include <functional>

#include <json.hpp>

#include "difftester/errors.hpp"
#include "difftester/sim_backend.hpp"

namespace difftester {

namespace {

ConformanceCheck check(const std::string& name, const std::function<std::string()>& body) {
    ConformanceCheck c{name, false, {}};
    try {
        c.detail = body();
        c.passed = c.detail.empty();
    } catch (const std::exception& e) {
        c.detail = e.what();
    }
    return c;
}

// Instance 0 fully masked, the last fully committed, the rest half committed.
BatchState probe_batch(const BackendInfo& info, const ConformanceOptions& options) {
    BatchState batch;
    const std::size_t n = std::max<std::size_t>(options.instances, 2);
    for (std::size_t i = 0; i < n; ++i) {
        InstanceState inst(options.length);
        for (std::size_t pos = 0; pos < options.length; ++pos) {
            const bool commit = i == n - 1 || (i > 0 && pos % 2 == 1);
            if (!commit) continue;
            const auto id = static_cast<std::uint32_t>(hashed_unit(options.seed, i, pos, 0, 11) * info.vocab_size);
            inst.commit(pos, TokenId(std::min<std::uint32_t>(id, info.vocab_size - 1)), 0);
        }
        batch.instances.push_back(std::move(inst));
    }
    return batch;
}

bool same(const std::vector<Proposal>& a, const std::vector<Proposal>& b, const BatchState& batch) {
    for (std::size_t i = 0; i < batch.size(); ++i)
        for (std::size_t pos = 0; pos < batch.length(); ++pos) {
            if (batch.instances[i].slots[pos].is_committed()) continue;
            if (a[i].candidates[pos] != b[i].candidates[pos] || a[i].confidences[pos] != b[i].confidences[pos])
                return false;
        }
    return true;
}

}  // namespace

std::vector<ConformanceCheck> run_conformance(BridgeConnection& connection, const ConformanceOptions& options) {
    std::vector<ConformanceCheck> out;
    BackendInfo info;
    out.push_back(check("init", [&]() -> std::string {
        info = connection.init();
        return {};
    }));
    if (!out.back().passed) return out;

    const BatchState batch = probe_batch(info, options);
    std::vector<Proposal> first;
    out.push_back(check("step_shape", [&]() -> std::string {
        first = connection.request_step(batch);
        return {};
    }));
    out.push_back(check("step_deterministic", [&]() -> std::string {
        if (first.empty()) return "no first reply to compare";
        const auto second = connection.request_step(batch);
        return same(first, second, batch) ? "" : "identical step requests produced different proposals";
    }));
    out.push_back(check("detok_empty", [&]() -> std::string {
        const DetokenizedText d = connection.request_detok({});
        return d.text.empty() && d.offsets.empty() ? "" : "detok of [] is not (\"\", [])";
    }));
    out.push_back(check("detok_offsets", [&]() -> std::string {
        if (first.empty()) return "no candidates to detokenize";
        const TokenSequence ids = first.front().candidates;
        const DetokenizedText whole = connection.request_detok(ids);
        std::string joined;
        for (const CharSpan& s : whole.offsets) joined += whole.text.substr(s.start, s.size());
        return joined == whole.text ? "" : "spans do not concatenate to the text";
    }));
    out.push_back(check("error_record", [&]() -> std::string {
        nlohmann::json bad = {{"type", "detok"}, {"ids", {info.vocab_size}}};
        const nlohmann::json reply = nlohmann::json::parse(connection.exchange(bad.dump()));
        if (reply.value("type", "") != "error") return "unknown id was not answered with an error record";
        const DetokenizedText after = connection.request_detok({});
        return after.text.empty() ? "" : "session unusable after an error record";
    }));
    return out;
}

bool all_passed(const std::vector<ConformanceCheck>& checks) {
    return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const ConformanceCheck& c) { return c.passed; });
}

}  // namespace difftester
