#include "difftester/scheduler.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>

namespace difftester {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

void validate_proposals(const BatchState& batch, const std::vector<Proposal>& proposals, std::size_t vocab_size) {
    if (proposals.size() != batch.size())
        throw BackendError("backend returned " + std::to_string(proposals.size()) + " proposals for " +
                           std::to_string(batch.size()) + " instances");
    for (std::size_t i = 0; i < proposals.size(); ++i) {
        const Proposal& p = proposals[i];
        const InstanceState& inst = batch.instances[i];
        if (p.candidates.size() != inst.length() || p.confidences.size() != inst.length())
            throw BackendError("proposal for instance " + std::to_string(i) + " has wrong length");
        for (std::size_t pos = 0; pos < inst.length(); ++pos) {
            if (inst.slots[pos].is_committed()) continue;
            if (vocab_size != 0 && p.candidates[pos].value >= vocab_size)
                throw BackendError("candidate id " + std::to_string(p.candidates[pos].value) + " outside vocabulary");
            const double c = p.confidences[pos];
            if (!(c >= 0.0 && c <= 1.0))
                throw BackendError("confidence " + std::to_string(c) + " outside [0, 1] at instance " +
                                   std::to_string(i) + " position " + std::to_string(pos));
        }
    }
}

PositionSet baseline_remask(const InstanceState& instance, std::size_t k) {
    std::vector<std::size_t> masked;
    for (std::size_t pos = 0; pos < instance.length(); ++pos)
        if (instance.slots[pos].is_masked()) masked.push_back(pos);
    const std::size_t take = std::min(k, masked.size());
    std::partial_sort(masked.begin(), masked.begin() + static_cast<std::ptrdiff_t>(take), masked.end(),
                      [&](std::size_t a, std::size_t b) {
                          const double ca = instance.confidences[a];
                          const double cb = instance.confidences[b];
                          if (ca != cb) return ca > cb;
                          return a < b;
                      });
    return PositionSet(masked.begin(), masked.begin() + static_cast<std::ptrdiff_t>(take));
}

std::size_t PatternAnalysis::repetitive_groups() const {
    return static_cast<std::size_t>(
        std::count_if(groups.begin(), groups.end(), [](const PatternGroup& g) { return g.repetitive(); }));
}

PatternAnalysis analyze_patterns(const BatchState& batch, const Detokenizer& detokenize, const ParserBackend& parser,
                                 const std::set<std::string>& literal_types) {
    PatternAnalysis out;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const TokenSequence visible = batch.instances[i].visible_tokens();
        DetokenizedText det = detokenize(visible);
        if (det.offsets.size() != visible.size() || !offsets_consistent(det.offsets, det.text.size()))
            throw BackendError("detokenizer returned inconsistent offsets for instance " + std::to_string(i));
        for (LineRecord& line : split_lines(det.text, det.offsets, i)) {
            out.asts.push_back(parse_line(parser, line.text));
            out.lines.push_back(std::move(line));
        }
        out.offsets.push_back(std::move(det.offsets));
    }
    out.groups = group_lines(out.lines, out.asts, literal_types);
    return out;
}

std::vector<PositionSet> pattern_retain(const BatchState& batch, const PatternAnalysis& analysis,
                                        const std::vector<PositionSet>& baseline, const SchedulerConfig& config) {
    std::vector<PositionSet> extra(batch.size());
    for (const PatternGroup& group : analysis.groups) {
        if (!group.repetitive()) continue;
        for (const std::size_t member : group.members) {
            const LineRecord& line = analysis.lines[member];
            const InstanceState& inst = batch.instances[line.instance_index];
            const auto positions = match_token_positions(group, line, analysis.asts[member],
                                                         analysis.offsets[line.instance_index], config.literal_types);
            for (const std::size_t pos : positions) {
                if (inst.slots[pos].is_committed()) continue;
                if (!(inst.confidences[pos] > config.tau)) continue;
                if (baseline[line.instance_index].count(pos)) continue;
                extra[line.instance_index].insert(pos);
            }
        }
    }
    return extra;
}

PositionSet pad_fastforward(const InstanceState& instance, TokenId pad_id) {
    PositionSet out;
    std::size_t first = instance.length();
    for (std::size_t pos = 0; pos < instance.length(); ++pos) {
        const SlotState& s = instance.slots[pos];
        if (s.is_committed() && s.token() == pad_id) {
            first = pos;
            break;
        }
    }
    for (std::size_t pos = first + 1; pos < instance.length(); ++pos)
        if (instance.slots[pos].is_masked()) out.insert(pos);
    return out;
}

Scheduler::Scheduler(SchedulerConfig config, const ParserBackend& parser) : config_(std::move(config)), parser_(parser) {
    config_.validate();
}

StepReport Scheduler::decode_step(BatchState& batch, DecoderBackend& backend) const {
    double ignored = 0.0;
    return step_impl(batch, backend, ignored);
}

StepReport Scheduler::step_impl(BatchState& batch, DecoderBackend& backend, double& parse_seconds) const {
    if (batch.complete() || batch.step >= config_.max_steps) throw UsageError("decode_step on a terminated batch");
    const int step = batch.step;

    std::vector<Proposal> proposals = backend.propose(batch);
    validate_proposals(batch, proposals, backend.info().vocab_size);

    // Stage everything on a copy so a failure leaves the caller's batch intact.
    BatchState next = batch;
    for (std::size_t i = 0; i < next.size(); ++i) {
        next.instances[i].candidates = std::move(proposals[i].candidates);
        next.instances[i].confidences = std::move(proposals[i].confidences);
    }

    const std::size_t n = next.size();
    StepReport report;
    report.step = step;
    report.baseline_retained.assign(n, 0);
    report.pattern_retained.assign(n, 0);
    report.pad_fastforwarded.assign(n, 0);

    std::vector<PositionSet> baseline(n);
    for (std::size_t i = 0; i < n; ++i) baseline[i] = baseline_remask(next.instances[i], config_.retain_per_step);

    std::vector<PositionSet> extra(n);
    if (config_.acceleration && config_.accelerates_at(step)) {
        const auto start = Clock::now();
        const Detokenizer detok = [&backend](std::span<const TokenId> ids) { return backend.detokenize(ids); };
        const PatternAnalysis analysis = analyze_patterns(next, detok, parser_, config_.literal_types);
        extra = pattern_retain(next, analysis, baseline, config_);
        report.accelerated = true;
        report.repetitive_groups = analysis.repetitive_groups();
        parse_seconds += seconds_since(start);
    }

    for (std::size_t i = 0; i < n; ++i) {
        InstanceState& inst = next.instances[i];
        for (const std::size_t pos : baseline[i]) inst.commit(pos, inst.candidates[pos], step);
        for (const std::size_t pos : extra[i]) inst.commit(pos, inst.candidates[pos], step);
        report.baseline_retained[i] = baseline[i].size();
        report.pattern_retained[i] = extra[i].size();
        if (config_.pad_fastforward) {
            const PositionSet pads = pad_fastforward(inst, config_.pad_id);
            for (const std::size_t pos : pads) inst.commit(pos, config_.pad_id, step);
            report.pad_fastforwarded[i] = pads.size();
        }
        report.masked_remaining.push_back(inst.masked_count());
    }

    next.step = step + 1;
    batch = std::move(next);
    return report;
}

RunReport Scheduler::run(BatchState& batch, DecoderBackend& backend) const {
    RunReport report;
    report.simulated = backend.simulated();
    const auto start = Clock::now();
    auto finish = [&] {
        report.wall_time = seconds_since(start);
        report.steps_used = batch.step;
        report.completed = batch.complete();
        report.flops_estimate = static_cast<double>(report.steps_used) * config_.flops_per_forward;
        report.tokens_generated = 0;
        for (const InstanceState& inst : batch.instances)
            for (const SlotState& s : inst.slots)
                if (s.is_committed() && s.token() != config_.pad_id && s.token() != config_.eos_id)
                    ++report.tokens_generated;
    };
    try {
        while (!batch.complete() && batch.step < config_.max_steps)
            report.per_step.push_back(step_impl(batch, backend, report.parse_time));
    } catch (const Error& e) {
        finish();
        throw RunError(std::string("step ") + std::to_string(batch.step) + " failed: " + e.what(), std::move(report));
    }
    finish();
    report.final_texts = final_texts(batch, backend);
    for (const std::string& text : report.final_texts) report.syntax_valid.push_back(syntax_valid(parser_, text));
    return report;
}

std::vector<std::string> final_texts(const BatchState& batch, DecoderBackend& backend) {
    const BackendInfo info = backend.info();
    std::vector<std::string> out;
    for (const InstanceState& inst : batch.instances) {
        TokenSequence ids;
        for (const SlotState& s : inst.slots)
            if (s.is_committed() && s.token() != info.pad_id && s.token() != info.eos_id) ids.push_back(s.token());
        out.push_back(backend.detokenize(ids).text);
    }
    return out;
}

bool syntax_valid(const ParserBackend& parser, std::string_view text) {
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t nl = text.find('\n', start);
        const std::size_t end = nl == std::string_view::npos ? text.size() : nl;
        if (contains_error(parse_line(parser, text.substr(start, end - start)))) return false;
        if (nl == std::string_view::npos) break;
        start = nl + 1;
    }
    return true;
}

}  // namespace difftester
