#pragma once

#include <functional>
#include <set>
#include <span>
#include <vector>

#include "difftester/backend.hpp"
#include "difftester/errors.hpp"
#include "difftester/pattern_engine.hpp"
#include "difftester/reports.hpp"

namespace difftester {

using PositionSet = std::set<std::size_t>;
using Detokenizer = std::function<DetokenizedText(std::span<const TokenId>)>;

/// The k most confident masked positions; ties go to the lower position.
PositionSet baseline_remask(const InstanceState& instance, std::size_t k);

/// Lines, trees and groups mined from the current candidate texts of a batch.
struct PatternAnalysis {
    std::vector<OffsetMap> offsets;  // per instance
    std::vector<LineRecord> lines;   // pooled, instance-major
    std::vector<SyntaxNode> asts;    // parallel to lines
    std::vector<PatternGroup> groups;

    std::size_t repetitive_groups() const;
};

PatternAnalysis analyze_patterns(const BatchState& batch, const Detokenizer& detokenize, const ParserBackend& parser,
                                 const std::set<std::string>& literal_types);

/// Extra positions per instance licensed by repetitive groups: masked,
/// confidence strictly above tau, and not already chosen by the baseline.
std::vector<PositionSet> pattern_retain(const BatchState& batch, const PatternAnalysis& analysis,
                                        const std::vector<PositionSet>& baseline, const SchedulerConfig& config);

/// Masked positions after the first committed pad slot.
PositionSet pad_fastforward(const InstanceState& instance, TokenId pad_id);

/// Raised by Scheduler::run when a step fails; carries the steps completed so far.
class RunError : public Error {
public:
    RunError(const std::string& what, RunReport partial) : Error(what), partial_(std::move(partial)) {}
    const RunReport& partial() const { return partial_; }

private:
    RunReport partial_;
};

class Scheduler {
public:
    Scheduler(SchedulerConfig config, const ParserBackend& parser);

    const SchedulerConfig& config() const { return config_; }

    /// One forward pass plus retention. On any error the batch is left untouched.
    StepReport decode_step(BatchState& batch, DecoderBackend& backend) const;

    /// Steps until every instance is complete or the step budget is spent.
    RunReport run(BatchState& batch, DecoderBackend& backend) const;

private:
    StepReport step_impl(BatchState& batch, DecoderBackend& backend, double& parse_seconds) const;

    SchedulerConfig config_;
    const ParserBackend& parser_;
};

/// Texts of the committed tokens with pad/eos removed; masked slots render as nothing.
std::vector<std::string> final_texts(const BatchState& batch, DecoderBackend& backend);

/// True when every line of `text` parses without error nodes.
bool syntax_valid(const ParserBackend& parser, std::string_view text);

}  // namespace difftester
