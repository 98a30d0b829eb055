#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "difftester/backend.hpp"

namespace difftester {

enum class ConfidenceModel { SeededUniform, LocalityBiased, FileReplay };

std::string to_string(ConfidenceModel model);
ConfidenceModel confidence_model_from_string(const std::string& name);

struct ReplayRecord {
    int step = 0;
    std::size_t instance = 0;
    std::size_t position = 0;
    TokenId candidate{};
    double confidence = 0.0;
};

/// Target sequences a simulated model converges to, plus how it reports confidence.
struct Trace {
    std::string name;
    std::string language_id = "mini";
    Vocabulary vocab;
    std::vector<TokenSequence> targets;
    ConfidenceModel confidence_model = ConfidenceModel::SeededUniform;
    double p_correct = 1.0;
    std::uint64_t seed = 0;
    double locality_bonus = 0.5;
    /// < 1 makes pad confidence decay geometrically away from the text/pad boundary.
    double pad_decay = 1.0;
    std::vector<ReplayRecord> replay;

    static constexpr TokenId kPad{0};
    static constexpr TokenId kEos{1};

    std::size_t length() const { return targets.empty() ? 0 : targets.front().size(); }
    void validate() const;
    /// Copy restricted to the first `n` targets.
    Trace with_instances(std::size_t n) const;
    std::vector<std::string> target_texts() const;
};

/// Word-level pieces; each piece owns its leading spaces, newlines are their own piece.
std::vector<std::string> tokenize_words(std::string_view text);

struct TraceOptions {
    std::string name;
    std::size_t length = 128;
    ConfidenceModel confidence_model = ConfidenceModel::SeededUniform;
    double p_correct = 1.0;
    std::uint64_t seed = 0;
    double locality_bonus = 0.5;
    double pad_decay = 1.0;
    std::string language_id = "mini";
};

/// Builds a trace whose vocabulary is derived from the targets (pad=0, eos=1 reserved).
/// Targets are padded with pad tokens to the requested length.
Trace make_trace(const std::vector<std::string>& targets, const TraceOptions& options);

/// Throws ParseError (with a line number) on malformed documents.
Trace parse_trace(std::string_view document, const std::filesystem::path& base_dir = {});
Trace load_trace(const std::filesystem::path& path);
std::string trace_to_json(const Trace& trace);

std::vector<ReplayRecord> parse_replay(std::istream& in);
void write_replay(std::ostream& out, const std::vector<ReplayRecord>& records);

/// Deterministic in-process decoder: outputs are a pure function of
/// (trace, committed state, step, seed).
class SimBackend final : public DecoderBackend {
public:
    explicit SimBackend(Trace trace);

    BackendInfo info() const override;
    std::vector<Proposal> propose(const BatchState& batch) override;
    DetokenizedText detokenize(std::span<const TokenId> tokens) override;
    bool simulated() const override { return true; }

    /// Same as propose() with explicit step and seed.
    std::vector<Proposal> propose_at(const BatchState& batch, int step, std::uint64_t seed) const;

    const Trace& trace() const { return trace_; }
    /// Fixed per-position base confidence under `seed`.
    double base_confidence(std::size_t instance, std::size_t position, std::uint64_t seed) const;

private:
    Trace trace_;
    std::map<std::tuple<int, std::size_t, std::size_t>, const ReplayRecord*> replay_index_;
    std::vector<std::size_t> pad_boundary_;  // per instance; L when no pad run
};

/// Uniform double in [0, 1) from a hashed key.
double hashed_unit(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t salt);

}  // namespace difftester
