#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace difftester {

/// Index into a backend vocabulary.
struct TokenId {
    std::uint32_t value = 0;

    constexpr TokenId() = default;
    constexpr explicit TokenId(std::uint32_t v) : value(v) {}

    friend constexpr auto operator<=>(TokenId, TokenId) = default;
};

using TokenSequence = std::vector<TokenId>;

/// Mask state of one position. A committed slot never reverts to masked.
class SlotState {
public:
    static constexpr SlotState masked() { return SlotState{}; }
    static constexpr SlotState committed(TokenId token, int step) { return SlotState{token, step}; }

    constexpr bool is_masked() const { return !committed_; }
    constexpr bool is_committed() const { return committed_; }
    constexpr TokenId token() const { return token_; }
    constexpr int committed_at_step() const { return step_; }

    friend constexpr bool operator==(const SlotState&, const SlotState&) = default;

private:
    constexpr SlotState() = default;
    constexpr SlotState(TokenId token, int step) : committed_(true), token_(token), step_(step) {}

    bool committed_ = false;
    TokenId token_{};
    int step_ = -1;
};

/// One sequence under refinement plus the most recent per-position proposal.
/// Candidates and confidences are meaningless at committed positions.
struct InstanceState {
    std::vector<SlotState> slots;
    std::vector<TokenId> candidates;
    std::vector<double> confidences;

    explicit InstanceState(std::size_t length = 0);

    std::size_t length() const { return slots.size(); }
    std::size_t masked_count() const;
    bool complete() const { return masked_count() == 0; }

    /// Commits `token` at `position`; throws UsageError if already committed.
    void commit(std::size_t position, TokenId token, int step);

    /// Committed token where available, the current candidate elsewhere.
    TokenId visible_token(std::size_t position) const;
    TokenSequence visible_tokens() const;
};

enum class StepSchedule { Fixed, Linear };

struct SchedulerConfig {
    std::size_t length = 128;       // L
    int max_steps = 64;             // T
    std::size_t retain_per_step = 2;  // k
    double tau = 0.02;
    int step_size = 2;
    StepSchedule schedule = StepSchedule::Fixed;
    int step_growth = 1;            // interval increment for the linear schedule
    std::set<std::string> literal_types{"integer", "float"};
    std::string language_id = "mini";
    TokenId pad_id{0};
    TokenId eos_id{1};
    std::uint64_t seed = 0;
    double flops_per_forward = 1.0;
    bool acceleration = true;
    bool pad_fastforward = true;

    /// Throws ConfigError naming the offending field.
    void validate() const;

    /// True when pattern acceleration runs at `step` under this schedule.
    bool accelerates_at(int step) const;
};

struct BatchState {
    std::vector<InstanceState> instances;
    TokenSequence prompt;
    int step = 0;

    std::size_t size() const { return instances.size(); }
    std::size_t length() const { return instances.empty() ? 0 : instances.front().length(); }
    bool complete() const;
};

BatchState new_batch(TokenSequence prompt, std::size_t n, const SchedulerConfig& config);

struct SlotView {
    std::size_t position;
    SlotState state;
};

std::vector<SlotView> committed_text_view(const InstanceState& instance);

}  // namespace difftester

template <>
struct std::hash<difftester::TokenId> {
    std::size_t operator()(difftester::TokenId id) const noexcept { return std::hash<std::uint32_t>{}(id.value); }
};
