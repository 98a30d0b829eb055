#include "difftester/core_model.hpp"

#include <algorithm>
#include <cmath>

#include "difftester/errors.hpp"

namespace difftester {

InstanceState::InstanceState(std::size_t length)
    : slots(length, SlotState::masked()), candidates(length), confidences(length, 0.0) {}

std::size_t InstanceState::masked_count() const {
    return static_cast<std::size_t>(std::count_if(slots.begin(), slots.end(), [](const SlotState& s) { return s.is_masked(); }));
}

void InstanceState::commit(std::size_t position, TokenId token, int step) {
    if (position >= slots.size()) throw UsageError("commit position " + std::to_string(position) + " out of range");
    if (slots[position].is_committed())
        throw UsageError("position " + std::to_string(position) + " is already committed");
    slots[position] = SlotState::committed(token, step);
}

TokenId InstanceState::visible_token(std::size_t position) const {
    const SlotState& s = slots.at(position);
    return s.is_committed() ? s.token() : candidates.at(position);
}

TokenSequence InstanceState::visible_tokens() const {
    TokenSequence out;
    out.reserve(slots.size());
    for (std::size_t i = 0; i < slots.size(); ++i) out.push_back(visible_token(i));
    return out;
}

void SchedulerConfig::validate() const {
    if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("tau must lie in [0, 1], got " + std::to_string(tau));
    if (retain_per_step < 1) throw ConfigError("k (retain_per_step) must be >= 1");
    if (step_size < 1) throw ConfigError("step_size must be >= 1, got " + std::to_string(step_size));
    if (step_growth < 0) throw ConfigError("step_growth must be >= 0");
    if (max_steps < 0) throw ConfigError("max_steps (T) must be >= 0");
    if (!std::isfinite(flops_per_forward) || flops_per_forward < 0.0)
        throw ConfigError("flops_per_forward must be a non-negative number");
}

bool SchedulerConfig::accelerates_at(int step) const {
    if (step < 0) return false;
    if (schedule == StepSchedule::Fixed) return step % step_size == 0;
    // Linear: applications at 0, s, 2s+g, 3s+3g, ... (interval grows by g each time).
    int at = 0;
    int interval = step_size;
    while (at < step) {
        at += interval;
        interval += step_growth;
    }
    return at == step;
}

bool BatchState::complete() const {
    return std::all_of(instances.begin(), instances.end(), [](const InstanceState& i) { return i.complete(); });
}

BatchState new_batch(TokenSequence prompt, std::size_t n, const SchedulerConfig& config) {
    config.validate();
    if (n < 1) throw ConfigError("batch size n must be >= 1");
    BatchState batch;
    batch.prompt = std::move(prompt);
    batch.instances.assign(n, InstanceState(config.length));
    batch.step = 0;
    return batch;
}

std::vector<SlotView> committed_text_view(const InstanceState& instance) {
    std::vector<SlotView> out;
    out.reserve(instance.length());
    for (std::size_t i = 0; i < instance.length(); ++i) out.push_back({i, instance.slots[i]});
    return out;
}

}  // namespace difftester
