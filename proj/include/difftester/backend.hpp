#pragma once

#include <span>
#include <string>
#include <vector>

#include "difftester/core_model.hpp"
#include "difftester/line_index.hpp"

namespace difftester {

/// Sampled token plus its probability for every position of one instance.
struct Proposal {
    std::vector<TokenId> candidates;
    std::vector<double> confidences;
};

struct BackendInfo {
    std::size_t vocab_size = 0;
    TokenId pad_id{0};
    TokenId eos_id{1};
    std::string language_id = "mini";
};

/// One forward pass per call. Implementations fill every position; entries at
/// committed positions are ignored by the scheduler.
class DecoderBackend {
public:
    virtual ~DecoderBackend() = default;

    virtual BackendInfo info() const = 0;
    virtual std::vector<Proposal> propose(const BatchState& batch) = 0;
    virtual DetokenizedText detokenize(std::span<const TokenId> tokens) = 0;
    /// Simulated backends do not report wall-clock throughput.
    virtual bool simulated() const { return false; }
};

/// Throws BackendError unless `proposals` has one entry per instance with
/// arrays of length L, in-vocabulary candidates and confidences in [0, 1] at
/// masked positions.
void validate_proposals(const BatchState& batch, const std::vector<Proposal>& proposals, std::size_t vocab_size);

}  // namespace difftester
