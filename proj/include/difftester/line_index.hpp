#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "difftester/core_model.hpp"

namespace difftester {

/// Half-open character (byte) range.
struct CharSpan {
    std::size_t start = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - start; }
    bool empty() const { return start == end; }
    bool contains(CharSpan other) const { return start <= other.start && other.end <= end; }
    bool intersects(CharSpan other) const { return start < other.end && other.start < end; }

    friend bool operator==(const CharSpan&, const CharSpan&) = default;
    friend auto operator<=>(const CharSpan&, const CharSpan&) = default;
};

/// Per-token spans into a detokenized text, in position order.
using OffsetMap = std::vector<CharSpan>;

/// True when the spans are contiguous, ordered and cover exactly `text_size` bytes.
bool offsets_consistent(const OffsetMap& offsets, std::size_t text_size);

/// Token id -> surface text. Whitespace is owned by the token texts.
class Vocabulary {
public:
    Vocabulary() = default;
    explicit Vocabulary(std::vector<std::string> texts) : texts_(std::move(texts)) {}

    std::size_t size() const { return texts_.size(); }
    bool contains(TokenId id) const { return id.value < texts_.size(); }
    /// Throws VocabularyError for unknown ids.
    const std::string& text(TokenId id) const;
    const std::vector<std::string>& texts() const { return texts_; }

    TokenId add(std::string text);

private:
    std::vector<std::string> texts_;
};

struct DetokenizedText {
    std::string text;
    OffsetMap offsets;
};

DetokenizedText detokenize(std::span<const TokenId> tokens, const Vocabulary& vocab);

/// Committed tokens where committed, candidate tokens elsewhere.
DetokenizedText candidate_text(const InstanceState& instance, const Vocabulary& vocab);

struct LineRecord {
    std::size_t instance_index = 0;
    std::size_t line_index = 0;
    std::string text;
    CharSpan char_range;
    /// Every token whose span touches this line (including its terminating newline).
    std::vector<std::size_t> token_range;
    /// Tokens whose text continues across a line break; never licensed for retention.
    std::vector<std::size_t> unmatchable;
    /// token_range minus unmatchable tokens and tokens that only touch the newline.
    std::vector<std::size_t> eligible;

    bool is_unmatchable(std::size_t position) const;
};

std::vector<LineRecord> split_lines(std::string_view text, const OffsetMap& offsets, std::size_t instance_index);

}  // namespace difftester
