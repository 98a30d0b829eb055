#include "difftester/line_index.hpp"

#include <algorithm>

#include "difftester/errors.hpp"

namespace difftester {

bool offsets_consistent(const OffsetMap& offsets, std::size_t text_size) {
    std::size_t cursor = 0;
    for (const CharSpan& s : offsets) {
        if (s.start != cursor || s.end < s.start) return false;
        cursor = s.end;
    }
    return cursor == text_size;
}

const std::string& Vocabulary::text(TokenId id) const {
    if (!contains(id)) throw VocabularyError("unknown token id " + std::to_string(id.value));
    return texts_[id.value];
}

TokenId Vocabulary::add(std::string text) {
    texts_.push_back(std::move(text));
    return TokenId(static_cast<std::uint32_t>(texts_.size() - 1));
}

DetokenizedText detokenize(std::span<const TokenId> tokens, const Vocabulary& vocab) {
    DetokenizedText out;
    out.offsets.reserve(tokens.size());
    for (TokenId id : tokens) {
        const std::string& piece = vocab.text(id);
        CharSpan span{out.text.size(), out.text.size() + piece.size()};
        out.text += piece;
        out.offsets.push_back(span);
    }
    return out;
}

DetokenizedText candidate_text(const InstanceState& instance, const Vocabulary& vocab) {
    const TokenSequence visible = instance.visible_tokens();
    return detokenize(visible, vocab);
}

bool LineRecord::is_unmatchable(std::size_t position) const {
    return std::binary_search(unmatchable.begin(), unmatchable.end(), position);
}

std::vector<LineRecord> split_lines(std::string_view text, const OffsetMap& offsets, std::size_t instance_index) {
    std::vector<LineRecord> lines;
    // `reach` extends each line over its terminating newline so newline-only tokens have a home.
    std::vector<CharSpan> reach;
    std::size_t start = 0;
    while (true) {
        const std::size_t nl = text.find('\n', start);
        LineRecord rec;
        rec.instance_index = instance_index;
        rec.line_index = lines.size();
        const std::size_t end = nl == std::string_view::npos ? text.size() : nl;
        rec.text = std::string(text.substr(start, end - start));
        rec.char_range = {start, end};
        lines.push_back(std::move(rec));
        if (nl == std::string_view::npos) {
            reach.push_back({start, text.size()});
            break;
        }
        reach.push_back({start, nl + 1});
        start = nl + 1;
    }

    auto line_of = [&](std::size_t offset) {
        // Last line whose reach starts at or before offset.
        auto it = std::upper_bound(reach.begin(), reach.end(), offset,
                                   [](std::size_t off, const CharSpan& r) { return off < r.start; });
        return static_cast<std::size_t>(std::distance(reach.begin(), it)) - 1;
    };

    for (std::size_t pos = 0; pos < offsets.size(); ++pos) {
        const CharSpan span = offsets[pos];
        const std::size_t first = line_of(span.start);
        const std::size_t last = span.empty() ? first : line_of(span.end - 1);
        for (std::size_t li = first; li <= last; ++li) {
            LineRecord& rec = lines[li];
            rec.token_range.push_back(pos);
            if (last != first) {
                rec.unmatchable.push_back(pos);
            } else if (span.intersects(rec.char_range)) {
                rec.eligible.push_back(pos);
            }
        }
    }
    return lines;
}

}  // namespace difftester
