#include "difftester/pattern_engine.hpp"

#include <algorithm>

#include "difftester/errors.hpp"

namespace difftester {

MergedNode MergedNode::of(std::string type, std::vector<MergedNode> children) {
    MergedNode n;
    n.node_type = std::move(type);
    n.children = std::move(children);
    n.empty = false;
    return n;
}

MergedNode MergedNode::from_syntax(const SyntaxNode& node) {
    MergedNode n = of(node.node_type);
    n.is_error = node.is_error;
    n.children.reserve(node.children.size());
    for (const auto& c : node.children) n.children.push_back(from_syntax(c));
    return n;
}

std::string to_sexpr(const MergedNode& node) {
    if (node.empty) return "<empty>";
    const bool plain = std::all_of(node.node_type.begin(), node.node_type.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
    });
    const std::string label = plain && !node.node_type.empty() ? node.node_type : "\"" + node.node_type + "\"";
    if (node.children.empty()) return label;
    std::string out = "(" + label;
    for (const auto& c : node.children) out += " " + to_sexpr(c);
    return out + ")";
}

std::size_t leaf_count(const MergedNode& node) {
    if (node.empty) return 0;
    if (node.children.empty()) return 1;
    std::size_t n = 0;
    for (const auto& c : node.children) n += leaf_count(c);
    return n;
}

namespace {

template <typename A, typename B>
bool gate(const A& a, const B& b, const std::set<std::string>& literal_types) {
    if constexpr (std::is_same_v<A, MergedNode>) {
        if (a.empty) return false;
    }
    if constexpr (std::is_same_v<B, MergedNode>) {
        if (b.empty) return false;
    }
    return a.node_type == b.node_type && !a.is_error && !b.is_error && !literal_types.count(a.node_type);
}

template <typename A, typename B>
MergedNode merge_impl(const A& a, const B& b, const std::set<std::string>& literal_types) {
    if (!gate(a, b, literal_types)) return MergedNode::empty_node();
    MergedNode out = MergedNode::of(a.node_type);
    const std::size_t shared = std::min(a.children.size(), b.children.size());
    for (std::size_t i = 0; i < shared; ++i) {
        MergedNode child = merge_impl(a.children[i], b.children[i], literal_types);
        if (!child.empty) out.children.push_back(std::move(child));
    }
    return out;
}

void walk(const MergedNode& merged, const SyntaxNode& line, const std::set<std::string>& literal_types,
          std::vector<CharSpan>& emitted) {
    if (line.is_leaf) {
        emitted.push_back(line.span);
        return;
    }
    std::size_t next = 0;
    for (const MergedNode& mc : merged.children) {
        while (next < line.children.size() && !gate(mc, line.children[next], literal_types)) ++next;
        if (next == line.children.size()) break;
        walk(mc, line.children[next], literal_types, emitted);
        ++next;
    }
}

bool is_blank(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v'; }

}  // namespace

MergedNode merge_trees(const SyntaxNode& a, const SyntaxNode& b, const std::set<std::string>& literal_types) {
    return merge_impl(a, b, literal_types);
}

MergedNode merge_trees(const MergedNode& a, const SyntaxNode& b, const std::set<std::string>& literal_types) {
    return merge_impl(a, b, literal_types);
}

MergedNode merge_trees(const MergedNode& a, const MergedNode& b, const std::set<std::string>& literal_types) {
    return merge_impl(a, b, literal_types);
}

std::vector<PatternGroup> group_lines(const std::vector<LineRecord>& lines, const std::vector<SyntaxNode>& asts,
                                      const std::set<std::string>& literal_types) {
    if (lines.size() != asts.size()) throw UsageError("group_lines: lines and trees must be parallel");
    std::vector<PatternGroup> groups;
    std::vector<bool> closed;  // structureless singletons take no further members
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const SyntaxNode& ast = asts[i];
        const LineKey key{lines[i].instance_index, lines[i].line_index};
        if (!has_structure(ast)) {
            groups.push_back({MergedNode::from_syntax(ast), {i}, {key}});
            closed.push_back(true);
            continue;
        }
        bool found = false;
        for (std::size_t g = 0; g < groups.size(); ++g) {
            if (closed[g]) continue;
            MergedNode merged = merge_trees(groups[g].merged, ast, literal_types);
            if (!merged.empty) {
                groups[g].merged = std::move(merged);
                groups[g].members.push_back(i);
                groups[g].member_keys.push_back(key);
                found = true;
                break;
            }
        }
        if (!found) {
            groups.push_back({MergedNode::from_syntax(ast), {i}, {key}});
            closed.push_back(false);
        }
    }
    return groups;
}

std::vector<CharSpan> matched_leaf_spans(const MergedNode& merged, const SyntaxNode& line_ast,
                                         const std::set<std::string>& literal_types) {
    std::vector<CharSpan> emitted;
    if (gate(merged, line_ast, literal_types)) walk(merged, line_ast, literal_types, emitted);
    return emitted;
}

std::vector<std::size_t> match_token_positions(const PatternGroup& group, const LineRecord& line,
                                               const SyntaxNode& line_ast, const OffsetMap& offsets,
                                               const std::set<std::string>& literal_types) {
    if (!group.repetitive()) throw UsageError("match_token_positions: group has a single member");
    const LineKey key{line.instance_index, line.line_index};
    if (std::find(group.member_keys.begin(), group.member_keys.end(), key) == group.member_keys.end())
        throw UsageError("match_token_positions: line is not a member of the group");

    const std::size_t width = line.char_range.size();
    std::vector<bool> covered(width, false);
    for (const CharSpan& s : matched_leaf_spans(group.merged, line_ast, literal_types)) {
        for (std::size_t c = s.start; c < std::min(s.end, width); ++c) covered[c] = true;
    }

    std::vector<std::size_t> out;
    for (const std::size_t pos : line.eligible) {
        if (line.is_unmatchable(pos)) continue;
        const CharSpan span = offsets.at(pos);
        const std::size_t from = std::max(span.start, line.char_range.start);
        const std::size_t to = std::min(span.end, line.char_range.end);
        bool any = false;
        bool all = true;
        for (std::size_t c = from; c < to; ++c) {
            if (is_blank(line.text[c - line.char_range.start])) continue;
            any = true;
            if (!covered[c - line.char_range.start]) {
                all = false;
                break;
            }
        }
        if (any && all) out.push_back(pos);
    }
    return out;
}

}  // namespace difftester
