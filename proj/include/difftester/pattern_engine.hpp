#pragma once

#include <set>
#include <string>
#include <vector>

#include "difftester/line_index.hpp"
#include "difftester/parser.hpp"

namespace difftester {

/// Node of a merged tree. The distinguished empty node has no type and no children.
///
/// `is_error` is only ever set on nodes copied verbatim from a parse tree, which
/// happens for the seed tree of a single-member group; merge results never carry it.
struct MergedNode {
    std::string node_type;
    std::vector<MergedNode> children;
    bool empty = true;
    bool is_error = false;

    static MergedNode empty_node() { return {}; }
    static MergedNode of(std::string type, std::vector<MergedNode> children = {});
    /// Verbatim copy of a parse tree (types, error flags and all children).
    static MergedNode from_syntax(const SyntaxNode& node);

    friend bool operator==(const MergedNode&, const MergedNode&) = default;
};

std::string to_sexpr(const MergedNode& node);
std::size_t leaf_count(const MergedNode& node);

/// Merges two trees. Empty when the types differ, either side is an error
/// node, or the shared type is a literal type; otherwise children are zipped
/// positionally up to the shorter list and empty child merges are dropped.
MergedNode merge_trees(const SyntaxNode& a, const SyntaxNode& b, const std::set<std::string>& literal_types);
MergedNode merge_trees(const MergedNode& a, const SyntaxNode& b, const std::set<std::string>& literal_types);
MergedNode merge_trees(const MergedNode& a, const MergedNode& b, const std::set<std::string>& literal_types);

struct LineKey {
    std::size_t instance_index = 0;
    std::size_t line_index = 0;

    friend bool operator==(const LineKey&, const LineKey&) = default;
    friend auto operator<=>(const LineKey&, const LineKey&) = default;
};

struct PatternGroup {
    MergedNode merged;
    /// Indices into the pooled line list handed to group_lines.
    std::vector<std::size_t> members;
    std::vector<LineKey> member_keys;

    bool repetitive() const { return members.size() > 1; }
};

/// First-fit grouping over lines pooled across all instances (instance-major order).
/// Blank and comment-only lines become singleton groups that nothing joins.
std::vector<PatternGroup> group_lines(const std::vector<LineRecord>& lines, const std::vector<SyntaxNode>& asts,
                                      const std::set<std::string>& literal_types);

/// Token positions of `line` licensed by `group`. The group's merged tree is
/// walked against the line's tree; each merged child pairs with the earliest
/// remaining line child that passes the merge gate. Leaves reached on the line
/// side contribute their spans; a token is licensed when every non-whitespace
/// character of it (within the line) is covered by those spans.
/// Throws UsageError for singleton groups and lines that are not members.
std::vector<std::size_t> match_token_positions(const PatternGroup& group, const LineRecord& line,
                                               const SyntaxNode& line_ast, const OffsetMap& offsets,
                                               const std::set<std::string>& literal_types);

/// Line-relative spans of the line leaves reached by the walk above.
std::vector<CharSpan> matched_leaf_spans(const MergedNode& merged, const SyntaxNode& line_ast,
                                         const std::set<std::string>& literal_types);

}  // namespace difftester
