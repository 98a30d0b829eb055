#pragma once

#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "difftester/line_index.hpp"

namespace difftester {

inline constexpr std::string_view kErrorType = "ERROR";

/// Node of a single-line syntax tree. Spans are byte offsets relative to the line.
struct SyntaxNode {
    std::string node_type;
    bool is_error = false;
    bool is_leaf = false;
    CharSpan span;
    std::vector<SyntaxNode> children;

    static SyntaxNode leaf(std::string type, CharSpan span);
    static SyntaxNode branch(std::string type, std::vector<SyntaxNode> children, CharSpan span);
    static SyntaxNode error(std::vector<SyntaxNode> children, CharSpan span);

    friend bool operator==(const SyntaxNode&, const SyntaxNode&) = default;
};

/// Grammar plug-in point. Implementations must be total, deterministic and reentrant.
class ParserBackend {
public:
    virtual ~ParserBackend() = default;

    virtual std::string_view language_id() const = 0;
    virtual SyntaxNode parse(std::string_view line) const = 0;
    virtual std::set<std::string> literal_types() const = 0;
};

/// Built-in grammar for unit-test-shaped lines in Python-, Java- and C++-like dialects.
///
/// Each statement node owns its top-level operator chain as flat children, so
/// `assert f(1) == 2` parses to
/// `(assert_statement keyword (call identifier (argument_list "(" integer ")")) operator integer)`.
/// Nested operator chains (inside brackets) become `binary_expression` nodes.
/// Punctuation leaves are typed by their own text. Anything that cannot be
/// parsed is wrapped in an `ERROR` node; zero-width `ERROR` nodes mark missing
/// operands or closers.
class MiniParser final : public ParserBackend {
public:
    std::string_view language_id() const override { return "mini"; }
    SyntaxNode parse(std::string_view line) const override;
    std::set<std::string> literal_types() const override { return {"integer", "float"}; }
};

/// Looks up a backend by language id. Throws ConfigError for unknown ids.
std::unique_ptr<ParserBackend> make_parser(std::string_view language_id);

/// Parses one line (which must not contain '\n'); the root spans the whole line.
SyntaxNode parse_line(const ParserBackend& backend, std::string_view text);

/// Spans of all maximal subtrees whose type is in `literal_types`.
std::vector<CharSpan> literal_positions(const SyntaxNode& node, const std::set<std::string>& literal_types);

bool contains_error(const SyntaxNode& node);

/// False for blank and comment-only lines.
bool has_structure(const SyntaxNode& node);

std::size_t leaf_count(const SyntaxNode& node);

/// Compact s-expression of node types, for golden tests and debugging.
std::string to_sexpr(const SyntaxNode& node);

/// Lexical unit of the built-in grammar; exposed for span-soundness checks.
struct Lexeme {
    enum class Kind { Identifier, Keyword, Constant, Integer, Float, String, Operator, Punct, Comment, Invalid };
    Kind kind;
    CharSpan span;
    bool terminated = true;  // false for an unterminated string literal
};

std::vector<Lexeme> lex_line(std::string_view text);

}  // namespace difftester
