#include "difftester/parser.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <optional>

#include "difftester/errors.hpp"

namespace difftester {

SyntaxNode SyntaxNode::leaf(std::string type, CharSpan span) {
    SyntaxNode n;
    n.node_type = std::move(type);
    n.is_leaf = true;
    n.span = span;
    return n;
}

SyntaxNode SyntaxNode::branch(std::string type, std::vector<SyntaxNode> children, CharSpan span) {
    SyntaxNode n;
    n.node_type = std::move(type);
    n.span = span;
    n.children = std::move(children);
    return n;
}

SyntaxNode SyntaxNode::error(std::vector<SyntaxNode> children, CharSpan span) {
    SyntaxNode n = branch(std::string(kErrorType), std::move(children), span);
    n.is_error = true;
    return n;
}

namespace {

// ---------------------------------------------------------------------------
// Lexer

constexpr std::array kKeywords = {
    "assert", "return", "def",  "class", "if",     "elif",   "else",  "for",   "while",    "with",
    "import", "from",   "as",   "pass",  "raise",  "try",    "except", "finally", "new",   "throw",
    "in",     "not",    "and",  "or",    "is",     "lambda", "yield", "del",   "global", "nonlocal",
    "break",  "continue", "catch",
};

constexpr std::array kConstants = {"True", "False", "None", "true", "false", "null", "nullptr"};

// Longest first.
constexpr std::array kOperators = {
    "**=", "//=", ">>=", "<<=", "==", "!=", "<=", ">=", "**", "//", "+=", "-=", "*=", "/=", "%=", "&=",
    "|=",  "^=",  "->",  "&&",  "||", "<<", ">>", "++", "--", "+",  "-",  "*",  "/",  "%",  "=",  "<",
    ">",   "!",   "~",   "&",   "|",  "^",  "?",
};

constexpr std::array kPuncts = {"...", "::", "(", ")", "[", "]", "{", "}", ",", ";", ":", ".", "@"};

bool ident_start(unsigned char c) { return std::isalpha(c) || c == '_' || c == '$' || c >= 0x80; }
bool ident_char(unsigned char c) { return ident_start(c) || std::isdigit(c); }

template <std::size_t N>
bool in(const std::array<const char*, N>& set, std::string_view s) {
    return std::any_of(set.begin(), set.end(), [&](const char* x) { return s == x; });
}

bool is_string_prefix(std::string_view word) {
    std::string lower;
    for (char c : word) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return lower == "r" || lower == "b" || lower == "u" || lower == "f" || lower == "rb" || lower == "br" ||
           lower == "fr" || lower == "rf" || lower == "l" || lower == "u8";
}

std::size_t scan_string(std::string_view s, std::size_t i, bool& terminated) {
    const char quote = s[i];
    const bool triple = i + 2 < s.size() && s[i + 1] == quote && s[i + 2] == quote;
    std::size_t j = i + (triple ? 3 : 1);
    while (j < s.size()) {
        if (s[j] == '\\') {
            j += 2;
            continue;
        }
        if (s[j] == quote) {
            if (!triple) {
                terminated = true;
                return j + 1;
            }
            if (j + 2 < s.size() && s[j + 1] == quote && s[j + 2] == quote) {
                terminated = true;
                return j + 3;
            }
        }
        ++j;
    }
    terminated = false;
    return s.size();
}

}  // namespace

std::vector<Lexeme> lex_line(std::string_view s) {
    std::vector<Lexeme> out;
    std::size_t i = 0;
    const std::size_t n = s.size();
    auto push = [&](Lexeme::Kind kind, std::size_t start, std::size_t end, bool terminated = true) {
        out.push_back({kind, {start, end}, terminated});
        i = end;
    };
    while (i < n) {
        const unsigned char c = static_cast<unsigned char>(s[i]);
        if (c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v') {
            ++i;
            continue;
        }
        if (c == '#' || (c == '/' && i + 1 < n && s[i + 1] == '/')) {
            push(Lexeme::Kind::Comment, i, n);
            continue;
        }
        if (c == '/' && i + 1 < n && s[i + 1] == '*') {
            const std::size_t close = s.find("*/", i + 2);
            push(Lexeme::Kind::Comment, i, close == std::string_view::npos ? n : close + 2);
            continue;
        }
        if (ident_start(c)) {
            std::size_t j = i + 1;
            while (j < n && ident_char(static_cast<unsigned char>(s[j]))) ++j;
            const std::string_view word = s.substr(i, j - i);
            if (j < n && (s[j] == '"' || s[j] == '\'') && is_string_prefix(word)) {
                bool terminated = false;
                const std::size_t end = scan_string(s, j, terminated);
                push(Lexeme::Kind::String, i, end, terminated);
                continue;
            }
            Lexeme::Kind kind = Lexeme::Kind::Identifier;
            if (in(kKeywords, word)) kind = Lexeme::Kind::Keyword;
            else if (in(kConstants, word)) kind = Lexeme::Kind::Constant;
            push(kind, i, j);
            continue;
        }
        if (std::isdigit(c)) {
            std::size_t j = i;
            bool is_float = false;
            if (c == '0' && i + 1 < n && (s[i + 1] == 'x' || s[i + 1] == 'X')) {
                j = i + 2;
                while (j < n && std::isxdigit(static_cast<unsigned char>(s[j]))) ++j;
            } else {
                while (j < n && (std::isdigit(static_cast<unsigned char>(s[j])) || s[j] == '_')) ++j;
                if (j + 1 < n && s[j] == '.' && std::isdigit(static_cast<unsigned char>(s[j + 1]))) {
                    is_float = true;
                    ++j;
                    while (j < n && (std::isdigit(static_cast<unsigned char>(s[j])) || s[j] == '_')) ++j;
                }
                if (j < n && (s[j] == 'e' || s[j] == 'E')) {
                    std::size_t k = j + 1;
                    if (k < n && (s[k] == '+' || s[k] == '-')) ++k;
                    if (k < n && std::isdigit(static_cast<unsigned char>(s[k]))) {
                        is_float = true;
                        j = k;
                        while (j < n && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
                    }
                }
                // Type suffixes (1L, 2.5f, 3u) stay attached to the number.
                const std::size_t suffix = j;
                while (j < n && ident_char(static_cast<unsigned char>(s[j]))) ++j;
                for (std::size_t k = suffix; k < j; ++k)
                    if (s[k] == 'f' || s[k] == 'F') is_float = true;
            }
            push(is_float ? Lexeme::Kind::Float : Lexeme::Kind::Integer, i, j);
            continue;
        }
        if (c == '"' || c == '\'') {
            bool terminated = false;
            const std::size_t end = scan_string(s, i, terminated);
            push(Lexeme::Kind::String, i, end, terminated);
            continue;
        }
        bool matched = false;
        for (const char* p : kPuncts) {
            const std::string_view ps(p);
            if (s.substr(i, ps.size()) == ps) {
                push(Lexeme::Kind::Punct, i, i + ps.size());
                matched = true;
                break;
            }
        }
        if (matched) continue;
        for (const char* op : kOperators) {
            const std::string_view os(op);
            if (s.substr(i, os.size()) == os) {
                push(Lexeme::Kind::Operator, i, i + os.size());
                matched = true;
                break;
            }
        }
        if (matched) continue;
        push(Lexeme::Kind::Invalid, i, i + 1);
    }
    return out;
}

namespace {

// ---------------------------------------------------------------------------
// Recursive-descent parser with local error recovery

constexpr std::array kBinaryOps = {"==", "!=", "<=", ">=", "<", ">", "+",  "-",  "*",  "/", "%",
                                   "**", "//", "&",  "|",  "^", "<<", ">>", "&&", "||", "->"};
constexpr std::array kAssignOps = {"=", "+=", "-=", "*=", "/=", "%=", "//=", "**=", "&=", "|=", "^=", "<<=", ">>="};
constexpr std::array kPrefixOps = {"-", "+", "!", "~", "*", "**", "&", "++", "--"};
constexpr std::array kWordBinaryOps = {"in", "is", "and", "or", "if", "else"};

class LineParser {
public:
    explicit LineParser(std::string_view src) : src_(src), toks_(lex_line(src)) {}

    SyntaxNode parse_root() {
        std::optional<SyntaxNode> comment;
        if (!toks_.empty() && toks_.back().kind == Lexeme::Kind::Comment) {
            comment = leaf_of(toks_.back(), "comment");
            toks_.pop_back();
        }
        const CharSpan whole{0, src_.size()};
        if (toks_.empty()) {
            std::vector<SyntaxNode> kids;
            if (comment) kids.push_back(std::move(*comment));
            return SyntaxNode::branch(comment ? "comment_line" : "blank_line", std::move(kids), whole);
        }
        SyntaxNode root = parse_statement();
        if (!at_end()) {
            SyntaxNode garbage = skip_rest();
            if (root.is_error) {
                for (auto& c : garbage.children) root.children.push_back(std::move(c));
            } else {
                root.children.push_back(std::move(garbage));
            }
        }
        if (comment) root.children.push_back(std::move(*comment));
        root.span = whole;
        return root;
    }

private:
    // -- token helpers -------------------------------------------------------

    bool at_end() const { return pos_ >= toks_.size(); }
    const Lexeme* peek(std::size_t ahead = 0) const {
        return pos_ + ahead < toks_.size() ? &toks_[pos_ + ahead] : nullptr;
    }
    std::string_view text(const Lexeme& t) const { return src_.substr(t.span.start, t.span.size()); }

    bool is_punct(const Lexeme* t, std::string_view p) const {
        return t && t->kind == Lexeme::Kind::Punct && text(*t) == p;
    }
    bool is_op(const Lexeme* t, std::string_view p) const {
        return t && t->kind == Lexeme::Kind::Operator && text(*t) == p;
    }
    bool is_kw(const Lexeme* t, std::string_view k) const {
        return t && t->kind == Lexeme::Kind::Keyword && text(*t) == k;
    }
    bool is_word(const Lexeme* t) const {
        return t && (t->kind == Lexeme::Kind::Identifier || t->kind == Lexeme::Kind::Keyword ||
                     t->kind == Lexeme::Kind::Constant);
    }

    std::string default_type(const Lexeme& t) const {
        switch (t.kind) {
            case Lexeme::Kind::Identifier: return "identifier";
            case Lexeme::Kind::Keyword: return "keyword";
            case Lexeme::Kind::Constant: return "constant";
            case Lexeme::Kind::Integer: return "integer";
            case Lexeme::Kind::Float: return "float";
            case Lexeme::Kind::String: return "string";
            case Lexeme::Kind::Operator: return "operator";
            case Lexeme::Kind::Punct: return std::string(text(t));
            case Lexeme::Kind::Comment: return "comment";
            case Lexeme::Kind::Invalid: return "invalid";
        }
        return "invalid";
    }

    SyntaxNode leaf_of(const Lexeme& t, std::string type) const { return SyntaxNode::leaf(std::move(type), t.span); }

    SyntaxNode take(std::string type = {}) {
        const Lexeme& t = toks_[pos_++];
        return leaf_of(t, type.empty() ? default_type(t) : std::move(type));
    }

    std::size_t prev_end() const { return pos_ > 0 ? toks_[pos_ - 1].span.end : 0; }

    SyntaxNode missing() const { return SyntaxNode::error({}, {prev_end(), prev_end()}); }

    static SyntaxNode make(std::string type, std::vector<SyntaxNode> kids) {
        const CharSpan span = kids.empty() ? CharSpan{} : CharSpan{kids.front().span.start, kids.back().span.end};
        return SyntaxNode::branch(std::move(type), std::move(kids), span);
    }

    SyntaxNode make_error(std::vector<SyntaxNode> kids) const {
        const CharSpan span = kids.empty() ? CharSpan{prev_end(), prev_end()}
                                           : CharSpan{kids.front().span.start, kids.back().span.end};
        return SyntaxNode::error(std::move(kids), span);
    }

    // Consumes tokens into an ERROR node until `sync` matches at bracket depth 0.
    template <typename Sync>
    SyntaxNode skip_until(Sync sync) {
        std::vector<SyntaxNode> kids;
        int depth = 0;
        while (!at_end()) {
            const Lexeme* t = peek();
            if (depth == 0 && sync(t)) break;
            if (is_punct(t, "(") || is_punct(t, "[") || is_punct(t, "{")) ++depth;
            if ((is_punct(t, ")") || is_punct(t, "]") || is_punct(t, "}")) && depth > 0) --depth;
            kids.push_back(take());
        }
        return make_error(std::move(kids));
    }

    SyntaxNode skip_rest() {
        return skip_until([](const Lexeme*) { return false; });
    }

    void optional_punct(std::vector<SyntaxNode>& kids, std::string_view p) {
        if (is_punct(peek(), p)) kids.push_back(take());
    }

    // -- expressions ---------------------------------------------------------

    bool starts_operand(const Lexeme* t) const {
        if (!t) return false;
        switch (t->kind) {
            case Lexeme::Kind::Identifier:
            case Lexeme::Kind::Constant:
            case Lexeme::Kind::Integer:
            case Lexeme::Kind::Float:
            case Lexeme::Kind::String: return true;
            case Lexeme::Kind::Punct:
                return is_punct(t, "(") || is_punct(t, "[") || is_punct(t, "{") || is_punct(t, "...");
            case Lexeme::Kind::Operator: return in(kPrefixOps, text(*t));
            case Lexeme::Kind::Keyword: return is_kw(t, "not") || is_kw(t, "new") || is_kw(t, "lambda");
            default: return false;
        }
    }

    bool at_binary_op() const {
        const Lexeme* t = peek();
        if (!t) return false;
        if (t->kind == Lexeme::Kind::Operator) {
            if (!in(kBinaryOps, text(*t))) return false;
            // `p->x` without spacing is member access, handled as a postfix.
            if (text(*t) == "->" && pos_ > 0 && toks_[pos_ - 1].span.end == t->span.start) return false;
            return true;
        }
        if (t->kind == Lexeme::Kind::Keyword) {
            if (is_kw(t, "not")) return is_kw(peek(1), "in");
            return in(kWordBinaryOps, text(*t));
        }
        return false;
    }

    SyntaxNode operand_or_missing() { return starts_operand(peek()) ? parse_operand() : missing(); }

    // operand (binop operand)*, appended flat to `out`.
    void parse_chain(std::vector<SyntaxNode>& out) {
        out.push_back(operand_or_missing());
        while (at_binary_op()) {
            if (is_kw(peek(), "not")) out.push_back(take("operator"));  // `not in`
            out.push_back(take("operator"));
            out.push_back(operand_or_missing());
        }
    }

    // Statement-level chain; Python-style comma sequences stay flat.
    void parse_chain_list(std::vector<SyntaxNode>& out) {
        parse_chain(out);
        while (is_punct(peek(), ",") && starts_operand(peek(1))) {
            out.push_back(take());
            parse_chain(out);
        }
    }

    SyntaxNode parse_expression() {
        std::vector<SyntaxNode> parts;
        parse_chain(parts);
        if (parts.size() == 1) return std::move(parts.front());
        return make("binary_expression", std::move(parts));
    }

    SyntaxNode parse_operand() {
        const Lexeme* t = peek();
        if (t->kind == Lexeme::Kind::Operator || is_kw(t, "not")) {
            std::vector<SyntaxNode> kids;
            kids.push_back(take("operator"));
            kids.push_back(operand_or_missing());
            return make("unary_expression", std::move(kids));
        }
        if (is_kw(t, "new")) return parse_postfix(parse_new());
        if (is_kw(t, "lambda")) return parse_lambda();
        return parse_postfix(parse_primary());
    }

    SyntaxNode parse_primary() {
        const Lexeme* t = peek();
        if (t->kind == Lexeme::Kind::String && !t->terminated) {
            std::vector<SyntaxNode> kids;
            kids.push_back(take());
            return make_error(std::move(kids));
        }
        if (is_punct(t, "(")) {
            SyntaxNode group = parse_bracketed(")", "tuple", Item::Expression);
            // (x) without a comma is just grouping.
            const bool has_comma = std::any_of(group.children.begin(), group.children.end(),
                                               [](const SyntaxNode& c) { return c.node_type == ","; });
            if (!has_comma && group.children.size() == 3) group.node_type = "parenthesized_expression";
            return group;
        }
        if (is_punct(t, "[")) return parse_bracketed("]", "list", Item::Expression);
        if (is_punct(t, "{")) return parse_bracketed("}", "initializer_list", Item::Pair);
        if (is_punct(t, "...")) return take("constant");
        return take();
    }

    SyntaxNode parse_postfix(SyntaxNode base) {
        while (!at_end()) {
            const Lexeme* t = peek();
            if (is_punct(t, "(")) {
                std::vector<SyntaxNode> kids;
                kids.push_back(std::move(base));
                kids.push_back(parse_bracketed(")", "argument_list", Item::Argument));
                base = make("call", std::move(kids));
            } else if ((is_punct(t, ".") || (is_op(t, "->") && t->span.start == prev_end())) && is_word(peek(1))) {
                std::vector<SyntaxNode> kids;
                kids.push_back(std::move(base));
                kids.push_back(take(std::string(text(*t))));
                kids.push_back(take("identifier"));
                base = make("attribute", std::move(kids));
            } else if (is_punct(t, "::") && is_word(peek(1))) {
                std::vector<SyntaxNode> kids;
                kids.push_back(std::move(base));
                kids.push_back(take());
                kids.push_back(take("identifier"));
                base = make("scoped_identifier", std::move(kids));
            } else if (is_punct(t, "[")) {
                std::vector<SyntaxNode> kids;
                kids.push_back(std::move(base));
                SyntaxNode index = parse_bracketed("]", "index", Item::Slice);
                for (auto& c : index.children) kids.push_back(std::move(c));
                base = make("subscript", std::move(kids));
            } else if ((is_op(t, "++") || is_op(t, "--")) && t->span.start == prev_end()) {
                std::vector<SyntaxNode> kids;
                kids.push_back(std::move(base));
                kids.push_back(take("operator"));
                base = make("update_expression", std::move(kids));
            } else {
                break;
            }
        }
        return base;
    }

    SyntaxNode parse_new() {
        std::vector<SyntaxNode> kids;
        kids.push_back(take());  // new
        if (const auto end = scan_type(pos_)) {
            kids.push_back(parse_type(*end));
        } else {
            kids.push_back(missing());
            return make("new_expression", std::move(kids));
        }
        if (is_punct(peek(), "(")) kids.push_back(parse_bracketed(")", "argument_list", Item::Argument));
        else if (is_punct(peek(), "[")) kids.push_back(parse_bracketed("]", "index", Item::Expression));
        if (is_punct(peek(), "{")) kids.push_back(parse_bracketed("}", "initializer_list", Item::Pair));
        return make("new_expression", std::move(kids));
    }

    SyntaxNode parse_lambda() {
        std::vector<SyntaxNode> kids;
        kids.push_back(take());  // lambda
        while (!at_end() && !is_punct(peek(), ":")) {
            if (peek()->kind == Lexeme::Kind::Identifier || is_punct(peek(), ",")) kids.push_back(take());
            else {
                kids.push_back(skip_until([this](const Lexeme* t) { return is_punct(t, ":"); }));
            }
        }
        if (!is_punct(peek(), ":")) {
            kids.push_back(missing());
            return make("lambda", std::move(kids));
        }
        kids.push_back(take());
        kids.push_back(parse_expression());
        return make("lambda", std::move(kids));
    }

    enum class Item { Expression, Argument, Pair, Slice, Parameter };

    SyntaxNode parse_item(Item kind) {
        switch (kind) {
            case Item::Argument:
                if (peek()->kind == Lexeme::Kind::Identifier && is_op(peek(1), "=")) {
                    std::vector<SyntaxNode> kids;
                    kids.push_back(take());
                    kids.push_back(take("operator"));
                    kids.push_back(parse_expression());
                    return make("keyword_argument", std::move(kids));
                }
                return parse_expression();
            case Item::Pair: {
                SyntaxNode key = parse_expression();
                if (!is_punct(peek(), ":")) return key;
                std::vector<SyntaxNode> kids;
                kids.push_back(std::move(key));
                kids.push_back(take());
                kids.push_back(parse_expression());
                return make("pair", std::move(kids));
            }
            case Item::Slice: {
                std::vector<SyntaxNode> kids;
                if (starts_operand(peek())) kids.push_back(parse_expression());
                if (!is_punct(peek(), ":")) return kids.empty() ? missing() : std::move(kids.front());
                while (is_punct(peek(), ":")) {
                    kids.push_back(take());
                    if (starts_operand(peek())) kids.push_back(parse_expression());
                }
                return make("slice", std::move(kids));
            }
            case Item::Parameter: return parse_parameter();
            case Item::Expression: break;
        }
        return parse_expression();
    }

    bool starts_item(Item kind) const {
        if (kind == Item::Slice && is_punct(peek(), ":")) return true;
        return starts_operand(peek());
    }

    // open item (, item)* [,] close, with recovery to the next comma or closer.
    // The opening bracket is the current token.
    SyntaxNode parse_bracketed(std::string_view close, std::string type, Item item) {
        std::vector<SyntaxNode> kids;
        kids.push_back(take());
        auto sync = [this, close](const Lexeme* t) { return is_punct(t, ",") || is_punct(t, close); };
        while (true) {
            if (at_end()) {
                kids.push_back(missing());
                break;
            }
            if (is_punct(peek(), close)) {
                kids.push_back(take());
                break;
            }
            if (starts_item(item)) {
                kids.push_back(parse_item(item));
            } else if (!is_punct(peek(), ",")) {
                kids.push_back(skip_until(sync));
                continue;
            }
            if (is_punct(peek(), ",")) {
                kids.push_back(take());
            } else if (!at_end() && !is_punct(peek(), close)) {
                kids.push_back(skip_until(sync));
            }
        }
        return make(std::move(type), std::move(kids));
    }

    // -- types and declarations ----------------------------------------------

    std::optional<std::size_t> scan_type(std::size_t i) const {
        auto tok = [&](std::size_t k) -> const Lexeme* { return k < toks_.size() ? &toks_[k] : nullptr; };
        if (!tok(i) || tok(i)->kind != Lexeme::Kind::Identifier) return std::nullopt;
        ++i;
        while (is_punct(tok(i), "::") && tok(i + 1) && tok(i + 1)->kind == Lexeme::Kind::Identifier) i += 2;
        if (is_op(tok(i), "<")) {
            ++i;
            if (is_op(tok(i), ">")) {
                ++i;
            } else {
                while (true) {
                    const auto next = scan_type(i);
                    if (!next) return std::nullopt;
                    i = *next;
                    if (is_punct(tok(i), ",")) {
                        ++i;
                        continue;
                    }
                    if (is_op(tok(i), ">")) {
                        ++i;
                        break;
                    }
                    return std::nullopt;
                }
            }
        }
        while (is_punct(tok(i), "[") && is_punct(tok(i + 1), "]")) i += 2;
        while (is_op(tok(i), "*") || is_op(tok(i), "&") || is_op(tok(i), "&&")) ++i;
        return i;
    }

    // Number of type words before the declared name, if the statement is a declaration.
    std::optional<std::size_t> declaration_types() const {
        std::size_t i = pos_;
        std::size_t count = 0;
        while (const auto end = scan_type(i)) {
            ++count;
            const std::size_t name = *end;
            if (name < toks_.size() && toks_[name].kind == Lexeme::Kind::Identifier) {
                const Lexeme* follow = name + 1 < toks_.size() ? &toks_[name + 1] : nullptr;
                if (!follow || is_op(follow, "=") || is_punct(follow, ";") || is_punct(follow, "(") ||
                    is_punct(follow, "{") || is_punct(follow, ","))
                    return count;
            }
            i = name;
        }
        return std::nullopt;
    }

    SyntaxNode parse_type(std::size_t end) {
        std::vector<SyntaxNode> kids;
        while (pos_ < end) {
            const Lexeme& t = toks_[pos_];
            if (t.kind == Lexeme::Kind::Operator && (text(t) == "<" || text(t) == ">" || text(t) == "*" ||
                                                     text(t) == "&" || text(t) == "&&")) {
                kids.push_back(take("operator"));
            } else {
                kids.push_back(take());
            }
        }
        return make("type", std::move(kids));
    }

    SyntaxNode parse_parameter() {
        if (const auto types = declaration_types_in_params()) {
            std::vector<SyntaxNode> kids;
            for (std::size_t k = 0; k < *types; ++k) kids.push_back(parse_type(*scan_type(pos_)));
            kids.push_back(take());  // name
            if (is_op(peek(), "=")) {
                kids.push_back(take("operator"));
                kids.push_back(parse_expression());
            }
            return make("typed_parameter", std::move(kids));
        }
        if (peek()->kind == Lexeme::Kind::Identifier && is_punct(peek(1), ":")) {
            std::vector<SyntaxNode> kids;
            kids.push_back(take());
            kids.push_back(take());
            if (const auto end = scan_type(pos_)) kids.push_back(parse_type(*end));
            else kids.push_back(missing());
            if (is_op(peek(), "=")) {
                kids.push_back(take("operator"));
                kids.push_back(parse_expression());
            }
            return make("typed_parameter", std::move(kids));
        }
        if (peek()->kind == Lexeme::Kind::Identifier && is_op(peek(1), "=")) {
            std::vector<SyntaxNode> kids;
            kids.push_back(take());
            kids.push_back(take("operator"));
            kids.push_back(parse_expression());
            return make("default_parameter", std::move(kids));
        }
        return parse_expression();
    }

    std::optional<std::size_t> declaration_types_in_params() const {
        std::size_t i = pos_;
        std::size_t count = 0;
        while (const auto end = scan_type(i)) {
            ++count;
            const std::size_t name = *end;
            if (name < toks_.size() && toks_[name].kind == Lexeme::Kind::Identifier) {
                const Lexeme* follow = name + 1 < toks_.size() ? &toks_[name + 1] : nullptr;
                if (!follow || is_op(follow, "=") || is_punct(follow, ",") || is_punct(follow, ")")) return count;
            }
            i = name;
        }
        return std::nullopt;
    }

    SyntaxNode parse_parameters() {
        if (!is_punct(peek(), "(")) return missing();
        return parse_bracketed(")", "parameters", Item::Parameter);
    }

    void block_opener(std::vector<SyntaxNode>& kids) {
        if (is_punct(peek(), ":") || is_punct(peek(), "{")) kids.push_back(take());
    }

    SyntaxNode parse_declaration(std::size_t types) {
        std::vector<SyntaxNode> kids;
        for (std::size_t k = 0; k < types; ++k) kids.push_back(parse_type(*scan_type(pos_)));
        kids.push_back(take());  // declared name
        if (is_punct(peek(), "(")) {
            kids.push_back(parse_parameters());
            // const / override / throws X
            while (!at_end() && peek()->kind == Lexeme::Kind::Identifier) kids.push_back(take());
            if (is_punct(peek(), "{") || is_punct(peek(), ";") || is_punct(peek(), ":")) kids.push_back(take());
            return make("function_definition", std::move(kids));
        }
        while (true) {
            if (is_op(peek(), "=")) {
                kids.push_back(take("operator"));
                parse_chain(kids);
            } else if (is_punct(peek(), "{") && peek(1)) {
                kids.push_back(parse_bracketed("}", "initializer_list", Item::Pair));
            }
            if (is_punct(peek(), ",") && peek(1) && peek(1)->kind == Lexeme::Kind::Identifier) {
                kids.push_back(take());
                kids.push_back(take());
                continue;
            }
            break;
        }
        optional_punct(kids, ";");
        optional_punct(kids, "{");
        return make("declaration", std::move(kids));
    }

    // -- statements ----------------------------------------------------------

    SyntaxNode parse_statement() {
        const Lexeme* t = peek();
        if (is_punct(t, "}")) {
            std::vector<SyntaxNode> kids;
            kids.push_back(take());
            optional_punct(kids, ")");
            optional_punct(kids, ";");
            optional_punct(kids, ",");
            if (!at_end()) kids.push_back(parse_statement());
            return make("block_end", std::move(kids));
        }
        if (is_punct(t, "{") && !peek(1)) {
            std::vector<SyntaxNode> kids;
            kids.push_back(take());
            return make("block_start", std::move(kids));
        }
        if (is_punct(t, "@")) {
            std::vector<SyntaxNode> kids;
            kids.push_back(take());
            kids.push_back(operand_or_missing());
            return make("decorator", std::move(kids));
        }
        if (t->kind == Lexeme::Kind::Keyword) {
            if (auto stmt = parse_keyword_statement()) return std::move(*stmt);
        }
        if (auto cls = parse_class_definition()) return std::move(*cls);
        if (const auto types = declaration_types()) return parse_declaration(*types);
        return parse_expression_statement();
    }

    std::optional<SyntaxNode> parse_class_definition() {
        std::size_t i = pos_;
        while (i < toks_.size() && toks_[i].kind == Lexeme::Kind::Identifier) ++i;
        if (i >= toks_.size() || !is_kw(&toks_[i], "class")) return std::nullopt;
        std::vector<SyntaxNode> kids;
        while (pos_ < i) kids.push_back(take());  // modifiers
        kids.push_back(take());                   // class
        if (peek() && peek()->kind == Lexeme::Kind::Identifier) kids.push_back(take());
        else kids.push_back(missing());
        if (is_punct(peek(), "(")) kids.push_back(parse_bracketed(")", "argument_list", Item::Argument));
        while (!at_end() && (peek()->kind == Lexeme::Kind::Identifier || is_punct(peek(), ",") ||
                             is_punct(peek(), "."))) {
            kids.push_back(take());  // extends Base implements I, J
        }
        block_opener(kids);
        return make("class_definition", std::move(kids));
    }

    std::optional<SyntaxNode> parse_keyword_statement() {
        const std::string_view kw = text(*peek());
        std::vector<SyntaxNode> kids;
        if (kw == "assert") {
            kids.push_back(take());
            parse_chain_list(kids);
            optional_punct(kids, ";");
            return make("assert_statement", std::move(kids));
        }
        if (kw == "return" || kw == "raise" || kw == "throw" || kw == "yield" || kw == "del") {
            kids.push_back(take());
            if (starts_operand(peek())) parse_chain_list(kids);
            optional_punct(kids, ";");
            const std::string type = kw == "return" ? "return_statement"
                                     : kw == "yield" ? "yield_statement"
                                     : kw == "del"   ? "delete_statement"
                                                     : "raise_statement";
            return make(type, std::move(kids));
        }
        if (kw == "def") {
            kids.push_back(take());
            if (peek() && peek()->kind == Lexeme::Kind::Identifier) kids.push_back(take());
            else kids.push_back(missing());
            kids.push_back(parse_parameters());
            if (is_op(peek(), "->")) {
                kids.push_back(take("operator"));
                kids.push_back(parse_expression());
            }
            if (is_punct(peek(), ":")) kids.push_back(take());
            else kids.push_back(missing());
            return make("function_definition", std::move(kids));
        }
        if (kw == "class") return parse_class_definition();
        if (kw == "if" || kw == "elif" || kw == "while" || kw == "for") {
            kids.push_back(take());
            parse_chain_list(kids);
            block_opener(kids);
            const std::string type = kw == "if"      ? "if_statement"
                                     : kw == "elif"  ? "elif_clause"
                                     : kw == "while" ? "while_statement"
                                                     : "for_statement";
            return make(type, std::move(kids));
        }
        if (kw == "else" || kw == "try" || kw == "finally") {
            kids.push_back(take());
            if (kw == "else" && is_kw(peek(), "if")) {
                kids.push_back(*parse_keyword_statement());
            } else {
                block_opener(kids);
            }
            const std::string type = kw == "else" ? "else_clause" : kw == "try" ? "try_statement" : "finally_clause";
            return make(type, std::move(kids));
        }
        if (kw == "with" || kw == "except") {
            kids.push_back(take());
            if (starts_operand(peek())) parse_chain_list(kids);
            if (is_kw(peek(), "as")) {
                kids.push_back(take());
                kids.push_back(operand_or_missing());
            }
            block_opener(kids);
            return make(kw == "with" ? "with_statement" : "except_clause", std::move(kids));
        }
        if (kw == "catch") {
            kids.push_back(take());
            kids.push_back(parse_parameters());
            block_opener(kids);
            return make("catch_clause", std::move(kids));
        }
        if (kw == "import" || kw == "from") {
            kids.push_back(take());
            while (!at_end()) {
                const Lexeme* t = peek();
                if (is_word(t)) kids.push_back(take(t->kind == Lexeme::Kind::Keyword ? "keyword" : "identifier"));
                else if (is_punct(t, ".") || is_punct(t, ",") || is_punct(t, "(") || is_punct(t, ")") ||
                         is_op(t, "*") || is_punct(t, ";"))
                    kids.push_back(take());
                else
                    break;
            }
            return make("import_statement", std::move(kids));
        }
        if (kw == "pass" || kw == "break" || kw == "continue" || kw == "global" || kw == "nonlocal") {
            kids.push_back(take());
            while (!at_end() && (peek()->kind == Lexeme::Kind::Identifier || is_punct(peek(), ",")))
                kids.push_back(take());
            optional_punct(kids, ";");
            return make(std::string(kw) + "_statement", std::move(kids));
        }
        return std::nullopt;
    }

    SyntaxNode parse_expression_statement() {
        if (!starts_operand(peek())) return skip_rest();
        std::vector<SyntaxNode> kids;
        parse_chain_list(kids);
        std::string type = "expression_statement";
        if (peek() && peek()->kind == Lexeme::Kind::Operator && in(kAssignOps, text(*peek()))) {
            type = text(*peek()) == "=" ? "assignment" : "augmented_assignment";
            kids.push_back(take("operator"));
            parse_chain_list(kids);
            // a = b = c
            while (is_op(peek(), "=")) {
                kids.push_back(take("operator"));
                parse_chain_list(kids);
            }
        }
        optional_punct(kids, ";");
        optional_punct(kids, "{");
        return make(std::move(type), std::move(kids));
    }

    std::string_view src_;
    std::vector<Lexeme> toks_;
    std::size_t pos_ = 0;
};

void collect_literals(const SyntaxNode& node, const std::set<std::string>& types, std::vector<CharSpan>& out) {
    if (types.count(node.node_type)) {
        out.push_back(node.span);
        return;
    }
    for (const auto& c : node.children) collect_literals(c, types, out);
}

bool is_identifier_like(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
    });
}

}  // namespace

SyntaxNode MiniParser::parse(std::string_view line) const { return LineParser(line).parse_root(); }

std::unique_ptr<ParserBackend> make_parser(std::string_view language_id) {
    if (language_id == "mini") return std::make_unique<MiniParser>();
    throw ConfigError("unknown parser language id '" + std::string(language_id) + "'");
}

SyntaxNode parse_line(const ParserBackend& backend, std::string_view text) {
    if (text.find('\n') != std::string_view::npos) throw UsageError("parse_line: text contains a newline");
    return backend.parse(text);
}

std::vector<CharSpan> literal_positions(const SyntaxNode& node, const std::set<std::string>& literal_types) {
    std::vector<CharSpan> out;
    collect_literals(node, literal_types, out);
    return out;
}

bool contains_error(const SyntaxNode& node) {
    if (node.is_error) return true;
    return std::any_of(node.children.begin(), node.children.end(), [](const SyntaxNode& c) { return contains_error(c); });
}

bool has_structure(const SyntaxNode& node) {
    if (node.is_leaf) return node.node_type != "comment";
    return std::any_of(node.children.begin(), node.children.end(), [](const SyntaxNode& c) { return has_structure(c); });
}

std::size_t leaf_count(const SyntaxNode& node) {
    if (node.is_leaf) return 1;
    std::size_t n = 0;
    for (const auto& c : node.children) n += leaf_count(c);
    return n;
}

std::string to_sexpr(const SyntaxNode& node) {
    const std::string label = is_identifier_like(node.node_type) ? node.node_type : "\"" + node.node_type + "\"";
    if (node.is_leaf) return label;
    std::string out = "(" + label;
    for (const auto& c : node.children) out += " " + to_sexpr(c);
    return out + ")";
}

}  // namespace difftester
