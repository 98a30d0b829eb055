#include <doctest.h>

#include <random>

#include "difftester/errors.hpp"
#include "difftester/parser.hpp"

using namespace difftester;

namespace {

const MiniParser kParser;
const std::set<std::string> kLiterals{"integer", "float"};

void collect_leaves(const SyntaxNode& n, std::vector<const SyntaxNode*>& out) {
    if (n.is_leaf) {
        if (!n.span.empty()) out.push_back(&n);
        return;
    }
    for (const auto& c : n.children) collect_leaves(c, out);
}

bool spans_nested(const SyntaxNode& n) {
    std::size_t cursor = n.span.start;
    for (const auto& c : n.children) {
        if (c.span.start < cursor || c.span.end > n.span.end || c.span.start > c.span.end) return false;
        cursor = c.span.end;
        if (!spans_nested(c)) return false;
    }
    return true;
}

std::string random_line(std::mt19937_64& rng) {
    static const std::vector<std::string> pieces{
        "assert", " ", "f", "(", ")", "1", "2.5", "==", "=", ",", "[", "]", "{", "}", "\"s\"", "\"open", "x", ".",
        "y", ";", "#c", "def", ":", "return", "+", "-", "'", "@", "new", "::", "->", "\t", "<", ">", "$", "!"};
    std::uniform_int_distribution<std::size_t> len(0, 14), pick(0, pieces.size() - 1);
    std::string s;
    for (std::size_t i = len(rng); i > 0; --i) s += pieces[pick(rng)];
    return s;
}

}  // namespace

TEST_SUITE("parser") {

TEST_CASE("golden assert statement") {
    const SyntaxNode t = parse_line(kParser, "assert f(1) == 2");
    CHECK(to_sexpr(t) == "(assert_statement keyword (call identifier (argument_list \"(\" integer \")\")) operator integer)");
    CHECK(t.span == CharSpan{0, 16});
    CHECK_FALSE(contains_error(t));
    REQUIRE(t.children.size() == 4);
    CHECK(t.children[1].span == CharSpan{7, 11});
    CHECK(t.children[3].span == CharSpan{15, 16});
}

TEST_CASE("empty line") {
    const SyntaxNode t = parse_line(kParser, "");
    CHECK(t.children.empty());
    CHECK(t.span == CharSpan{0, 0});
    CHECK_FALSE(has_structure(t));
}

TEST_CASE("truncated line contains an error node") {
    CHECK(contains_error(parse_line(kParser, "assert f(1 ==")));
}

TEST_CASE("newline in input is a usage error") {
    CHECK_THROWS_AS(parse_line(kParser, "a\nb"), UsageError);
}

TEST_CASE("literal_positions") {
    CHECK(literal_positions(parse_line(kParser, "x = 1"), kLiterals) == std::vector<CharSpan>{{4, 5}});
    CHECK(literal_positions(parse_line(kParser, "f()"), kLiterals).empty());
    CHECK(literal_positions(parse_line(kParser, "g(1, 2.5)"), kLiterals) == std::vector<CharSpan>{{2, 3}, {5, 8}});
    // Strings are mergeable unless configured otherwise.
    CHECK(literal_positions(parse_line(kParser, "h(\"a\")"), kLiterals).empty());
    CHECK(literal_positions(parse_line(kParser, "h(\"a\")"), {"string"}) == std::vector<CharSpan>{{2, 5}});
}

TEST_CASE("dialect goldens") {
    const std::vector<std::pair<std::string, std::string>> cases{
        {"x = []", "(assignment identifier operator (list \"[\" \"]\"))"},
        {"def test_a():", "(function_definition keyword identifier (parameters \"(\" \")\") \":\")"},
        {"    stack.push(5);",
         "(expression_statement (call (attribute identifier \".\" identifier) (argument_list \"(\" integer \")\")) \";\")"},
        {"}", "(block_end \"}\")"},
        {"x += 1.5", "(augmented_assignment identifier operator float)"},
        {"@Test", "(decorator \"@\" identifier)"},
    };
    for (const auto& [line, expected] : cases) {
        CAPTURE(line);
        const SyntaxNode t = parse_line(kParser, line);
        CHECK(to_sexpr(t) == expected);
        CHECK_FALSE(contains_error(t));
    }
}

TEST_CASE("comment-only lines carry no structure") {
    CHECK_FALSE(has_structure(parse_line(kParser, "   # just a note")));
    CHECK_FALSE(has_structure(parse_line(kParser, "// note")));
    CHECK(has_structure(parse_line(kParser, "x = 1  # note")));
}

TEST_CASE("totality and span soundness on fuzzed lines") {
    std::mt19937_64 rng(20240501);
    for (int i = 0; i < 2000; ++i) {
        const std::string line = random_line(rng);
        CAPTURE(line);
        const SyntaxNode t = parse_line(kParser, line);
        REQUIRE(t.span == CharSpan{0, line.size()});
        REQUIRE(spans_nested(t));
        // Leaves are exactly the non-empty lexemes, in order.
        std::vector<const SyntaxNode*> leaves;
        collect_leaves(t, leaves);
        const auto lexemes = lex_line(line);
        REQUIRE(leaves.size() == lexemes.size());
        for (std::size_t j = 0; j < leaves.size(); ++j) CHECK(leaves[j]->span == lexemes[j].span);
        CHECK(parse_line(kParser, line) == t);
    }
}

TEST_CASE("error isolation: valid prefix plus trailing garbage") {
    const std::vector<std::string> valid{"assert f(1) == 2", "x = g(a, b)", "return y", "stack.push(5);"};
    const std::vector<std::string> garbage{" $$ )", " ] ]", " ::: $"};
    for (const auto& v : valid) {
        const SyntaxNode clean = parse_line(kParser, v);
        REQUIRE_FALSE(contains_error(clean));
        for (const auto& g : garbage) {
            const std::string line = v + g;
            CAPTURE(line);
            const SyntaxNode t = parse_line(kParser, line);
            CHECK(contains_error(t));
            // Everything within the valid prefix sits in error-free subtrees.
            for (const auto& c : t.children) {
                if (c.span.end <= v.size()) CHECK_FALSE(contains_error(c));
                if (c.is_error) CHECK(c.span.start >= v.size());
            }
        }
    }
}

TEST_CASE("make_parser") {
    CHECK(make_parser("mini")->language_id() == "mini");
    CHECK_THROWS_AS(make_parser("cobol"), ConfigError);
}

}
