#include <doctest.h>

#include "difftester/errors.hpp"
#include "difftester/parser.hpp"
#include "difftester/pattern_engine.hpp"
#include "oracles.hpp"

using namespace difftester;

namespace {

const MiniParser kParser;
const std::set<std::string> kLiterals{"integer", "float"};

SyntaxNode leaf(const std::string& t) { return SyntaxNode::leaf(t, {}); }
SyntaxNode node(const std::string& t, std::vector<SyntaxNode> kids) { return SyntaxNode::branch(t, std::move(kids), {}); }

// One word-level token per lexeme-ish piece; spaces owned by the following piece.
struct Lines {
    std::vector<LineRecord> records;
    std::vector<SyntaxNode> asts;
    std::vector<OffsetMap> offsets;
};

Lines pool(const std::vector<std::vector<std::string>>& instances) {
    Lines out;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        std::string text;
        OffsetMap off;
        for (const auto& piece : instances[i]) {
            off.push_back({text.size(), text.size() + piece.size()});
            text += piece;
        }
        for (auto& rec : split_lines(text, off, i)) {
            out.asts.push_back(parse_line(kParser, rec.text));
            out.records.push_back(std::move(rec));
        }
        out.offsets.push_back(off);
    }
    return out;
}

std::vector<std::string> texts_at(const std::vector<std::string>& pieces, const std::vector<std::size_t>& positions) {
    std::vector<std::string> out;
    for (std::size_t p : positions) out.push_back(pieces[p]);
    return out;
}

}  // namespace

TEST_SUITE("pattern_engine") {

TEST_CASE("merge_trees basic cases") {
    CHECK(merge_trees(leaf("identifier"), leaf("identifier"), kLiterals) == MergedNode::of("identifier"));
    CHECK(merge_trees(leaf("identifier"), leaf("integer"), kLiterals).empty);
    CHECK(merge_trees(leaf("integer"), leaf("integer"), kLiterals).empty);
    CHECK(merge_trees(SyntaxNode::error({}, {}), leaf("identifier"), kLiterals).empty);
    CHECK(merge_trees(SyntaxNode::error({}, {}), SyntaxNode::error({}, {}), kLiterals).empty);
}

TEST_CASE("merge_trees drops literal and mismatched children") {
    const auto a = node("call", {leaf("identifier"), node("args", {leaf("integer"), leaf("identifier")})});
    const auto b = node("call", {leaf("identifier"), node("args", {leaf("integer"), leaf("string")})});
    const auto m = merge_trees(a, b, kLiterals);
    CHECK(m == MergedNode::of("call", {MergedNode::of("identifier"), MergedNode::of("args")}));
    CHECK(to_sexpr(m) == "(call identifier args)");
}

TEST_CASE("merge_trees on accumulators") {
    const auto a = parse_line(kParser, "assert f(1) == 2");
    const auto b = parse_line(kParser, "assert f(3) == 4");
    const MergedNode ab = merge_trees(a, b, kLiterals);
    CHECK(merge_trees(ab, ab, kLiterals) == ab);
    // Positional zip: the accumulator's ")" now faces b's literal and drops out.
    CHECK(to_sexpr(merge_trees(ab, b, kLiterals)) ==
          "(assert_statement keyword (call identifier (argument_list \"(\")) operator)");
}

TEST_CASE("oracle equivalence, idempotence, shrinking, symmetric emptiness") {
    oracle::TreeGen gen(7);
    for (int i = 0; i < 500; ++i) {
        const oracle::Tree a = gen.tree();
        const oracle::Tree b = gen.unit() < 0.5 ? gen.mutate(a) : gen.tree();
        const SyntaxNode sa = oracle::to_syntax(a), sb = oracle::to_syntax(b);
        const MergedNode ab = merge_trees(sa, sb, kLiterals);
        CHECK(oracle::from_merged(ab) == oracle::brute_merge(a, b, kLiterals));
        CHECK(ab.empty == merge_trees(sb, sa, kLiterals).empty);
        if (!ab.empty) CHECK(leaf_count(ab) <= std::min(leaf_count(sa), leaf_count(sb)));

        const oracle::Tree c = gen.error_free();
        CHECK(oracle::from_merged(merge_trees(oracle::to_syntax(c), oracle::to_syntax(c), kLiterals)) ==
              oracle::strip_literals(c, kLiterals));
    }
}

TEST_CASE("group_lines first-fit") {
    const auto lines = pool({{"assert", " f", "(", "1", ")", " ==", " 2", "\n", "assert", " f", "(", "3", ")", " ==",
                              " 4", "\n", "x", " =", " [", "]"}});
    const auto groups = group_lines(lines.records, lines.asts, kLiterals);
    REQUIRE(groups.size() == 2);
    CHECK(groups[0].members == std::vector<std::size_t>{0, 1});
    CHECK(groups[0].repetitive());
    CHECK(groups[1].members == std::vector<std::size_t>{2});
    CHECK_FALSE(groups[1].repetitive());
    CHECK(to_sexpr(groups[0].merged) == "(assert_statement keyword (call identifier (argument_list \"(\" \")\")) operator)");
}

TEST_CASE("group_lines singletons and identical lines") {
    auto one = pool({{"y", " =", " g", "(", ")"}});
    auto g1 = group_lines(one.records, one.asts, kLiterals);
    REQUIRE(g1.size() == 1);
    CHECK_FALSE(g1[0].repetitive());

    auto two = pool({{"y", " =", " g", "(", ")"}, {"y", " =", " g", "(", ")"}});
    auto g2 = group_lines(two.records, two.asts, kLiterals);
    REQUIRE(g2.size() == 1);
    CHECK(g2[0].member_keys == std::vector<LineKey>{{0, 0}, {1, 0}});
    CHECK(oracle::from_merged(g2[0].merged) == oracle::strip_literals(oracle::from_syntax(two.asts[0]), kLiterals));
}

TEST_CASE("blank and comment lines never join groups") {
    auto lines = pool({{"# note", "\n", "\n", "# note"}});
    const auto groups = group_lines(lines.records, lines.asts, kLiterals);
    CHECK(groups.size() == 3);
    for (const auto& g : groups) CHECK_FALSE(g.repetitive());
}

TEST_CASE("group soundness") {
    auto lines = pool({{"assert", " f", "(", "1", ")", "\n", "x", " =", " g", "(", "a", ")", "\n", "assert", " h", "\n",
                        "x", " =", " 2"}});
    for (const auto& g : group_lines(lines.records, lines.asts, kLiterals))
        for (std::size_t m : g.members) CHECK_FALSE(merge_trees(g.merged, lines.asts[m], kLiterals).empty);
}

TEST_CASE("match_token_positions licenses structure, not literals") {
    const std::vector<std::string> pieces{"assert", " f", "(", "1", ")", " ==", " 2", "\n",
                                          "assert", " f", "(", "3", ")", " ==", " 4"};
    auto lines = pool({pieces});
    const auto groups = group_lines(lines.records, lines.asts, kLiterals);
    const auto pos = match_token_positions(groups[0], lines.records[0], lines.asts[0], lines.offsets[0], kLiterals);
    CHECK(texts_at(pieces, pos) == std::vector<std::string>{"assert", " f", "(", ")", " =="});
    const auto pos1 = match_token_positions(groups[0], lines.records[1], lines.asts[1], lines.offsets[0], kLiterals);
    CHECK(texts_at(pieces, pos1) == std::vector<std::string>{"assert", " f", "(", ")", " =="});
}

TEST_CASE("match_token_positions with childless merged node") {
    const std::vector<std::string> pieces{"assert", " x", "\n", "assert", " 1"};
    auto lines = pool({pieces});
    const auto groups = group_lines(lines.records, lines.asts, kLiterals);
    REQUIRE(groups.size() == 1);
    // keyword merges; identifier vs integer does not.
    CHECK(texts_at(pieces, match_token_positions(groups[0], lines.records[0], lines.asts[0], lines.offsets[0],
                                                 kLiterals)) == std::vector<std::string>{"assert"});

    PatternGroup bare{MergedNode::of("assert_statement"), {0, 1}, {{0, 0}, {0, 1}}};
    CHECK(match_token_positions(bare, lines.records[0], lines.asts[0], lines.offsets[0], kLiterals).empty());
}

TEST_CASE("token straddling a licensed and an unlicensed span is excluded") {
    // "f(" is one token: "f" is licensed, "(" too; "(1" straddles "(" and the literal.
    const std::vector<std::string> a{"f", "(1", ")", "\n", "f", "(2", ")"};
    auto lines = pool({a});
    const auto groups = group_lines(lines.records, lines.asts, kLiterals);
    REQUIRE(groups[0].repetitive());
    CHECK(texts_at(a, match_token_positions(groups[0], lines.records[0], lines.asts[0], lines.offsets[0], kLiterals)) ==
          std::vector<std::string>{"f", ")"});
}

TEST_CASE("greedy alignment skips mismatched line children") {
    // Group merged node lost the middle child; the line still aligns later children.
    const std::vector<std::string> p{"g", "(", "a", ",", " 1", ")", "\n", "g", "(", "2", ",", " b", ")"};
    auto lines = pool({p});
    const auto groups = group_lines(lines.records, lines.asts, kLiterals);
    REQUIRE(groups.size() == 1);
    const auto pos = match_token_positions(groups[0], lines.records[0], lines.asts[0], lines.offsets[0], kLiterals);
    for (std::size_t q : pos) CHECK(p[q] != " 1");
    CHECK(std::find(pos.begin(), pos.end(), 0u) != pos.end());
}

TEST_CASE("usage errors") {
    const std::vector<std::string> p{"x", " =", " 1", "\n", "y", " =", " 2", "\n", "return"};
    auto lines = pool({p});
    const auto groups = group_lines(lines.records, lines.asts, kLiterals);
    REQUIRE(groups.size() == 2);
    CHECK_THROWS_AS(match_token_positions(groups[1], lines.records[2], lines.asts[2], lines.offsets[0], kLiterals),
                    UsageError);
    CHECK_THROWS_AS(match_token_positions(groups[0], lines.records[2], lines.asts[2], lines.offsets[0], kLiterals),
                    UsageError);
}

TEST_CASE("unmatchable tokens are never licensed") {
    const std::vector<std::string> p{"x", " =", " y", "\n", "x", " =", " y\nz", "\n", "x", " =", " y"};
    auto lines = pool({p});
    const auto groups = group_lines(lines.records, lines.asts, kLiterals);
    for (const auto& g : groups) {
        if (!g.repetitive()) continue;
        for (std::size_t m : g.members)
            for (std::size_t q : match_token_positions(g, lines.records[m], lines.asts[m], lines.offsets[0], kLiterals))
                CHECK(q != 6);
    }
}

}
