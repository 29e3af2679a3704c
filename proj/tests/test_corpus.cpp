#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>
#include <set>
#include <sstream>

#include "persona/corpus.hpp"

using namespace persona;

namespace {

RawPost make_post(const std::string& user, int label, const std::string& text,
                  int day = 1, int hour = 12) {
    RawPost p;
    p.user_id = user;
    p.label = label;
    p.text = text;
    p.timestamp = DateTime{2009, 6, day, hour, 0, 0};
    return p;
}

// n posts for one user, `pos` of them positive.
void add_user(Corpus& corpus, const std::string& user, int pos, int neg) {
    int day = 1;
    for (int i = 0; i < pos; ++i) corpus.add(make_post(user, 1, "p" + std::to_string(i), day++));
    for (int i = 0; i < neg; ++i) corpus.add(make_post(user, 0, "n" + std::to_string(i), day++));
}

}  // namespace

TEST_CASE("DateTime parsing and formatting") {
    DateTime dt;
    REQUIRE(DateTime::parse_iso("2009-04-06T22:19:45", &dt));
    CHECK(dt.year == 2009);
    CHECK(dt.month == 4);
    CHECK(dt.hour == 22);
    CHECK(dt.iso() == "2009-04-06T22:19:45");
    CHECK(DateTime::parse_iso("2009-04-06 22:19:45", &dt));  // space separator accepted

    REQUIRE(DateTime::parse_sentiment140("Mon Apr 06 22:19:45 PDT 2009", &dt));
    CHECK(dt.iso() == "2009-04-06T22:19:45");

    CHECK_FALSE(DateTime::parse_iso("garbage", &dt));
    CHECK_FALSE(DateTime::parse_iso("2009-13-06T22:19:45", &dt));  // month out of range
    CHECK_FALSE(DateTime::parse_sentiment140("not a timestamp", &dt));

    DateTime a{2009, 4, 6, 1, 0, 0}, b{2009, 4, 6, 2, 0, 0};
    CHECK(a < b);
}

TEST_CASE("parse_corpus on the Sentiment140-format fixture (hand-counted)") {
    std::ifstream in(std::string(PERSONA_FIXTURE_DIR) + "/s140_sample.csv");
    REQUIRE(in.good());
    CorpusSchema schema;  // defaults target the Sentiment140 layout
    ParseStats stats;
    Corpus corpus = parse_corpus(in, schema, &stats);

    CHECK(stats.rows_read == 10);
    CHECK(stats.skipped == 3);
    CHECK(stats.bad_label == 1);      // the "2" neutral row is rejected and counted
    CHECK(stats.bad_timestamp == 1);
    CHECK(stats.empty_text == 1);
    REQUIRE(corpus.size() == 7);

    CHECK(corpus.users() == std::vector<std::string>{"userA", "userB", "userD"});
    CHECK(corpus.posts_of("userA").size() == 3);
    // Label mapping comes from the schema: 4 -> 1, 0 -> 0.
    CHECK(corpus.posts()[0].label == 1);
    CHECK(corpus.posts()[3].label == 0);
    // Quoted-field handling: embedded "" and commas survive.
    CHECK(corpus.posts()[2].text == "she said \"hi\" to me");
    CHECK(corpus.posts()[5].text == "commas, quotes, and more");
    CHECK(corpus.posts()[0].timestamp.iso() == "2009-04-06T22:19:45");
}

TEST_CASE("parse_corpus spec examples") {
    CorpusSchema schema;
    schema.delimiter = ',';
    schema.quoted = true;

    SUBCASE("3-row stream with labels {0,4} mapped to {0,1}") {
        std::istringstream in(
            "\"0\",\"1\",\"Mon Apr 06 01:00:00 PDT 2009\",\"q\",\"u1\",\"hello\"\n"
            "\"4\",\"2\",\"Mon Apr 06 02:00:00 PDT 2009\",\"q\",\"u1\",\"there\"\n"
            "\"4\",\"3\",\"Mon Apr 06 03:00:00 PDT 2009\",\"q\",\"u2\",\"again\"\n");
        ParseStats stats;
        Corpus c = parse_corpus(in, schema, &stats);
        CHECK(c.size() == 3);
        CHECK(stats.skipped == 0);
        CHECK(c.posts()[0].label == 0);
        CHECK(c.posts()[1].label == 1);
    }

    SUBCASE("empty stream -> empty corpus, 0 skipped") {
        std::istringstream in("");
        ParseStats stats;
        Corpus c = parse_corpus(in, schema, &stats);
        CHECK(c.empty());
        CHECK(stats.rows_read == 0);
        CHECK(stats.skipped == 0);
    }

    SUBCASE("5 rows, 1 with garbage timestamp -> corpus of 4, skipped=1") {
        std::istringstream in(
            "\"0\",\"1\",\"Mon Apr 06 01:00:00 PDT 2009\",\"q\",\"u1\",\"a\"\n"
            "\"0\",\"2\",\"??\",\"q\",\"u1\",\"b\"\n"
            "\"4\",\"3\",\"Mon Apr 06 03:00:00 PDT 2009\",\"q\",\"u1\",\"c\"\n"
            "\"4\",\"4\",\"Mon Apr 06 04:00:00 PDT 2009\",\"q\",\"u2\",\"d\"\n"
            "\"0\",\"5\",\"Mon Apr 06 05:00:00 PDT 2009\",\"q\",\"u2\",\"e\"\n");
        ParseStats stats;
        Corpus c = parse_corpus(in, schema, &stats);
        CHECK(c.size() == 4);
        CHECK(stats.skipped == 1);
        CHECK(stats.bad_timestamp == 1);
    }
}

TEST_CASE("filter_min_posts") {
    Corpus corpus;
    add_user(corpus, "A", 6, 6);  // 12 posts
    add_user(corpus, "B", 2, 1);  // 3 posts

    SUBCASE("users below the minimum are removed") {
        Corpus out = filter_min_posts(corpus, 10);
        CHECK(out.users() == std::vector<std::string>{"A"});
        CHECK(out.size() == 12);
    }
    SUBCASE("min=1 keeps everything, order preserved") {
        Corpus out = filter_min_posts(corpus, 1);
        REQUIRE(out.size() == corpus.size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            CHECK(out.posts()[i].user_id == corpus.posts()[i].user_id);
            CHECK(out.posts()[i].text == corpus.posts()[i].text);
        }
    }
    SUBCASE("all users below min -> empty corpus") {
        Corpus out = filter_min_posts(corpus, 100);
        CHECK(out.empty());
    }
}

TEST_CASE("balance_classes spec example: 60 neg / 40 pos, one candidate") {
    Corpus core;
    add_user(core, "core1", 40, 60);
    Corpus candidates;
    add_user(candidates, "X", 15, 1);

    auto [out, report] = balance_classes(core, candidates, 0.05, 1000000);
    CHECK(report.users_added == std::vector<std::string>{"X"});
    CHECK(report.pos_count == 55);
    CHECK(report.neg_count == 61);
    // 6/116 ~ 0.0517 still above 0.05 and the pool is empty -> flagged.
    CHECK(report.imbalance == doctest::Approx(6.0 / 116.0));
    CHECK(report.threshold_unmet);
    CHECK(out.size() == 116);
}

TEST_CASE("balance_classes identity cases") {
    Corpus core;
    add_user(core, "core1", 50, 50);
    Corpus candidates;
    add_user(candidates, "X", 5, 0);

    SUBCASE("already balanced core is unchanged") {
        auto [out, report] = balance_classes(core, candidates, 0.05, 1000000);
        CHECK(report.users_added.empty());
        CHECK(out.size() == 100);
        CHECK_FALSE(report.threshold_unmet);
    }
    SUBCASE("threshold 1.0 is vacuous") {
        Corpus skewed;
        add_user(skewed, "core1", 10, 90);
        auto [out, report] = balance_classes(skewed, candidates, 1.0, 1000000);
        CHECK(report.users_added.empty());
        CHECK(out.size() == 100);
    }
}

TEST_CASE("balance_classes greedy trace with a minority flip (hand-simulated)") {
    // Start 30 neg / 10 pos. u6 (net 30) flips the minority to neg; then only
    // u4 contributes neg; afterwards nothing helps and the flag is raised.
    Corpus core;
    add_user(core, "core1", 10, 30);
    Corpus candidates;
    add_user(candidates, "u1", 4, 0);
    add_user(candidates, "u2", 6, 1);
    add_user(candidates, "u3", 2, 0);
    add_user(candidates, "u4", 0, 5);
    add_user(candidates, "u5", 6, 1);
    add_user(candidates, "u6", 30, 0);

    auto [out, report] = balance_classes(core, candidates, 0.05, 1000000);
    CHECK(report.users_added == std::vector<std::string>{"u6", "u4"});
    CHECK(report.pos_count == 40);
    CHECK(report.neg_count == 35);
    CHECK(report.imbalance == doctest::Approx(5.0 / 75.0));
    CHECK(report.threshold_unmet);
}

TEST_CASE("balance_classes never overshoots the balance") {
    // diff = 1; the only candidate has net 10 >= 2*diff and would widen the
    // gap, so it is skipped and the loop terminates flagged.
    Corpus core;
    add_user(core, "core1", 4, 5);
    Corpus candidates;
    add_user(candidates, "z", 10, 0);

    auto [out, report] = balance_classes(core, candidates, 0.05, 1000000);
    CHECK(report.users_added.empty());
    CHECK(out.size() == 9);
    CHECK(report.threshold_unmet);
}

TEST_CASE("balance_classes respects the post budget") {
    Corpus core;
    add_user(core, "core1", 10, 30);
    Corpus candidates;
    add_user(candidates, "u1", 8, 0);
    add_user(candidates, "u2", 8, 0);

    auto [out, report] = balance_classes(core, candidates, 0.05, 8);
    CHECK(report.users_added == std::vector<std::string>{"u1"});
    CHECK(report.posts_added == 8);
    CHECK(report.threshold_unmet);  // budget stopped the loop early
}

TEST_CASE("balance conservation: output posts come from core plus added users") {
    Corpus core;
    add_user(core, "core1", 10, 20);
    Corpus candidates;
    add_user(candidates, "u1", 6, 0);
    add_user(candidates, "u2", 3, 1);
    auto [out, report] = balance_classes(core, candidates, 0.05, 1000000);

    std::multiset<std::string> allowed, got;
    for (const auto& p : core.posts()) allowed.insert(p.user_id + "|" + p.text);
    for (const auto& u : report.users_added) {
        for (auto idx : candidates.posts_of(u))
            allowed.insert(candidates.posts()[idx].user_id + "|" + candidates.posts()[idx].text);
    }
    for (const auto& p : out.posts()) got.insert(p.user_id + "|" + p.text);
    CHECK(got == allowed);
}

TEST_CASE("split_by_user") {
    Corpus corpus;
    for (int u = 0; u < 10; ++u) add_user(corpus, "user" + std::to_string(u), 2, 2);

    SUBCASE("10 users, fraction 0.8, seed 7 -> 8 train / 2 test, disjoint") {
        auto [train, test] = split_by_user(corpus, 0.8, 7);
        CHECK(train.users().size() == 8);
        CHECK(test.users().size() == 2);
        std::set<std::string> train_users(train.users().begin(), train.users().end());
        for (const auto& u : test.users()) CHECK(train_users.count(u) == 0);
        CHECK(train.size() + test.size() == corpus.size());
    }
    SUBCASE("deterministic for a fixed seed") {
        auto [train1, test1] = split_by_user(corpus, 0.8, 7);
        auto [train2, test2] = split_by_user(corpus, 0.8, 7);
        CHECK(train1.users() == train2.users());
        CHECK(test1.users() == test2.users());
    }
    SUBCASE("disjoint for every seed (property)") {
        for (std::uint64_t seed = 0; seed < 25; ++seed) {
            auto [train, test] = split_by_user(corpus, 0.6, seed);
            std::set<std::string> train_users(train.users().begin(), train.users().end());
            for (const auto& u : test.users()) CHECK(train_users.count(u) == 0);
            CHECK(train.users().size() + test.users().size() == 10);
        }
    }
    SUBCASE("single user -> error") {
        Corpus one;
        add_user(one, "only", 2, 2);
        CHECK_THROWS_AS(split_by_user(one, 0.8, 7), Error);
    }
}

TEST_CASE("canonical corpus file round-trip with escaped text") {
    Corpus corpus;
    RawPost p = make_post("u1", 1, "tab\there\nnewline\\backslash");
    corpus.add(p);
    corpus.add(make_post("u2", 0, "plain text"));

    std::ostringstream out;
    write_canonical(out, corpus, "config_hash=deadbeef seed=7");
    std::istringstream in(out.str());
    std::map<std::string, std::string> header;
    Corpus again = read_canonical(in, &header);

    CHECK(header["config_hash"] == "deadbeef");
    REQUIRE(again.size() == 2);
    CHECK(again.posts()[0].text == "tab\there\nnewline\\backslash");
    CHECK(again.posts()[0].timestamp == p.timestamp);
    CHECK(again.posts()[1].label == 0);
}
