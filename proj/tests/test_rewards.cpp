#include <doctest.h>

#include <cmath>
#include <set>
#include <stdexcept>

#include "grpolab/policy.hpp"
#include "grpolab/rewards.hpp"

using namespace grpolab;

TEST_CASE("parse_answer takes the first well-formed span, strict single letter") {
    CHECK(parse_answer("<think> x </think> <answer> B </answer>") == 'B');
    CHECK(parse_answer("<answer>A</answer>") == 'A');
    CHECK(!parse_answer("<answer> maybe A </answer>").has_value());
    CHECK(!parse_answer("no tags at all").has_value());
    CHECK(!parse_answer("<answer> </answer>").has_value());
    CHECK(!parse_answer("<answer> Z </answer>").has_value());  // beyond the nine letters
    CHECK(!parse_answer("<answer> B").has_value());            // unterminated
    CHECK(parse_answer("<answer> B </answer> <answer> C </answer>") == 'B');
}

TEST_CASE("format_reward demands exactly one think span then one answer span") {
    CHECK(format_reward("<think> f1 f2 </think> <answer> A </answer>") == 1);
    CHECK(format_reward("<think></think> <answer>B</answer>") == 1);
    CHECK(format_reward("<answer> A </answer>") == 0);  // missing think span
    CHECK(format_reward("<think> a </think> <think> b </think> <answer> A </answer>") == 0);
    CHECK(format_reward("<answer> A </answer> <think> x </think>") == 0);  // wrong order
    CHECK(format_reward("<think> x </think> stray <answer> A </answer>") == 0);
    CHECK(format_reward("prefix <think> x </think> <answer> A </answer>") == 0);
    CHECK(format_reward("<think> x </think> <answer> A </answer> trailing") == 0);
    CHECK(format_reward("<think> x </think> <answer> A </answer> <answer> B </answer>") == 0);
    CHECK(format_reward("") == 0);
}

TEST_CASE("classification reward over the paper's three cases") {
    CHECK(classification_reward('B', 'B', 4) == 1);
    CHECK(classification_reward('C', 'B', 4) == 0);
    CHECK(classification_reward(std::nullopt, 'B', 4) == -1);
    CHECK(classification_reward('E', 'B', 4) == -1);  // valid letter, outside the options
    CHECK_THROWS_AS(classification_reward('A', 'E', 4), std::invalid_argument);
    CHECK_THROWS_AS(classification_reward('A', 'A', 1), std::invalid_argument);
}

TEST_CASE("classification reward is exhaustively consistent for up to 9 options") {
    for (std::size_t n = 2; n <= 9; ++n) {
        for (char gold = 'A'; gold < static_cast<char>('A' + n); ++gold) {
            CHECK(classification_reward(std::nullopt, gold, n) == -1);
            for (char parsed = 'A'; parsed <= 'I'; ++parsed) {
                const int r = classification_reward(parsed, gold, n);
                if (parsed >= static_cast<char>('A' + n))
                    CHECK(r == -1);
                else if (parsed == gold)
                    CHECK(r == 1);
                else
                    CHECK(r == 0);
            }
        }
    }
}

TEST_CASE("cosine reward endpoints and invalid case") {
    const CosineSchedule sched;  // defaults: correct 1 -> 0, wrong -0.5 -> 0
    CHECK(cosine_reward(AnswerOutcome::correct, 0, sched) == doctest::Approx(1.0));
    CHECK(cosine_reward(AnswerOutcome::correct, sched.l_max, sched) ==
          doctest::Approx(0.0).epsilon(1e-12));
    CHECK(cosine_reward(AnswerOutcome::wrong_valid, 0, sched) == doctest::Approx(-0.5));
    CHECK(cosine_reward(AnswerOutcome::wrong_valid, sched.l_max, sched) ==
          doctest::Approx(0.0).epsilon(1e-12));
    CHECK(cosine_reward(AnswerOutcome::invalid, 0, sched) == -1.0);
    CHECK(cosine_reward(AnswerOutcome::invalid, 7, sched) == -1.0);
    // L clamps at l_max
    CHECK(cosine_reward(AnswerOutcome::correct, sched.l_max + 50, sched) ==
          doctest::Approx(0.0).epsilon(1e-12));
    CHECK_THROWS_AS(cosine_reward(AnswerOutcome::correct, 0, CosineSchedule{0}),
                    std::invalid_argument);
}

TEST_CASE("cosine reward is monotone over the whole length range") {
    const CosineSchedule sched;
    for (std::size_t l = 0; l < sched.l_max; ++l) {
        CHECK(cosine_reward(AnswerOutcome::correct, l, sched) >=
              cosine_reward(AnswerOutcome::correct, l + 1, sched));
        CHECK(cosine_reward(AnswerOutcome::wrong_valid, l, sched) <=
              cosine_reward(AnswerOutcome::wrong_valid, l + 1, sched));
    }
}

TEST_CASE("repetition reward counts repeated n-gram fraction") {
    CHECK(repetition_reward({1, 2, 3, 4, 5, 6}, 3) == 0.0);
    // a b a b a b a b: 6 trigrams, 2 distinct
    CHECK(repetition_reward({1, 2, 1, 2, 1, 2, 1, 2}, 3) == doctest::Approx(-2.0 / 3.0));
    CHECK(repetition_reward({1, 2}, 3) == 0.0);  // shorter than n
    CHECK(repetition_reward({}, 2) == 0.0);
    CHECK(repetition_reward({7, 7, 7, 7, 7}, 1) == doctest::Approx(-(1.0 - 1.0 / 5.0)));
    CHECK_THROWS_AS(repetition_reward({1}, 0), std::invalid_argument);
}

TEST_CASE("repetition reward stays in [-1, 0] and is zero iff nothing repeats") {
    Rng rng = make_rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t len = rand_below(rng, 20);
        const std::size_t n = 1 + rand_below(rng, 4);
        std::vector<TokenId> ids;
        for (std::size_t i = 0; i < len; ++i)
            ids.push_back(static_cast<TokenId>(rand_below(rng, 5)));
        const double r = repetition_reward(ids, n);
        CHECK(r <= 0.0);
        CHECK(r > -1.0 + -1e-12);
        if (len >= n) {
            std::set<std::vector<TokenId>> distinct;
            for (std::size_t i = 0; i + n <= len; ++i)
                distinct.insert(std::vector<TokenId>(ids.begin() + i, ids.begin() + i + n));
            const bool all_distinct = distinct.size() == len - n + 1;
            CHECK((r == 0.0) == all_distinct);
        } else {
            CHECK(r == 0.0);
        }
    }
}

TEST_CASE("think token count") {
    const Vocabulary v = make_vocabulary(4, 3);
    CHECK(think_token_count({v.think_open, v.filler_ids[0], v.filler_ids[1], v.think_close}, v) ==
          2);
    CHECK(think_token_count({v.think_open, v.think_close}, v) == 0);
    CHECK(think_token_count({v.filler_ids[0], v.answer_open}, v) == 0);
    CHECK(think_token_count({v.think_open, v.filler_ids[0]}, v) == 0);  // never closed
}

TEST_CASE("score composes the four components with the 3:1:1:1 weights") {
    const Vocabulary v = make_vocabulary(4, 2);
    const RewardScorer scorer(v);

    auto ids_of = [&](const std::string& text) {
        const auto ids = tokenize(text, v);
        REQUIRE(ids.has_value());
        return *ids;
    };

    SUBCASE("perfect short correct answer totals 5") {
        const std::string text = "<think> </think> <answer> B </answer>";
        const RewardBreakdown b = scorer.score(text, ids_of(text), 'B', 4);
        CHECK(b.format == 1);
        CHECK(b.classification == 1);
        CHECK(b.cosine == doctest::Approx(1.0));
        CHECK(b.repetition == 0.0);
        CHECK(b.total == doctest::Approx(5.0));
    }
    SUBCASE("valid but wrong with empty think span totals 0.5") {
        const std::string text = "<think> </think> <answer> C </answer>";
        const RewardBreakdown b = scorer.score(text, ids_of(text), 'B', 4);
        CHECK(b.format == 1);
        CHECK(b.classification == 0);
        CHECK(b.cosine == doctest::Approx(-0.5));
        CHECK(b.total == doctest::Approx(0.5));
    }
    SUBCASE("no tags at all totals -4") {
        const std::string text = "f1 f2";
        const RewardBreakdown b = scorer.score(text, ids_of(text), 'B', 4);
        CHECK(b.format == 0);
        CHECK(b.classification == -1);
        CHECK(b.cosine == -1.0);
        CHECK(b.repetition == 0.0);
        CHECK(b.total == doctest::Approx(-4.0));
    }
    SUBCASE("classification is -1 exactly when cosine is -1") {
        for (const std::string text :
             {std::string("<think> f1 </think> <answer> B </answer>"),
              std::string("<think> f1 </think> <answer> C </answer>"),
              std::string("<think> f1 </think> <answer> f2 </answer>"), std::string("f1 f2"),
              std::string("<answer> A </answer>")}) {
            const auto ids = tokenize(text, v);
            REQUIRE(ids.has_value());
            const RewardBreakdown b = scorer.score(text, *ids, 'B', 4);
            CHECK((b.classification == -1) == (b.cosine == -1.0));
        }
    }
}

TEST_CASE("total is linear in each component weight") {
    const Vocabulary v = make_vocabulary(4, 2);
    const std::string text = "<think> f1 f2 </think> <answer> C </answer>";
    const auto ids = tokenize(text, v);
    REQUIRE(ids.has_value());

    const RewardScorer base(v);
    const RewardBreakdown b0 = base.score(text, *ids, 'B', 4);

    RewardWeights w;
    w.w_cos = 2.5;
    const RewardScorer scaled(v, w);
    const RewardBreakdown b1 = scaled.score(text, *ids, 'B', 4);
    CHECK(b1.total - b0.total == doctest::Approx((2.5 - 1.0) * b0.cosine));

    RewardWeights wc;
    wc.w_cls = 7.0;
    const RewardBreakdown b2 = RewardScorer(v, wc).score(text, *ids, 'B', 4);
    CHECK(b2.total - b0.total == doctest::Approx((7.0 - 3.0) * b0.classification));
}

TEST_CASE("breakdown serializes to one flat json object") {
    RewardBreakdown b;
    b.format = 1;
    b.classification = -1;
    b.cosine = -1.0;
    b.repetition = -0.25;
    b.total = -3.25;
    CHECK(breakdown_to_json(b) ==
          "{\"classification\":-1,\"cosine\":-1.0,\"format\":1,\"repetition\":-0.25,"
          "\"total\":-3.25}");
}
