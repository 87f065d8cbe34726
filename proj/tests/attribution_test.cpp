#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <functional>
#include <mutex>
#include <numeric>
#include <random>
#include <set>

#include "pieceshap/attribution.hpp"
#include "test_support.hpp"

namespace pieceshap {
namespace {

const ExplainLimits kLimits{EvalLimit::move_time_ms(100), EvalLimit::move_time_ms(10)};

const char* const kTwoRooksQueen = "8/2k5/2q5/8/4R3/4RK2/8/8 w - - 0 1";

// Deterministic non-additive evaluator: the score is a hash of the placement
// and side to move.
class HashEvaluator final : public Evaluator {
public:
    const std::string& id() const override { return id_; }
    EvaluationOutcome evaluate(const Position& position, const EvalLimit&) override {
        ++calls;
        const auto fen = canonical_fen(position);
        const auto h = std::hash<std::string>{}(fen.substr(0, fen.find(' ') + 2));
        if (h % 37 == 0) {
            const int m = static_cast<int>(h % 6) - 3;
            return EvaluationOutcome::scored(EngineScore::mate_in(m >= 0 ? m + 1 : m));
        }
        return EvaluationOutcome::scored(EngineScore::centipawns(static_cast<int>(h % 2001) - 1000));
    }
    unsigned parallelism() const override { return 4; }

    std::atomic<int> calls{0};

private:
    std::string id_ = "hash";
};

// Material evaluator that refuses some positions.
class PickyEvaluator final : public Evaluator {
public:
    explicit PickyEvaluator(std::function<bool(const Position&)> refuse) : refuse_(std::move(refuse)) {}
    const std::string& id() const override { return material_.id(); }
    EvaluationOutcome evaluate(const Position& position, const EvalLimit& limit) override {
        if (refuse_(position)) {
            return EvaluationOutcome::rejected("refused");
        }
        return material_.evaluate(position, limit);
    }

private:
    MaterialEvaluator material_;
    std::function<bool(const Position&)> refuse_;
};

double material_oracle(const Position& p, std::uint64_t mask) {
    static const int kValues[] = {100, 300, 300, 500, 900, 0};
    if (mask == 0) {
        return 0.5;
    }
    int balance = 0;
    unsigned i = 0;
    for (int sq = 0; sq < 64; ++sq) {
        const auto& piece = p.board()[sq];
        if (!piece || piece->kind == PieceKind::kKing) {
            continue;
        }
        if (mask & (std::uint64_t{1} << i)) {
            const int v = kValues[static_cast<int>(piece->kind)];
            balance += piece->color == Color::kWhite ? v : -v;
        }
        ++i;
    }
    return testing::oracle_logistic(balance);
}

double phi_sum(const Explanation& e) {
    double s = 0;
    for (const auto& c : e.contributions) {
        s += c.phi;
    }
    return s;
}

std::vector<double> phis(const Explanation& e) {
    std::vector<double> out;
    for (const auto& c : e.contributions) {
        out.push_back(c.phi);
    }
    return out;
}

TEST(Mapping, LogisticValues) {
    EXPECT_EQ(score_to_probability(EngineScore::centipawns(0)).value(), 0.5);
    EXPECT_NEAR(score_to_probability(EngineScore::centipawns(100)).value(), testing::oracle_logistic(100), 1e-15);
    EXPECT_NEAR(score_to_probability(EngineScore::centipawns(100)).value(), 0.590975619668374, 1e-12);
    EXPECT_NEAR(score_to_probability(EngineScore::mate_in(3)).value(), testing::oracle_logistic(9997), 1e-15);
    EXPECT_NEAR(score_to_probability(EngineScore::mate_in(-3)).value(), testing::oracle_logistic(-9997), 1e-18);
    ProbabilityMapping steep{1e-2, 10000};
    EXPECT_NEAR(score_to_probability(EngineScore::centipawns(100), steep).value(), testing::oracle_logistic(100, 1e-2),
                1e-15);
}

TEST(Mapping, SymmetryAndComplement) {
    for (int cp = -12000; cp <= 12000; cp += 7) {
        const auto p = score_to_probability(EngineScore::centipawns(cp));
        const auto q = score_to_probability(EngineScore::centipawns(-cp));
        EXPECT_NEAR(p.value() + q.value(), 1.0, 4.5e-16) << cp;
        EXPECT_EQ(p.complement(), q.value()) << cp;
    }
}

TEST(Mapping, StrictlyMonotone) {
    // Worst for White first: mated in 1, mated in 2, ...
    std::vector<EngineScore> ladder;
    for (int m = 1; m <= 30; ++m) {
        ladder.push_back(EngineScore::mate_in(-m));
    }
    for (int cp = -9950; cp <= 9950; cp += 50) {
        ladder.push_back(EngineScore::centipawns(cp));
    }
    for (int m = 30; m >= 1; --m) {
        ladder.push_back(EngineScore::mate_in(m));
    }
    for (std::size_t i = 1; i < ladder.size(); ++i) {
        EXPECT_LT(score_to_probability(ladder[i - 1]), score_to_probability(ladder[i]))
            << ladder[i - 1].to_string() << " vs " << ladder[i].to_string();
    }
}

TEST(Mapping, RangeChecks) {
    EXPECT_THROW(WinProbability(1.5), std::invalid_argument);
    EXPECT_THROW(WinProbability(-0.1), std::invalid_argument);
    EXPECT_THROW(WinProbability(std::nan("")), std::invalid_argument);
    EXPECT_THROW((ProbabilityMapping{0.0, 10000}.validate()), std::invalid_argument);
    EXPECT_THROW((ProbabilityMapping{1e-3, 0}.validate()), std::invalid_argument);
}

TEST(ShapleyTable, MatchesAllPermutations) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (unsigned n = 1; n <= 7; ++n) {
        std::vector<double> table(std::size_t{1} << n);
        for (auto& v : table) {
            v = u(rng);
        }
        const auto expected = testing::all_permutations_shapley(n, [&](std::uint64_t m) { return table[m]; });
        const auto got = shapley_from_table(table, n);
        for (unsigned i = 0; i < n; ++i) {
            EXPECT_NEAR(got[i], expected[i], 1e-12) << n << ":" << i;
        }
    }
    EXPECT_THROW(shapley_from_table(std::vector<double>(3), 2), std::invalid_argument);
}

TEST(Exact, TwoRooksAgainstQueen) {
    MaterialEvaluator m;
    const auto p = parse_fen(kTwoRooksQueen);
    const auto e = explain_exact(p, m, kLimits);
    ASSERT_EQ(e.contributions.size(), 3U);
    EXPECT_EQ(e.contributions[0].piece.label(), "Re3");
    EXPECT_EQ(e.contributions[1].piece.label(), "Re4");
    EXPECT_EQ(e.contributions[2].piece.label(), "qc6");
    const auto expected = testing::all_permutations_shapley(3, [&](std::uint64_t mask) { return material_oracle(p, mask); });
    for (unsigned i = 0; i < 3; ++i) {
        EXPECT_NEAR(e.contributions[i].phi, expected[i], 1e-12);
    }
    // Interchangeable rooks.
    EXPECT_EQ(e.contributions[0].phi, e.contributions[1].phi);
    EXPECT_NEAR(e.full_value, testing::oracle_logistic(100), 1e-15);
    EXPECT_NEAR(e.base_value + phi_sum(e), e.full_value, 1e-9);
    EXPECT_EQ(e.method, Method::kExact);
    EXPECT_EQ(e.evaluations_used, 8U);
    EXPECT_EQ(e.fallback_count, 0U);
    EXPECT_EQ(e.evaluator_id, "material");
    EXPECT_FALSE(e.seed.has_value());
}

TEST(Exact, RookAgainstQueenClosedForm) {
    MaterialEvaluator m;
    const auto p = parse_fen("7k/8/2q5/8/8/8/8/R6K w - - 0 1");
    const auto e = explain_exact(p, m, kLimits);
    ASSERT_EQ(e.contributions.size(), 2U);
    const double f_r = testing::oracle_logistic(500);
    const double f_q = testing::oracle_logistic(-900);
    const double f_rq = testing::oracle_logistic(-400);
    const double phi_r = 0.5 * (f_r - 0.5) + 0.5 * (f_rq - f_q);
    const double phi_q = 0.5 * (f_q - 0.5) + 0.5 * (f_rq - f_r);
    EXPECT_NEAR(phi_r, 0.2572128581880493, 1e-15);
    EXPECT_NEAR(phi_q, -0.5705740440512759, 1e-15);
    EXPECT_NEAR(e.contributions[0].phi, phi_r, 1e-12);
    EXPECT_NEAR(e.contributions[1].phi, phi_q, 1e-12);
    EXPECT_NEAR(phi_r + phi_q, f_rq - 0.5, 1e-12);
}

TEST(Exact, KingsOnly) {
    HashEvaluator h;
    const auto e = explain(parse_fen("8/2k5/8/8/8/5K2/8/8 w - - 0 1"), h, kLimits);
    EXPECT_TRUE(e.contributions.empty());
    EXPECT_EQ(e.full_value, 0.5);
    EXPECT_EQ(e.base_value, 0.5);
    EXPECT_EQ(e.evaluations_used, 1U);
    EXPECT_EQ(h.calls.load(), 0);
}

TEST(Exact, RandomGamesAgreeWithPermutationOracle) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 1 + trial % 7;
        const auto p = testing::random_position(rng, n);
        HashEvaluator h;
        const auto e = explain_exact(p, h, kLimits);
        const auto indexing = non_king_indexing(p);
        ASSERT_EQ(e.contributions.size(), indexing.size());
        HashEvaluator oracle_eval;
        const auto full = SubsetId::all(static_cast<unsigned>(indexing.size())).bits();
        const auto expected = testing::all_permutations_shapley(
            static_cast<unsigned>(indexing.size()), [&](std::uint64_t mask) {
                const auto limit = mask == full ? kLimits.root : kLimits.perturbation;
                return evaluate_subset(p, indexing, SubsetId(mask, static_cast<unsigned>(indexing.size())), oracle_eval,
                                       limit, {})
                    .probability.value();
            });
        for (std::size_t i = 0; i < expected.size(); ++i) {
            EXPECT_NEAR(e.contributions[i].phi, expected[i], 1e-12) << to_fen(p);
        }
        EXPECT_NEAR(e.base_value + phi_sum(e), e.full_value, 1e-9) << to_fen(p);
        EXPECT_EQ(e.evaluations_used, std::size_t{1} << indexing.size());
        // Never more engine calls than non-empty subsets (plus one flip retry each).
        EXPECT_LE(h.calls.load(), 2 * ((1 << indexing.size()) - 1));
    }
}

TEST(Exact, DummyPieceGetsZero) {
    auto values = material_value_table_default();
    values[PieceKind::kKnight] = 0;
    MaterialEvaluator m("knightless", values);
    const auto e = explain_exact(parse_fen("4k3/8/8/3n4/8/8/8/1R2K3 w - - 0 1"), m, kLimits);
    ASSERT_EQ(e.contributions.size(), 2U);
    EXPECT_EQ(e.contributions[1].piece.label(), "nd5");
    EXPECT_NEAR(e.contributions[1].phi, 0.0, 1e-12);
    EXPECT_NEAR(e.contributions[0].phi, testing::oracle_logistic(500) - 0.5, 1e-12);
}

TEST(Exact, UnresolvableSubsetsFallBack) {
    MaterialEvaluator m;
    const auto p = parse_fen("4k1bR/8/8/8/8/8/8/r1B1K3 w - - 0 1");
    const auto e = explain_exact(p, m, kLimits);
    const auto indexing = non_king_indexing(p);
    const unsigned n = static_cast<unsigned>(indexing.size());
    std::size_t unresolvable = 0;
    for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << n); ++mask) {
        const auto sub = build_subset_position(p, indexing, SubsetId(mask, n));
        if (testing::oracle_side_not_to_move_in_check(sub) &&
            testing::oracle_side_not_to_move_in_check(flip_side_to_move(sub))) {
            ++unresolvable;
        }
    }
    EXPECT_GE(unresolvable, 1U);
    EXPECT_EQ(e.fallback_count, unresolvable);
    EXPECT_NEAR(e.base_value + phi_sum(e), e.full_value, 1e-9);
}

TEST(Exact, RejectedPositionIsRetriedFlipped) {
    PickyEvaluator black_refused([](const Position& q) { return q.side_to_move() == Color::kBlack; });
    MaterialEvaluator m;
    const auto p = parse_fen("7k/8/2q5/8/8/8/8/R6K b - - 0 1");
    const auto picky = explain_exact(p, black_refused, kLimits);
    const auto plain = explain_exact(p, m, kLimits);
    EXPECT_EQ(picky.fallback_count, 0U);
    EXPECT_EQ(phis(picky), phis(plain));

    PickyEvaluator refuses_all([](const Position&) { return true; });
    const auto none = explain_exact(p, refuses_all, kLimits);
    EXPECT_EQ(none.fallback_count, 3U);
    EXPECT_EQ(none.full_value, 0.5);
    for (const auto& c : none.contributions) {
        EXPECT_EQ(c.phi, 0.0);
    }
}

TEST(Exact, CacheIsTransparent) {
    std::mt19937_64 rng(5);
    const auto p = testing::random_position(rng, 6);
    HashEvaluator h;
    const auto uncached = explain_exact(p, h, kLimits);
    SubsetCache cache;
    ExplainOptions options;
    options.cache = &cache;
    const auto first = explain_exact(p, h, kLimits, options);
    EXPECT_EQ(first, uncached);
    EXPECT_GT(cache.size(), 0U);
    const int before = h.calls.load();
    const auto second = explain_exact(p, h, kLimits, options);
    EXPECT_EQ(second, uncached);
    // Only the root search runs again.
    EXPECT_EQ(h.calls.load() - before, 1);
}

TEST(Exact, WorkerCountDoesNotMatter) {
    std::mt19937_64 rng(21);
    const auto p = testing::random_position(rng, 8);
    HashEvaluator h;
    ExplainOptions one;
    one.workers = 1;
    ExplainOptions many;
    many.workers = 8;
    EXPECT_EQ(explain_exact(p, h, kLimits, one), explain_exact(p, h, kLimits, many));
}

TEST(Exact, ProgressIsMonotoneAndComplete) {
    MaterialEvaluator m;
    std::mutex mu;
    std::vector<std::pair<std::size_t, std::size_t>> seen;
    ExplainOptions options;
    options.progress = [&](std::size_t done, std::size_t total) {
        std::lock_guard lock(mu);
        seen.emplace_back(done, total);
    };
    explain_exact(parse_fen(kTwoRooksQueen), m, kLimits, options);
    ASSERT_FALSE(seen.empty());
    for (std::size_t i = 1; i < seen.size(); ++i) {
        EXPECT_GE(seen[i].first, seen[i - 1].first);
    }
    EXPECT_EQ(seen.back(), std::make_pair(std::size_t{8}, std::size_t{8}));
}

TEST(Exact, ThresholdEnforced) {
    std::mt19937_64 rng(2);
    MaterialEvaluator m;
    const auto p = testing::random_position(rng, 5);
    ExplainOptions options;
    options.sampling.exact_threshold = 4;
    try {
        explain_exact(p, m, kLimits, options);
        FAIL();
    } catch (const AttributionError& e) {
        EXPECT_EQ(e.kind(), AttributionError::Kind::kTooManyPieces);
    }
    EXPECT_EQ(explain(p, m, kLimits, options).method, Method::kSampling);
    options.sampling.exact_threshold = 5;
    EXPECT_EQ(explain(p, m, kLimits, options).method, Method::kExact);
    options.sampling.exact_threshold = kMaxExactPieces + 1;
    EXPECT_THROW(explain(p, m, kLimits, options), std::invalid_argument);
}

TEST(Sampling, BudgetTooSmall) {
    MaterialEvaluator m;
    const auto p = parse_fen(kTwoRooksQueen);
    ExplainOptions options;
    options.sampling.max_evaluations = 7;
    try {
        explain_sampling(p, m, kLimits, options);
        FAIL();
    } catch (const AttributionError& e) {
        EXPECT_EQ(e.kind(), AttributionError::Kind::kBudgetTooSmall);
    }
    options.sampling.max_evaluations = 8;
    EXPECT_NO_THROW(explain_sampling(p, m, kLimits, options));
}

TEST(Sampling, TwoPiecesEqualsExact) {
    MaterialEvaluator m;
    const auto p = parse_fen("7k/8/2q5/8/8/8/8/R6K w - - 0 1");
    ExplainOptions options;
    options.sampling.seed = 99;
    const auto s = explain_sampling(p, m, kLimits, options);
    const auto x = explain_exact(p, m, kLimits);
    ASSERT_EQ(s.contributions.size(), 2U);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_NEAR(s.contributions[i].phi, x.contributions[i].phi, 1e-12);
    }
    EXPECT_EQ(s.method, Method::kSampling);
    EXPECT_EQ(s.seed, std::optional<std::uint64_t>(99));
    EXPECT_EQ(s.evaluations_used, 4U);
}

TEST(Sampling, FullCoverageMatchesExact) {
    std::mt19937_64 rng(6);
    const auto p = testing::random_position(rng, 6);
    HashEvaluator h;
    const auto s = explain_sampling(p, h, kLimits);
    const auto x = explain_exact(p, h, kLimits);
    for (std::size_t i = 0; i < x.contributions.size(); ++i) {
        EXPECT_NEAR(s.contributions[i].phi, x.contributions[i].phi, 1e-9);
    }
    EXPECT_EQ(s.evaluations_used, 64U);
}

TEST(Sampling, DeterministicForSeed) {
    std::mt19937_64 rng(7);
    const auto p = testing::random_position(rng, 18);
    HashEvaluator h;
    ExplainOptions a;
    a.sampling.max_evaluations = 400;
    a.sampling.seed = 42;
    a.workers = 1;
    ExplainOptions b = a;
    b.workers = 6;
    const auto ea = explain_sampling(p, h, kLimits, a);
    const auto eb = explain_sampling(p, h, kLimits, b);
    EXPECT_EQ(ea, eb);
    EXPECT_LE(ea.evaluations_used, 400U);
    EXPECT_GE(ea.evaluations_used, 2U * 18 + 2);
    EXPECT_NEAR(ea.base_value + phi_sum(ea), ea.full_value, 1e-9);
    ExplainOptions c = a;
    c.sampling.seed = 43;
    EXPECT_NE(phis(explain_sampling(p, h, kLimits, c)), phis(ea));
}

TEST(Sampling, PartialBudgetApproximatesExact) {
    // 10 pieces, fewer evaluations than subsets: pure permutation estimate.
    const auto p = parse_fen("r1b1k3/pp6/8/8/8/8/PPP5/RNB1K3 w - - 0 1");
    MaterialEvaluator m;
    const auto x = explain_exact(p, m, kLimits);
    ExplainOptions options;
    options.sampling.max_evaluations = 700;
    options.sampling.seed = 1;
    const auto s = explain_sampling(p, m, kLimits, options);
    ASSERT_LT(s.evaluations_used, 1024U);
    double worst = 0;
    for (std::size_t i = 0; i < x.contributions.size(); ++i) {
        worst = std::max(worst, std::abs(s.contributions[i].phi - x.contributions[i].phi));
    }
    EXPECT_LT(worst, 0.02);
    EXPECT_NEAR(s.base_value + phi_sum(s), s.full_value, 1e-9);
}

TEST(Sampling, ConvergesWithBudget) {
    const auto p = parse_fen("r1b1k3/pp6/8/8/8/8/PPP5/RNB1K3 w - - 0 1");
    MaterialEvaluator m;
    const auto x = explain_exact(p, m, kLimits);
    const auto error_for = [&](std::size_t budget) {
        double total = 0;
        for (std::uint64_t seed = 0; seed < 8; ++seed) {
            ExplainOptions options;
            options.sampling.max_evaluations = budget;
            options.sampling.seed = seed;
            const auto s = explain_sampling(p, m, kLimits, options);
            for (std::size_t i = 0; i < x.contributions.size(); ++i) {
                total += std::abs(s.contributions[i].phi - x.contributions[i].phi);
            }
        }
        return total;
    };
    EXPECT_LT(error_for(600), error_for(60));
}

TEST(Compare, SortedByMagnitude) {
    MaterialEvaluator m;
    auto values = material_value_table_default();
    values[PieceKind::kQueen] = 300;
    MaterialEvaluator cheap_queen("cheap-queen", values);
    const auto p = parse_fen(kTwoRooksQueen);
    const auto a = explain_exact(p, m, kLimits);
    const auto b = explain_exact(p, cheap_queen, kLimits);
    const auto rows = compare_explanations(a, b);
    ASSERT_EQ(rows.size(), 3U);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        EXPECT_GE(std::abs(rows[i - 1].delta), std::abs(rows[i].delta));
    }
    for (const auto& r : rows) {
        EXPECT_EQ(r.delta, r.phi_a - r.phi_b);
    }
    EXPECT_EQ(rows[0].piece.label(), "qc6");
    EXPECT_EQ((std::set<std::string>{rows[1].piece.label(), rows[2].piece.label()}),
              (std::set<std::string>{"Re3", "Re4"}));

    const auto other = explain_exact(parse_fen("7k/8/2q5/8/8/8/8/R6K w - - 0 1"), m, kLimits);
    try {
        compare_explanations(a, other);
        FAIL();
    } catch (const AttributionError& e) {
        EXPECT_EQ(e.kind(), AttributionError::Kind::kPositionMismatch);
    }
}

}  // namespace
}  // namespace pieceshap
