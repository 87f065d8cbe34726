#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <shared_mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "pieceshap/engine.hpp"
#include "pieceshap/position.hpp"

namespace pieceshap {

/// Logistic centipawn -> win probability calibration.
struct ProbabilityMapping {
    double beta = 3.68e-3;
    /// Mate in m is scored like sign(m) * (mate_cp_base - |m|) centipawns.
    int mate_cp_base = 10000;

    /// Throws std::invalid_argument unless beta > 0 and mate_cp_base > 0.
    void validate() const;
};

/// White's win probability. Besides the value it keeps 1 - value computed
/// directly, so probabilities that round to 1.0 in double still order
/// correctly (mate in 1 above mate in 2).
class WinProbability {
public:
    /// Throws std::invalid_argument unless 0 <= value <= 1.
    explicit WinProbability(double value);
    static WinProbability from_log_odds(double log_odds);
    static WinProbability draw() { return WinProbability(0.5); }

    double value() const { return value_; }
    double complement() const { return complement_; }

    std::partial_ordering operator<=>(const WinProbability& other) const;
    bool operator==(const WinProbability& other) const = default;

private:
    WinProbability(double value, double complement) : value_(value), complement_(complement) {}

    double value_;
    double complement_;
};

/// Centipawns(s) -> logistic(beta * s); MateIn(m) -> logistic(beta * sign(m) * (mate_cp_base - |m|)).
WinProbability score_to_probability(const EngineScore& score, const ProbabilityMapping& mapping = {});

/// Memo of subset evaluations keyed by canonical FEN. Scope one instance to
/// a single evaluator and perturbation limit. Safe for concurrent use.
class SubsetCache {
public:
    struct Entry {
        WinProbability probability;
        /// The value is the 0.5 fallback for an unevaluable position.
        bool fallback;
    };

    std::optional<Entry> lookup(const std::string& key) const;
    void insert(const std::string& key, const Entry& entry);
    std::size_t size() const;

private:
    mutable std::shared_mutex mutex_;
    std::unordered_map<std::string, Entry> entries_;
};

struct SubsetEvaluation {
    WinProbability probability;
    bool fallback = false;
    bool cached = false;
};

/// f(x_S): build the subset position, repair it, evaluate, and map to a
/// probability. The empty subset is the kings-only base and is 0.5 without
/// consulting the evaluator. Unresolvable positions, and positions the
/// evaluator rejects both as given and with the side to move flipped, score
/// 0.5 with fallback set. EngineError propagates.
SubsetEvaluation evaluate_subset(const Position& position, const PieceIndexing& indexing, SubsetId subset,
                                 Evaluator& evaluator, const EvalLimit& limit, const ProbabilityMapping& mapping,
                                 SubsetCache* cache = nullptr);

struct ExplainLimits {
    EvalLimit root = EvalLimit::move_time_ms(kDefaultRootMillis);
    EvalLimit perturbation = EvalLimit::move_time_ms(kDefaultPerturbationMillis);
};

struct SamplingConfig {
    /// Distinct subset evaluations allowed, counting the full and empty positions.
    std::size_t max_evaluations = 10000;
    std::uint64_t seed = 0;
    /// Positions with at most this many non-king pieces are enumerated exactly.
    unsigned exact_threshold = 14;
};

/// Upper bound on exact enumeration regardless of configuration (2^24 subsets).
inline constexpr unsigned kMaxExactPieces = 24;

enum class Method { kExact, kSampling };

std::string_view to_string(Method m);
std::optional<Method> parse_method(std::string_view s);

struct Contribution {
    PieceInstance piece;
    double phi;

    bool operator==(const Contribution&) const = default;
};

struct Explanation {
    std::string fen;
    std::string evaluator_id;
    Method method = Method::kExact;
    /// Kings-only value; always 0.5.
    double base_value = 0.5;
    double full_value = 0.5;
    /// One entry per non-king piece, in square order.
    std::vector<Contribution> contributions;
    std::size_t evaluations_used = 0;
    std::size_t fallback_count = 0;
    std::optional<std::uint64_t> seed;
    EvalLimit root_limit = EvalLimit::move_time_ms(kDefaultRootMillis);
    EvalLimit perturbation_limit = EvalLimit::move_time_ms(kDefaultPerturbationMillis);

    bool operator==(const Explanation&) const = default;
};

class AttributionError : public std::runtime_error {
public:
    enum class Kind { kTooManyPieces, kBudgetTooSmall, kPositionMismatch };

    AttributionError(Kind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

/// Called with (evaluations done, evaluations planned); `done` never decreases.
using ProgressCallback = std::function<void(std::size_t done, std::size_t total)>;

struct ExplainOptions {
    ProbabilityMapping mapping{};
    SamplingConfig sampling{};
    /// Optional cross-run memo for perturbation evaluations.
    SubsetCache* cache = nullptr;
    ProgressCallback progress{};
    /// Concurrent evaluations; 0 uses the evaluator's parallelism.
    unsigned workers = 0;
};

/// Shapley values from a complete table of 2^n subset values indexed by bitmask.
std::vector<double> shapley_from_table(std::span<const double> values, unsigned n);

/// Evaluates every subset once and applies the Shapley weights.
/// Throws AttributionError(kTooManyPieces) when n exceeds the exact threshold.
Explanation explain_exact(const Position& position, Evaluator& evaluator, const ExplainLimits& limits,
                          const ExplainOptions& options = {});

/// Permutation sampling under an evaluation budget; repeated subsets are
/// free. Only complete walks are averaged. If every subset ends up
/// evaluated the exact table values are reported instead. The residual
/// f(x) - 0.5 - sum(phi) is spread evenly so the result is exactly additive.
/// Throws AttributionError(kBudgetTooSmall) when max_evaluations < 2n + 2.
Explanation explain_sampling(const Position& position, Evaluator& evaluator, const ExplainLimits& limits,
                             const ExplainOptions& options = {});

/// Exact when n <= exact_threshold, sampling otherwise.
Explanation explain(const Position& position, Evaluator& evaluator, const ExplainLimits& limits,
                    const ExplainOptions& options = {});

struct ContributionDelta {
    PieceInstance piece;
    double phi_a;
    double phi_b;
    double delta;  // phi_a - phi_b
};

/// Per-piece differences sorted by |delta| descending; ties keep square order.
/// Throws AttributionError(kPositionMismatch) when the piece lists differ.
std::vector<ContributionDelta> compare_explanations(const Explanation& a, const Explanation& b);

}  // namespace pieceshap
