#include "pieceshap/attribution.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include <fmt/format.h>

namespace pieceshap {

void ProbabilityMapping::validate() const {
    if (!(beta > 0.0) || !std::isfinite(beta)) {
        throw std::invalid_argument(fmt::format("beta must be positive, got {}", beta));
    }
    if (mate_cp_base <= 0) {
        throw std::invalid_argument(fmt::format("mate base must be positive, got {}", mate_cp_base));
    }
}

WinProbability::WinProbability(double value) : value_(value), complement_(1.0 - value) {
    if (!(value >= 0.0 && value <= 1.0)) {
        throw std::invalid_argument(fmt::format("probability out of range: {}", value));
    }
}

WinProbability WinProbability::from_log_odds(double x) {
    // Each side computed from the form that does not cancel.
    if (x >= 0) {
        const double e = std::exp(-x);
        return WinProbability(1.0 / (1.0 + e), e / (1.0 + e));
    }
    const double e = std::exp(x);
    return WinProbability(e / (1.0 + e), 1.0 / (1.0 + e));
}

std::partial_ordering WinProbability::operator<=>(const WinProbability& other) const {
    if (auto c = value_ <=> other.value_; c != 0) {
        return c;
    }
    return other.complement_ <=> complement_;
}

WinProbability score_to_probability(const EngineScore& score, const ProbabilityMapping& mapping) {
    double cp = 0;
    if (const auto* c = std::get_if<EngineScore::Centipawns>(&score.value())) {
        cp = c->value;
    } else {
        const int m = std::get<EngineScore::MateIn>(score.value()).moves;
        const double magnitude = static_cast<double>(mapping.mate_cp_base) - std::abs(static_cast<double>(m));
        cp = m > 0 ? magnitude : -magnitude;
    }
    return WinProbability::from_log_odds(mapping.beta * cp);
}

std::optional<SubsetCache::Entry> SubsetCache::lookup(const std::string& key) const {
    std::shared_lock lock(mutex_);
    const auto it = entries_.find(key);
    if (it == entries_.end()) {
        return std::nullopt;
    }
    return it->second;
}

void SubsetCache::insert(const std::string& key, const Entry& entry) {
    std::unique_lock lock(mutex_);
    entries_.insert_or_assign(key, entry);
}

std::size_t SubsetCache::size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
}

SubsetEvaluation evaluate_subset(const Position& position, const PieceIndexing& indexing, SubsetId subset,
                                 Evaluator& evaluator, const EvalLimit& limit, const ProbabilityMapping& mapping,
                                 SubsetCache* cache) {
    if (subset.size() == 0) {
        return {WinProbability::draw(), false, false};
    }
    const auto built = build_subset_position(position, indexing, subset);
    const auto key = canonical_fen(built);
    if (cache != nullptr) {
        if (const auto hit = cache->lookup(key)) {
            return {hit->probability, hit->fallback, true};
        }
    }

    const auto finish = [&](WinProbability p, bool fallback) {
        if (cache != nullptr) {
            cache->insert(key, {p, fallback});
        }
        return SubsetEvaluation{p, fallback, false};
    };

    const auto repaired = repair(built);
    if (repaired.status == RepairStatus::kUnresolvable) {
        return finish(WinProbability::draw(), true);
    }
    auto outcome = evaluator.evaluate(repaired.position, limit);
    if (!outcome.is_scored()) {
        const auto flipped = flip_side_to_move(repaired.position);
        if (legality_status(flipped) != Legality::kLegal) {
            return finish(WinProbability::draw(), true);
        }
        outcome = evaluator.evaluate(flipped, limit);
        if (!outcome.is_scored()) {
            return finish(WinProbability::draw(), true);
        }
    }
    return finish(score_to_probability(outcome.score(), mapping), false);
}

std::string_view to_string(Method m) {
    return m == Method::kExact ? "exact" : "sampling";
}

std::optional<Method> parse_method(std::string_view s) {
    if (s == "exact") return Method::kExact;
    if (s == "sampling") return Method::kSampling;
    return std::nullopt;
}

std::vector<double> shapley_from_table(std::span<const double> values, unsigned n) {
    if (n >= 63 || values.size() != (std::size_t{1} << n)) {
        throw std::invalid_argument(fmt::format("table of {} values does not cover {} players", values.size(), n));
    }
    std::vector<double> phi(n, 0.0);
    if (n == 0) {
        return phi;
    }
    // weight[s] = s! (n - s - 1)! / n!
    std::vector<double> weight(n);
    weight[0] = 1.0 / n;
    for (unsigned s = 1; s < n; ++s) {
        weight[s] = weight[s - 1] * s / (n - s);
    }
    const std::uint64_t count = std::uint64_t{1} << n;
    for (std::uint64_t mask = 0; mask < count; ++mask) {
        const int size = std::popcount(mask);
        if (size == static_cast<int>(n)) {
            continue;
        }
        const double w = weight[size];
        for (unsigned i = 0; i < n; ++i) {
            const std::uint64_t bit = std::uint64_t{1} << i;
            if ((mask & bit) == 0) {
                phi[i] += w * (values[mask | bit] - values[mask]);
            }
        }
    }
    return phi;
}

namespace {

struct Context {
    const Position& position;
    const PieceIndexing& indexing;
    Evaluator& evaluator;
    const ExplainLimits& limits;
    const ExplainOptions& options;
};

class Progress {
public:
    Progress(const ProgressCallback& callback, std::size_t total) : callback_(callback), total_(total) {}

    void advance(std::size_t by) {
        if (!callback_) {
            return;
        }
        std::lock_guard lock(mutex_);
        done_ += by;
        callback_(done_, std::max(done_, total_));
    }

private:
    const ProgressCallback& callback_;
    std::size_t total_;
    std::size_t done_ = 0;
    std::mutex mutex_;
};

unsigned worker_count(const Context& ctx, std::size_t jobs) {
    unsigned w = ctx.options.workers != 0 ? ctx.options.workers : ctx.evaluator.parallelism();
    w = std::max(1U, w);
    return static_cast<unsigned>(std::min<std::size_t>(w, jobs));
}

// Perturbation evaluations for `masks`, computed concurrently.
std::vector<SubsetEvaluation> evaluate_masks(const Context& ctx, std::span<const std::uint64_t> masks,
                                             Progress& progress) {
    std::vector<std::optional<SubsetEvaluation>> results(masks.size());
    if (masks.empty()) {
        return {};
    }
    const unsigned n = static_cast<unsigned>(ctx.indexing.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;

    const auto work = [&] {
        while (!failed.load()) {
            const std::size_t i = next.fetch_add(1);
            if (i >= masks.size()) {
                return;
            }
            try {
                results[i] = evaluate_subset(ctx.position, ctx.indexing, SubsetId(masks[i], n), ctx.evaluator,
                                             ctx.limits.perturbation, ctx.options.mapping, ctx.options.cache);
                progress.advance(1);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) {
                    error = std::current_exception();
                }
                failed = true;
            }
        }
    };

    const unsigned workers = worker_count(ctx, masks.size());
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::jthread> threads;
        threads.reserve(workers);
        for (unsigned t = 0; t < workers; ++t) {
            threads.emplace_back(work);
        }
    }
    if (error) {
        std::rethrow_exception(error);
    }
    std::vector<SubsetEvaluation> out;
    out.reserve(results.size());
    for (auto& r : results) {
        out.push_back(*r);
    }
    return out;
}

SubsetEvaluation evaluate_root(const Context& ctx, Progress& progress) {
    const unsigned n = static_cast<unsigned>(ctx.indexing.size());
    // The root uses its own limit, so it never goes through the perturbation cache.
    auto root = evaluate_subset(ctx.position, ctx.indexing, SubsetId::all(n), ctx.evaluator, ctx.limits.root,
                                ctx.options.mapping, nullptr);
    progress.advance(1);
    return root;
}

Explanation skeleton(const Context& ctx, Method method) {
    Explanation e;
    e.fen = to_fen(ctx.position);
    e.evaluator_id = ctx.evaluator.id();
    e.method = method;
    e.base_value = 0.5;
    e.root_limit = ctx.limits.root;
    e.perturbation_limit = ctx.limits.perturbation;
    return e;
}

void fill_contributions(Explanation& e, const PieceIndexing& indexing, const std::vector<double>& phi) {
    e.contributions.clear();
    for (std::size_t i = 0; i < indexing.size(); ++i) {
        e.contributions.push_back({indexing.pieces[i], phi[i]});
    }
}

struct Table {
    std::vector<double> values;
    std::size_t fallbacks = 0;
};

// Evaluates all 2^n subsets.
Table full_table(const Context& ctx, Progress& progress, SubsetEvaluation root) {
    const unsigned n = static_cast<unsigned>(ctx.indexing.size());
    const std::uint64_t count = std::uint64_t{1} << n;
    Table t;
    t.values.assign(count, 0.5);
    t.values[count - 1] = root.probability.value();
    t.fallbacks = root.fallback ? 1 : 0;
    if (n == 0) {
        return t;
    }
    progress.advance(1);  // the empty subset
    std::vector<std::uint64_t> masks;
    masks.reserve(count - 2);
    for (std::uint64_t m = 1; m + 1 < count; ++m) {
        masks.push_back(m);
    }
    const auto results = evaluate_masks(ctx, masks, progress);
    for (std::size_t i = 0; i < masks.size(); ++i) {
        t.values[masks[i]] = results[i].probability.value();
        t.fallbacks += results[i].fallback ? 1 : 0;
    }
    return t;
}

void validate_options(const ExplainOptions& options) {
    options.mapping.validate();
    if (options.sampling.exact_threshold > kMaxExactPieces) {
        throw std::invalid_argument(
            fmt::format("exact threshold {} exceeds the maximum of {}", options.sampling.exact_threshold, kMaxExactPieces));
    }
}

// Unbiased integer in [0, bound) from a 64-bit engine; identical on every platform.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x = rng();
    while (x >= limit) {
        x = rng();
    }
    return x % bound;
}

}  // namespace

Explanation explain_exact(const Position& position, Evaluator& evaluator, const ExplainLimits& limits,
                          const ExplainOptions& options) {
    validate_options(options);
    const auto indexing = non_king_indexing(position);
    const unsigned n = static_cast<unsigned>(indexing.size());
    if (n > options.sampling.exact_threshold) {
        throw AttributionError(AttributionError::Kind::kTooManyPieces,
                               fmt::format("{} pieces exceed the exact threshold of {}", n,
                                           options.sampling.exact_threshold));
    }
    const Context ctx{position, indexing, evaluator, limits, options};
    const std::size_t count = std::size_t{1} << n;
    Progress progress(options.progress, count);

    const auto root = evaluate_root(ctx, progress);
    const auto table = full_table(ctx, progress, root);

    auto e = skeleton(ctx, Method::kExact);
    e.full_value = table.values.back();
    fill_contributions(e, indexing, shapley_from_table(table.values, n));
    e.evaluations_used = count;
    e.fallback_count = table.fallbacks;
    return e;
}

Explanation explain_sampling(const Position& position, Evaluator& evaluator, const ExplainLimits& limits,
                             const ExplainOptions& options) {
    validate_options(options);
    const auto indexing = non_king_indexing(position);
    const unsigned n = static_cast<unsigned>(indexing.size());
    const std::size_t budget = options.sampling.max_evaluations;
    if (budget < 2 * std::size_t{n} + 2) {
        throw AttributionError(AttributionError::Kind::kBudgetTooSmall,
                               fmt::format("budget of {} evaluations is below the minimum {} for {} pieces", budget,
                                           2 * n + 2, n));
    }
    const Context ctx{position, indexing, evaluator, limits, options};
    Progress progress(options.progress, budget);

    auto e = skeleton(ctx, Method::kSampling);
    e.seed = options.sampling.seed;

    const auto root = evaluate_root(ctx, progress);
    e.full_value = root.probability.value();
    if (n == 0) {
        e.evaluations_used = 1;
        e.fallback_count = root.fallback ? 1 : 0;
        return e;
    }

    const std::uint64_t full = SubsetId::all(n).bits();
    const std::uint64_t total_subsets = n < 63 ? (std::uint64_t{1} << n) : 0;
    std::unordered_map<std::uint64_t, SubsetEvaluation> memo;
    memo.emplace(0, SubsetEvaluation{WinProbability::draw(), false, false});
    memo.emplace(full, root);
    progress.advance(1);

    std::mt19937_64 rng(options.sampling.seed);
    std::vector<unsigned> order(n);
    std::vector<double> phi_sum(n, 0.0);
    std::size_t walks = 0;
    constexpr std::size_t kWalksPerBatch = 64;
    bool exhausted = false;
    bool covered = false;

    while (!exhausted && !covered) {
        // Plan a batch of walks from masks alone so the outcome does not
        // depend on scheduling.
        std::vector<std::vector<unsigned>> planned;
        std::vector<std::uint64_t> pending;
        std::unordered_map<std::uint64_t, std::size_t> pending_index;
        while (planned.size() < kWalksPerBatch) {
            if (total_subsets != 0 && memo.size() + pending.size() == total_subsets) {
                covered = true;
                break;
            }
            std::iota(order.begin(), order.end(), 0U);
            for (unsigned i = n - 1; i > 0; --i) {
                std::swap(order[i], order[uniform_below(rng, i + 1)]);
            }
            std::vector<std::uint64_t> fresh;
            std::uint64_t mask = 0;
            for (unsigned k = 0; k + 1 < n; ++k) {
                mask |= std::uint64_t{1} << order[k];
                if (!memo.contains(mask) && !pending_index.contains(mask) &&
                    std::find(fresh.begin(), fresh.end(), mask) == fresh.end()) {
                    fresh.push_back(mask);
                }
            }
            if (memo.size() + pending.size() + fresh.size() > budget) {
                exhausted = true;
                break;
            }
            for (const auto m : fresh) {
                pending_index.emplace(m, pending.size());
                pending.push_back(m);
            }
            planned.push_back(order);
        }

        const auto results = evaluate_masks(ctx, pending, progress);
        for (std::size_t i = 0; i < pending.size(); ++i) {
            memo.emplace(pending[i], results[i]);
        }
        for (const auto& walk : planned) {
            std::uint64_t mask = 0;
            double previous = 0.5;
            for (const unsigned piece : walk) {
                mask |= std::uint64_t{1} << piece;
                const double current = memo.at(mask).probability.value();
                phi_sum[piece] += current - previous;
                previous = current;
            }
            ++walks;
        }
    }

    std::vector<double> phi(n, 0.0);
    if (covered) {
        std::vector<double> table(total_subsets);
        for (const auto& [mask, value] : memo) {
            table[mask] = value.probability.value();
        }
        phi = shapley_from_table(table, n);
    } else {
        for (unsigned i = 0; i < n; ++i) {
            phi[i] = phi_sum[i] / static_cast<double>(walks);
        }
    }
    const double residual = (e.full_value - e.base_value) - std::accumulate(phi.begin(), phi.end(), 0.0);
    for (auto& v : phi) {
        v += residual / n;
    }

    fill_contributions(e, indexing, phi);
    e.evaluations_used = memo.size();
    e.fallback_count = static_cast<std::size_t>(
        std::count_if(memo.begin(), memo.end(), [](const auto& kv) { return kv.second.fallback; }));
    return e;
}

Explanation explain(const Position& position, Evaluator& evaluator, const ExplainLimits& limits,
                    const ExplainOptions& options) {
    validate_options(options);
    if (position.piece_count() - 2 <= options.sampling.exact_threshold) {
        return explain_exact(position, evaluator, limits, options);
    }
    return explain_sampling(position, evaluator, limits, options);
}

std::vector<ContributionDelta> compare_explanations(const Explanation& a, const Explanation& b) {
    const auto same_piece = [](const Contribution& x, const Contribution& y) { return x.piece == y.piece; };
    if (a.contributions.size() != b.contributions.size() ||
        !std::equal(a.contributions.begin(), a.contributions.end(), b.contributions.begin(), same_piece)) {
        throw AttributionError(AttributionError::Kind::kPositionMismatch,
                               "explanations describe different piece sets");
    }
    std::vector<ContributionDelta> rows;
    rows.reserve(a.contributions.size());
    for (std::size_t i = 0; i < a.contributions.size(); ++i) {
        const double pa = a.contributions[i].phi;
        const double pb = b.contributions[i].phi;
        rows.push_back({a.contributions[i].piece, pa, pb, pa - pb});
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const auto& x, const auto& y) { return std::abs(x.delta) > std::abs(y.delta); });
    return rows;
}

}  // namespace pieceshap
