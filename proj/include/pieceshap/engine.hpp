#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "pieceshap/position.hpp"

namespace pieceshap {

/// Engine verdict from White's point of view.
class EngineScore {
public:
    struct Centipawns {
        int value;
        bool operator==(const Centipawns&) const = default;
    };
    /// Moves to mate; positive when White mates. Never zero.
    struct MateIn {
        int moves;
        bool operator==(const MateIn&) const = default;
    };

    static EngineScore centipawns(int value) { return EngineScore(Centipawns{value}); }
    /// Throws std::invalid_argument for moves == 0.
    static EngineScore mate_in(int moves);

    bool is_mate() const { return std::holds_alternative<MateIn>(value_); }
    const std::variant<Centipawns, MateIn>& value() const { return value_; }
    /// Same verdict seen from the other side.
    EngineScore negated() const;
    std::string to_string() const;

    bool operator==(const EngineScore&) const = default;

private:
    explicit EngineScore(std::variant<Centipawns, MateIn> v) : value_(v) {}

    std::variant<Centipawns, MateIn> value_;
};

/// Search budget for a single evaluation.
class EvalLimit {
public:
    enum class Kind { kMoveTimeMillis, kDepth, kNodes };

    /// All constructors throw std::invalid_argument for a zero count.
    static EvalLimit move_time_ms(std::uint64_t ms) { return {Kind::kMoveTimeMillis, ms}; }
    static EvalLimit depth(std::uint64_t plies) { return {Kind::kDepth, plies}; }
    static EvalLimit nodes(std::uint64_t count) { return {Kind::kNodes, count}; }

    Kind kind() const { return kind_; }
    std::uint64_t count() const { return count_; }
    /// Arguments for the UCI "go" command, e.g. "movetime 100".
    std::string uci_go_arguments() const;
    /// "movetime", "depth" or "nodes".
    std::string_view kind_name() const;
    static std::optional<Kind> parse_kind(std::string_view name);

    bool operator==(const EvalLimit&) const = default;

private:
    EvalLimit(Kind kind, std::uint64_t count);

    Kind kind_;
    std::uint64_t count_;
};

inline constexpr std::uint64_t kDefaultRootMillis = 5000;
inline constexpr std::uint64_t kDefaultPerturbationMillis = 100;

/// Centipawn value per piece kind, indexed by PieceKind.
struct MaterialValues {
    std::array<int, kPieceKindCount> values{};

    int operator[](PieceKind k) const { return values[static_cast<std::size_t>(k)]; }
    int& operator[](PieceKind k) { return values[static_cast<std::size_t>(k)]; }
    bool operator==(const MaterialValues&) const = default;
};

/// pawn 100, knight 300, bishop 300, rook 500, queen 900, king 0.
MaterialValues material_value_table_default();

class EvaluationOutcome {
public:
    static EvaluationOutcome scored(EngineScore score) { return EvaluationOutcome(score, {}); }
    static EvaluationOutcome rejected(std::string reason) { return EvaluationOutcome(std::nullopt, std::move(reason)); }

    bool is_scored() const { return score_.has_value(); }
    /// Precondition: is_scored().
    const EngineScore& score() const { return *score_; }
    const std::string& rejection_reason() const { return reason_; }

private:
    EvaluationOutcome(std::optional<EngineScore> s, std::string r) : score_(s), reason_(std::move(r)) {}

    std::optional<EngineScore> score_;
    std::string reason_;
};

class EngineError : public std::runtime_error {
public:
    enum class Kind { kSpawnFailed, kHandshakeTimeout, kEngineCrashed, kProtocolError, kTimeout };

    EngineError(Kind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

std::string_view to_string(EngineError::Kind kind);

struct UciConfig {
    std::string executable;
    std::vector<std::string> arguments;
    /// Sent as "setoption name <first> value <second>" in order.
    std::vector<std::pair<std::string, std::string>> options;
    std::chrono::milliseconds handshake_timeout{10000};
    /// Extra time allowed past a movetime limit before the engine is declared stalled.
    std::chrono::milliseconds grace{2000};
    /// Deadline for depth- and node-limited searches.
    std::chrono::milliseconds unbounded_search_timeout{120000};
    /// Send "ucinewgame" before each position so results do not depend on hash state.
    bool new_game_per_position = true;

    bool operator==(const UciConfig&) const = default;
};

struct EvaluatorDescriptor {
    std::string id;
    std::variant<UciConfig, MaterialValues> kind;
    EvalLimit root_limit = EvalLimit::move_time_ms(kDefaultRootMillis);
    EvalLimit perturbation_limit = EvalLimit::move_time_ms(kDefaultPerturbationMillis);
    /// Engine processes to run in parallel; 0 picks the hardware concurrency.
    unsigned pool_size = 0;
};

/// A position evaluator. evaluate() may be called from several threads at once.
class Evaluator {
public:
    virtual ~Evaluator() = default;

    virtual const std::string& id() const = 0;
    /// Scores are always from White's point of view. May throw EngineError.
    virtual EvaluationOutcome evaluate(const Position& position, const EvalLimit& limit) = 0;
    /// Number of evaluations that can usefully run at the same time.
    virtual unsigned parallelism() const { return 1; }
};

/// Sums piece values; ignores limits, squares and side to move. Reentrant.
class MaterialEvaluator final : public Evaluator {
public:
    explicit MaterialEvaluator(std::string id = "material", MaterialValues values = material_value_table_default());

    const std::string& id() const override { return id_; }
    EvaluationOutcome evaluate(const Position& position, const EvalLimit& limit) override;
    unsigned parallelism() const override;

    int material_balance(const Position& position) const;

private:
    std::string id_;
    MaterialValues values_;
};

std::unique_ptr<Evaluator> make_evaluator(const EvaluatorDescriptor& descriptor);

}  // namespace pieceshap
