#include "pieceshap/engine.hpp"

#include <thread>

#include <fmt/format.h>

#include "pieceshap/uci.hpp"

namespace pieceshap {

EngineScore EngineScore::mate_in(int moves) {
    if (moves == 0) {
        throw std::invalid_argument("mate distance must be non-zero");
    }
    return EngineScore(MateIn{moves});
}

EngineScore EngineScore::negated() const {
    if (const auto* cp = std::get_if<Centipawns>(&value_)) {
        return centipawns(-cp->value);
    }
    return mate_in(-std::get<MateIn>(value_).moves);
}

std::string EngineScore::to_string() const {
    if (const auto* cp = std::get_if<Centipawns>(&value_)) {
        return fmt::format("cp {}", cp->value);
    }
    return fmt::format("mate {}", std::get<MateIn>(value_).moves);
}

EvalLimit::EvalLimit(Kind kind, std::uint64_t count) : kind_(kind), count_(count) {
    if (count == 0) {
        throw std::invalid_argument("evaluation limit must be positive");
    }
}

std::string_view EvalLimit::kind_name() const {
    switch (kind_) {
        case Kind::kMoveTimeMillis: return "movetime";
        case Kind::kDepth: return "depth";
        case Kind::kNodes: return "nodes";
    }
    return "?";
}

std::optional<EvalLimit::Kind> EvalLimit::parse_kind(std::string_view name) {
    if (name == "movetime") return Kind::kMoveTimeMillis;
    if (name == "depth") return Kind::kDepth;
    if (name == "nodes") return Kind::kNodes;
    return std::nullopt;
}

std::string EvalLimit::uci_go_arguments() const { return fmt::format("{} {}", kind_name(), count_); }

MaterialValues material_value_table_default() {
    MaterialValues v;
    v[PieceKind::kPawn] = 100;
    v[PieceKind::kKnight] = 300;
    v[PieceKind::kBishop] = 300;
    v[PieceKind::kRook] = 500;
    v[PieceKind::kQueen] = 900;
    v[PieceKind::kKing] = 0;
    return v;
}

std::string_view to_string(EngineError::Kind kind) {
    switch (kind) {
        case EngineError::Kind::kSpawnFailed: return "SpawnFailed";
        case EngineError::Kind::kHandshakeTimeout: return "HandshakeTimeout";
        case EngineError::Kind::kEngineCrashed: return "EngineCrashed";
        case EngineError::Kind::kProtocolError: return "ProtocolError";
        case EngineError::Kind::kTimeout: return "Timeout";
    }
    return "?";
}

MaterialEvaluator::MaterialEvaluator(std::string id, MaterialValues values) : id_(std::move(id)), values_(values) {}

int MaterialEvaluator::material_balance(const Position& position) const {
    int total = 0;
    for (const auto& p : position.board()) {
        if (p) {
            total += p->color == Color::kWhite ? values_[p->kind] : -values_[p->kind];
        }
    }
    return total;
}

EvaluationOutcome MaterialEvaluator::evaluate(const Position& position, const EvalLimit&) {
    return EvaluationOutcome::scored(EngineScore::centipawns(material_balance(position)));
}

unsigned MaterialEvaluator::parallelism() const { return std::max(1U, std::thread::hardware_concurrency()); }

std::unique_ptr<Evaluator> make_evaluator(const EvaluatorDescriptor& descriptor) {
    if (const auto* values = std::get_if<MaterialValues>(&descriptor.kind)) {
        return std::make_unique<MaterialEvaluator>(descriptor.id, *values);
    }
    const unsigned pool =
        descriptor.pool_size != 0 ? descriptor.pool_size : std::max(1U, std::thread::hardware_concurrency());
    return std::make_unique<UciEvaluator>(descriptor.id, std::get<UciConfig>(descriptor.kind), pool);
}

}  // namespace pieceshap
