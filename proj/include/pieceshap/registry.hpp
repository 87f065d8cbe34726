#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pieceshap/engine.hpp"

namespace pieceshap {

class RegistryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Accepts {"movetime": 100}, {"depth": 12} or {"nodes": 50000}; a bare
/// integer is read as milliseconds. Throws RegistryError.
EvalLimit limit_from_json(const nlohmann::json& j);
nlohmann::json limit_to_json(const EvalLimit& limit);

/// Evaluator descriptors by id. The built-in "material" evaluator is always present.
///
/// Registry document:
///   {"engines": [
///     {"id": "stockfish", "type": "uci", "path": "/usr/bin/stockfish",
///      "args": [], "options": {"Threads": "1", "Hash": "16"},
///      "root_limit": {"movetime": 5000}, "perturbation_limit": {"movetime": 100},
///      "pool_size": 4},
///     {"id": "knightless", "type": "material", "values": {"knight": 0}}
///   ]}
class EngineRegistry {
public:
    EngineRegistry();

    static EngineRegistry from_json(const nlohmann::json& document);
    static EngineRegistry load(const std::filesystem::path& path);

    /// Throws RegistryError on a duplicate id.
    void add(EvaluatorDescriptor descriptor);
    const EvaluatorDescriptor* find(std::string_view id) const;
    /// Registered id first, then an executable path treated as a UCI engine.
    std::optional<EvaluatorDescriptor> resolve(std::string_view id_or_path) const;

    const std::vector<EvaluatorDescriptor>& descriptors() const { return descriptors_; }
    nlohmann::json listing() const;

private:
    std::vector<EvaluatorDescriptor> descriptors_;
};

}  // namespace pieceshap
