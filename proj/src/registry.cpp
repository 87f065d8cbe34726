#include "pieceshap/registry.hpp"

#include <fstream>
#include <unistd.h>

#include <fmt/format.h>

namespace pieceshap {

namespace {

EvaluatorDescriptor descriptor_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string()) {
        throw RegistryError("registry entry needs a string \"id\"");
    }
    EvaluatorDescriptor d;
    d.id = j["id"].get<std::string>();
    const auto type = j.value("type", std::string("uci"));
    if (type == "material") {
        auto values = material_value_table_default();
        if (j.contains("values")) {
            for (const auto& [name, v] : j["values"].items()) {
                const auto kind = parse_piece_kind(name);
                if (!kind || !v.is_number_integer()) {
                    throw RegistryError(fmt::format("engine '{}': bad material value '{}'", d.id, name));
                }
                values[*kind] = v.get<int>();
            }
        }
        d.kind = values;
    } else if (type == "uci") {
        if (!j.contains("path") || !j["path"].is_string()) {
            throw RegistryError(fmt::format("engine '{}': uci entries need a \"path\"", d.id));
        }
        UciConfig config;
        config.executable = j["path"].get<std::string>();
        if (j.contains("args")) {
            config.arguments = j["args"].get<std::vector<std::string>>();
        }
        if (j.contains("options")) {
            for (const auto& [name, v] : j["options"].items()) {
                config.options.emplace_back(name, v.is_string() ? v.get<std::string>() : v.dump());
            }
        }
        if (j.contains("handshake_timeout_ms")) {
            config.handshake_timeout = std::chrono::milliseconds(j["handshake_timeout_ms"].get<long>());
        }
        if (j.contains("grace_ms")) {
            config.grace = std::chrono::milliseconds(j["grace_ms"].get<long>());
        }
        d.kind = config;
    } else {
        throw RegistryError(fmt::format("engine '{}': unknown type '{}'", d.id, type));
    }
    if (j.contains("root_limit")) {
        d.root_limit = limit_from_json(j["root_limit"]);
    }
    if (j.contains("perturbation_limit")) {
        d.perturbation_limit = limit_from_json(j["perturbation_limit"]);
    }
    d.pool_size = j.value("pool_size", 0U);
    return d;
}

}  // namespace

EvalLimit limit_from_json(const nlohmann::json& j) {
    try {
        if (j.is_number_unsigned() || j.is_number_integer()) {
            return EvalLimit::move_time_ms(j.get<std::uint64_t>());
        }
        if (j.is_object() && j.size() == 1) {
            const auto& [name, value] = *j.items().begin();
            const auto kind = EvalLimit::parse_kind(name);
            if (kind && value.is_number_integer() && value.get<long long>() > 0) {
                const auto count = value.get<std::uint64_t>();
                switch (*kind) {
                    case EvalLimit::Kind::kMoveTimeMillis: return EvalLimit::move_time_ms(count);
                    case EvalLimit::Kind::kDepth: return EvalLimit::depth(count);
                    case EvalLimit::Kind::kNodes: return EvalLimit::nodes(count);
                }
            }
        }
    } catch (const std::invalid_argument& e) {
        throw RegistryError(fmt::format("invalid limit {}: {}", j.dump(), e.what()));
    } catch (const nlohmann::json::exception& e) {
        throw RegistryError(fmt::format("invalid limit {}: {}", j.dump(), e.what()));
    }
    throw RegistryError(fmt::format("invalid limit {}", j.dump()));
}

nlohmann::json limit_to_json(const EvalLimit& limit) {
    return nlohmann::json{{std::string(limit.kind_name()), limit.count()}};
}

EngineRegistry::EngineRegistry() {
    EvaluatorDescriptor material;
    material.id = "material";
    material.kind = material_value_table_default();
    descriptors_.push_back(std::move(material));
}

EngineRegistry EngineRegistry::from_json(const nlohmann::json& document) {
    EngineRegistry registry;
    if (!document.is_object() || !document.contains("engines") || !document["engines"].is_array()) {
        throw RegistryError("registry document needs an \"engines\" array");
    }
    try {
        for (const auto& entry : document["engines"]) {
            registry.add(descriptor_from_json(entry));
        }
    } catch (const nlohmann::json::exception& e) {
        throw RegistryError(fmt::format("malformed registry: {}", e.what()));
    }
    return registry;
}

EngineRegistry EngineRegistry::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw RegistryError(fmt::format("cannot open registry '{}'", path.string()));
    }
    try {
        return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw RegistryError(fmt::format("registry '{}' is not valid JSON: {}", path.string(), e.what()));
    }
}

void EngineRegistry::add(EvaluatorDescriptor descriptor) {
    if (find(descriptor.id) != nullptr) {
        throw RegistryError(fmt::format("duplicate engine id '{}'", descriptor.id));
    }
    descriptors_.push_back(std::move(descriptor));
}

const EvaluatorDescriptor* EngineRegistry::find(std::string_view id) const {
    for (const auto& d : descriptors_) {
        if (d.id == id) {
            return &d;
        }
    }
    return nullptr;
}

std::optional<EvaluatorDescriptor> EngineRegistry::resolve(std::string_view id_or_path) const {
    if (const auto* d = find(id_or_path)) {
        return *d;
    }
    const std::string path(id_or_path);
    if (path.find('/') != std::string::npos && ::access(path.c_str(), X_OK) == 0) {
        EvaluatorDescriptor d;
        d.id = path;
        UciConfig config;
        config.executable = path;
        d.kind = config;
        return d;
    }
    return std::nullopt;
}

nlohmann::json EngineRegistry::listing() const {
    auto out = nlohmann::json::array();
    for (const auto& d : descriptors_) {
        nlohmann::json entry;
        entry["id"] = d.id;
        if (const auto* values = std::get_if<MaterialValues>(&d.kind)) {
            entry["type"] = "material";
            nlohmann::json v;
            for (std::size_t k = 0; k < kPieceKindCount; ++k) {
                v[std::string(to_string(static_cast<PieceKind>(k)))] = values->values[k];
            }
            entry["values"] = v;
        } else {
            entry["type"] = "uci";
            entry["path"] = std::get<UciConfig>(d.kind).executable;
        }
        entry["root_limit"] = limit_to_json(d.root_limit);
        entry["perturbation_limit"] = limit_to_json(d.perturbation_limit);
        out.push_back(std::move(entry));
    }
    return out;
}

}  // namespace pieceshap
