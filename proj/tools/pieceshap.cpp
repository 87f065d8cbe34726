// pieceshap: per-piece attribution of a chess evaluation.
//
// Exit codes: 0 success, 1 I/O or internal error, 2 usage error (bad flags,
// unknown engine, unreadable config or document), 3 engine failure,
// 4 illegal or malformed position.

#include <csignal>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "pieceshap/attribution.hpp"
#include "pieceshap/registry.hpp"
#include "pieceshap/render.hpp"
#include "pieceshap/service.hpp"

namespace {

using namespace pieceshap;

constexpr int kExitIo = 1;
constexpr int kExitUsage = 2;
constexpr int kExitEngine = 3;
constexpr int kExitPosition = 4;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ExplainFlags {
    std::string fen;
    std::string engine = "material";
    std::string engine_a;
    std::string engine_b;
    std::string registry;
    std::uint64_t root_ms = kDefaultRootMillis;
    std::uint64_t perturb_ms = kDefaultPerturbationMillis;
    std::uint64_t root_nodes = 0;
    std::uint64_t perturb_nodes = 0;
    std::size_t max_evals = 10000;
    std::uint64_t seed = 0;
    unsigned exact_threshold = 14;
    std::string format = "json";
    std::string out;
    bool progress = false;

    CLI::Option* root_ms_opt = nullptr;
    CLI::Option* perturb_ms_opt = nullptr;
};

void add_common(CLI::App& cmd, ExplainFlags& f) {
    cmd.add_option("--fen", f.fen, "Position to explain")->required();
    cmd.add_option("--registry", f.registry, "Engine registry JSON");
    f.root_ms_opt = cmd.add_option("--root-ms", f.root_ms, "Search time for the full position")
                        ->capture_default_str()
                        ->check(CLI::PositiveNumber);
    f.perturb_ms_opt = cmd.add_option("--perturb-ms", f.perturb_ms, "Search time per perturbed position")
                           ->capture_default_str()
                           ->check(CLI::PositiveNumber);
    cmd.add_option("--root-nodes", f.root_nodes, "Node limit for the full position (overrides --root-ms)")
        ->check(CLI::PositiveNumber)
        ->excludes(f.root_ms_opt);
    cmd.add_option("--perturb-nodes", f.perturb_nodes, "Node limit per perturbed position (overrides --perturb-ms)")
        ->check(CLI::PositiveNumber)
        ->excludes(f.perturb_ms_opt);
    cmd.add_option("--max-evals", f.max_evals, "Evaluation budget in sampling mode")->capture_default_str();
    cmd.add_option("--seed", f.seed, "Sampling seed")->capture_default_str();
    cmd.add_option("--exact-threshold", f.exact_threshold, "Largest piece count explained exactly")
        ->capture_default_str()
        ->check(CLI::Range(0U, kMaxExactPieces));
    cmd.add_option("--out", f.out, "Write the result here instead of stdout");
    cmd.add_flag("--progress", f.progress, "Report progress on stderr");
}

EngineRegistry load_registry(const std::string& path) {
    if (path.empty()) {
        return EngineRegistry();
    }
    try {
        return EngineRegistry::load(path);
    } catch (const RegistryError& e) {
        throw UsageError(e.what());
    }
}

EvaluatorDescriptor resolve_engine(const EngineRegistry& registry, const std::string& id) {
    auto d = registry.resolve(id);
    if (!d) {
        throw UsageError(fmt::format("unknown engine '{}' (not registered and not an executable path)", id));
    }
    return *d;
}

ExplainLimits limits_for(const ExplainFlags& f, const EvaluatorDescriptor& d) {
    ExplainLimits l{d.root_limit, d.perturbation_limit};
    if (f.root_nodes != 0) {
        l.root = EvalLimit::nodes(f.root_nodes);
    } else if (f.root_ms_opt->count() > 0) {
        l.root = EvalLimit::move_time_ms(f.root_ms);
    }
    if (f.perturb_nodes != 0) {
        l.perturbation = EvalLimit::nodes(f.perturb_nodes);
    } else if (f.perturb_ms_opt->count() > 0) {
        l.perturbation = EvalLimit::move_time_ms(f.perturb_ms);
    }
    return l;
}

Explanation run_explain(const ExplainFlags& f, const Position& position, const EvaluatorDescriptor& d) {
    auto evaluator = make_evaluator(d);
    ExplainOptions options;
    options.sampling.max_evaluations = f.max_evals;
    options.sampling.seed = f.seed;
    options.sampling.exact_threshold = f.exact_threshold;
    if (f.progress) {
        options.progress = [&d](std::size_t done, std::size_t total) {
            std::cerr << fmt::format("\r{}: {}/{}", d.id, done, total) << (done == total ? "\n" : "") << std::flush;
        };
    }
    try {
        return explain(position, *evaluator, limits_for(f, d), options);
    } catch (const AttributionError& e) {
        throw UsageError(e.what());
    }
}

void emit(const std::string& text, const std::string& out) {
    if (out.empty()) {
        std::cout << text << std::flush;
        return;
    }
    std::ofstream file(out, std::ios::binary);
    if (!file || !(file << text)) {
        throw IoError(fmt::format("cannot write '{}'", out));
    }
}

std::string render(const Explanation& e, const std::string& format) {
    if (format == "json") return to_json(e);
    if (format == "text") return to_waterfall_text(e);
    if (format == "svg") return to_svg_board(e);
    return to_waterfall_svg(e);
}

int serve(const std::string& config_path, const std::string& registry_override) {
    ServiceConfig config;
    try {
        config = ServiceConfig::load(config_path);
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
    std::string registry_path = registry_override;
    if (registry_path.empty() && config.registry_path) {
        registry_path = config.registry_path->string();
    }
    auto registry = load_registry(registry_path);

    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    std::unique_ptr<ExplainService> service;
    int port = 0;
    try {
        service = std::make_unique<ExplainService>(config, std::move(registry));
        port = service->start();
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
    std::cout << fmt::format("listening on http://{}:{}", config.host, port) << std::endl;
    int received = 0;
    sigwait(&signals, &received);
    service->stop();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Per-piece attribution of chess engine evaluations"};
    app.require_subcommand(1);

    ExplainFlags ex;
    auto* explain_cmd = app.add_subcommand("explain", "Explain one position");
    add_common(*explain_cmd, ex);
    explain_cmd->add_option("--engine", ex.engine, "Registered engine id or UCI executable path")->capture_default_str();
    explain_cmd->add_option("--format", ex.format, "Output format")
        ->capture_default_str()
        ->check(CLI::IsMember({"json", "text", "svg", "waterfall"}));

    ExplainFlags cmp;
    cmp.format = "text";
    auto* compare_cmd = app.add_subcommand("compare", "Explain one position with two engines and diff");
    add_common(*compare_cmd, cmp);
    compare_cmd->add_option("--engine-a", cmp.engine_a, "First engine")->required();
    compare_cmd->add_option("--engine-b", cmp.engine_b, "Second engine")->required();
    compare_cmd->add_option("--format", cmp.format, "Output format")
        ->capture_default_str()
        ->check(CLI::IsMember({"json", "text"}));

    std::string render_in;
    std::string render_format = "svg";
    std::string render_out;
    auto* render_cmd = app.add_subcommand("render", "Re-render a saved explanation document");
    render_cmd->add_option("--in", render_in, "Explanation JSON")->required();
    render_cmd->add_option("--format", render_format, "Output format")
        ->capture_default_str()
        ->check(CLI::IsMember({"json", "text", "svg", "waterfall"}));
    render_cmd->add_option("--out", render_out, "Write the result here instead of stdout");

    std::string serve_config;
    std::string serve_registry;
    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service");
    serve_cmd->add_option("--config", serve_config, "Service config JSON")->required();
    serve_cmd->add_option("--registry", serve_registry, "Engine registry JSON (overrides the config)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (explain_cmd->parsed()) {
            const auto position = parse_fen(ex.fen);
            const auto registry = load_registry(ex.registry);
            const auto d = resolve_engine(registry, ex.engine);
            emit(render(run_explain(ex, position, d), ex.format), ex.out);
        } else if (compare_cmd->parsed()) {
            const auto position = parse_fen(cmp.fen);
            const auto registry = load_registry(cmp.registry);
            const auto a = resolve_engine(registry, cmp.engine_a);
            const auto b = resolve_engine(registry, cmp.engine_b);
            const auto ea = run_explain(cmp, position, a);
            const auto eb = run_explain(cmp, position, b);
            emit(cmp.format == "json" ? comparison_document(ea, eb).dump(2) + "\n" : to_comparison_text(ea, eb), cmp.out);
        } else if (render_cmd->parsed()) {
            std::ifstream in(render_in, std::ios::binary);
            if (!in) {
                throw UsageError(fmt::format("cannot open '{}'", render_in));
            }
            std::stringstream ss;
            ss << in.rdbuf();
            Explanation e;
            try {
                e = from_json(ss.str());
            } catch (const DocumentError& err) {
                throw UsageError(fmt::format("{}: {}", render_in, err.what()));
            }
            emit(render(e, render_format), render_out);
        } else if (serve_cmd->parsed()) {
            return serve(serve_config, serve_registry);
        }
    } catch (const FenError& e) {
        std::cerr << "illegal position: " << e.what() << '\n';
        return kExitPosition;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const EngineError& e) {
        std::cerr << "engine failure (" << to_string(e.kind()) << "): " << e.what() << '\n';
        return kExitEngine;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kExitIo;
    }
    return 0;
}
