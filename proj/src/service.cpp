#include "pieceshap/service.hpp"

#include <atomic>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

#include "pieceshap/attribution.hpp"
#include "pieceshap/render.hpp"

namespace pieceshap {

ServiceConfig ServiceConfig::from_json(const nlohmann::json& doc, const std::filesystem::path& base) {
    if (!doc.is_object()) {
        throw ConfigError("service config must be a JSON object");
    }
    const auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_relative() && !base.empty() ? base / path : path;
    };
    ServiceConfig c;
    try {
        if (doc.contains("listen")) {
            const auto listen = doc["listen"].get<std::string>();
            const auto colon = listen.rfind(':');
            if (colon == std::string::npos) {
                throw ConfigError(fmt::format("listen must be host:port, got '{}'", listen));
            }
            c.host = listen.substr(0, colon);
            c.port = std::stoi(listen.substr(colon + 1));
        }
        c.host = doc.value("host", c.host);
        c.port = doc.value("port", c.port);
        if (doc.contains("registry")) {
            c.registry_path = resolve(doc["registry"].get<std::string>());
        }
        c.pool_size = doc.value("pool_size", c.pool_size);
        c.queue_depth = doc.value("queue_depth", c.queue_depth);
        c.job_workers = doc.value("job_workers", c.job_workers);
        if (doc.contains("static_dir")) {
            c.static_dir = resolve(doc["static_dir"].get<std::string>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fmt::format("invalid service config: {}", e.what()));
    } catch (const std::logic_error& e) {
        throw ConfigError(fmt::format("invalid service config: {}", e.what()));
    }
    if (c.port < 0 || c.port > 65535) {
        throw ConfigError(fmt::format("port {} out of range", c.port));
    }
    if (c.job_workers == 0) {
        throw ConfigError("job_workers must be at least 1");
    }
    return c;
}

ServiceConfig ServiceConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(fmt::format("cannot open config '{}'", path.string()));
    }
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(fmt::format("config '{}' is not valid JSON: {}", path.string(), e.what()));
    }
    return from_json(doc, path.parent_path());
}

namespace {

using Json = nlohmann::json;

enum class JobState { kQueued, kRunning, kDone, kFailed };

std::string_view to_string(JobState s) {
    switch (s) {
        case JobState::kQueued: return "queued";
        case JobState::kRunning: return "running";
        case JobState::kDone: return "done";
        case JobState::kFailed: return "failed";
    }
    return "?";
}

struct Cancelled : std::runtime_error {
    Cancelled() : std::runtime_error("service shutting down") {}
};

struct HttpError {
    int status;
    std::string error;
    std::string message;
    std::optional<int> fen_field;
};

struct JobRequest {
    bool compare = false;
    std::optional<Position> position;
    std::vector<EvaluatorDescriptor> evaluators;
    std::optional<EvalLimit> root;
    std::optional<EvalLimit> perturbation;
    SamplingConfig sampling;
    Json echo;
};

struct Job {
    std::string id;
    JobRequest request;
    JobState state = JobState::kQueued;
    std::size_t done = 0;
    std::size_t total = 0;
    Json result;
    Json error;
};

std::size_t planned_evaluations(const Position& p, const SamplingConfig& s) {
    const std::size_t n = p.piece_count() - 2;
    return n <= s.exact_threshold ? (std::size_t{1} << n) : s.max_evaluations;
}

}  // namespace

struct ExplainService::Impl {
    ServiceConfig config;
    EngineRegistry registry;
    httplib::Server server;
    int bound_port = -1;
    std::thread server_thread;

    std::mutex mutex;
    std::condition_variable wake;
    std::deque<std::shared_ptr<Job>> queue;
    std::map<std::string, std::shared_ptr<Job>> jobs;
    std::uint64_t next_id = 1;
    std::atomic<bool> stopping{false};
    std::vector<std::thread> workers;

    std::mutex engines_mutex;
    std::map<std::string, std::unique_ptr<Evaluator>> evaluators;
    std::map<std::string, std::unique_ptr<SubsetCache>> caches;

    Impl(ServiceConfig c, EngineRegistry r) : config(std::move(c)), registry(std::move(r)) {
        routes();
        for (unsigned i = 0; i < config.job_workers; ++i) {
            workers.emplace_back([this] { work(); });
        }
    }

    static void reply(httplib::Response& res, int status, const Json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    static void reply_error(httplib::Response& res, const HttpError& e) {
        Json body{{"error", e.error}, {"message", e.message}};
        if (e.fen_field) {
            body["field"] = *e.fen_field;
        }
        reply(res, e.status, body);
    }

    void routes() {
        server.Post("/explain", [this](const httplib::Request& req, httplib::Response& res) { submit(req, res, false); });
        server.Post("/compare", [this](const httplib::Request& req, httplib::Response& res) { submit(req, res, true); });
        server.Get(R"(/jobs/([A-Za-z0-9_-]+))", [this](const httplib::Request& req, httplib::Response& res) {
            std::lock_guard lock(mutex);
            const auto it = jobs.find(req.matches[1]);
            if (it == jobs.end()) {
                reply_error(res, {404, "UnknownJob", fmt::format("no job '{}'", std::string(req.matches[1])), {}});
                return;
            }
            reply(res, 200, record(*it->second));
        });
        server.Get("/engines", [this](const httplib::Request&, httplib::Response& res) {
            reply(res, 200, Json{{"engines", registry.listing()}});
        });
        if (config.static_dir) {
            if (!server.set_mount_point("/", config.static_dir->string())) {
                throw ConfigError(fmt::format("static_dir '{}' is not a directory", config.static_dir->string()));
            }
        }
        server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
            if (res.body.empty()) {
                reply(res, res.status, Json{{"error", httplib::status_message(res.status)}});
            }
        });
    }

    static Json record(const Job& job) {
        Json r{{"id", job.id},
               {"kind", job.request.compare ? "compare" : "explain"},
               {"state", to_string(job.state)},
               {"progress", {{"done", job.done}, {"total", job.total}}},
               {"request", job.request.echo}};
        if (job.state == JobState::kDone) {
            r["result"] = job.result;
        } else if (job.state == JobState::kFailed) {
            r["error"] = job.error;
        }
        return r;
    }

    const EvaluatorDescriptor& descriptor(const Json& body, const char* key) const {
        if (!body.contains(key) || !body[key].is_string()) {
            throw HttpError{400, "BadRequest", fmt::format("'{}' must be a string", key), {}};
        }
        const auto id = body[key].get<std::string>();
        const auto* d = registry.find(id);
        if (d == nullptr) {
            throw HttpError{404, "UnknownEvaluator", fmt::format("evaluator '{}' is not registered", id), {}};
        }
        return *d;
    }

    JobRequest parse_request(const std::string& text, bool compare) const {
        Json body;
        try {
            body = Json::parse(text);
        } catch (const Json::parse_error& e) {
            throw HttpError{400, "BadRequest", fmt::format("body is not JSON: {}", e.what()), {}};
        }
        if (!body.is_object()) {
            throw HttpError{400, "BadRequest", "body must be a JSON object", {}};
        }
        JobRequest r;
        r.compare = compare;
        if (!body.contains("fen") || !body["fen"].is_string()) {
            throw HttpError{400, "BadRequest", "'fen' must be a string", {}};
        }
        try {
            r.position = parse_fen(body["fen"].get<std::string>());
        } catch (const FenError& e) {
            throw HttpError{400, e.kind() == FenError::Kind::kMalformed ? "MalformedFen" : "IllegalSetup", e.what(),
                            e.field()};
        }
        if (compare) {
            r.evaluators.push_back(descriptor(body, "evaluator_a"));
            r.evaluators.push_back(descriptor(body, "evaluator_b"));
        } else {
            if (!body.contains("evaluator_id")) {
                body["evaluator_id"] = "material";
            }
            r.evaluators.push_back(descriptor(body, "evaluator_id"));
        }
        try {
            if (body.contains("root_limit")) {
                r.root = limit_from_json(body["root_limit"]);
            }
            for (const char* key : {"perturb_limit", "perturbation_limit"}) {
                if (body.contains(key)) {
                    r.perturbation = limit_from_json(body[key]);
                }
            }
        } catch (const RegistryError& e) {
            throw HttpError{400, "BadRequest", e.what(), {}};
        }
        try {
            r.sampling.max_evaluations = body.value("max_evaluations", r.sampling.max_evaluations);
            r.sampling.seed = body.value("seed", r.sampling.seed);
            r.sampling.exact_threshold = body.value("exact_threshold", r.sampling.exact_threshold);
        } catch (const Json::exception& e) {
            throw HttpError{400, "BadRequest", e.what(), {}};
        }
        if (r.sampling.exact_threshold > kMaxExactPieces) {
            throw HttpError{400, "BadRequest", fmt::format("exact_threshold above {}", kMaxExactPieces), {}};
        }
        const std::size_t n = r.position->piece_count() - 2;
        if (n > r.sampling.exact_threshold && r.sampling.max_evaluations < 2 * n + 2) {
            throw HttpError{400, "BudgetTooSmall",
                            fmt::format("max_evaluations must be at least {} for {} pieces", 2 * n + 2, n), {}};
        }
        r.echo = body;
        return r;
    }

    void submit(const httplib::Request& req, httplib::Response& res, bool compare) {
        try {
            auto request = parse_request(req.body, compare);
            std::lock_guard lock(mutex);
            if (stopping) {
                throw HttpError{503, "ShuttingDown", "service is stopping", {}};
            }
            if (queue.size() >= config.queue_depth) {
                throw HttpError{429, "QueueFull", fmt::format("{} jobs already waiting", queue.size()), {}};
            }
            auto job = std::make_shared<Job>();
            job->id = fmt::format("{}", next_id++);
            job->total = planned_evaluations(*request.position, request.sampling) * request.evaluators.size();
            job->request = std::move(request);
            jobs.emplace(job->id, job);
            queue.push_back(job);
            wake.notify_one();
            res.set_header("Location", "/jobs/" + job->id);
            reply(res, 202, Json{{"job_id", job->id}, {"state", "queued"}});
        } catch (const HttpError& e) {
            reply_error(res, e);
        }
    }

    Evaluator& evaluator_for(const EvaluatorDescriptor& d) {
        std::lock_guard lock(engines_mutex);
        auto& slot = evaluators[d.id];
        if (!slot) {
            auto desc = d;
            if (desc.pool_size == 0) {
                desc.pool_size = config.pool_size;
            }
            slot = make_evaluator(desc);
        }
        return *slot;
    }

    SubsetCache& cache_for(const std::string& evaluator_id, const EvalLimit& limit) {
        std::lock_guard lock(engines_mutex);
        auto& slot = caches[evaluator_id + "|" + limit.uci_go_arguments()];
        if (!slot) {
            slot = std::make_unique<SubsetCache>();
        }
        return *slot;
    }

    void set_progress(Job& job, std::size_t done) {
        if (stopping) {
            throw Cancelled();
        }
        std::lock_guard lock(mutex);
        job.done = std::max(job.done, std::min(done, job.total));
    }

    Explanation run_one(Job& job, const EvaluatorDescriptor& d, std::size_t offset) {
        const auto& r = job.request;
        ExplainLimits limits{r.root.value_or(d.root_limit), r.perturbation.value_or(d.perturbation_limit)};
        ExplainOptions options;
        options.sampling = r.sampling;
        options.cache = &cache_for(d.id, limits.perturbation);
        options.progress = [this, &job, offset](std::size_t done, std::size_t) { set_progress(job, offset + done); };
        return explain(*r.position, evaluator_for(d), limits, options);
    }

    void execute(Job& job) {
        Json result;
        Json error;
        try {
            const auto per = planned_evaluations(*job.request.position, job.request.sampling);
            if (job.request.compare) {
                const auto a = run_one(job, job.request.evaluators[0], 0);
                const auto b = run_one(job, job.request.evaluators[1], per);
                result = comparison_document(a, b);
            } else {
                result = to_document(run_one(job, job.request.evaluators[0], 0));
            }
        } catch (const EngineError& e) {
            error = Json{{"type", "EngineError"}, {"kind", std::string(to_string(e.kind()))}, {"message", e.what()}};
        } catch (const AttributionError& e) {
            error = Json{{"type", "AttributionError"}, {"message", e.what()}};
        } catch (const Cancelled& e) {
            error = Json{{"type", "Cancelled"}, {"message", e.what()}};
        } catch (const std::exception& e) {
            error = Json{{"type", "InternalError"}, {"message", e.what()}};
        }
        std::lock_guard lock(mutex);
        if (error.is_null()) {
            job.result = std::move(result);
            job.done = job.total;
            job.state = JobState::kDone;
        } else {
            job.error = std::move(error);
            job.state = JobState::kFailed;
        }
    }

    void work() {
        for (;;) {
            std::shared_ptr<Job> job;
            {
                std::unique_lock lock(mutex);
                wake.wait(lock, [this] { return stopping || !queue.empty(); });
                if (stopping) {
                    return;
                }
                job = queue.front();
                queue.pop_front();
                job->state = JobState::kRunning;
            }
            execute(*job);
        }
    }

    void shutdown() {
        {
            std::lock_guard lock(mutex);
            if (stopping.exchange(true)) {
                return;
            }
            for (auto& job : queue) {
                job->state = JobState::kFailed;
                job->error = Json{{"type", "Cancelled"}, {"message", "service shutting down"}};
            }
            queue.clear();
        }
        wake.notify_all();
        server.stop();
        if (server_thread.joinable()) {
            server_thread.join();
        }
        for (auto& w : workers) {
            w.join();
        }
    }
};

ExplainService::ExplainService(ServiceConfig config, EngineRegistry registry)
    : impl_(std::make_unique<Impl>(std::move(config), std::move(registry))) {}

ExplainService::~ExplainService() {
    stop();
}

int ExplainService::bind() {
    if (impl_->bound_port >= 0) {
        return impl_->bound_port;
    }
    auto& s = impl_->server;
    const auto& c = impl_->config;
    if (c.port == 0) {
        impl_->bound_port = s.bind_to_any_port(c.host);
    } else if (s.bind_to_port(c.host, c.port)) {
        impl_->bound_port = c.port;
    }
    if (impl_->bound_port < 0) {
        throw ConfigError(fmt::format("cannot listen on {}:{}", c.host, c.port));
    }
    return impl_->bound_port;
}

void ExplainService::run() {
    bind();
    impl_->server.listen_after_bind();
}

int ExplainService::start() {
    const int p = bind();
    impl_->server_thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return p;
}

void ExplainService::stop() {
    if (impl_) {
        impl_->shutdown();
    }
}

int ExplainService::port() const {
    return impl_->bound_port;
}

}  // namespace pieceshap
