#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "pieceshap/registry.hpp"

namespace pieceshap {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ServiceConfig {
    std::string host = "127.0.0.1";
    /// 0 picks a free port.
    int port = 8080;
    std::optional<std::filesystem::path> registry_path;
    /// Engine processes per UCI evaluator when the registry entry leaves it unset.
    unsigned pool_size = 0;
    /// Jobs allowed to wait; submissions beyond it are refused with 429.
    std::size_t queue_depth = 64;
    /// Jobs computed at the same time.
    unsigned job_workers = 2;
    std::optional<std::filesystem::path> static_dir;

    /// Keys: listen ("host:port"), registry, pool_size, queue_depth, job_workers, static_dir.
    /// Relative paths resolve against `base`.
    static ServiceConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base = {});
    /// Throws ConfigError when the file is missing or invalid.
    static ServiceConfig load(const std::filesystem::path& path);
};

/// HTTP front end with an asynchronous job queue.
///
///   POST /explain  {fen, evaluator_id, root_limit?, perturb_limit?, max_evaluations?, seed?, exact_threshold?}
///   POST /compare  {fen, evaluator_a, evaluator_b, ...same options}
///   GET  /jobs/{id}
///   GET  /engines
class ExplainService {
public:
    ExplainService(ServiceConfig config, EngineRegistry registry);
    ~ExplainService();

    ExplainService(const ExplainService&) = delete;
    ExplainService& operator=(const ExplainService&) = delete;

    /// Binds the listening socket; returns the port. Throws ConfigError on failure.
    int bind();
    /// Serves until stop(). Requires bind().
    void run();
    /// bind() and serve on a background thread.
    int start();
    /// Stops serving, cancels queued and running jobs and joins all threads.
    void stop();

    int port() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace pieceshap
