#pragma once

#include <condition_variable>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "pieceshap/engine.hpp"
#include "pieceshap/process.hpp"

namespace pieceshap {

/// Extracts the score of the last "info ... score" line before "bestmove"
/// and converts it to White's point of view. Only the principal line
/// (no multipv, or multipv 1) is considered; "info string" lines are ignored.
/// Throws EngineError(kProtocolError) on a malformed score, a missing score
/// or a missing bestmove.
EngineScore parse_search_output(std::span<const std::string> lines, Color side_to_move);

/// One running engine process. Not thread-safe; confine to one worker.
class UciSession {
public:
    /// Spawns and completes the uci/isready handshake, then applies options.
    /// Throws EngineError(kSpawnFailed or kHandshakeTimeout).
    explicit UciSession(const UciConfig& config);
    ~UciSession();

    UciSession(const UciSession&) = delete;
    UciSession& operator=(const UciSession&) = delete;

    /// Throws EngineError(kTimeout, kEngineCrashed or kProtocolError).
    EngineScore search(const Position& position, const EvalLimit& limit);

    const std::string& engine_name() const { return name_; }
    /// Raw lines of the most recent search, for diagnostics.
    const std::vector<std::string>& last_transcript() const { return transcript_; }

private:
    void send(const std::string& line, EngineError::Kind failure);
    void wait_for(std::string_view token, ChildProcess::Clock::time_point deadline, EngineError::Kind on_timeout,
                  EngineError::Kind on_eof);

    UciConfig config_;
    std::unique_ptr<ChildProcess> process_;
    std::string name_;
    std::vector<std::string> transcript_;
};

/// A pool of UciSessions sharing one configuration; one position in flight
/// per process. A stalled or crashed process is replaced and the position
/// retried once; if that fails too the position is reported as Rejected.
class UciEvaluator final : public Evaluator {
public:
    UciEvaluator(std::string id, UciConfig config, unsigned pool_size);
    ~UciEvaluator() override;

    const std::string& id() const override { return id_; }
    EvaluationOutcome evaluate(const Position& position, const EvalLimit& limit) override;
    unsigned parallelism() const override { return pool_size_; }

    /// Processes started over the lifetime of the pool, including replacements.
    unsigned sessions_started() const;

private:
    std::unique_ptr<UciSession> checkout();
    void checkin(std::unique_ptr<UciSession> session);
    std::unique_ptr<UciSession> spawn();

    std::string id_;
    UciConfig config_;
    unsigned pool_size_;

    mutable std::mutex mutex_;
    std::condition_variable available_;
    std::vector<std::unique_ptr<UciSession>> idle_;
    unsigned live_ = 0;
    unsigned started_ = 0;
};

}  // namespace pieceshap
