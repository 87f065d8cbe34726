#include "pieceshap/uci.hpp"

#include <charconv>
#include <sstream>
#include <system_error>

#include <fmt/format.h>

namespace pieceshap {

namespace {

std::vector<std::string_view> tokenize(std::string_view line) {
    std::vector<std::string_view> tokens;
    std::size_t pos = 0;
    while (pos < line.size()) {
        while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) {
            ++pos;
        }
        auto end = pos;
        while (end < line.size() && line[end] != ' ' && line[end] != '\t') {
            ++end;
        }
        if (end > pos) {
            tokens.push_back(line.substr(pos, end - pos));
        }
        pos = end;
    }
    return tokens;
}

[[noreturn]] void protocol_error(const std::string& msg) { throw EngineError(EngineError::Kind::kProtocolError, msg); }

int parse_int(std::string_view token, std::string_view line) {
    int value = 0;
    const auto* end = token.data() + token.size();
    auto [ptr, ec] = std::from_chars(token.data(), end, value);
    if (ec != std::errc{} || ptr != end) {
        protocol_error(fmt::format("non-integer score value '{}' in \"{}\"", token, line));
    }
    return value;
}

std::chrono::milliseconds search_deadline(const UciConfig& config, const EvalLimit& limit) {
    if (limit.kind() == EvalLimit::Kind::kMoveTimeMillis) {
        return std::chrono::milliseconds(limit.count()) + config.grace;
    }
    return config.unbounded_search_timeout;
}

}  // namespace

EngineScore parse_search_output(std::span<const std::string> lines, Color side_to_move) {
    std::optional<EngineScore> relative;
    bool saw_bestmove = false;
    for (const auto& line : lines) {
        const auto tokens = tokenize(line);
        if (tokens.empty()) {
            continue;
        }
        if (tokens[0] == "bestmove") {
            saw_bestmove = true;
            break;
        }
        if (tokens[0] != "info" || (tokens.size() > 1 && tokens[1] == "string")) {
            continue;
        }
        std::optional<EngineScore> score;
        bool principal = true;
        for (std::size_t i = 1; i < tokens.size(); ++i) {
            if (tokens[i] == "multipv" && i + 1 < tokens.size()) {
                principal = parse_int(tokens[i + 1], line) == 1;
                ++i;
            } else if (tokens[i] == "score") {
                if (i + 2 >= tokens.size()) {
                    protocol_error(fmt::format("truncated score in \"{}\"", line));
                }
                const auto type = tokens[i + 1];
                const int value = parse_int(tokens[i + 2], line);
                if (type == "cp") {
                    score = EngineScore::centipawns(value);
                } else if (type == "mate") {
                    // "mate 0": the side to move is already mated.
                    score = EngineScore::mate_in(value == 0 ? -1 : value);
                } else {
                    protocol_error(fmt::format("unknown score type '{}' in \"{}\"", type, line));
                }
                i += 2;
            } else if (tokens[i] == "pv") {
                break;
            }
        }
        if (score && principal) {
            relative = score;
        }
    }
    if (!saw_bestmove) {
        protocol_error("search output ended without bestmove");
    }
    if (!relative) {
        protocol_error("no score reported before bestmove");
    }
    return side_to_move == Color::kWhite ? *relative : relative->negated();
}

UciSession::UciSession(const UciConfig& config) : config_(config) {
    try {
        process_ = std::make_unique<ChildProcess>(config.executable, config.arguments);
    } catch (const std::system_error& e) {
        throw EngineError(EngineError::Kind::kSpawnFailed, fmt::format("cannot start '{}': {}", config.executable, e.what()));
    }
    const auto deadline = ChildProcess::Clock::now() + config.handshake_timeout;
    send("uci", EngineError::Kind::kSpawnFailed);
    for (;;) {
        auto r = process_->read_line(deadline);
        if (r.status == ChildProcess::ReadStatus::kTimeout) {
            throw EngineError(EngineError::Kind::kHandshakeTimeout,
                              fmt::format("'{}' did not answer uciok within {} ms", config.executable,
                                          config.handshake_timeout.count()));
        }
        if (r.status == ChildProcess::ReadStatus::kEof) {
            throw EngineError(EngineError::Kind::kSpawnFailed,
                              fmt::format("'{}' exited during the uci handshake", config.executable));
        }
        if (r.line.rfind("id name ", 0) == 0) {
            name_ = r.line.substr(8);
        } else if (r.line == "uciok") {
            break;
        }
    }
    for (const auto& [name, value] : config.options) {
        send(fmt::format("setoption name {} value {}", name, value), EngineError::Kind::kSpawnFailed);
    }
    send("isready", EngineError::Kind::kSpawnFailed);
    wait_for("readyok", deadline, EngineError::Kind::kHandshakeTimeout, EngineError::Kind::kSpawnFailed);
}

UciSession::~UciSession() {
    if (process_) {
        process_->write_line("quit");
        process_->terminate(std::chrono::milliseconds(500));
    }
}

void UciSession::send(const std::string& line, EngineError::Kind failure) {
    if (!process_->write_line(line)) {
        throw EngineError(failure, fmt::format("'{}' closed its input", config_.executable));
    }
}

void UciSession::wait_for(std::string_view token, ChildProcess::Clock::time_point deadline, EngineError::Kind on_timeout,
                          EngineError::Kind on_eof) {
    for (;;) {
        auto r = process_->read_line(deadline);
        if (r.status == ChildProcess::ReadStatus::kTimeout) {
            throw EngineError(on_timeout, fmt::format("'{}' did not send {}", config_.executable, token));
        }
        if (r.status == ChildProcess::ReadStatus::kEof) {
            throw EngineError(on_eof, fmt::format("'{}' exited while waiting for {}", config_.executable, token));
        }
        if (r.line == token) {
            return;
        }
    }
}

EngineScore UciSession::search(const Position& position, const EvalLimit& limit) {
    transcript_.clear();
    const auto start = ChildProcess::Clock::now();
    if (config_.new_game_per_position) {
        send("ucinewgame", EngineError::Kind::kEngineCrashed);
        send("isready", EngineError::Kind::kEngineCrashed);
        wait_for("readyok", start + config_.handshake_timeout, EngineError::Kind::kTimeout,
                 EngineError::Kind::kEngineCrashed);
    }
    send("position fen " + to_fen(position), EngineError::Kind::kEngineCrashed);
    send("go " + limit.uci_go_arguments(), EngineError::Kind::kEngineCrashed);

    const auto deadline = ChildProcess::Clock::now() + search_deadline(config_, limit);
    for (;;) {
        auto r = process_->read_line(deadline);
        if (r.status == ChildProcess::ReadStatus::kTimeout) {
            process_->write_line("stop");
            throw EngineError(EngineError::Kind::kTimeout,
                              fmt::format("no bestmove for '{}' within the limit", to_fen(position)));
        }
        if (r.status == ChildProcess::ReadStatus::kEof) {
            throw EngineError(EngineError::Kind::kEngineCrashed,
                              fmt::format("engine exited while searching '{}'", to_fen(position)));
        }
        const bool done = r.line.rfind("bestmove", 0) == 0;
        transcript_.push_back(std::move(r.line));
        if (done) {
            break;
        }
    }
    return parse_search_output(transcript_, position.side_to_move());
}

UciEvaluator::UciEvaluator(std::string id, UciConfig config, unsigned pool_size)
    : id_(std::move(id)), config_(std::move(config)), pool_size_(pool_size == 0 ? 1 : pool_size) {}

UciEvaluator::~UciEvaluator() = default;

unsigned UciEvaluator::sessions_started() const {
    std::lock_guard lock(mutex_);
    return started_;
}

std::unique_ptr<UciSession> UciEvaluator::spawn() {
    {
        std::lock_guard lock(mutex_);
        ++started_;
    }
    try {
        return std::make_unique<UciSession>(config_);
    } catch (...) {
        std::lock_guard lock(mutex_);
        --live_;
        available_.notify_one();
        throw;
    }
}

std::unique_ptr<UciSession> UciEvaluator::checkout() {
    std::unique_lock lock(mutex_);
    available_.wait(lock, [&] { return !idle_.empty() || live_ < pool_size_; });
    if (!idle_.empty()) {
        auto session = std::move(idle_.back());
        idle_.pop_back();
        return session;
    }
    ++live_;
    lock.unlock();
    return spawn();
}

void UciEvaluator::checkin(std::unique_ptr<UciSession> session) {
    std::lock_guard lock(mutex_);
    if (session) {
        idle_.push_back(std::move(session));
    } else {
        --live_;
    }
    available_.notify_one();
}

EvaluationOutcome UciEvaluator::evaluate(const Position& position, const EvalLimit& limit) {
    std::string first_failure;
    for (int attempt = 0; attempt < 2; ++attempt) {
        auto session = checkout();
        try {
            const auto score = session->search(position, limit);
            checkin(std::move(session));
            return EvaluationOutcome::scored(score);
        } catch (const EngineError& e) {
            // The process state is unknown after any failure; replace it.
            session.reset();
            checkin(nullptr);
            if (e.kind() == EngineError::Kind::kProtocolError) {
                throw;
            }
            if (attempt == 0) {
                first_failure = e.what();
                continue;
            }
            return EvaluationOutcome::rejected(fmt::format("{} (after restart: {})", first_failure, e.what()));
        }
    }
    return EvaluationOutcome::rejected(first_failure);
}

}  // namespace pieceshap
