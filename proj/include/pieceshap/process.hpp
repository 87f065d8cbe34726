#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <sys/types.h>
#include <vector>

namespace pieceshap {

/// A child process with line-oriented pipes on stdin and stdout. The child
/// is killed and reaped on destruction.
class ChildProcess {
public:
    using Clock = std::chrono::steady_clock;

    enum class ReadStatus { kLine, kTimeout, kEof };

    struct ReadResult {
        ReadStatus status;
        std::string line;
    };

    /// Throws std::system_error when the executable cannot be started.
    ChildProcess(const std::string& executable, const std::vector<std::string>& arguments);
    ~ChildProcess();

    ChildProcess(const ChildProcess&) = delete;
    ChildProcess& operator=(const ChildProcess&) = delete;

    /// Appends '\n'. Returns false when the pipe is closed.
    bool write_line(const std::string& line);
    /// Returns one line without its terminator, or kTimeout / kEof.
    ReadResult read_line(Clock::time_point deadline);

    /// Non-blocking check; reaps the child when it has exited.
    bool running();
    /// Closes stdin and waits up to `grace` for exit before killing.
    void terminate(std::chrono::milliseconds grace);

    pid_t pid() const { return pid_; }

private:
    pid_t pid_ = -1;
    int stdin_fd_ = -1;
    int stdout_fd_ = -1;
    bool reaped_ = false;
    std::string buffer_;
};

}  // namespace pieceshap
