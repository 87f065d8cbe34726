#include "pieceshap/process.hpp"

#include <cerrno>
#include <csignal>
#include <cstring>
#include <fcntl.h>
#include <mutex>
#include <poll.h>
#include <sys/wait.h>
#include <system_error>
#include <thread>
#include <unistd.h>

namespace pieceshap {

namespace {

void ignore_sigpipe() {
    static std::once_flag once;
    std::call_once(once, [] { std::signal(SIGPIPE, SIG_IGN); });
}

void close_fd(int& fd) {
    if (fd >= 0) {
        ::close(fd);
        fd = -1;
    }
}

}  // namespace

ChildProcess::ChildProcess(const std::string& executable, const std::vector<std::string>& arguments) {
    ignore_sigpipe();

    int in_pipe[2];
    int out_pipe[2];
    int err_pipe[2];  // reports exec failure back to the parent
    if (::pipe2(in_pipe, O_CLOEXEC) != 0) {
        throw std::system_error(errno, std::generic_category(), "pipe");
    }
    if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
        const int e = errno;
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        throw std::system_error(e, std::generic_category(), "pipe");
    }
    if (::pipe2(err_pipe, O_CLOEXEC) != 0) {
        const int e = errno;
        for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) {
            ::close(fd);
        }
        throw std::system_error(e, std::generic_category(), "pipe");
    }

    std::vector<std::string> storage;
    storage.push_back(executable);
    storage.insert(storage.end(), arguments.begin(), arguments.end());
    std::vector<char*> argv;
    for (auto& s : storage) {
        argv.push_back(s.data());
    }
    argv.push_back(nullptr);

    const pid_t pid = ::fork();
    if (pid < 0) {
        const int e = errno;
        for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1]}) {
            ::close(fd);
        }
        throw std::system_error(e, std::generic_category(), "fork");
    }
    if (pid == 0) {
        ::dup2(in_pipe[0], STDIN_FILENO);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        ::execvp(argv[0], argv.data());
        const int e = errno;
        [[maybe_unused]] auto n = ::write(err_pipe[1], &e, sizeof(e));
        ::_exit(127);
    }

    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    ::close(err_pipe[1]);
    pid_ = pid;
    stdin_fd_ = in_pipe[1];
    stdout_fd_ = out_pipe[0];

    int exec_errno = 0;
    ssize_t got;
    do {
        got = ::read(err_pipe[0], &exec_errno, sizeof(exec_errno));
    } while (got < 0 && errno == EINTR);
    ::close(err_pipe[0]);
    if (got == static_cast<ssize_t>(sizeof(exec_errno))) {
        ::waitpid(pid_, nullptr, 0);
        reaped_ = true;
        close_fd(stdin_fd_);
        close_fd(stdout_fd_);
        throw std::system_error(exec_errno, std::generic_category(), "exec " + executable);
    }
}

ChildProcess::~ChildProcess() { terminate(std::chrono::milliseconds(200)); }

bool ChildProcess::write_line(const std::string& line) {
    if (stdin_fd_ < 0) {
        return false;
    }
    std::string data = line + '\n';
    const char* p = data.data();
    std::size_t left = data.size();
    while (left > 0) {
        const ssize_t n = ::write(stdin_fd_, p, left);
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            return false;
        }
        p += n;
        left -= static_cast<std::size_t>(n);
    }
    return true;
}

ChildProcess::ReadResult ChildProcess::read_line(Clock::time_point deadline) {
    for (;;) {
        if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            if (!line.empty() && line.back() == '\r') {
                line.pop_back();
            }
            return {ReadStatus::kLine, std::move(line)};
        }
        if (stdout_fd_ < 0) {
            return {ReadStatus::kEof, {}};
        }
        const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
        if (remaining.count() <= 0) {
            return {ReadStatus::kTimeout, {}};
        }
        pollfd pfd{stdout_fd_, POLLIN, 0};
        const int ready = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(remaining.count(), 1 << 30)));
        if (ready < 0) {
            if (errno == EINTR) {
                continue;
            }
            return {ReadStatus::kEof, {}};
        }
        if (ready == 0) {
            continue;
        }
        char chunk[4096];
        const ssize_t n = ::read(stdout_fd_, chunk, sizeof(chunk));
        if (n < 0 && errno == EINTR) {
            continue;
        }
        if (n <= 0) {
            close_fd(stdout_fd_);
            // A final unterminated line still counts.
            if (!buffer_.empty()) {
                std::string line = std::move(buffer_);
                buffer_.clear();
                return {ReadStatus::kLine, std::move(line)};
            }
            return {ReadStatus::kEof, {}};
        }
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

bool ChildProcess::running() {
    if (reaped_ || pid_ < 0) {
        return false;
    }
    int status = 0;
    const pid_t r = ::waitpid(pid_, &status, WNOHANG);
    if (r == pid_) {
        reaped_ = true;
        return false;
    }
    return r == 0;
}

void ChildProcess::terminate(std::chrono::milliseconds grace) {
    close_fd(stdin_fd_);
    if (pid_ >= 0 && !reaped_) {
        const auto deadline = Clock::now() + grace;
        while (running() && Clock::now() < deadline) {
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
        }
        if (!reaped_) {
            ::kill(pid_, SIGKILL);
            ::waitpid(pid_, nullptr, 0);
            reaped_ = true;
        }
    }
    close_fd(stdout_fd_);
}

}  // namespace pieceshap
