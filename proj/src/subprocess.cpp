// Copyright (c) 2026, the langarith authors
// SPDX-License-Identifier: Apache-2.0
//

#include "subprocess.hpp"

#include <array>
#include <cerrno>
#include <cstring>

#include <fcntl.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <fmt/core.h>

#include "langarith/error.hpp"

extern char** environ;

namespace langarith::detail {

namespace {

// The request is written before the child starts, so it has to fit in the
// pipe buffer without a reader.
constexpr std::size_t kMaxInput = 4096;

class Fd {
public:
    Fd() = default;
    ~Fd() { reset(); }
    Fd(const Fd&) = delete;
    Fd& operator=(const Fd&) = delete;

    int get() const noexcept { return fd_; }
    void reset(int fd = -1) noexcept {
        if (fd_ >= 0)
            ::close(fd_);
        fd_ = fd;
    }

private:
    int fd_ = -1;
};

struct Pipe {
    Fd read;
    Fd write;

    Pipe() {
        int fds[2];
        if (::pipe2(fds, O_CLOEXEC) != 0)
            throw EvaluatorError(fmt::format("pipe2 failed: {}", std::strerror(errno)));
        read.reset(fds[0]);
        write.reset(fds[1]);
    }
};

class SpawnActions {
public:
    SpawnActions() { posix_spawn_file_actions_init(&fa_); }
    ~SpawnActions() { posix_spawn_file_actions_destroy(&fa_); }
    posix_spawn_file_actions_t* get() noexcept { return &fa_; }

private:
    posix_spawn_file_actions_t fa_;
};

} // namespace

std::string shell_quote(std::string_view s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'')
            out += "'\\''";
        else
            out += c;
    }
    return out + "'";
}

ProcessResult run_shell(const std::string& command, std::string_view input, const std::filesystem::path& stderr_path) {
    if (input.size() > kMaxInput)
        throw EvaluatorError(fmt::format("evaluator request of {} bytes exceeds {} bytes", input.size(), kMaxInput));

    Pipe in;
    Pipe out;
    for (std::size_t done = 0; done < input.size();) {
        const ssize_t n = ::write(in.write.get(), input.data() + done, input.size() - done);
        if (n < 0 && errno == EINTR)
            continue;
        if (n < 0)
            throw EvaluatorError(fmt::format("writing evaluator request failed: {}", std::strerror(errno)));
        done += static_cast<std::size_t>(n);
    }
    in.write.reset();

    SpawnActions actions;
    posix_spawn_file_actions_adddup2(actions.get(), in.read.get(), STDIN_FILENO);
    posix_spawn_file_actions_adddup2(actions.get(), out.write.get(), STDOUT_FILENO);
    const std::string err_target = stderr_path.empty() ? std::string("/dev/null") : stderr_path.string();
    posix_spawn_file_actions_addopen(actions.get(), STDERR_FILENO, err_target.c_str(), O_WRONLY | O_CREAT | O_APPEND,
                                     0644);

    std::string sh = "sh";
    std::string dash_c = "-c";
    std::string cmd = command;
    std::array<char*, 4> argv{sh.data(), dash_c.data(), cmd.data(), nullptr};
    pid_t pid = 0;
    const int rc = ::posix_spawn(&pid, "/bin/sh", actions.get(), nullptr, argv.data(), environ);
    if (rc != 0)
        throw EvaluatorError(fmt::format("cannot start evaluator: {}", std::strerror(rc)));
    in.read.reset();
    out.write.reset();

    ProcessResult result;
    std::array<char, 4096> buf;
    for (;;) {
        const ssize_t n = ::read(out.read.get(), buf.data(), buf.size());
        if (n < 0 && errno == EINTR)
            continue;
        if (n <= 0)
            break;
        result.stdout_text.append(buf.data(), static_cast<std::size_t>(n));
    }

    int status = 0;
    while (::waitpid(pid, &status, 0) < 0) {
        if (errno != EINTR)
            throw EvaluatorError(fmt::format("waitpid failed: {}", std::strerror(errno)));
    }
    if (WIFEXITED(status))
        result.exit_code = WEXITSTATUS(status);
    else if (WIFSIGNALED(status))
        result.exit_code = 128 + WTERMSIG(status);
    else
        result.exit_code = -1;
    return result;
}

} // namespace langarith::detail
