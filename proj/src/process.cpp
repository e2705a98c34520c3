#include "mcce/process.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <cstring>
#include <sstream>

#include "mcce/errors.hpp"

namespace mcce {

namespace {

struct Pipe {
    int fd[2] = {-1, -1};
    Pipe() {
        if (::pipe2(fd, O_CLOEXEC) != 0) throw IoError(std::string("pipe: ") + std::strerror(errno));
    }
    ~Pipe() {
        close_read();
        close_write();
    }
    Pipe(const Pipe&) = delete;
    Pipe& operator=(const Pipe&) = delete;
    void close_read() {
        if (fd[0] >= 0) ::close(fd[0]);
        fd[0] = -1;
    }
    void close_write() {
        if (fd[1] >= 0) ::close(fd[1]);
        fd[1] = -1;
    }
};

}  // namespace

std::vector<std::string> split_command(std::string_view command) {
    std::vector<std::string> out;
    std::istringstream in{std::string(command)};
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

ProcessResult run_process(const std::vector<std::string>& argv, std::string_view input,
                          std::chrono::milliseconds timeout) {
    if (argv.empty()) throw IoError("empty command");
    // A child that exits before reading its stdin must not take us down with SIGPIPE.
    static const bool sigpipe_ignored = [] { return ::signal(SIGPIPE, SIG_IGN) != SIG_ERR; }();
    (void)sigpipe_ignored;
    Pipe in, out, err;

    std::vector<char*> cargv;
    for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
    cargv.push_back(nullptr);

    const pid_t pid = ::fork();
    if (pid < 0) throw IoError(std::string("fork: ") + std::strerror(errno));
    if (pid == 0) {
        ::dup2(in.fd[0], STDIN_FILENO);
        ::dup2(out.fd[1], STDOUT_FILENO);
        ::dup2(err.fd[1], STDERR_FILENO);
        ::execvp(cargv[0], cargv.data());
        const char msg[] = "exec failed\n";
        [[maybe_unused]] auto n = ::write(STDERR_FILENO, msg, sizeof msg - 1);
        ::_exit(127);
    }
    in.close_read();
    out.close_write();
    err.close_write();
    ::fcntl(in.fd[1], F_SETFL, O_NONBLOCK);

    ProcessResult result;
    std::size_t written = 0;
    if (input.empty()) in.close_write();
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    std::array<char, 8192> buf{};

    while (out.fd[0] >= 0 || err.fd[0] >= 0) {
        const auto now = std::chrono::steady_clock::now();
        if (now >= deadline) {
            result.timed_out = true;
            ::kill(pid, SIGKILL);
            break;
        }
        const int wait_ms =
            static_cast<int>(std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count()) + 1;
        std::array<pollfd, 3> fds{};
        nfds_t n = 0;
        int out_slot = -1, err_slot = -1, in_slot = -1;
        if (out.fd[0] >= 0) { fds[n] = {out.fd[0], POLLIN, 0}; out_slot = static_cast<int>(n++); }
        if (err.fd[0] >= 0) { fds[n] = {err.fd[0], POLLIN, 0}; err_slot = static_cast<int>(n++); }
        if (in.fd[1] >= 0) { fds[n] = {in.fd[1], POLLOUT, 0}; in_slot = static_cast<int>(n++); }
        const int rc = ::poll(fds.data(), n, wait_ms);
        if (rc < 0) {
            if (errno == EINTR) continue;
            ::kill(pid, SIGKILL);
            throw IoError(std::string("poll: ") + std::strerror(errno));
        }
        auto drain = [&](int slot, Pipe& p, std::string& sink) {
            if (slot < 0 || !(fds[slot].revents & (POLLIN | POLLHUP | POLLERR))) return;
            const ssize_t got = ::read(p.fd[0], buf.data(), buf.size());
            if (got > 0) sink.append(buf.data(), static_cast<std::size_t>(got));
            else if (got == 0 || errno != EAGAIN) p.close_read();
        };
        drain(out_slot, out, result.out);
        drain(err_slot, err, result.err);
        if (in_slot >= 0 && (fds[in_slot].revents & (POLLOUT | POLLERR | POLLHUP))) {
            const ssize_t put = ::write(in.fd[1], input.data() + written, input.size() - written);
            if (put > 0) written += static_cast<std::size_t>(put);
            if (put < 0 && errno != EAGAIN) written = input.size();
            if (written >= input.size()) in.close_write();
        }
    }
    in.close_write();

    int status = 0;
    ::waitpid(pid, &status, 0);
    if (WIFEXITED(status)) result.exit_code = WEXITSTATUS(status);
    else result.exit_code = -1;
    return result;
}

}  // namespace mcce
