#include "child_process.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <mutex>
#include <thread>

#include "realsteer/error.hpp"

namespace realsteer::detail {

namespace {

void ignore_sigpipe() {
  static std::once_flag once;
  std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

void close_fd(int& fd) {
  if (fd >= 0) ::close(fd);
  fd = -1;
}

}  // namespace

LineChannel::LineChannel(const std::string& path, const std::vector<std::string>& args) {
  ignore_sigpipe();
  int in_pipe[2], out_pipe[2], err_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0) fail(ErrorCode::SpawnError, std::strerror(errno));
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    fail(ErrorCode::SpawnError, std::strerror(errno));
  }
  if (::pipe2(err_pipe, O_CLOEXEC) != 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
    fail(ErrorCode::SpawnError, std::strerror(errno));
  }

  std::vector<char*> argv;
  argv.push_back(const_cast<char*>(path.c_str()));
  for (const std::string& a : args) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);

  pid_ = ::fork();
  if (pid_ == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::execvp(path.c_str(), argv.data());
    const int err = errno;
    [[maybe_unused]] auto n = ::write(err_pipe[1], &err, sizeof err);
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  ::close(err_pipe[1]);
  if (pid_ < 0) {
    const int err = errno;
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    ::close(err_pipe[0]);
    fail(ErrorCode::SpawnError, std::strerror(err));
  }
  int child_errno = 0;
  ssize_t got;
  do {
    got = ::read(err_pipe[0], &child_errno, sizeof child_errno);
  } while (got < 0 && errno == EINTR);
  ::close(err_pipe[0]);
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  if (got > 0) {
    close_fd(to_child_);
    close_fd(from_child_);
    ::waitpid(pid_, nullptr, 0);
    pid_ = -1;
    fail(ErrorCode::SpawnError, "cannot execute '" + path + "': " + std::strerror(child_errno));
  }
}

LineChannel::~LineChannel() {
  close_fd(to_child_);
  close_fd(from_child_);
  if (pid_ <= 0) return;
  using namespace std::chrono_literals;
  const auto deadline = std::chrono::steady_clock::now() + 2s;
  while (std::chrono::steady_clock::now() < deadline) {
    if (::waitpid(pid_, nullptr, WNOHANG) != 0) return;
    std::this_thread::sleep_for(5ms);
  }
  ::kill(pid_, SIGKILL);
  ::waitpid(pid_, nullptr, 0);
}

void LineChannel::write_line(const std::string& line) {
  require(to_child_ >= 0, ErrorCode::TransportError, "channel closed");
  std::string data = line;
  data.push_back('\n');
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::write(to_child_, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail(ErrorCode::TransportError, std::string("write to detector failed: ") + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

bool LineChannel::read_line(std::string& line, std::chrono::milliseconds timeout) {
  require(from_child_ >= 0, ErrorCode::TransportError, "channel closed");
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
      line.assign(buffer_, 0, nl);
      buffer_.erase(0, nl + 1);
      return true;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) return false;
    pollfd p{from_child_, POLLIN, 0};
    const int ready = ::poll(&p, 1, static_cast<int>(left.count()));
    if (ready < 0) {
      if (errno == EINTR) continue;
      fail(ErrorCode::TransportError, std::string("poll failed: ") + std::strerror(errno));
    }
    if (ready == 0) return false;
    char chunk[65536];
    const ssize_t n = ::read(from_child_, chunk, sizeof chunk);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail(ErrorCode::TransportError, std::string("read from detector failed: ") + std::strerror(errno));
    }
    if (n == 0) fail(ErrorCode::TransportError, "peer closed its output");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

}  // namespace realsteer::detail
