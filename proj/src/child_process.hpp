#pragma once

#include <sys/types.h>

#include <chrono>
#include <string>
#include <vector>

namespace realsteer::detail {

/// A child process spoken to in newline-delimited text over its standard
/// streams. stderr is inherited.
class LineChannel {
 public:
  /// Throws SpawnError if the executable cannot be started.
  LineChannel(const std::string& path, const std::vector<std::string>& args);
  ~LineChannel();
  LineChannel(const LineChannel&) = delete;
  LineChannel& operator=(const LineChannel&) = delete;

  /// Appends '\n'. Throws TransportError if the child has gone away.
  void write_line(const std::string& line);
  /// Returns false on timeout; throws TransportError on EOF or read failure.
  bool read_line(std::string& line, std::chrono::milliseconds timeout);

  pid_t pid() const noexcept { return pid_; }

 private:
  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
};

}  // namespace realsteer::detail
