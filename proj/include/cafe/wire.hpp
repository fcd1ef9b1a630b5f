#pragma once

#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "cafe/error.hpp"
#include "cafe/model.hpp"

namespace cafe {

/// Adapter serving predictions from an external process over a line-delimited
/// protocol on stdin/stdout: one handshake line {"features": [...]} from this
/// side, then per request one {"rows": [[...], ...]} line answered by one
/// {"preds": [...]} line with matching count. Requests are serialized behind a
/// mutex; batches beyond 4096 rows are split transparently.
class ExternalModel : public PredictionModel {
 public:
  static constexpr std::size_t kMaxRowsPerRequest = 4096;

  ExternalModel(const std::string& command, std::vector<std::string> schema,
                int timeout_ms = 30000)
      : schema_(std::move(schema)), timeout_ms_(timeout_ms) {
    signal(SIGPIPE, SIG_IGN);  // broken pipes must surface as errors, not signals
    int to_child[2], from_child[2];
    require(pipe(to_child) == 0 && pipe(from_child) == 0, "subprocess-exit",
            "cannot create pipes");
    pid_ = fork();
    require(pid_ >= 0, "subprocess-exit", "fork failed");
    if (pid_ == 0) {
      setpgid(0, 0);  // own process group, so teardown reaches sh's children too
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    setpgid(pid_, pid_);  // mirror in the parent to avoid a startup race
    close(to_child[0]);
    close(from_child[1]);
    in_fd_ = to_child[1];
    out_fd_ = from_child[0];
    nlohmann::json handshake{{"features", schema_}};
    write_line(handshake.dump());
  }

  ExternalModel(const ExternalModel&) = delete;
  ExternalModel& operator=(const ExternalModel&) = delete;

  ~ExternalModel() override {
    if (in_fd_ >= 0) close(in_fd_);
    if (out_fd_ >= 0) close(out_fd_);
    if (pid_ > 0) {
      // give the process a moment to exit on EOF, then force the whole group
      for (int i = 0; i < 50; ++i) {
        const pid_t r = waitpid(pid_, nullptr, WNOHANG);
        if (r == pid_ || (r < 0 && errno == ECHILD)) {
          killpg(pid_, SIGKILL);  // sweep up any orphaned grandchildren
          return;
        }
        usleep(10000);
      }
      killpg(pid_, SIGKILL);
      waitpid(pid_, nullptr, 0);
    }
  }

  const std::vector<std::string>& input_schema() const override { return schema_; }

  std::vector<double> predict(const Matrix& rows) const override {
    require(rows.cols == schema_.size(), "schema-mismatch", "prediction batch has wrong width");
    std::lock_guard<std::mutex> lock(mu_);
    std::vector<double> out;
    out.reserve(rows.rows);
    for (std::size_t begin = 0; begin < rows.rows; begin += kMaxRowsPerRequest) {
      const std::size_t end = std::min(rows.rows, begin + kMaxRowsPerRequest);
      nlohmann::json req;
      req["rows"] = nlohmann::json::array();
      for (std::size_t r = begin; r < end; ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t c = 0; c < rows.cols; ++c) row.push_back(rows.at(r, c));
        req["rows"].push_back(std::move(row));
      }
      write_line(req.dump());
      const std::string reply = read_line();
      nlohmann::json parsed;
      try {
        parsed = nlohmann::json::parse(reply);
      } catch (const std::exception&) {
        fail("protocol-violation", "reply is not a JSON document: " + truncate(reply));
      }
      require(parsed.is_object() && parsed.contains("preds") && parsed["preds"].is_array(),
              "protocol-violation", "reply lacks a 'preds' array");
      const auto& preds = parsed["preds"];
      require(preds.size() == end - begin, "protocol-violation",
              "expected " + std::to_string(end - begin) + " predictions, got " +
                  std::to_string(preds.size()));
      for (const auto& p : preds) {
        require(p.is_number(), "protocol-violation", "prediction is not a number");
        const double v = p.get<double>();
        require(std::isfinite(v), "protocol-violation", "prediction is not finite");
        out.push_back(v);
      }
    }
    return out;
  }

 private:
  void write_line(const std::string& payload) const {
    std::string line = payload;
    line += '\n';
    std::size_t off = 0;
    while (off < line.size()) {
      const ssize_t k = ::write(in_fd_, line.data() + off, line.size() - off);
      if (k < 0) {
        if (errno == EINTR) continue;
        fail("subprocess-exit", "model process closed its input");
      }
      off += static_cast<std::size_t>(k);
    }
  }

  std::string read_line() const {
    for (;;) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      pollfd pfd{out_fd_, POLLIN, 0};
      const int pr = poll(&pfd, 1, timeout_ms_);
      require(pr != 0, "timeout", "model process did not answer within " +
                                      std::to_string(timeout_ms_) + " ms");
      require(pr > 0, "subprocess-exit", "poll on model process failed");
      char chunk[4096];
      const ssize_t k = ::read(out_fd_, chunk, sizeof(chunk));
      if (k < 0) {
        if (errno == EINTR) continue;
        fail("subprocess-exit", "read from model process failed");
      }
      require(k != 0, "subprocess-exit", "model process exited mid-conversation");
      buffer_.append(chunk, static_cast<std::size_t>(k));
    }
  }

  static std::string truncate(const std::string& s) {
    return s.size() <= 80 ? s : s.substr(0, 77) + "...";
  }

  std::vector<std::string> schema_;
  int timeout_ms_;
  pid_t pid_ = -1;
  int in_fd_ = -1;
  int out_fd_ = -1;
  mutable std::mutex mu_;
  mutable std::string buffer_;
};

}  // namespace cafe
