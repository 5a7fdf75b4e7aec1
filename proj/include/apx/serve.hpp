#pragma once

// Line-protocol serving. Requests arrive as newline-delimited JSON objects,
// one per line, either on a stream (stdin in the CLI) or over TCP; each
// produces exactly one JSON response line. A line that fails to parse yields
// {"error":"parse","line":n} and the loop continues.

#include <atomic>
#include <cstdint>
#include <istream>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <json.hpp>

#include "apx/common.hpp"
#include "apx/engine.hpp"
#include "apx/pipeline.hpp"
#include "apx/report.hpp"

namespace apx {

// Serves one request line. Responses and errors are single-line JSON; the
// per-request seed is derived from the configured seed and the request id,
// so serve and replay agree on identical requests.
inline std::string serve_line(const LoadedPipeline& lp, const RequestConfig& cfg,
                              const std::string& line, std::uint64_t line_no) {
  nlohmann::json doc = nlohmann::json::parse(line, nullptr, false);
  if (doc.is_discarded()) {
    return nlohmann::ordered_json{{"error", "parse"}, {"line", line_no}}.dump();
  }
  try {
    const RequestRecord req = request_from_json(doc, "line " + std::to_string(line_no));
    RequestConfig rc = cfg;
    rc.seed = mix64(cfg.seed, static_cast<std::uint64_t>(req.id));
    const ServeReport report = serve_request(lp, req, rc);
    return serve_report_to_json(report).dump();
  } catch (const std::exception& e) {
    return nlohmann::ordered_json{{"error", e.what()}, {"line", line_no}}.dump();
  }
}

namespace detail {

inline bool blank_line(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

}  // namespace detail

// Stream loop: one response line per request line, shutdown on end of
// input. Parallel mode drains the stream first and serves the batch across
// threads; response order still matches input order.
inline void serve_stream(const LoadedPipeline& lp, const RequestConfig& cfg,
                         std::istream& in, std::ostream& out, bool parallel = false) {
  std::vector<std::pair<std::string, std::uint64_t>> batch;
  std::string line;
  std::uint64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::blank_line(line)) continue;
    if (parallel) {
      batch.emplace_back(line, line_no);
      continue;
    }
    out << serve_line(lp, cfg, line, line_no) << '\n' << std::flush;
  }
  if (batch.empty()) return;
  std::vector<std::string> responses(batch.size());
  std::atomic<std::size_t> next{0};
  const std::size_t workers =
      std::min<std::size_t>(std::max(1u, std::thread::hardware_concurrency()), batch.size());
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < batch.size(); i = next.fetch_add(1)) {
        responses[i] = serve_line(lp, cfg, batch[i].first, batch[i].second);
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const std::string& r : responses) out << r << '\n';
  out.flush();
}

// Minimal TCP front end: one thread per connection, newline-delimited JSON
// both ways. Port 0 binds an ephemeral port; start() returns the bound one.
class LineServer {
 public:
  LineServer(const LoadedPipeline& lp, const RequestConfig& cfg) : lp_(lp), cfg_(cfg) {}

  LineServer(const LineServer&) = delete;
  LineServer& operator=(const LineServer&) = delete;

  ~LineServer() { stop(); }

  int start(int port) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    require(listen_fd_ >= 0, "socket() failed");
    const int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    require(::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0,
            "bind() failed on port " + std::to_string(port));
    require(::listen(listen_fd_, 128) == 0, "listen() failed");
    socklen_t len = sizeof addr;
    require(::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len) == 0,
            "getsockname() failed");
    acceptor_ = std::thread([this] { accept_loop(); });
    return static_cast<int>(ntohs(addr.sin_port));
  }

  // Closes the listener, then waits for the acceptor and any connection
  // threads; in-flight connections finish their current lines first.
  void stop() {
    int fd = listen_fd_.exchange(-1);
    if (fd >= 0) {
      ::shutdown(fd, SHUT_RDWR);
      ::close(fd);
    }
    if (acceptor_.joinable()) acceptor_.join();
    std::vector<std::thread> clients;
    {
      std::lock_guard<std::mutex> lock(mu_);
      clients.swap(clients_);
    }
    for (auto& t : clients) t.join();
  }

  // Blocks until stop() closes the listener.
  void wait() {
    if (acceptor_.joinable()) acceptor_.join();
  }

 private:
  void accept_loop() {
    for (;;) {
      const int fd = ::accept(listen_fd_.load(), nullptr, nullptr);
      if (fd < 0) return;  // listener closed
      std::lock_guard<std::mutex> lock(mu_);
      clients_.emplace_back([this, fd] { handle_client(fd); });
    }
  }

  void handle_client(int fd) {
    std::string buffer;
    std::uint64_t line_no = 0;
    char chunk[4096];
    for (;;) {
      const ssize_t got = ::read(fd, chunk, sizeof chunk);
      if (got <= 0) break;
      buffer.append(chunk, static_cast<std::size_t>(got));
      std::size_t start = 0;
      for (std::size_t nl = buffer.find('\n', start); nl != std::string::npos;
           nl = buffer.find('\n', start)) {
        const std::string line = buffer.substr(start, nl - start);
        start = nl + 1;
        ++line_no;
        if (detail::blank_line(line)) continue;
        const std::string response = serve_line(lp_, cfg_, line, line_no) + "\n";
        std::size_t sent = 0;
        while (sent < response.size()) {
          const ssize_t n = ::write(fd, response.data() + sent, response.size() - sent);
          if (n <= 0) { ::close(fd); return; }
          sent += static_cast<std::size_t>(n);
        }
      }
      buffer.erase(0, start);
    }
    ::close(fd);
  }

  const LoadedPipeline& lp_;
  RequestConfig cfg_;
  std::atomic<int> listen_fd_{-1};
  std::thread acceptor_;
  std::mutex mu_;
  std::vector<std::thread> clients_;
};

}  // namespace apx
