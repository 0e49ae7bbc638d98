#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "biomusic/session.h"

namespace biomusic {

struct ServiceOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 8080;  // 0 picks a free port
  /// Template for every connection. seed, session_id and (via the query
  /// string) speed and inline audio are set per connection.
  SessionConfig base;
  /// Simulated seconds per wall-clock second.
  double speed = 1.0;
  /// Pending renders across all sessions; further jobs are refused with an
  /// error frame instead of blocking the event loop.
  std::size_t render_queue_capacity = 16;
  std::optional<std::filesystem::path> log_dir;  // one JSONL file per session
};

/// HTTP + WebSocket front end on one port:
///   GET  /health                 -> {"status":"ok"}
///   GET  /segments/<id>.wav      -> rendered segment
///   WS   /session[?seed=N&speed=X&inline=1]
///        server frames: session_start, vitals, state, plan, segment, end, error
///        client frames: vitals_override, context, pause, resume
class Service {
 public:
  explicit Service(ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds and starts serving on background threads. Returns the bound port.
  /// Throws IoError when the address cannot be bound.
  unsigned short start();
  /// Blocks until stop() is called from another thread or a signal handler.
  void wait();
  void stop();

  unsigned short port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace biomusic
