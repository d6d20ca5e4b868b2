#pragma once

#include <memory>
#include <string>

#include "splatedit/session.hpp"

namespace splatedit {

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 7331;               // 0 picks a free port
  bool persist = true;           // save the session after every edit and undo
  std::size_t worker_threads = 8;
};

/// HTTP API over one session:
///
///   GET  /scene/meta     {splat_count, bounds, instances[], ...}
///   GET  /scene/splats   raw float32 vertex records, file order
///   POST /ground         {prompt[, knobs]} -> grounding result with trace
///   POST /edit           {prompt[, knobs]} -> {journal_id, timings, ...}
///   POST /undo
///   GET  /history
///   GET  /preview.png    ?azimuth&elevation[&crop_id][&width&height]
///
/// Reads run concurrently; edits and undos run one at a time in arrival
/// order and never overlap a read.
class SessionServer {
 public:
  SessionServer(Session& session, ServerOptions options = {});
  ~SessionServer();
  SessionServer(const SessionServer&) = delete;
  SessionServer& operator=(const SessionServer&) = delete;

  /// Binds the listening socket. Throws IoError when the port is taken.
  void bind();
  int port() const noexcept;

  /// Serves until `stop()`; binds first if needed.
  void run();
  /// `bind()` then serve on a background thread.
  void start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace splatedit
