#include "splatedit/server.hpp"

#include <condition_variable>
#include <cstring>
#include <shared_mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace splatedit {

using json = nlohmann::json;

namespace {

/// Grants exclusive turns in the order tickets were drawn.
class TicketLock {
 public:
  std::uint64_t draw() {
    std::lock_guard lock(mu_);
    return next_++;
  }
  void wait(std::uint64_t ticket) {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return serving_ == ticket; });
  }
  void release() {
    {
      std::lock_guard lock(mu_);
      ++serving_;
    }
    cv_.notify_all();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::uint64_t next_ = 0;
  std::uint64_t serving_ = 0;
};

int status_for(const Error& e) {
  if (e.code() == "nothing_to_undo") return 409;
  if (const auto* s = dynamic_cast<const StageError*>(&e)) {
    return s->stage() == Stage::Parser || s->stage() == Stage::Session ? 400 : 422;
  }
  return 400;
}

void send_error(httplib::Response& res, const Error& e) {
  json body{{"error", e.code()}, {"message", e.what()}};
  if (const auto* s = dynamic_cast<const StageError*>(&e)) {
    body["stage"] = to_string(s->stage());
    if (!s->trace_json().empty()) body["trace"] = json::parse(s->trace_json());
  }
  res.status = status_for(e);
  res.set_content(body.dump(), "application/json");
}

std::optional<EditKnobs> knobs_of(const json& body, const EditKnobs& base) {
  if (!body.contains("knobs") || body.at("knobs").is_null()) return std::nullopt;
  return knobs_from_json(body.at("knobs").dump(), base);
}

std::string prompt_of(const json& body) {
  if (!body.contains("prompt") || !body.at("prompt").is_string()) {
    throw InvalidArgumentError("request body needs a string 'prompt'");
  }
  return body.at("prompt").get<std::string>();
}

json parse_body(const httplib::Request& req) {
  try {
    return req.body.empty() ? json::object() : json::parse(req.body);
  } catch (const json::exception& e) {
    throw InvalidArgumentError(std::string("request body is not JSON: ") + e.what());
  }
}

double number_param(const httplib::Request& req, const char* name, double fallback) {
  if (!req.has_param(name)) return fallback;
  try {
    return std::stod(req.get_param_value(name));
  } catch (const std::exception&) {
    throw InvalidArgumentError(std::string("query parameter '") + name + "' is not a number");
  }
}

}  // namespace

struct SessionServer::Impl {
  Session& session;
  ServerOptions options;
  httplib::Server http;
  std::shared_mutex state;
  TicketLock writers;
  std::thread thread;
  int bound_port = -1;

  Impl(Session& s, ServerOptions o) : session(s), options(std::move(o)) {}

  template <class F>
  void guarded(httplib::Response& res, F&& f) {
    try {
      f();
    } catch (const Error& e) {
      send_error(res, e);
    } catch (const std::exception& e) {
      res.status = 500;
      res.set_content(json{{"error", "internal"}, {"message", e.what()}}.dump(), "application/json");
    }
  }

  template <class F>
  void exclusive(F&& f) {
    const auto ticket = writers.draw();
    writers.wait(ticket);
    struct Release {
      TicketLock& t;
      ~Release() { t.release(); }
    } release{writers};
    std::unique_lock lock(state);
    f();
  }

  void routes() {
    http.Get("/scene/meta", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] {
        std::shared_lock lock(state);
        res.set_content(session.meta_json(-1), "application/json");
      });
    });

    http.Get("/scene/splats", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] {
        std::string body;
        {
          std::shared_lock lock(state);
          const auto& splats = session.scene().splats();
          body.resize(splats.size() * sizeof(GaussianSplat));
          if (!splats.empty()) std::memcpy(body.data(), splats.data(), body.size());
        }
        res.set_header("X-Splat-Count", std::to_string(body.size() / sizeof(GaussianSplat)));
        res.set_header("X-Floats-Per-Splat", std::to_string(kPlyFloatsPerSplat));
        res.set_content(std::move(body), "application/octet-stream");
      });
    });

    http.Post("/ground", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const json body = parse_body(req);
        const std::string prompt = prompt_of(body);
        std::shared_lock lock(state);
        bool hit = false;
        const GroundedEdit g = session.ground(prompt, knobs_of(body, session.config().knobs), &hit);
        json out = json::parse(to_json(g.primary, -1));
        const json full = json::parse(to_json(g, -1));
        out["command"] = full["command"];
        out["reference"] = full["reference"];
        out["placement"] = full["placement"];
        out["cache_hit"] = hit;
        res.set_content(out.dump(), "application/json");
      });
    });

    http.Post("/edit", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const json body = parse_body(req);
        const std::string prompt = prompt_of(body);
        exclusive([&] {
          const auto outcome = session.edit(prompt, knobs_of(body, session.config().knobs));
          if (options.persist) session.save();
          json out{{"journal_id", outcome.journal_id},
                   {"timings", json::parse(to_json(outcome.timings))},
                   {"affected", outcome.affected},
                   {"added", outcome.added},
                   {"winner", outcome.grounded.primary.winner.id},
                   {"splat_count", session.scene().size()}};
          res.set_content(out.dump(), "application/json");
        });
      });
    });

    http.Post("/undo", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] {
        exclusive([&] {
          session.undo();
          if (options.persist) session.save();
          res.set_content(json{{"journal_length", session.journal().size()},
                               {"splat_count", session.scene().size()}}
                              .dump(),
                          "application/json");
        });
      });
    });

    http.Get("/history", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] {
        std::shared_lock lock(state);
        res.set_content(session.history_json(-1), "application/json");
      });
    });

    http.Get("/preview.png", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        ViewParams view;
        view.azimuth_deg = number_param(req, "azimuth", view.azimuth_deg);
        view.elevation_deg = number_param(req, "elevation", view.elevation_deg);
        const double w = number_param(req, "width", view.width), h = number_param(req, "height", view.height);
        if (!(w >= 1 && w <= 4096 && h >= 1 && h <= 4096)) throw InvalidArgumentError("preview size out of range");
        view.width = static_cast<std::uint32_t>(w);
        view.height = static_cast<std::uint32_t>(h);
        std::optional<InstanceId> crop;
        if (req.has_param("crop_id")) crop = static_cast<InstanceId>(number_param(req, "crop_id", 0));
        std::vector<std::uint8_t> png;
        {
          std::shared_lock lock(state);
          view.up = session.config().knobs.up;
          png = encode_png(session.preview(view, crop));
        }
        res.set_content(std::string(png.begin(), png.end()), "image/png");
      });
    });
  }
};

SessionServer::SessionServer(Session& session, ServerOptions options)
    : impl_(std::make_unique<Impl>(session, std::move(options))) {
  session.scorer();  // resolve the scorer before requests can race on it
  const std::size_t n = std::max<std::size_t>(impl_->options.worker_threads, 1);
  impl_->http.new_task_queue = [n] { return new httplib::ThreadPool(n); };
  // httplib's default adds SO_REUSEPORT, which would let a second server
  // share the port instead of failing.
  impl_->http.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
  });
  impl_->routes();
}

SessionServer::~SessionServer() { stop(); }

void SessionServer::bind() {
  if (impl_->bound_port >= 0) return;
  if (impl_->options.port == 0) {
    const int p = impl_->http.bind_to_any_port(impl_->options.host);
    if (p <= 0) throw IoError("cannot bind " + impl_->options.host);
    impl_->bound_port = p;
  } else {
    if (!impl_->http.bind_to_port(impl_->options.host, impl_->options.port)) {
      throw IoError("cannot bind " + impl_->options.host + ":" + std::to_string(impl_->options.port) +
                    " (port busy?)");
    }
    impl_->bound_port = impl_->options.port;
  }
}

int SessionServer::port() const noexcept { return impl_->bound_port; }

void SessionServer::run() {
  bind();
  impl_->http.listen_after_bind();
}

void SessionServer::start() {
  bind();
  impl_->thread = std::thread([this] { impl_->http.listen_after_bind(); });
  impl_->http.wait_until_ready();
}

void SessionServer::stop() {
  if (!impl_) return;
  impl_->http.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace splatedit
