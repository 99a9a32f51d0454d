#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <json.hpp>

#include "cops/detect.hpp"
#include "cops/http.hpp"

namespace cops {

struct ServiceOptions {
  std::string host = "127.0.0.1";
  /// 0 picks a free port.
  int port = 8080;
  /// Concurrent request handlers; 0 means the CPU count.
  std::size_t max_handlers = 0;
  std::size_t max_body_bytes = 16 * 1024;
};

/// Loopback HTTP front end for a Detector.
///   POST /v1/detect  {"text": "..."} -> DetectionResponse
///   GET  /v1/health  {"status": "ok", "model_version": "..."}
/// Both answer 503 until the loader has produced a model. The model is
/// read-only once published.
class DetectionService {
 public:
  using Loader = std::function<Detector()>;

  explicit DetectionService(ServiceOptions opts = {}) : opts_(std::move(opts)) {
    const std::size_t handlers =
        opts_.max_handlers ? opts_.max_handlers : std::max(1u, std::thread::hardware_concurrency());
    server_.new_task_queue = [handlers] { return new httplib::ThreadPool(handlers); };
    server_.set_payload_max_length(opts_.max_body_bytes);
    server_.set_keep_alive_max_count(1000);
    server_.set_tcp_nodelay(true);
    server_.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) { health(res); });
    server_.Post("/v1/detect", [this](const httplib::Request& req, httplib::Response& res) { detect(req, res); });
    server_.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (!res.body.empty()) return;
      const std::string msg = res.status == 413 ? "request body exceeds limit" : httplib::status_message(res.status);
      res.set_content(nlohmann::json{{"error", msg}}.dump(), "application/json");
    });
  }

  ~DetectionService() { stop(); }

  DetectionService(const DetectionService&) = delete;
  DetectionService& operator=(const DetectionService&) = delete;

  /// Binds and starts serving; the loader runs on its own thread and the
  /// service answers 503 until it returns. Returns the bound port.
  int start(Loader loader) {
    if (opts_.port == 0) port_ = server_.bind_to_any_port(opts_.host);
    else port_ = server_.bind_to_port(opts_.host, opts_.port) ? opts_.port : -1;
    require(port_ > 0, ErrorCode::InvalidArgument,
            "cannot bind " + opts_.host + ":" + std::to_string(opts_.port));
    listener_ = std::thread([this] { server_.listen_after_bind(); });
    loader_ = std::thread([this, loader = std::move(loader)] {
      try {
        publish(std::make_shared<const Detector>(loader()));
      } catch (const std::exception& e) {
        std::lock_guard lock(mu_);
        load_error_ = e.what();
      }
    });
    server_.wait_until_ready();
    return port_;
  }

  /// Blocks until the model is loaded or loading failed; returns the error text on failure.
  std::optional<std::string> wait_loaded() {
    if (loader_.joinable()) loader_.join();
    std::lock_guard lock(mu_);
    if (load_error_) return load_error_;
    return std::nullopt;
  }

  /// Blocks until stop() is called from another thread.
  void wait() {
    if (listener_.joinable()) listener_.join();
  }

  void stop() {
    server_.stop();
    if (listener_.joinable()) listener_.join();
    if (loader_.joinable()) loader_.join();
  }

  int port() const { return port_; }

 private:
  void publish(std::shared_ptr<const Detector> d) {
    std::lock_guard lock(mu_);
    detector_ = std::move(d);
  }

  std::shared_ptr<const Detector> current() const {
    std::lock_guard lock(mu_);
    return detector_;
  }

  static void reply(httplib::Response& res, int status, const nlohmann::ordered_json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  void unavailable(httplib::Response& res) const {
    std::lock_guard lock(mu_);
    reply(res, 503, {{"status", load_error_ ? "failed" : "loading"}, {"error", load_error_.value_or("model loading")}});
  }

  void health(httplib::Response& res) const {
    const auto d = current();
    if (!d) return unavailable(res);
    reply(res, 200, {{"status", "ok"}, {"model_version", d->model_version()}});
  }

  void detect(const httplib::Request& req, httplib::Response& res) const {
    const auto d = current();
    if (!d) return unavailable(res);
    const auto body = nlohmann::json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) return reply(res, 400, {{"error", "body must be a JSON object"}});
    const auto it = body.find("text");
    if (it == body.end() || !it->is_string()) return reply(res, 400, {{"error", "missing string field 'text'"}});
    const auto& text = it->get_ref<const std::string&>();
    if (detail::trim(text).empty()) return reply(res, 400, {{"error", "empty text"}});
    try {
      reply(res, 200, to_json(d->detect(text)));
    } catch (const Error& e) {
      reply(res, 400, {{"error", e.what()}});
    }
  }

  ServiceOptions opts_;
  httplib::Server server_;
  std::thread listener_;
  std::thread loader_;
  int port_ = -1;
  mutable std::mutex mu_;
  std::shared_ptr<const Detector> detector_;
  std::optional<std::string> load_error_;
};

}  // namespace cops
