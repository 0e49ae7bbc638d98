#include "biomusic/service.h"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <functional>
#include <mutex>
#include <thread>
#include <unordered_map>

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/steady_timer.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "biomusic/errors.h"

namespace biomusic {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;
using nlohmann::json;

namespace {

class SegmentStore {
 public:
  void put(const std::string& id, std::vector<std::uint8_t> wav) {
    std::lock_guard lock(mu_);
    store_[id] = std::make_shared<const std::vector<std::uint8_t>>(std::move(wav));
  }
  std::shared_ptr<const std::vector<std::uint8_t>> get(const std::string& id) const {
    std::lock_guard lock(mu_);
    const auto it = store_.find(id);
    return it == store_.end() ? nullptr : it->second;
  }

 private:
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::shared_ptr<const std::vector<std::uint8_t>>> store_;
};

// Single background renderer with a bounded queue.
class RenderWorker {
 public:
  using Done = std::function<void(RenderedSegment)>;

  explicit RenderWorker(std::size_t capacity) : capacity_(capacity), thread_([this] { loop(); }) {}
  ~RenderWorker() { stop(); }

  bool try_push(SegmentJob job, Done done) {
    std::lock_guard lock(mu_);
    if (stopping_ || queue_.size() >= capacity_) return false;
    queue_.push_back({std::move(job), std::move(done)});
    cv_.notify_one();
    return true;
  }

  void stop() {
    {
      std::lock_guard lock(mu_);
      if (stopping_) return;
      stopping_ = true;
    }
    cv_.notify_all();
    if (thread_.joinable()) thread_.join();
  }

 private:
  struct Task {
    SegmentJob job;
    Done done;
  };

  void loop() {
    while (true) {
      Task task;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
        if (stopping_) return;
        task = std::move(queue_.front());
        queue_.pop_front();
      }
      task.done(render_segment(task.job.id, task.job.plan, task.job.seed));
    }
  }

  std::size_t capacity_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Task> queue_;
  bool stopping_ = false;
  std::thread thread_;
};

struct Shared {
  ServiceOptions options;
  SegmentStore store;
  RenderWorker worker;
  std::atomic<std::uint64_t> connections{0};

  explicit Shared(ServiceOptions o) : options(std::move(o)), worker(options.render_queue_capacity) {}
};

std::map<std::string, std::string> parse_query(const std::string& target) {
  std::map<std::string, std::string> q;
  const auto pos = target.find('?');
  if (pos == std::string::npos) return q;
  std::string rest = target.substr(pos + 1);
  std::size_t start = 0;
  while (start <= rest.size()) {
    const auto amp = rest.find('&', start);
    const auto pair = rest.substr(start, amp == std::string::npos ? std::string::npos : amp - start);
    const auto eq = pair.find('=');
    if (!pair.empty()) q[pair.substr(0, eq)] = eq == std::string::npos ? "" : pair.substr(eq + 1);
    if (amp == std::string::npos) break;
    start = amp + 1;
  }
  return q;
}


// ---------------------------------------------------------------------------
// WebSocket session
// ---------------------------------------------------------------------------

class WsConnection : public std::enable_shared_from_this<WsConnection> {
 public:
  WsConnection(tcp::socket&& socket, std::shared_ptr<Shared> shared, SessionConfig config, double speed)
      : ws_(std::move(socket)),
        shared_(std::move(shared)),
        timer_(ws_.get_executor()),
        session_(std::move(config), /*render_inline=*/false),
        period_(std::chrono::duration_cast<std::chrono::steady_clock::duration>(
            std::chrono::duration<double>(session_.config().hop_s / speed))) {}

  void accept(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, beast::bind_front_handler(&WsConnection::on_accept, shared_from_this()));
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    if (shared_->options.log_dir) {
      log_.open(*shared_->options.log_dir / (session_.config().session_id + ".jsonl"), std::ios::binary);
    }
    t0_ = std::chrono::steady_clock::now();
    emit(session_.start(), 0);
    do_read();
    schedule(0);
  }

  double wall_s() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

  void emit(const SessionEvent& e, double scheduled_wall_s) {
    last_t_ = std::max(last_t_, e.t_s);
    if (log_.is_open()) {
      log_append(log_, e);
      log_.flush();
    }
    json frame = to_frame(e);
    frame["session_id"] = session_.config().session_id;
    frame["sched_wall_s"] = scheduled_wall_s;
    frame["actual_wall_s"] = wall_s();
    send(frame.dump());
  }

  // Errors go to this socket only and are not part of the session log.
  void send_error(const std::string& message) {
    const json frame = {{"v", kLogSchemaVersion},
                        {"t", session_.now_s()},
                        {"type", "error"},
                        {"message", message},
                        {"session_id", session_.config().session_id},
                        {"actual_wall_s", wall_s()}};
    send(frame.dump());
  }

  void schedule(std::size_t tick) {
    timer_.expires_at(t0_ + period_ * static_cast<long>(tick));
    timer_.async_wait([self = shared_from_this(), tick](beast::error_code ec) {
      if (!ec) self->on_tick(tick);
    });
  }

  void on_tick(std::size_t tick) {
    if (closed_) return;
    const double scheduled = std::chrono::duration<double>(period_ * static_cast<long>(tick)).count();
    if (session_.exhausted()) {
      emit(session_.finish("source_exhausted"), scheduled);
      return;
    }
    for (const auto& e : session_.step()) emit(e, scheduled);
    for (auto& job : session_.take_jobs()) enqueue_render(std::move(job), scheduled);
    schedule(tick + 1);
  }

  void enqueue_render(SegmentJob job, double scheduled) {
    const bool inline_audio = session_.config().inline_audio;
    auto self = shared_from_this();
    const SegmentJob copy = job;
    const bool queued = shared_->worker.try_push(std::move(job), [self, copy, inline_audio, scheduled](RenderedSegment seg) {
      self->shared_->store.put(seg.id, seg.wav);
      net::post(self->ws_.get_executor(), [self, copy, inline_audio, scheduled, seg = std::move(seg)] {
        if (self->closed_) return;
        // Renders finish asynchronously; stamp at the current session time so
        // the frame stream (and the log) stays time-ordered. start_s keeps the
        // scheduled start.
        self->emit({std::max(copy.start_s, self->last_t_), "segment", segment_body(copy, seg, inline_audio)}, scheduled);
      });
    });
    if (!queued) send_error("render queue full; segment " + copy.id + " dropped");
  }

  void do_read() {
    ws_.async_read(in_, beast::bind_front_handler(&WsConnection::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      closed_ = true;
      timer_.cancel();
      return;
    }
    const auto text = beast::buffers_to_string(in_.data());
    in_.consume(in_.size());
    handle_client_frame(text);
    do_read();
  }

  void handle_client_frame(const std::string& text) {
    try {
      const auto j = json::parse(text);
      if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) {
        throw std::invalid_argument("frame needs a string 'type'");
      }
      const auto type = j["type"].get<std::string>();
      if (type == "vitals_override") {
        if (!j.contains("hr_bpm") || !j["hr_bpm"].is_number() || !j.contains("rr_rpm") || !j["rr_rpm"].is_number()) {
          throw std::invalid_argument("vitals_override needs numeric hr_bpm and rr_rpm");
        }
        session_.override_vitals(j["hr_bpm"].get<double>(), j["rr_rpm"].get<double>());
      } else if (type == "context") {
        std::optional<ClockTime> clock;
        std::optional<double> temp;
        std::optional<std::string> status;
        if (j.contains("time")) clock = ClockTime::parse(j.at("time").get<std::string>());
        if (j.contains("temp_c")) temp = j.at("temp_c").get<double>();
        if (j.contains("status")) status = j.at("status").get<std::string>();
        session_.set_context(clock, temp, status);
      } else if (type == "pause") {
        session_.pause();
      } else if (type == "resume") {
        session_.resume();
      } else {
        throw std::invalid_argument("unknown frame type '" + type + "'");
      }
    } catch (const std::exception& e) {
      send_error(e.what());
    }
  }

  void send(std::string text) {
    outq_.push_back(std::move(text));
    if (outq_.size() == 1) do_write();
  }

  void do_write() {
    ws_.text(true);
    ws_.async_write(net::buffer(outq_.front()), beast::bind_front_handler(&WsConnection::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    if (ec) {
      closed_ = true;
      timer_.cancel();
      return;
    }
    outq_.pop_front();
    if (!outq_.empty()) do_write();
  }

  websocket::stream<beast::tcp_stream> ws_;
  std::shared_ptr<Shared> shared_;
  net::steady_timer timer_;
  Session session_;
  std::chrono::steady_clock::duration period_;
  std::chrono::steady_clock::time_point t0_;
  beast::flat_buffer in_;
  std::deque<std::string> outq_;
  std::ofstream log_;
  double last_t_ = 0.0;
  bool closed_ = false;
};

// ---------------------------------------------------------------------------
// Plain HTTP
// ---------------------------------------------------------------------------

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
 public:
  HttpConnection(tcp::socket&& socket, std::shared_ptr<Shared> shared)
      : stream_(std::move(socket)), shared_(std::move(shared)) {}

  void run() {
    net::dispatch(stream_.get_executor(), beast::bind_front_handler(&HttpConnection::do_read, shared_from_this()));
  }

 private:
  void do_read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_, beast::bind_front_handler(&HttpConnection::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) return;
    const std::string target(req_.target());
    const std::string path = target.substr(0, target.find('?'));

    if (websocket::is_upgrade(req_)) {
      if (path != "/session") return respond(text_response(http::status::not_found, "no such websocket endpoint"));
      upgrade(target);
      return;
    }
    if (req_.method() != http::verb::get) {
      return respond(text_response(http::status::method_not_allowed, "only GET is supported"));
    }
    if (path == "/health") {
      auto res = text_response(http::status::ok, json{{"status", "ok"}}.dump());
      res.set(http::field::content_type, "application/json");
      return respond(std::move(res));
    }
    static constexpr std::string_view kPrefix = "/segments/";
    static constexpr std::string_view kSuffix = ".wav";
    if (path.size() > kPrefix.size() + kSuffix.size() && path.compare(0, kPrefix.size(), kPrefix) == 0 &&
        path.compare(path.size() - kSuffix.size(), kSuffix.size(), kSuffix) == 0) {
      const auto id = path.substr(kPrefix.size(), path.size() - kPrefix.size() - kSuffix.size());
      const auto wav = shared_->store.get(id);
      if (!wav) return respond(text_response(http::status::not_found, "unknown segment"));
      http::response<http::vector_body<std::uint8_t>> res{http::status::ok, req_.version()};
      res.set(http::field::content_type, "audio/wav");
      res.keep_alive(req_.keep_alive());
      res.body() = *wav;
      res.prepare_payload();
      return respond(std::move(res));
    }
    respond(text_response(http::status::not_found, "not found"));
  }

  void upgrade(const std::string& target) {
    const auto q = parse_query(target);
    const auto& opts = shared_->options;
    const auto index = shared_->connections.fetch_add(1);
    SessionConfig config = opts.base;
    double speed = opts.speed;
    try {
      config.seed = q.count("seed") ? std::stoull(q.at("seed")) : opts.base.seed + index;
      if (q.count("speed")) speed = std::stod(q.at("speed"));
      if (q.count("inline")) config.inline_audio = q.at("inline") == "1" || q.at("inline") == "true";
      if (!(speed > 0.0)) throw std::invalid_argument("speed must be positive");
    } catch (const std::exception& e) {
      return respond(text_response(http::status::bad_request, std::string("bad query: ") + e.what()));
    }
    config.session_id = "c" + std::to_string(index) + "-s" + std::to_string(config.seed);
    std::shared_ptr<WsConnection> conn;
    try {
      conn = std::make_shared<WsConnection>(stream_.release_socket(), shared_, std::move(config), speed);
    } catch (const std::exception&) {
      return;  // socket already released; nothing sensible to answer on
    }
    conn->accept(std::move(req_));
  }

  http::response<http::string_body> text_response(http::status status, std::string body) {
    http::response<http::string_body> res{status, req_.version()};
    res.set(http::field::content_type, "text/plain");
    res.keep_alive(req_.keep_alive());
    res.body() = std::move(body);
    res.prepare_payload();
    return res;
  }

  template <class Body>
  void respond(http::response<Body>&& res) {
    auto sp = std::make_shared<http::response<Body>>(std::move(res));
    http::async_write(stream_, *sp, [self = shared_from_this(), sp](beast::error_code ec, std::size_t) {
      if (ec) return;
      if (!sp->keep_alive()) {
        beast::error_code ignored;
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
        return;
      }
      self->do_read();
    });
  }

  beast::tcp_stream stream_;
  std::shared_ptr<Shared> shared_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
};

class Listener : public std::enable_shared_from_this<Listener> {
 public:
  Listener(net::io_context& ioc, tcp::endpoint endpoint, std::shared_ptr<Shared> shared)
      : ioc_(ioc), acceptor_(net::make_strand(ioc)), shared_(std::move(shared)) {
    beast::error_code ec;
    acceptor_.open(endpoint.protocol(), ec);
    if (!ec) acceptor_.set_option(net::socket_base::reuse_address(true), ec);
    if (!ec) acceptor_.bind(endpoint, ec);
    if (!ec) acceptor_.listen(net::socket_base::max_listen_connections, ec);
    if (ec) throw IoError("cannot bind " + endpoint.address().to_string() + ":" + std::to_string(endpoint.port()) +
                          ": " + ec.message());
  }

  unsigned short port() const { return acceptor_.local_endpoint().port(); }
  void run() { do_accept(); }
  void close() {
    net::post(acceptor_.get_executor(), [self = shared_from_this()] {
      beast::error_code ignored;
      self->acceptor_.close(ignored);
    });
  }

 private:
  void do_accept() {
    acceptor_.async_accept(net::make_strand(ioc_), beast::bind_front_handler(&Listener::on_accept, shared_from_this()));
  }

  void on_accept(beast::error_code ec, tcp::socket socket) {
    if (ec == net::error::operation_aborted) return;
    if (!ec) std::make_shared<HttpConnection>(std::move(socket), shared_)->run();
    do_accept();
  }

  net::io_context& ioc_;
  tcp::acceptor acceptor_;
  std::shared_ptr<Shared> shared_;
};

}  // namespace

struct Service::Impl {
  ServiceOptions options;
  net::io_context ioc{1};
  std::shared_ptr<Shared> shared;
  std::shared_ptr<Listener> listener;
  std::thread thread;
  std::mutex mu;
  std::condition_variable cv;
  bool stopped = false;
  unsigned short bound_port = 0;
};

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>()) {
  if (!(options.speed > 0.0)) throw std::invalid_argument("speed must be positive");
  if (options.render_queue_capacity == 0) throw std::invalid_argument("render queue capacity must be positive");
  if (options.base.source.kind == SourceKind::kScript && options.base.source.script.empty()) {
    options.base.source.kind = SourceKind::kLive;
  }
  options.base.validate();
  impl_->options = std::move(options);
}

Service::~Service() { stop(); }

unsigned short Service::start() {
  if (impl_->listener) throw std::logic_error("service already started");
  beast::error_code ec;
  const auto address = net::ip::make_address(impl_->options.address, ec);
  if (ec) throw IoError("bad bind address '" + impl_->options.address + "'");
  if (impl_->options.log_dir) std::filesystem::create_directories(*impl_->options.log_dir);
  impl_->shared = std::make_shared<Shared>(impl_->options);
  impl_->listener = std::make_shared<Listener>(impl_->ioc, tcp::endpoint{address, impl_->options.port}, impl_->shared);
  impl_->bound_port = impl_->listener->port();
  impl_->listener->run();
  impl_->thread = std::thread([this] { impl_->ioc.run(); });
  return impl_->bound_port;
}

void Service::wait() {
  std::unique_lock lock(impl_->mu);
  impl_->cv.wait(lock, [&] { return impl_->stopped; });
}

void Service::stop() {
  {
    std::lock_guard lock(impl_->mu);
    if (impl_->stopped) return;
    impl_->stopped = true;
  }
  if (impl_->listener) impl_->listener->close();
  impl_->ioc.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
  if (impl_->shared) impl_->shared->worker.stop();
  impl_->cv.notify_all();
}

unsigned short Service::port() const { return impl_->bound_port; }

}  // namespace biomusic
