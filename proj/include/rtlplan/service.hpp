#pragma once

// Live steering service. One thread owns the Simulation; TCP and HTTP
// handlers only parse commands, queue them and read from their own outbound
// queue. Commands are drained by the simulation thread between motion ticks,
// and set/impulse/hold take effect at the next task tick.
//
// Pacing is wall-clock by default. In deterministic mode the simulation only
// advances on "step" commands.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "protocol.hpp"
#include "sim.hpp"

namespace rtlplan {

class ServiceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ServiceOptions {
  std::string host = "127.0.0.1";
  std::optional<int> tcp_port = 0;  // 0 picks a free port; nullopt disables
  std::optional<int> http_port;     // nullopt disables
  std::string ui_dir;               // static assets served over HTTP
  bool deterministic = false;
  int snapshot_hz = 50;
  double barrier_tolerance = 1e-6;
};

/// Outbound line queue of one client.
class Subscriber {
 public:
  explicit Subscriber(std::size_t capacity = 100000) : cap_(capacity) {}

  bool push(std::string line) {
    {
      std::lock_guard lk(m_);
      if (closed_) return false;
      if (q_.size() >= cap_) {
        closed_ = true;  // slow reader: drop it
        cv_.notify_all();
        return false;
      }
      q_.push_back(std::move(line));
    }
    cv_.notify_one();
    return true;
  }

  /// Next line, or nullopt on timeout or when closed and drained.
  std::optional<std::string> pop(std::chrono::milliseconds timeout) {
    std::unique_lock lk(m_);
    cv_.wait_for(lk, timeout, [&] { return !q_.empty() || closed_; });
    if (q_.empty()) return std::nullopt;
    std::string s = std::move(q_.front());
    q_.pop_front();
    return s;
  }

  void close() {
    std::lock_guard lk(m_);
    closed_ = true;
    cv_.notify_all();
  }
  bool closed() const {
    std::lock_guard lk(m_);
    return closed_;
  }
  bool drained() const {
    std::lock_guard lk(m_);
    return closed_ && q_.empty();
  }

 private:
  mutable std::mutex m_;
  std::condition_variable cv_;
  std::deque<std::string> q_;
  std::size_t cap_;
  bool closed_ = false;
};

struct ServiceStats {
  double t = 0;
  long ticks = 0;
  double planner_mean_ms = 0;
  double motion_mean_ms = 0;
  double ratio = 0;     // simulated seconds per wall second while running
  double lag_max_ms = 0;
  int clients = 0;
  bool done = false;
};

class Service {
 public:
  Service(Scenario sc, ServiceOptions opt) : opt_(std::move(opt)), sim_(prepare(std::move(sc))) {
    if (opt_.snapshot_hz <= 0 || sim_.scenario().motion_hz % opt_.snapshot_hz != 0)
      throw ServiceError("snapshot rate must divide the motion rate");
    sim_.keep_trace(false);
    decimation_ = sim_.scenario().motion_hz / opt_.snapshot_hz;
    ratio_ = sim_.scenario().motion_hz / sim_.scenario().task_hz;
    dt_ = 1.0 / sim_.scenario().motion_hz;
    const auto& a = sim_.scenario().alphabet;
    std::string bnames;
    for (const auto& b : sim_.scenario().motion.barriers) bnames += (bnames.empty() ? "" : ",") + b.name;
    hello_body_ = "hello name=" + sim_.scenario().name + " task_hz=" + std::to_string(sim_.scenario().task_hz) +
                  " motion_hz=" + std::to_string(sim_.scenario().motion_hz) +
                  " u=" + format_valuation(Valuation{a.mask(AtomKind::uncontrollable)}, a) +
                  " c=" + format_valuation(Valuation{a.mask(AtomKind::controllable)}, a) +
                  " B=" + (bnames.empty() ? "-" : bnames) + " mode=" + (opt_.deterministic ? "deterministic" : "realtime");
    TraceRecord r0;
    r0.x = sim_.scenario().x0;
    r0.sigma_u = sim_.sigma_u();
    r0.state = sim_.scenario().automaton.initial;
    for (const auto& b : sim_.scenario().motion.barriers) r0.B.push_back(b.value(r0.x));
    last_snap_ = format_snapshot_body(make_snapshot(r0, a));
  }

  ~Service() { stop(); }
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds the ports and starts all threads. Throws ServiceError when a port
  /// cannot be bound.
  void start() {
    if (running_) return;
    if (opt_.tcp_port) open_tcp(*opt_.tcp_port);
    if (opt_.http_port) open_http(*opt_.http_port);
    running_ = true;
    core_ = std::thread([this] { core_loop(); });
    if (listen_fd_ >= 0) accept_ = std::thread([this] { accept_loop(); });
    if (http_) http_thread_ = std::thread([this] { http_->listen_after_bind(); });
  }

  void stop() {
    if (!running_.exchange(false)) return;
    stopping_ = true;
    cv_.notify_all();
    if (http_) http_->stop();
    if (http_thread_.joinable()) http_thread_.join();
    if (accept_.joinable()) accept_.join();
    if (listen_fd_ >= 0) ::close(listen_fd_);
    listen_fd_ = -1;
    {
      std::lock_guard lk(conn_m_);
      for (auto& c : conns_) ::shutdown(c->fd, SHUT_RDWR);
    }
    for (auto& c : conns_) {
      c->sub->close();
      if (c->reader.joinable()) c->reader.join();
      if (c->writer.joinable()) c->writer.join();
      ::close(c->fd);
    }
    conns_.clear();
    if (core_.joinable()) core_.join();
    std::lock_guard lk(sub_m_);
    for (auto& s : subs_) s->close();
    subs_.clear();
  }

  int tcp_port() const { return tcp_port_; }
  int http_port() const { return http_port_; }
  const ServiceOptions& options() const { return opt_; }

  /// Registers an in-process client. Its queue starts with the version line,
  /// the hello line and the latest snapshot.
  std::shared_ptr<Subscriber> subscribe() {
    auto s = std::make_shared<Subscriber>();
    std::lock_guard lk(sub_m_);
    s->push(protocol_version);
    s->push(stamp(hello_body_));
    s->push(stamp(last_snap_));
    subs_.push_back(s);
    return s;
  }

  void unsubscribe(const std::shared_ptr<Subscriber>& s) {
    s->close();
    std::lock_guard lk(sub_m_);
    subs_.erase(std::remove(subs_.begin(), subs_.end(), s), subs_.end());
  }

  /// Parses one client line. Errors are answered at once on `origin`; valid
  /// commands are queued for the simulation thread, which replies.
  void submit(const std::string& line, const std::shared_ptr<Subscriber>& origin) {
    ClientCommand c;
    try {
      c = parse_client_line(line);
      validate_command(c, sim_.scenario().alphabet);
      if (c.verb == Verb::step && !opt_.deterministic) throw ProtocolError(c.seq, "step needs deterministic mode");
    } catch (const ProtocolError& e) {
      origin->push(stamp("err " + (e.seq() ? std::to_string(*e.seq()) : std::string("-")) + " " + e.what()));
      return;
    }
    {
      std::lock_guard lk(cmd_m_);
      cmds_.push_back({c, origin});
    }
    cv_.notify_all();
  }

  ServiceStats stats() const {
    std::lock_guard lk(stats_m_);
    return stats_;
  }

 private:
  struct Queued {
    ClientCommand cmd;
    std::shared_ptr<Subscriber> origin;
  };
  struct PendingStep {
    long end_tick;
    long seq;
    std::shared_ptr<Subscriber> origin;
  };
  struct Connection {
    int fd = -1;
    std::shared_ptr<Subscriber> sub;
    std::thread reader, writer;
    std::atomic<int> exited{0};
  };

  ServiceOptions opt_;
  Simulation sim_;
  int decimation_ = 20;
  int ratio_ = 5;
  double dt_ = 1e-3;
  std::string hello_body_;
  std::string last_snap_;

  std::atomic<bool> running_{false};
  std::atomic<bool> stopping_{false};
  std::atomic<long> seq_{0};

  std::mutex cmd_m_;
  std::condition_variable cv_;
  std::deque<Queued> cmds_;

  std::mutex sub_m_;
  std::vector<std::shared_ptr<Subscriber>> subs_;

  mutable std::mutex stats_m_;
  ServiceStats stats_;

  std::thread core_, accept_, http_thread_;
  int listen_fd_ = -1;
  int tcp_port_ = -1;
  int http_port_ = -1;
  std::mutex conn_m_;
  std::vector<std::unique_ptr<Connection>> conns_;
  std::unique_ptr<httplib::Server> http_;

  // owned by the simulation thread
  bool paused_ = false;
  std::deque<PendingStep> steps_;
  long budget_end_ = 0;
  std::vector<char> breached_;
  bool finished_sent_ = false;

  static Scenario prepare(Scenario sc) {
    if (sc.live) sc.duration = 1e9;
    return sc;
  }

  std::string stamp(const std::string& body) { return std::to_string(seq_.fetch_add(1) + 1) + " " + body; }

  void broadcast(const std::string& body) {
    std::lock_guard lk(sub_m_);
    std::string line = stamp(body);
    for (auto& s : subs_) s->push(line);
    subs_.erase(std::remove_if(subs_.begin(), subs_.end(), [](const auto& s) { return s->closed(); }), subs_.end());
  }

  void reply(const std::shared_ptr<Subscriber>& to, long seq, const std::string& rest = "") {
    to->push(stamp("ok " + std::to_string(seq) + (rest.empty() ? "" : " " + rest)));
  }

  std::string stats_text() {
    auto s = stats();
    char buf[256];
    std::snprintf(buf, sizeof buf, "t=%.9g ticks=%ld planner_ms=%.6g motion_ms=%.6g ratio=%.6g lag_max_ms=%.6g clients=%d done=%d",
                  s.t, s.ticks, s.planner_mean_ms, s.motion_mean_ms, s.ratio, s.lag_max_ms, s.clients, s.done ? 1 : 0);
    return buf;
  }

  void handle(const Queued& q) {
    const auto& c = q.cmd;
    switch (c.verb) {
      case Verb::set:
        sim_.set_uncontrollable(sim_.scenario().alphabet.index_of(c.atom), c.value);
        reply(q.origin, c.seq);
        break;
      case Verb::impulse:
        sim_.impulse(c.vec);
        reply(q.origin, c.seq);
        break;
      case Verb::hold:
        sim_.hold(c.seconds);
        reply(q.origin, c.seq);
        break;
      case Verb::pause:
        paused_ = true;
        reply(q.origin, c.seq);
        break;
      case Verb::resume:
        paused_ = false;
        reply(q.origin, c.seq);
        break;
      case Verb::stats:
        reply(q.origin, c.seq, stats_text());
        break;
      case Verb::step: {
        budget_end_ = std::max(budget_end_, sim_.ticks()) + c.count * ratio_;
        steps_.push_back({budget_end_, c.seq, q.origin});
        break;
      }
    }
  }

  void finish_steps(bool all) {
    while (!steps_.empty() && (all || steps_.front().end_tick <= sim_.ticks())) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "t=%.9g", sim_.time());
      reply(steps_.front().origin, steps_.front().seq, buf);
      steps_.pop_front();
    }
  }

  void after_tick() {
    for (const auto& e : sim_.drain_events())
      broadcast("event " + std::string(to_string(e.kind)) + " t=" + detail::g17(e.t) + (e.detail.empty() ? "" : " " + e.detail));
    const auto& r = sim_.last_record();
    const auto& bars = sim_.scenario().motion.barriers;
    breached_.resize(bars.size(), 0);
    for (std::size_t i = 0; i < bars.size() && i < r.B.size(); ++i) {
      bool bad = r.B[i] < -opt_.barrier_tolerance;
      if (bad && !breached_[i]) broadcast("event monitor_flag t=" + detail::g17(r.t) + " barrier=" + bars[i].name);
      breached_[i] = bad;
    }
    if ((sim_.ticks() - 1) % decimation_ == 0) {
      std::string body = format_snapshot_body(make_snapshot(r, sim_.scenario().alphabet));
      std::lock_guard lk(sub_m_);
      last_snap_ = body;
      std::string line = stamp(body);
      for (auto& sub : subs_) sub->push(line);
    }
  }

  void core_loop() {
    using clock = std::chrono::steady_clock;
    auto anchor = clock::now();
    long anchor_tick = sim_.ticks();
    double run_wall = 0, run_sim = 0, lag_max = 0;
    bool pacing = false;
    while (!stopping_) {
      std::deque<Queued> batch;
      {
        std::lock_guard lk(cmd_m_);
        batch.swap(cmds_);
      }
      const bool was_paused = paused_;
      for (const auto& q : batch) handle(q);
      if (was_paused && !paused_) pacing = false;

      if (sim_.done()) {
        finish_steps(true);
        if (!finished_sent_) {
          for (const auto& e : sim_.drain_events())
            broadcast("event " + std::string(to_string(e.kind)) + " t=" + detail::g17(e.t) + " " + e.detail);
          broadcast("event finished t=" + detail::g17(sim_.time()));
          finished_sent_ = true;
          publish_stats(run_sim, run_wall, lag_max);
        }
      }
      const bool can_run = !sim_.done() && (opt_.deterministic ? sim_.ticks() < budget_end_ : !paused_);
      if (!can_run) {
        if (pacing) {
          run_wall += std::chrono::duration<double>(clock::now() - anchor).count();
          run_sim += static_cast<double>(sim_.ticks() - anchor_tick) * dt_;
          pacing = false;
        }
        publish_stats(run_sim, run_wall, lag_max);
        std::unique_lock lk(cmd_m_);
        cv_.wait_for(lk, std::chrono::milliseconds(50), [&] { return stopping_ || !cmds_.empty(); });
        continue;
      }
      if (!opt_.deterministic) {
        if (!pacing) {
          anchor = clock::now();
          anchor_tick = sim_.ticks();
          pacing = true;
        }
        const auto due = anchor + std::chrono::duration_cast<clock::duration>(
                                      std::chrono::duration<double>(static_cast<double>(sim_.ticks() - anchor_tick) * dt_));
        auto now = clock::now();
        if (now < due) {
          std::unique_lock lk(cmd_m_);
          cv_.wait_until(lk, due, [&] { return stopping_.load() || !cmds_.empty(); });
          continue;
        }
        lag_max = std::max(lag_max, std::chrono::duration<double, std::milli>(now - due).count());
      }
      if (sim_.tick()) after_tick();
      if (opt_.deterministic) finish_steps(false);
      if (sim_.ticks() % ratio_ == 0) {
        double w = run_wall, s = run_sim;
        if (pacing) {
          w += std::chrono::duration<double>(clock::now() - anchor).count();
          s += static_cast<double>(sim_.ticks() - anchor_tick) * dt_;
        }
        publish_stats(s, w, lag_max);
      }
    }
  }

  void publish_stats(double sim_s, double wall_s, double lag_max) {
    std::size_t n;
    {
      std::lock_guard lk(sub_m_);
      n = subs_.size();
    }
    std::lock_guard lk(stats_m_);
    stats_.t = sim_.time();
    stats_.ticks = sim_.ticks();
    stats_.planner_mean_ms = sim_.timing().planner_mean_ms();
    stats_.motion_mean_ms = sim_.timing().motion_mean_ms();
    stats_.ratio = wall_s > 0 ? sim_s / wall_s : 0;
    stats_.lag_max_ms = lag_max;
    stats_.clients = static_cast<int>(n);
    stats_.done = sim_.done();
  }

  // -- TCP ------------------------------------------------------------------

  void open_tcp(int port) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw ServiceError("socket() failed");
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (::inet_pton(AF_INET, opt_.host.c_str(), &addr.sin_addr) != 1) throw ServiceError("bad host " + opt_.host);
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 || ::listen(listen_fd_, 16) < 0) {
      ::close(listen_fd_);
      listen_fd_ = -1;
      throw ServiceError("cannot listen on port " + std::to_string(port) + ": " + std::strerror(errno));
    }
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    tcp_port_ = ntohs(addr.sin_port);
  }

  void accept_loop() {
    while (!stopping_) {
      pollfd p{listen_fd_, POLLIN, 0};
      if (::poll(&p, 1, 100) <= 0) continue;
      int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) continue;
      auto c = std::make_unique<Connection>();
      c->fd = fd;
      c->sub = subscribe();
      Connection* raw = c.get();
      c->writer = std::thread([this, raw] {
        write_loop(raw);
        ++raw->exited;
      });
      c->reader = std::thread([this, raw] {
        read_loop(raw);
        ++raw->exited;
      });
      std::lock_guard lk(conn_m_);
      reap();
      conns_.push_back(std::move(c));
    }
  }

  // caller holds conn_m_
  void reap() {
    for (auto it = conns_.begin(); it != conns_.end();) {
      if ((*it)->exited == 2) {
        (*it)->reader.join();
        (*it)->writer.join();
        ::close((*it)->fd);
        it = conns_.erase(it);
      } else {
        ++it;
      }
    }
  }

  void write_loop(Connection* c) {
    while (!stopping_) {
      auto line = c->sub->pop(std::chrono::milliseconds(100));
      if (!line) {
        if (c->sub->drained()) break;
        continue;
      }
      *line += '\n';
      const char* p = line->data();
      std::size_t left = line->size();
      while (left > 0) {
        ssize_t n = ::send(c->fd, p, left, MSG_NOSIGNAL);
        if (n <= 0) {
          unsubscribe(c->sub);
          return;
        }
        p += n;
        left -= static_cast<std::size_t>(n);
      }
    }
  }

  void read_loop(Connection* c) {
    std::string buf;
    char chunk[4096];
    while (!stopping_) {
      pollfd p{c->fd, POLLIN, 0};
      int pr = ::poll(&p, 1, 100);
      if (pr == 0) continue;
      if (pr < 0) break;
      ssize_t n = ::recv(c->fd, chunk, sizeof chunk, 0);
      if (n <= 0) break;
      buf.append(chunk, static_cast<std::size_t>(n));
      std::size_t nl;
      while ((nl = buf.find('\n')) != std::string::npos) {
        std::string line = buf.substr(0, nl);
        buf.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) submit(line, c->sub);
      }
      if (buf.size() > 4096) {
        c->sub->push(stamp("err - line too long"));
        buf.clear();
      }
    }
    unsubscribe(c->sub);
  }

  // -- HTTP -----------------------------------------------------------------

  void open_http(int port) {
    http_ = std::make_unique<httplib::Server>();
    if (!opt_.ui_dir.empty()) {
      if (!std::filesystem::is_directory(opt_.ui_dir)) throw ServiceError("no UI directory " + opt_.ui_dir);
      http_->set_mount_point("/", opt_.ui_dir);
    }
    http_->set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    http_->Get("/events", [this](const httplib::Request&, httplib::Response& res) {
      auto sub = subscribe();
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider(
          "text/event-stream",
          [this, sub](std::size_t, httplib::DataSink& sink) {
            if (stopping_ || sub->drained()) {
              sink.done();
              return true;
            }
            auto line = sub->pop(std::chrono::milliseconds(100));
            if (line) {
              std::string ev = "data: " + *line + "\n\n";
              if (!sink.write(ev.data(), ev.size())) return false;
            }
            return true;
          },
          [this, sub](bool) { unsubscribe(sub); });
    });
    http_->Post("/cmd", [this](const httplib::Request& req, httplib::Response& res) {
      std::string out;
      std::istringstream in(req.body);
      std::string line;
      while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto once = std::make_shared<Subscriber>();
        submit(line, once);
        auto r = once->pop(std::chrono::seconds(10));
        out += (r ? *r : stamp("err - timeout")) + "\n";
      }
      res.set_content(out, "text/plain");
    });
    if (port == 0) {
      http_port_ = http_->bind_to_any_port(opt_.host);
      if (http_port_ < 0) throw ServiceError("cannot bind HTTP port");
    } else {
      if (!http_->bind_to_port(opt_.host, port)) throw ServiceError("cannot listen on HTTP port " + std::to_string(port));
      http_port_ = port;
    }
  }
};

}  // namespace rtlplan
