#include <gtest/gtest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <rtlplan/protocol.hpp>
#include <rtlplan/scenario.hpp>
#include <rtlplan/service.hpp>

using namespace rtlplan;
using namespace std::chrono_literals;

namespace {

Scenario stir() { return load_scenario(RTLPLAN_SCENARIO_DIR "/stir.scn"); }

class LineClient {
 public:
  explicit LineClient(int port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in a{};
    a.sin_family = AF_INET;
    a.sin_port = htons(static_cast<std::uint16_t>(port));
    ::inet_pton(AF_INET, "127.0.0.1", &a.sin_addr);
    ok_ = ::connect(fd_, reinterpret_cast<sockaddr*>(&a), sizeof a) == 0;
  }
  ~LineClient() { ::close(fd_); }
  bool connected() const { return ok_; }

  void send(const std::string& line) {
    std::string s = line + "\n";
    ASSERT_EQ(::send(fd_, s.data(), s.size(), MSG_NOSIGNAL), static_cast<ssize_t>(s.size()));
  }

  std::optional<std::string> read(std::chrono::milliseconds timeout = 5000ms) {
    auto until = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      auto nl = buf_.find('\n');
      if (nl != std::string::npos) {
        std::string l = buf_.substr(0, nl);
        buf_.erase(0, nl + 1);
        return l;
      }
      auto left = std::chrono::duration_cast<std::chrono::milliseconds>(until - std::chrono::steady_clock::now());
      if (left.count() <= 0) return std::nullopt;
      pollfd p{fd_, POLLIN, 0};
      if (::poll(&p, 1, static_cast<int>(left.count())) <= 0) return std::nullopt;
      char c[4096];
      ssize_t n = ::recv(fd_, c, sizeof c, 0);
      if (n <= 0) return std::nullopt;
      buf_.append(c, static_cast<std::size_t>(n));
    }
  }

  /// Reads until the reply to `seq`; returns every line read, reply last.
  std::vector<std::string> until_reply(long seq) {
    std::vector<std::string> out;
    while (auto l = read()) {
      out.push_back(*l);
      if (l->rfind("RTLPLAN", 0) == 0) continue;
      auto m = parse_server_line(*l);
      if ((m.kind == ServerKind::ok || m.kind == ServerKind::err) && m.reply_to == seq) return out;
    }
    ADD_FAILURE() << "no reply to " << seq;
    return out;
  }

 private:
  int fd_ = -1;
  bool ok_ = false;
  std::string buf_;
};

ServiceOptions deterministic() {
  ServiceOptions o;
  o.deterministic = true;
  return o;
}

}  // namespace

TEST(Protocol, ClientLinesParse) {
  auto c = parse_client_line("7 set h 0");
  EXPECT_EQ(c.seq, 7);
  EXPECT_EQ(c.verb, Verb::set);
  EXPECT_EQ(c.atom, "h");
  EXPECT_FALSE(c.value);
  EXPECT_TRUE(parse_client_line("8 set h true").value);
  c = parse_client_line("9 impulse 0.1 -0.2 3e-2");
  EXPECT_EQ(c.vec, Vec3(0.1, -0.2, 0.03));
  EXPECT_DOUBLE_EQ(parse_client_line("10 hold 0.5").seconds, 0.5);
  EXPECT_EQ(parse_client_line("11 step 3").count, 3);
  EXPECT_EQ(parse_client_line("  12   pause ").verb, Verb::pause);
  EXPECT_EQ(parse_client_line("13 resume").verb, Verb::resume);
  EXPECT_EQ(parse_client_line("14 stats").verb, Verb::stats);
}

TEST(Protocol, MalformedClientLines) {
  for (const char* bad : {"", "x set h 0", "-1 stats", "1", "1 jump", "1 set h", "1 set h 2", "1 impulse 1 2",
                          "1 impulse 1 2 nan", "1 hold 0", "1 hold -1", "1 step 0", "1 step 1.5", "1 stats now"}) {
    EXPECT_THROW(parse_client_line(bad), ProtocolError) << bad;
  }
  try {
    parse_client_line("5 jump");
  } catch (const ProtocolError& e) {
    ASSERT_TRUE(e.seq());
    EXPECT_EQ(*e.seq(), 5);
  }
  auto sc = stir();
  EXPECT_THROW(validate_command(parse_client_line("1 set q 1"), sc.alphabet), ProtocolError);
  EXPECT_THROW(validate_command(parse_client_line("1 set s 1"), sc.alphabet), ProtocolError);
  EXPECT_NO_THROW(validate_command(parse_client_line("1 set h 1"), sc.alphabet));
}

TEST(Protocol, ClientFormatRoundTrips) {
  for (const char* line : {"1 set h 1", "2 set h 0", "3 impulse 0.10000000000000001 0 -0.5", "4 hold 2", "5 step 9",
                           "6 pause", "7 resume", "8 stats"}) {
    EXPECT_EQ(format_client_command(parse_client_line(line)), line);
  }
}

TEST(Protocol, SnapshotRoundTrips) {
  Snapshot s;
  s.t = 1.25;
  s.x = Vec3(0.5, -0.1, 0.3);
  s.xdot_ref = Vec3(1e-3, 0, -2);
  s.sigma_u = "h";
  s.sigma_c = "s";
  s.state = 1;
  s.behavior = "p";
  s.B = {0.25, -1e-7};
  s.V = 3e-5;
  s.beta = 0.5;
  auto m = parse_server_line("42 " + format_snapshot_body(s));
  EXPECT_EQ(m.seq, 42);
  ASSERT_EQ(m.kind, ServerKind::snap);
  EXPECT_EQ(m.snap.x, s.x);
  EXPECT_EQ(m.snap.xdot_ref, s.xdot_ref);
  EXPECT_EQ(m.snap.B, s.B);
  EXPECT_EQ(m.snap.behavior, "p");
  EXPECT_EQ(m.snap.state, 1);
  EXPECT_EQ(m.snap.V, s.V);
  s.B.clear();
  EXPECT_TRUE(parse_server_line("1 " + format_snapshot_body(s)).snap.B.empty());
}

TEST(Protocol, ServerLinesParse) {
  auto e = parse_server_line("5 event behavior_switch t=5 p");
  EXPECT_EQ(e.kind, ServerKind::event);
  EXPECT_EQ(e.word, "behavior_switch");
  EXPECT_EQ(e.fields.at("t"), "5");
  EXPECT_EQ(e.text, "p");
  auto ok = parse_server_line("6 ok 3 t=1");
  EXPECT_EQ(ok.kind, ServerKind::ok);
  EXPECT_EQ(*ok.reply_to, 3);
  auto err = parse_server_line("7 err - malformed sequence number");
  EXPECT_EQ(err.kind, ServerKind::err);
  EXPECT_FALSE(err.reply_to);
  EXPECT_EQ(err.text, "malformed sequence number");
  for (const char* bad : {"", "1", "x ok 1", "1 nope", "1 ok", "1 ok x", "1 snap t=1", "1 event"}) {
    EXPECT_THROW(parse_server_line(bad), ProtocolError) << bad;
  }
}

TEST(Service, GreetingThenHello) {
  Service svc(stir(), deterministic());
  svc.start();
  LineClient c(svc.tcp_port());
  ASSERT_TRUE(c.connected());
  EXPECT_EQ(c.read(), std::optional<std::string>("RTLPLAN/1"));
  auto hello = parse_server_line(*c.read());
  EXPECT_EQ(hello.kind, ServerKind::hello);
  EXPECT_EQ(hello.fields.at("u"), "h");
  EXPECT_EQ(hello.fields.at("c"), "s|p");
  EXPECT_EQ(hello.fields.at("mode"), "deterministic");
  auto snap = parse_server_line(*c.read());
  ASSERT_EQ(snap.kind, ServerKind::snap);
  EXPECT_EQ(snap.snap.t, 0);
  EXPECT_EQ(snap.snap.sigma_u, "h");
}

TEST(Service, ToggleSwitchesBehaviorWithinOneTaskTick) {
  Service svc(stir(), deterministic());
  svc.start();
  LineClient c(svc.tcp_port());
  c.send("1 step 200");
  c.until_reply(1);
  c.send("2 set h 0");
  c.send("3 step 4");
  auto lines = c.until_reply(3);
  std::optional<double> t_switch, t_snap;
  for (const auto& l : lines) {
    auto m = parse_server_line(l);
    if (m.kind == ServerKind::event && m.word == "behavior_switch" && m.text == "p") t_switch = std::stod(m.fields.at("t"));
    if (m.kind == ServerKind::snap && m.snap.behavior == "p" && !t_snap) t_snap = m.snap.t;
  }
  ASSERT_TRUE(t_switch) << ::testing::PrintToString(lines);
  EXPECT_NEAR(*t_switch, 1.0, 1e-9);
  ASSERT_TRUE(t_snap);
  EXPECT_LE(*t_snap - 1.0, 0.005 + 1e-9);
  auto ok = parse_server_line(lines.back());
  EXPECT_NEAR(std::stod(ok.fields.at("t")), 1.02, 1e-9);
}

TEST(Service, MalformedLineKeepsConnection) {
  Service svc(stir(), deterministic());
  svc.start();
  LineClient c(svc.tcp_port());
  c.send("banana");
  c.send("4 set s 1");
  c.send("5 step 1.5");
  c.send("6 stats");
  std::vector<ServerMessage> errs;
  for (const auto& l : c.until_reply(6)) {
    if (l.rfind("RTLPLAN", 0) == 0) continue;
    auto m = parse_server_line(l);
    if (m.kind == ServerKind::err) errs.push_back(m);
  }
  ASSERT_EQ(errs.size(), 3U);
  EXPECT_FALSE(errs[0].reply_to);
  EXPECT_EQ(*errs[1].reply_to, 4);
  EXPECT_EQ(*errs[2].reply_to, 5);
}

TEST(Service, TwoClientsSeeIdenticalBroadcasts) {
  Service svc(stir(), deterministic());
  svc.start();
  LineClient a(svc.tcp_port()), b(svc.tcp_port());
  a.send("1 stats");
  a.until_reply(1);
  b.send("1 stats");
  b.until_reply(1);
  a.send("2 step 100");
  auto la = a.until_reply(2);
  b.send("2 stats");
  auto lb = b.until_reply(2);
  int snaps = 0;
  auto broadcasts = [&](const std::vector<std::string>& ls) {
    std::vector<std::string> out;
    for (const auto& l : ls) {
      if (l.rfind("RTLPLAN", 0) == 0) continue;
      auto m = parse_server_line(l);
      if (m.kind == ServerKind::snap || m.kind == ServerKind::event) out.push_back(l);
      if (m.kind == ServerKind::snap) ++snaps;
    }
    return out;
  };
  auto ba = broadcasts(la);
  EXPECT_EQ(snaps, 25);
  auto bb = broadcasts(lb);
  EXPECT_EQ(ba, bb);
  long prev = 0;
  for (const auto& l : la) {
    long s = parse_server_line(l).seq;
    EXPECT_GT(s, prev);
    prev = s;
  }
}

TEST(Service, RealtimeRunsWithoutClients) {
  auto sc = stir();
  sc.live = true;
  Service svc(sc, ServiceOptions{});
  svc.start();
  std::this_thread::sleep_for(300ms);
  auto s = svc.stats();
  EXPECT_GT(s.t, 0.1);
  EXPECT_LT(s.t, 1.0);
  EXPECT_EQ(s.clients, 0);
  auto sub = svc.subscribe();
  svc.submit("1 pause", sub);
  std::this_thread::sleep_for(100ms);
  double t_paused = svc.stats().t;
  std::this_thread::sleep_for(150ms);
  EXPECT_EQ(svc.stats().t, t_paused);
  svc.submit("2 resume", sub);
  std::this_thread::sleep_for(150ms);
  EXPECT_GT(svc.stats().t, t_paused);
  EXPECT_GT(svc.stats().ratio, 0.9);
  svc.submit("3 step 1", sub);
  bool rejected = false;
  while (auto l = sub->pop(1000ms)) {
    if (l->rfind("RTLPLAN", 0) == 0) continue;
    auto m = parse_server_line(*l);
    if (m.kind == ServerKind::err && m.reply_to == 3) {
      rejected = true;
      break;
    }
  }
  EXPECT_TRUE(rejected);
}

TEST(Service, PortInUse) {
  Service a(stir(), deterministic());
  a.start();
  ServiceOptions o = deterministic();
  o.tcp_port = a.tcp_port();
  Service b(stir(), o);
  EXPECT_THROW(b.start(), ServiceError);
}

TEST(Service, HttpTransport) {
  ServiceOptions o = deterministic();
  o.tcp_port.reset();
  o.http_port = 0;
  o.ui_dir = RTLPLAN_UI_DIR;
  Service svc(stir(), o);
  svc.start();
  httplib::Client cli("127.0.0.1", svc.http_port());
  cli.set_read_timeout(5, 0);

  auto page = cli.Get("/index.html");
  ASSERT_TRUE(page);
  EXPECT_EQ(page->status, 200);
  EXPECT_NE(page->body.find("EventSource"), std::string::npos);
  EXPECT_EQ(cli.Get("/missing.js")->status, 404);

  auto r = cli.Post("/cmd", "1 step 2\n2 set q 1\n", "text/plain");
  ASSERT_TRUE(r);
  std::istringstream lines(r->body);
  std::string l1, l2;
  std::getline(lines, l1);
  std::getline(lines, l2);
  EXPECT_EQ(parse_server_line(l1).kind, ServerKind::ok);
  EXPECT_EQ(parse_server_line(l2).kind, ServerKind::err);

  std::string stream;
  auto res = cli.Get("/events", [&](const char* data, std::size_t n) {
    stream.append(data, n);
    return stream.find(" snap ") == std::string::npos;
  });
  EXPECT_EQ(stream.rfind("data: RTLPLAN/1\n\n", 0), 0U);
  EXPECT_NE(stream.find(" hello name=stir"), std::string::npos);
  EXPECT_NE(stream.find(" snap t=0 "), std::string::npos);
}
