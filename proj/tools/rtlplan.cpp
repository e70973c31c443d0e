// rtlplan command-line tool.
//
// Exit codes: 0 success, 1 specification / planner / monitor failure,
// 2 usage or schema error.

#include <csignal>
#include <fstream>
#include <iostream>
#include <regex>
#include <set>

#include <CLI11.hpp>

#include <rtlplan/rtlplan.hpp>

using namespace rtlplan;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_fail = 1;
constexpr int exit_usage = 2;

int fail(int code, const std::string& msg) {
  std::cerr << "rtlplan: " << msg << "\n";
  return code;
}

bool looks_like_file(const std::string& s) {
  return s.size() > 4 && s.compare(s.size() - 4, 4, ".scn") == 0;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

struct TranslateArgs {
  std::string input;
  std::string uncontrollable, controllable;
  std::string name;
};

int cmd_translate(const TranslateArgs& a) {
  Alphabet al;
  std::string text;
  bool rtl = false;
  if (looks_like_file(a.input)) {
    Scenario sc;
    try {
      sc = load_scenario(a.input);
    } catch (const ScenarioError& e) {
      return fail(exit_usage, e.what());
    }
    std::cout << print_hoa(sc.automaton, a.name.empty() ? sc.formula_text : a.name);
    return exit_ok;
  }
  text = a.input;
  try {
    if (a.uncontrollable.empty() && a.controllable.empty()) {
      // plain LTL: every identifier becomes a proposition, in order of appearance
      static const std::regex ident("[A-Za-z_][A-Za-z0-9_]*");
      std::set<std::string> seen;
      for (auto it = std::sregex_iterator(text.begin(), text.end(), ident); it != std::sregex_iterator(); ++it) {
        std::string n = it->str();
        if (n == "G" || n == "F" || n == "U" || n == "true" || n == "false" || !seen.insert(n).second) continue;
        al.add(n, AtomKind::controllable);
      }
    } else {
      rtl = true;
      for (const auto& n : split_list(a.uncontrollable)) al.add(n, AtomKind::uncontrollable);
      for (const auto& n : split_list(a.controllable)) al.add(n, AtomKind::controllable);
    }
  } catch (const AlphabetError& e) {
    return fail(exit_usage, e.what());
  }
  try {
    Formula f = parse_formula(text, al);
    if (rtl) validate_rtl(f, al);
    std::cout << print_hoa(translate(f, al), a.name.empty() ? text : a.name);
  } catch (const ParseError& e) {
    return fail(exit_fail, std::string("formula: ") + e.what());
  } catch (const RtlError& e) {
    return fail(exit_fail, std::string("not an RTL specification: ") + e.what());
  } catch (const CapacityError& e) {
    return fail(exit_fail, e.what());
  }
  return exit_ok;
}

struct SimulateArgs {
  std::string scenario;
  std::string trace;
  std::uint64_t seed = 0;
  bool quiet = false;
};

int cmd_simulate(const SimulateArgs& a) {
  Scenario sc;
  try {
    sc = load_scenario(a.scenario, a.seed);
  } catch (const ScenarioError& e) {
    return fail(exit_usage, e.what());
  }
  auto r = run(sc);
  if (!a.trace.empty()) {
    std::ofstream out(a.trace);
    if (!out) return fail(exit_usage, "cannot write " + a.trace);
    write_trace(out, r.trace, sc.alphabet);
  }
  if (r.error) return fail(exit_fail, "planner: " + *r.error);
  try {
    auto rep = monitor(r.trace, sc);
    if (!a.quiet) std::cout << rep.text();
    std::cout << "planner_mean_ms: " << r.timing.planner_mean_ms() << "\nmotion_mean_ms: " << r.timing.motion_mean_ms()
              << "\n";
    return rep.pass() ? exit_ok : exit_fail;
  } catch (const MonitorError& e) {
    return fail(exit_fail, e.what());
  }
}

int cmd_monitor(const std::string& trace_file, const std::string& scenario_file) {
  Scenario sc;
  try {
    sc = load_scenario(scenario_file);
  } catch (const ScenarioError& e) {
    return fail(exit_usage, e.what());
  }
  std::ifstream in(trace_file);
  if (!in) return fail(exit_usage, "cannot open " + trace_file);
  Trace tr;
  try {
    tr = read_trace(in, sc.alphabet);
  } catch (const TraceError& e) {
    return fail(exit_usage, e.what());
  }
  std::vector<std::string> expected;
  for (const auto& b : sc.motion.barriers) expected.push_back(b.name);
  if (tr.barrier_names != expected) return fail(exit_usage, "trace barrier columns do not match the scenario");
  try {
    auto rep = monitor(tr, sc);
    std::cout << rep.text();
    return rep.pass() ? exit_ok : exit_fail;
  } catch (const MonitorError& e) {
    return fail(exit_fail, e.what());
  }
}

struct ServeArgs {
  std::string scenario;
  std::string host = "127.0.0.1";
  int port = 7878;
  int http_port = -1;
  std::string ui_dir;
  bool deterministic = false;
  int snapshot_hz = 50;
};

int cmd_serve(const ServeArgs& a) {
  Scenario sc;
  try {
    sc = load_scenario(a.scenario);
  } catch (const ScenarioError& e) {
    return fail(exit_usage, e.what());
  }
  ServiceOptions o;
  o.host = a.host;
  o.tcp_port = a.port;
  if (a.http_port >= 0) o.http_port = a.http_port;
  o.ui_dir = a.ui_dir;
  o.deterministic = a.deterministic;
  o.snapshot_hz = a.snapshot_hz;

  // threads inherit the mask, so only sigwait below sees these
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  try {
    Service svc(std::move(sc), o);
    svc.start();
    std::cout << protocol_version << " listening on " << a.host << ":" << svc.tcp_port();
    if (svc.http_port() >= 0) std::cout << ", http " << a.host << ":" << svc.http_port();
    std::cout << std::endl;
    int sig = 0;
    sigwait(&set, &sig);
    svc.stop();
  } catch (const ServiceError& e) {
    return fail(exit_fail, e.what());
  }
  return exit_ok;
}

int cmd_plan(const std::string& scenario_file, const std::string& sigma_u_text) {
  Scenario sc;
  try {
    sc = load_scenario(scenario_file);
  } catch (const ScenarioError& e) {
    return fail(exit_usage, e.what());
  }
  Valuation u = sc.initial_u;
  if (!sigma_u_text.empty()) {
    try {
      u = parse_valuation(sigma_u_text, sc.alphabet);
    } catch (const AlphabetError& e) {
      return fail(exit_usage, e.what());
    }
    if (u.restricted(sc.alphabet.mask(AtomKind::uncontrollable)) != u)
      return fail(exit_usage, "--sigma-u accepts uncontrollable atoms only");
  }
  std::cout << "formula " << to_string(sc.spec.formula, sc.alphabet) << "\n"
            << "automaton states=" << sc.automaton.num_states() << " edges=" << sc.automaton.num_edges() << "\n";
  auto ps = make_planner(sc.automaton);
  try {
    auto c = step(ps, Valuation{}, u, sc.automaton, sc.alphabet);
    std::cout << describe(ps, sc.alphabet)
              << "first " << (c.behavior ? sc.alphabet[*c.behavior].name : std::string("-")) << "\n";
  } catch (const std::exception& e) {
    return fail(exit_fail, std::string("planner: ") + e.what());
  }
  return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reactive temporal logic task and motion planner"};
  app.require_subcommand(1);

  TranslateArgs ta;
  auto* tr = app.add_subcommand("translate", "Print the Buchi automaton of a formula or scenario as HOA");
  tr->add_option("input", ta.input, "Formula text, or a .scn scenario file")->required();
  tr->add_option("-u,--uncontrollable", ta.uncontrollable, "Comma-separated uncontrollable atoms (enables RTL checks)");
  tr->add_option("-c,--controllable", ta.controllable, "Comma-separated controllable atoms");
  tr->add_option("--name", ta.name, "HOA name field");

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Run a scenario, write its trace and check it");
  sim->add_option("scenario", sa.scenario, "Scenario file")->required();
  sim->add_option("--trace", sa.trace, "Trace CSV output path");
  sim->add_option("--seed", sa.seed, "Seed for random disturbances");
  sim->add_flag("-q,--quiet", sa.quiet, "Only print timing");

  std::string mon_trace, mon_scn;
  auto* mon = app.add_subcommand("monitor", "Check a recorded trace against its scenario");
  mon->add_option("trace", mon_trace, "Trace CSV")->required();
  mon->add_option("scenario", mon_scn, "Scenario file")->required();

  ServeArgs va;
  auto* srv = app.add_subcommand("serve", "Run a scenario live and accept RTLPLAN/1 clients");
  srv->add_option("scenario", va.scenario, "Scenario file")->required();
  srv->add_option("--host", va.host, "Bind address");
  srv->add_option("--port", va.port, "TCP port for the line protocol (0 picks one)");
  srv->add_option("--http-port", va.http_port, "HTTP port for static UI, /events and /cmd (0 picks one)");
  srv->add_option("--ui-dir", va.ui_dir, "Static asset directory");
  srv->add_flag("--deterministic", va.deterministic, "Advance only on step commands");
  srv->add_option("--snapshot-hz", va.snapshot_hz, "Snapshot rate");

  std::string plan_scn, plan_u;
  auto* pl = app.add_subcommand("plan", "Show the pruned graph and first plan for a scenario");
  pl->add_option("scenario", plan_scn, "Scenario file")->required();
  pl->add_option("--sigma-u", plan_u, "Uncontrollable valuation, e.g. 'eraser|left' or '-'");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_usage;
  }

  if (*tr) return cmd_translate(ta);
  if (*sim) return cmd_simulate(sa);
  if (*mon) return cmd_monitor(mon_trace, mon_scn);
  if (*srv) return cmd_serve(va);
  if (*pl) return cmd_plan(plan_scn, plan_u);
  return exit_usage;
}
