#pragma once

// Scenario files: a JSON document describing the alphabet, the RTL formula,
// behavior bindings, barriers, scripted events and rates. Errors name the
// JSON path of the offending value, e.g. "$.behaviors.s.radius".

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "automaton.hpp"
#include "hoa.hpp"
#include "sim.hpp"

namespace rtlplan {

class ScenarioError : public std::runtime_error {
 public:
  ScenarioError(std::string path, const std::string& msg)
      : std::runtime_error(path + ": " + msg), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

namespace detail {

using nlohmann::json;

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {}

  const json& raw() const { return j_; }
  const std::string& path() const { return path_; }
  [[noreturn]] void fail(const std::string& msg) const { throw ScenarioError(path_, msg); }

  bool has(const char* key) const { return j_.is_object() && j_.contains(key); }
  Reader at(const char* key) const {
    if (!j_.is_object()) fail("expected an object");
    if (!j_.contains(key)) throw ScenarioError(path_ + "." + key, "missing");
    return {j_.at(key), path_ + "." + key};
  }
  Reader at(std::size_t i) const { return {j_.at(i), path_ + "[" + std::to_string(i) + "]"}; }

  void only(std::initializer_list<const char*> keys) const {
    if (!j_.is_object()) fail("expected an object");
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      bool known = false;
      for (const char* k : keys) known = known || it.key() == k;
      if (!known) throw ScenarioError(path_ + "." + it.key(), "unknown key");
    }
  }

  double number() const {
    if (!j_.is_number()) fail("expected a number");
    double v = j_.get<double>();
    if (!std::isfinite(v)) fail("expected a finite number");
    return v;
  }
  double positive() const {
    double v = number();
    if (!(v > 0)) fail("expected a positive number");
    return v;
  }
  int integer() const {
    if (!j_.is_number_integer()) fail("expected an integer");
    return j_.get<int>();
  }
  bool boolean() const {
    if (!j_.is_boolean()) fail("expected true or false");
    return j_.get<bool>();
  }
  std::string string() const {
    if (!j_.is_string()) fail("expected a string");
    return j_.get<std::string>();
  }
  Vec3 vec3() const {
    if (!j_.is_array() || j_.size() != 3) fail("expected an array of 3 numbers");
    Vec3 v;
    for (std::size_t i = 0; i < 3; ++i) v[static_cast<int>(i)] = at(i).number();
    return v;
  }
  std::size_t size() const {
    if (!j_.is_array()) fail("expected an array");
    return j_.size();
  }
  std::vector<std::string> keys() const {
    if (!j_.is_object()) fail("expected an object");
    std::vector<std::string> out;
    for (auto it = j_.begin(); it != j_.end(); ++it) out.push_back(it.key());
    return out;
  }
  Reader at_key(const std::string& key) const { return {j_.at(key), path_ + "." + key}; }

  double number_or(const char* key, double def) const { return has(key) ? at(key).number() : def; }
  double positive_or(const char* key, double def) const { return has(key) ? at(key).positive() : def; }

 private:
  const json& j_;
  std::string path_;
};

inline std::string slurp_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline NominalDS read_ds(const Reader& r, const std::string& name, const std::string& type) {
  try {
    if (type == "point") {
      r.only({"type", "target", "gain"});
      return NominalDS::point(name, r.at("target").vec3(), r.at("gain").positive());
    }
    if (type == "limit_cycle") {
      r.only({"type", "center", "radius", "omega", "normal", "contraction"});
      return NominalDS::limit_cycle(name, r.at("center").vec3(), r.at("radius").positive(), r.at("omega").number(),
                                    r.at("normal").vec3(), r.at("contraction").positive());
    }
    r.only({"type", "from", "to", "half_width", "speed", "normal", "contraction"});
    return NominalDS::patrol(name, r.at("from").vec3(), r.at("to").vec3(), r.at("half_width").positive(),
                             r.at("speed").positive(), r.at("normal").vec3(), r.at("contraction").positive());
  } catch (const std::invalid_argument& e) {
    r.fail(e.what());
  }
}

inline Behavior read_behavior(const Reader& r, const std::string& name) {
  std::string type = r.at("type").string();
  Behavior b;
  b.name = name;
  if (type == "reach") {
    r.only({"type", "target", "epsilon", "speed", "profile"});
    ReachTask t;
    t.target = r.at("target").vec3();
    t.epsilon = r.positive_or("epsilon", 0.05);
    t.speed = r.at("speed").positive();
    std::string prof = r.has("profile") ? r.at("profile").string() : "linear";
    if (prof == "linear")
      t.profile = GammaProfile::linear;
    else if (prof == "exponential")
      t.profile = GammaProfile::exponential;
    else
      r.at("profile").fail("expected \"linear\" or \"exponential\"");
    b.reach = t;
  } else if (type == "point" || type == "limit_cycle" || type == "patrol") {
    b.ds = read_ds(r, name, type);
  } else {
    r.at("type").fail("unknown behavior type '" + type + "'");
  }
  return b;
}

inline StaticCbf read_barrier(const Reader& r) {
  std::string name = r.at("name").string();
  std::string type = r.at("type").string();
  double gain = r.positive_or("gain", 5.0);
  try {
    if (type == "halfspace") {
      r.only({"name", "type", "normal", "offset", "gain"});
      return StaticCbf::halfspace(name, r.at("normal").vec3(), r.at("offset").number(), gain);
    }
    if (type == "keepout") {
      r.only({"name", "type", "center", "radius", "gain"});
      return StaticCbf::keepout(name, r.at("center").vec3(), r.at("radius").positive(), gain);
    }
    if (type == "box") {
      r.only({"name", "type", "lo", "hi", "sharpness", "gain"});
      return StaticCbf::box(name, r.at("lo").vec3(), r.at("hi").vec3(), r.positive_or("sharpness", 50), gain);
    }
  } catch (const std::invalid_argument& e) {
    r.fail(e.what());
  }
  r.at("type").fail("unknown barrier type '" + type + "'");
}

inline Valuation read_uncontrollable_set(const Reader& r, const Alphabet& a, Valuation v) {
  if (r.raw().is_array()) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      auto e = r.at(i);
      auto idx = a.find(e.string());
      if (!idx || a[*idx].kind != AtomKind::uncontrollable) e.fail("not an uncontrollable atom");
      v.set(*idx);
    }
    return v;
  }
  for (const auto& k : r.keys()) {
    auto idx = a.find(k);
    if (!idx || a[*idx].kind != AtomKind::uncontrollable) r.at_key(k).fail("not an uncontrollable atom");
    v.set(*idx, r.at_key(k).boolean());
  }
  return v;
}

}  // namespace detail

/// Parses a scenario document. Relative file references resolve against
/// base_dir; `seed` drives the optional random disturbances.
inline Scenario parse_scenario(const std::string& text, const std::filesystem::path& base_dir = ".",
                               std::uint64_t seed = 0) {
  using detail::Reader;
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ScenarioError("$", std::string("invalid JSON: ") + e.what());
  }
  Reader root(doc, "$");
  root.only({"name", "alphabet", "formula", "automaton", "behaviors", "barriers", "initial", "script", "live",
             "disturbances", "random_disturbances", "rates", "duration", "motion", "sensing"});
  Scenario sc;
  sc.name = root.has("name") ? root.at("name").string() : "scenario";

  auto alpha = root.at("alphabet");
  alpha.only({"uncontrollable", "controllable"});
  for (const char* kind : {"uncontrollable", "controllable"}) {
    auto list = alpha.at(kind);
    for (std::size_t i = 0; i < list.size(); ++i) {
      try {
        sc.alphabet.add(list.at(i).string(), std::string(kind) == "controllable" ? AtomKind::controllable
                                                                                   : AtomKind::uncontrollable);
      } catch (const AlphabetError& e) {
        list.at(i).fail(e.what());
      }
    }
  }

  auto ftext = root.at("formula");
  sc.formula_text = ftext.string();
  Formula f;
  try {
    f = parse_formula(sc.formula_text, sc.alphabet);
    sc.spec = validate_rtl(f, sc.alphabet);
  } catch (const std::exception& e) {
    ftext.fail(e.what());
  }
  if (root.has("automaton")) {
    auto ar = root.at("automaton");
    try {
      sc.automaton = rebind(parse_hoa(detail::slurp_file(base_dir / ar.string())), sc.alphabet);
    } catch (const std::exception& e) {
      ar.fail(e.what());
    }
  } else {
    try {
      sc.automaton = translate(f, sc.alphabet);
    } catch (const std::exception& e) {
      ftext.fail(e.what());
    }
  }

  auto beh = root.at("behaviors");
  for (const auto& name : beh.keys()) {
    auto idx = sc.alphabet.find(name);
    if (!idx || sc.alphabet[*idx].kind != AtomKind::controllable) beh.at_key(name).fail("not a controllable atom");
  }
  // declaration order, not key order
  for (int i : sc.alphabet.controllable()) {
    const auto& name = sc.alphabet[i].name;
    if (!beh.has(name.c_str())) throw ScenarioError(beh.path() + "." + name, "missing behavior for controllable atom");
    sc.behaviors.push_back(detail::read_behavior(beh.at_key(name), name));
  }

  if (root.has("barriers")) {
    auto bars = root.at("barriers");
    for (std::size_t i = 0; i < bars.size(); ++i) sc.motion.barriers.push_back(detail::read_barrier(bars.at(i)));
  }

  auto init = root.at("initial");
  init.only({"x", "uncontrollable"});
  sc.x0 = init.at("x").vec3();
  if (init.has("uncontrollable")) sc.initial_u = detail::read_uncontrollable_set(init.at("uncontrollable"), sc.alphabet, {});

  if (root.has("script")) {
    auto s = root.at("script");
    Valuation cur = sc.initial_u;
    for (std::size_t i = 0; i < s.size(); ++i) {
      auto e = s.at(i);
      e.only({"t", "set"});
      double t = e.at("t").number();
      if (t < 0) e.at("t").fail("expected a nonnegative time");
      if (!sc.script.empty() && t < sc.script.back().t) e.at("t").fail("script times must be nondecreasing");
      cur = detail::read_uncontrollable_set(e.at("set"), sc.alphabet, cur);
      sc.script.push_back({t, cur});
    }
  }
  if (root.has("live")) sc.live = root.at("live").boolean();

  if (root.has("disturbances")) {
    auto ds = root.at("disturbances");
    for (std::size_t i = 0; i < ds.size(); ++i) {
      auto e = ds.at(i);
      Disturbance d;
      d.t = e.at("t").number();
      if (e.has("impulse")) {
        e.only({"t", "impulse"});
        d.kind = Disturbance::Kind::impulse;
        d.displacement = e.at("impulse").vec3();
      } else if (e.has("hold")) {
        e.only({"t", "hold"});
        d.kind = Disturbance::Kind::hold;
        d.duration = e.at("hold").positive();
      } else {
        e.fail("expected \"impulse\" or \"hold\"");
      }
      sc.disturbances.push_back(d);
    }
  }
  if (root.has("random_disturbances")) {
    auto r = root.at("random_disturbances");
    r.only({"count", "magnitude", "t_min", "t_max"});
    int count = r.at("count").integer();
    double mag = r.at("magnitude").positive();
    double t0 = r.at("t_min").number(), t1 = r.at("t_max").number();
    if (count < 0) r.at("count").fail("expected a nonnegative integer");
    if (!(t1 >= t0)) r.at("t_max").fail("must not precede t_min");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ut(t0, t1);
    std::normal_distribution<double> n(0, 1);
    for (int i = 0; i < count; ++i) {
      Disturbance d;
      d.t = ut(rng);
      Vec3 dir(n(rng), n(rng), n(rng));
      d.displacement = mag * dir.normalized();
      sc.disturbances.push_back(d);
    }
  }

  if (root.has("rates")) {
    auto r = root.at("rates");
    r.only({"task_hz", "motion_hz"});
    if (r.has("task_hz")) sc.task_hz = r.at("task_hz").integer();
    if (r.has("motion_hz")) sc.motion_hz = r.at("motion_hz").integer();
    if (sc.task_hz <= 0) r.at("task_hz").fail("expected a positive integer");
    if (sc.motion_hz <= 0) r.at("motion_hz").fail("expected a positive integer");
    if (sc.motion_hz % sc.task_hz != 0) r.fail("motion_hz must be a multiple of task_hz");
  }
  sc.duration = root.at("duration").number();
  if (sc.duration < 0) root.at("duration").fail("expected a nonnegative number");

  if (root.has("motion")) {
    auto m = root.at("motion");
    m.only({"lambda", "clf_gain", "reach_gain", "mix_duration", "snap_radius", "reach_static_barriers"});
    sc.motion.lambda = m.positive_or("lambda", sc.motion.lambda);
    sc.motion.clf.alpha_gain = m.positive_or("clf_gain", sc.motion.clf.alpha_gain);
    sc.motion.reach_gain = m.positive_or("reach_gain", sc.motion.reach_gain);
    sc.motion.mix_duration = m.positive_or("mix_duration", sc.motion.mix_duration);
    sc.motion.snap_radius = m.positive_or("snap_radius", sc.motion.snap_radius);
    if (m.has("reach_static_barriers")) sc.motion.reach_static_barriers = m.at("reach_static_barriers").boolean();
  }
  if (root.has("sensing")) {
    auto s = root.at("sensing");
    s.only({"velocity_tolerance"});
    sc.sensing.velocity_tolerance = s.positive_or("velocity_tolerance", sc.sensing.velocity_tolerance);
  }
  try {
    sc.validate();
  } catch (const std::invalid_argument& e) {
    throw ScenarioError("$", e.what());
  }
  return sc;
}

inline Scenario load_scenario(const std::filesystem::path& file, std::uint64_t seed = 0) {
  std::string text;
  try {
    text = detail::slurp_file(file);
  } catch (const std::exception& e) {
    throw ScenarioError(file.string(), e.what());
  }
  return parse_scenario(text, file.parent_path(), seed);
}

}  // namespace rtlplan
