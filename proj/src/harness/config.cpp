#include "irfkit/harness/config.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "irfkit/errors.hpp"
#include "irfkit/model_zoo.hpp"

namespace irfkit::harness {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) { throw ConfigError(path + ": " + what); }

std::string type_name(const Json& j) {
  if (j.is_number()) return "number";
  return j.type_name();
}

void line_col(const std::string& text, std::size_t byte, std::size_t& line, std::size_t& col) {
  line = 1;
  col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
}

double finite_number(const Json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number, got " + type_name(j));
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(path, "must be finite");
  return v;
}

std::vector<double> number_list(const Json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array of numbers, got " + type_name(j));
  std::vector<double> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(finite_number(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

AgentSpec build_two_mode(const Node& n, std::size_t substeps) {
  n.allow_only({"emission_on", "emission_off", "gain", "p_min", "p_max"});
  zoo::TwoModeAgentParams p;
  p.emission_on = n.number("emission_on", 0.01);
  p.emission_off = n.number("emission_off", 0.0);
  p.response_gain = n.number("gain", 0.4);
  p.p_min = n.number("p_min", 0.1);
  p.p_max = n.number("p_max", 0.9);
  try {
    return substeps == 0 ? zoo::make_two_mode_agent(p) : zoo::make_proportional_use_agent(p, substeps);
  } catch (const ParamError& e) {
    fail(n.path(), e.what());
  }
}

FilterSpec build_filter(const Node& n) {
  const std::string type = n.text("type", "max_window");
  try {
    if (type == "max_window") {
      n.allow_only({"type", "window"});
      return zoo::make_max_window_filter({static_cast<std::size_t>(n.count("window", 5)), 1});
    }
    if (type == "linear") {
      n.allow_only({"type", "pole", "gain"});
      return zoo::make_linear_filter(n.number("pole"), n.number("gain", 1.0));
    }
    if (type == "identity") {
      n.allow_only({"type"});
      return zoo::make_identity_filter(1);
    }
  } catch (const ParamError& e) {
    fail(n.path(), e.what());
  }
  fail(n.field("type"), "unknown component id \"" + type + "\" (expected max_window, linear or identity)");
}

ControllerSpec build_controller(const Node& n) {
  const std::string type = n.text("type", "lag");
  if (type != "lag" && type != "integrator") {
    fail(n.field("type"), "unknown component id \"" + type + "\" (expected lag or integrator)");
  }
  n.allow_only({"type", "gain", "pole", "reference", "lower", "upper", "corner"});
  zoo::LagControllerParams p;
  p.gain = n.number("gain", 0.1);
  p.pole = type == "integrator" ? 1.0 : n.number("pole", 0.99);
  if (type == "integrator" && n.has("pole")) fail(n.field("pole"), "an integrator has its pole fixed at 1");
  p.reference = {n.number("reference", 0.5)};
  p.signal_set = SignalBox{{n.number("lower", -1.0)}, {n.number("upper", 1.0)}};
  p.corner = n.number("corner", 1e-3);
  try {
    return zoo::make_lag_controller(p);
  } catch (const ParamError& e) {
    fail(n.path(), e.what());
  }
}

// Componentwise nonlinearity of the generic map form.
std::function<double(double)> build_post(const Json& j, const std::string& path) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "identity") return [](double v) { return v; };
    if (s == "sin") return [](double v) { return std::sin(v); };
    if (s == "tanh") return [](double v) { return std::tanh(v); };
    fail(path, "unknown nonlinearity \"" + s + "\" (expected identity, sin, tanh, clamp, min or max)");
  }
  if (!j.is_object() || j.size() != 1) fail(path, "expected a name or a one-key object");
  const auto& [key, val] = *j.items().begin();
  if (key == "clamp") {
    const auto b = number_list(val, path + ".clamp");
    if (b.size() != 2 || !(b[0] <= b[1])) fail(path + ".clamp", "expected [lo, hi] with lo <= hi");
    return [lo = b[0], hi = b[1]](double v) { return std::clamp(v, lo, hi); };
  }
  if (key == "min") return [c = finite_number(val, path + ".min")](double v) { return std::min(v, c); };
  if (key == "max") return [c = finite_number(val, path + ".max")](double v) { return std::max(v, c); };
  fail(path, "unknown nonlinearity \"" + key + "\"");
}

ClosedLoopSystem build_generic(const Node& n) {
  n.allow_only({"type", "dim", "maps", "probs"});
  const auto dim = static_cast<std::size_t>(n.count("dim"));
  if (dim == 0) fail(n.field("dim"), "must be positive");
  const auto maps = n.list("maps");
  if (maps.empty()) fail(n.field("maps"), "needs at least one map");
  AgentSpec a;
  a.state_dim = dim;
  a.output_dim = 0;
  for (const auto& m : maps) {
    m.allow_only({"A", "b", "post"});
    const auto A = m.matrix("A");
    if (A.size() != dim) fail(m.field("A"), "expected " + std::to_string(dim) + " rows");
    for (const auto& row : A) {
      if (row.size() != dim) fail(m.field("A"), "expected " + std::to_string(dim) + " columns");
    }
    const auto b = m.numbers("b", std::vector<double>(dim, 0.0));
    if (b.size() != dim) fail(m.field("b"), "expected " + std::to_string(dim) + " entries");
    const auto post = m.has("post") ? build_post(m.json().at("post"), m.field("post"))
                                    : std::function<double(double)>([](double v) { return v; });
    a.transition_maps.push_back([A, b, post](ConstVec x, MutVec out) {
      for (std::size_t i = 0; i < A.size(); ++i) {
        double s = b[i];
        for (std::size_t j = 0; j < x.size(); ++j) s += A[i][j] * x[j];
        out[i] = post(s);
      }
    });
  }
  const auto probs = n.numbers("probs", std::vector<double>(maps.size(), 1.0 / static_cast<double>(maps.size())));
  if (probs.size() != maps.size() || !on_simplex(probs, 1e-12)) {
    fail(n.field("probs"), "must be a probability vector with one entry per map");
  }
  a.transition_probs = [probs](ConstVec, MutVec out) { std::copy(probs.begin(), probs.end(), out.begin()); };
  a.output_maps = {[](ConstVec, MutVec) {}};
  a.output_probs = [](ConstVec, MutVec out) { out[0] = 1.0; };
  return ClosedLoopSystem({std::move(a)}, zoo::make_identity_filter(0),
                          zoo::make_constant_controller({0.0}, SignalBox{{0.0}, {0.0}}, 0));
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

Config parse_config(std::string text) {
  Config c;
  try {
    c.root = Json::parse(text);
  } catch (const Json::parse_error& e) {
    std::size_t line = 0, col = 0;
    line_col(text, e.byte == 0 ? 0 : e.byte - 1, line, col);
    std::string msg = e.what();
    if (const auto p = msg.find("syntax error"); p != std::string::npos) msg = msg.substr(p);
    throw ConfigError("config: line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + msg);
  }
  c.text = std::move(text);
  c.digest = sha256_hex(c.text);
  if (!c.root.is_object()) fail("config", "top level must be an object");
  const Node root(c.root, "config");
  root.allow_only({"schema_version", "seed", "system", "simulate", "diagnose", "verify", "output"});
  if (!root.has("schema_version")) fail("config.schema_version", "missing required field");
  if (root.count("schema_version") != static_cast<std::uint64_t>(kSchemaVersion)) {
    fail("config.schema_version", "unsupported version (expected " + std::to_string(kSchemaVersion) + ")");
  }
  if (!root.has("system")) fail("config.system", "missing required field");
  if (root.has("output")) {
    const Node out = root.child("output");
    out.allow_only({"dir", "format"});
    if (out.text("format", "csv") != "csv") fail(out.field("format"), "only csv is supported");
  }
  return c;
}

Config load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

Node::Node(const Json& j, std::string path) : j_(&j), path_(std::move(path)) {
  if (!j.is_object()) fail(path_, "expected an object, got " + type_name(j));
}

bool Node::has(const std::string& key) const { return j_->contains(key); }

void Node::allow_only(std::initializer_list<const char*> allowed) const {
  for (const auto& [key, val] : j_->items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      fail(field(key), "unknown field");
    }
  }
}

Node Node::child(const std::string& key) const {
  if (!has(key)) fail(field(key), "missing required field");
  return Node(j_->at(key), field(key));
}

std::vector<Node> Node::list(const std::string& key) const {
  if (!has(key)) fail(field(key), "missing required field");
  const Json& a = j_->at(key);
  if (!a.is_array()) fail(field(key), "expected an array, got " + type_name(a));
  std::vector<Node> out;
  for (std::size_t i = 0; i < a.size(); ++i) out.emplace_back(a[i], field(key) + "[" + std::to_string(i) + "]");
  return out;
}

double Node::number(const std::string& key) const {
  if (!has(key)) fail(field(key), "missing required field");
  return finite_number(j_->at(key), field(key));
}

double Node::number(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }

std::uint64_t Node::count(const std::string& key) const {
  if (!has(key)) fail(field(key), "missing required field");
  const Json& v = j_->at(key);
  if (!v.is_number_unsigned()) {
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
    fail(field(key), "expected a non-negative integer, got " + (v.is_number() ? v.dump() : type_name(v)));
  }
  return v.get<std::uint64_t>();
}

std::uint64_t Node::count(const std::string& key, std::uint64_t fallback) const {
  return has(key) ? count(key) : fallback;
}

bool Node::flag(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const Json& v = j_->at(key);
  if (!v.is_boolean()) fail(field(key), "expected true or false");
  return v.get<bool>();
}

std::string Node::text(const std::string& key) const {
  if (!has(key)) fail(field(key), "missing required field");
  const Json& v = j_->at(key);
  if (!v.is_string()) fail(field(key), "expected a string, got " + type_name(v));
  return v.get<std::string>();
}

std::string Node::text(const std::string& key, const std::string& fallback) const {
  return has(key) ? text(key) : fallback;
}

std::vector<double> Node::numbers(const std::string& key) const {
  if (!has(key)) fail(field(key), "missing required field");
  return number_list(j_->at(key), field(key));
}

std::vector<double> Node::numbers(const std::string& key, std::vector<double> fallback) const {
  return has(key) ? numbers(key) : fallback;
}

std::vector<std::vector<double>> Node::matrix(const std::string& key) const {
  if (!has(key)) fail(field(key), "missing required field");
  const Json& a = j_->at(key);
  if (!a.is_array()) fail(field(key), "expected an array of rows");
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < a.size(); ++i) out.push_back(number_list(a[i], field(key) + "[" + std::to_string(i) + "]"));
  return out;
}

ClosedLoopSystem build_system(const Node& n) {
  const std::string type = n.text("type");
  if (type == "twomap1d") {
    n.allow_only({"type"});
    return zoo::make_twomap1d();
  }
  if (type == "affine_ifs") {
    n.allow_only({"type", "slopes", "offsets", "probs"});
    try {
      return zoo::make_affine_ifs_benchmark(n.numbers("slopes"), n.numbers("offsets"), n.numbers("probs"));
    } catch (const ParamError& e) {
      fail(n.path(), e.what());
    }
  }
  if (type == "generic") return build_generic(n);
  if (type == "phev_fleet") {
    n.allow_only({"type", "agents", "agent", "substeps", "filter", "controller"});
    const auto agents = static_cast<std::size_t>(n.count("agents", 100));
    if (agents == 0) fail(n.field("agents"), "must be positive");
    const auto substeps = static_cast<std::size_t>(n.count("substeps", 0));
    const Json empty = Json::object();
    const AgentSpec agent = build_two_mode(n.has("agent") ? n.child("agent") : Node(empty, n.field("agent")), substeps);
    FilterSpec filter = build_filter(n.has("filter") ? n.child("filter") : Node(empty, n.field("filter")));
    ControllerSpec ctrl = build_controller(n.has("controller") ? n.child("controller") : Node(empty, n.field("controller")));
    return ClosedLoopSystem(std::vector<AgentSpec>(agents, agent), std::move(filter), std::move(ctrl));
  }
  fail(n.field("type"), "unknown component id \"" + type + "\" (expected twomap1d, affine_ifs, generic or phev_fleet)");
}

SystemState build_state(const ClosedLoopSystem& system, const Json& spec, const std::string& path) {
  if (spec.is_array()) {
    const auto v = number_list(spec, path);
    if (v.size() != system.state_dim()) {
      fail(path, "expected " + std::to_string(system.state_dim()) + " entries, got " + std::to_string(v.size()));
    }
    return SystemState{v};
  }
  const Node n(spec, path);
  n.allow_only({"agent", "filter", "controller", "output"});
  SystemState s = system.zero_state();
  const StateLayout& L = system.layout();
  const auto fill = [&](const char* key, std::size_t from, std::size_t to) {
    if (!n.has(key)) return;
    const double v = n.number(key);
    std::fill(s.values.begin() + static_cast<std::ptrdiff_t>(from), s.values.begin() + static_cast<std::ptrdiff_t>(to), v);
  };
  fill("agent", 0, L.filter_offset);
  fill("filter", L.filter_offset, L.filter_offset + L.filter_dim);
  fill("controller", L.controller_offset, L.controller_offset + L.controller_dim);
  fill("output", L.output_offset, L.output_offset + L.output_dim);
  return s;
}

SystemState build_state(const ClosedLoopSystem& system, const Node& parent, const std::string& key) {
  if (!parent.has(key)) return system.zero_state();
  return build_state(system, parent.json().at(key), parent.field(key));
}

std::vector<SystemState> build_states(const ClosedLoopSystem& system, const Node& parent, const std::string& key) {
  if (!parent.has(key)) fail(parent.field(key), "missing required field");
  const Json& j = parent.json().at(key);
  const std::string path = parent.field(key);
  std::vector<SystemState> out;
  if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(build_state(system, j[i], path + "[" + std::to_string(i) + "]"));
  } else {
    const Node n(j, path);
    n.allow_only({"random_controller"});
    const Node r = n.child("random_controller");
    r.allow_only({"count", "lo", "hi", "seed", "filter"});
    const auto count = r.count("count");
    const double lo = r.number("lo"), hi = r.number("hi");
    if (!(lo <= hi)) fail(r.path(), "lo must not exceed hi");
    RandomStream rng(r.count("seed", 0), 0);
    const StateLayout& L = system.layout();
    if (L.controller_dim == 0) fail(r.path(), "system has no controller state");
    for (std::uint64_t i = 0; i < count; ++i) {
      SystemState s = system.zero_state();
      std::fill(s.values.begin() + static_cast<std::ptrdiff_t>(L.filter_offset),
                s.values.begin() + static_cast<std::ptrdiff_t>(L.filter_offset + L.filter_dim), r.number("filter", 0.0));
      for (std::size_t c = 0; c < L.controller_dim; ++c) s.values[L.controller_offset + c] = rng.uniform(lo, hi);
      out.push_back(std::move(s));
    }
  }
  if (out.empty()) fail(path, "needs at least one state");
  return out;
}

Observable build_observable(const ClosedLoopSystem& system, const Node& n) {
  const std::string type = n.text("type");
  const auto index_of = [&]() {
    const auto i = static_cast<std::size_t>(n.count("index"));
    if (i >= system.state_dim()) fail(n.field("index"), "out of range for state dimension " + std::to_string(system.state_dim()));
    return i;
  };
  if (type == "coordinate") {
    n.allow_only({"type", "index"});
    return [i = index_of()](ConstVec x) { return x[i]; };
  }
  if (type == "lattice_phase") {
    n.allow_only({"type", "index", "spacing"});
    const double spacing = n.number("spacing");
    if (!(spacing > 0.0)) fail(n.field("spacing"), "must be positive");
    std::size_t i = system.layout().controller_offset;  // default: first controller state
    if (n.has("index")) {
      i = index_of();
    } else if (system.layout().controller_dim == 0) {
      fail(n.field("index"), "system has no controller state, give an index");
    }
    return [i, spacing](ConstVec x) { return std::cos(2.0 * std::numbers::pi * x[i] / spacing); };
  }
  if (type == "agent_mean") {
    n.allow_only({"type"});
    const std::size_t end = system.layout().filter_offset;
    if (end == 0) fail(n.field("type"), "system has no agent state");
    return [end](ConstVec x) {
      double s = 0.0;
      for (std::size_t i = 0; i < end; ++i) s += x[i];
      return s / static_cast<double>(end);
    };
  }
  fail(n.field("type"), "unknown observable \"" + type + "\" (expected coordinate, lattice_phase or agent_mean)");
}

ScalarFunction build_quadratic(std::size_t dim, const Node& n) {
  n.allow_only({"type", "weights", "center"});
  if (n.text("type", "quadratic") != "quadratic") fail(n.field("type"), "only quadratic candidates are supported");
  const auto w = n.numbers("weights", std::vector<double>(dim, 1.0));
  const auto c = n.numbers("center", std::vector<double>(dim, 0.0));
  if (w.size() != dim) fail(n.field("weights"), "expected " + std::to_string(dim) + " entries");
  if (c.size() != dim) fail(n.field("center"), "expected " + std::to_string(dim) + " entries");
  return [w, c](ConstVec x) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * (x[i] - c[i]) * (x[i] - c[i]);
    return s;
  };
}

ComparisonFunction build_comparison(const Node& n) {
  n.allow_only({"coef", "power"});
  const double c = n.number("coef"), p = n.number("power", 2.0);
  if (!(c >= 0.0) || !(p > 0.0)) fail(n.path(), "needs coef >= 0 and power > 0");
  return [c, p](double s) { return c * std::pow(s, p); };
}

DomainSampler build_box(std::size_t dim, const Node& n, std::vector<double>* lower, std::vector<double>* upper) {
  n.allow_only({"lower", "upper", "lo", "hi"});
  std::vector<double> lo, hi;
  if (n.has("lower") || n.has("upper")) {
    lo = n.numbers("lower");
    hi = n.numbers("upper");
  } else {
    lo.assign(dim, n.number("lo"));
    hi.assign(dim, n.number("hi"));
  }
  if (lo.size() != dim || hi.size() != dim) fail(n.path(), "bounds must have " + std::to_string(dim) + " entries");
  for (std::size_t i = 0; i < dim; ++i) {
    if (!(lo[i] <= hi[i])) fail(n.path(), "lower bound above upper bound at coordinate " + std::to_string(i));
  }
  if (lower) *lower = lo;
  if (upper) *upper = hi;
  return box_sampler(std::move(lo), std::move(hi));
}

}  // namespace irfkit::harness
