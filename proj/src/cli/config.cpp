#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string_view>

#include "netflow/cli.hpp"

namespace netflow::cli {

namespace {

std::string trim(std::string_view s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string_view::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return std::string(s.substr(a, b - a + 1));
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size() || !std::isfinite(out))
    throw ConfigError("key '" + key + "' expects a number, got '" + v + "'");
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size())
    throw ConfigError("key '" + key + "' expects a nonnegative integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("key '" + key + "' expects true or false, got '" + v + "'");
}

std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
  if (out.empty()) throw ConfigError("key '" + key + "' expects a comma-separated list of numbers");
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"command", [](RunConfig& c, const std::string&, const std::string& v) { c.command = v; }},
      {"mesh_file", [](RunConfig& c, const std::string&, const std::string& v) { c.mesh_file = v; }},
      {"nx", [](RunConfig& c, const std::string& k, const std::string& v) { c.nx = to_uint(k, v); }},
      {"ny", [](RunConfig& c, const std::string& k, const std::string& v) { c.ny = to_uint(k, v); }},
      {"r", [](RunConfig& c, const std::string& k, const std::string& v) { c.r = to_double(k, v); }},
      {"c2", [](RunConfig& c, const std::string& k, const std::string& v) { c.c2 = to_double(k, v); }},
      {"D", [](RunConfig& c, const std::string& k, const std::string& v) { c.D = to_double(k, v); }},
      {"gamma", [](RunConfig& c, const std::string& k, const std::string& v) { c.gamma = to_double(k, v); }},
      {"dt", [](RunConfig& c, const std::string& k, const std::string& v) { c.dt = to_double(k, v); }},
      {"t_end", [](RunConfig& c, const std::string& k, const std::string& v) { c.t_end = to_double(k, v); }},
      {"eps", [](RunConfig& c, const std::string& k, const std::string& v) { c.eps = to_list(k, v); }},
      {"levels", [](RunConfig& c, const std::string& k, const std::string& v) { c.levels = to_uint(k, v); }},
      {"coarse_nx", [](RunConfig& c, const std::string& k, const std::string& v) { c.coarse_nx = to_uint(k, v); }},
      {"seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = to_uint(k, v); }},
      {"out", [](RunConfig& c, const std::string&, const std::string& v) { c.out = v; }},
      {"source", [](RunConfig& c, const std::string&, const std::string& v) { c.source = v; }},
      {"amplitude", [](RunConfig& c, const std::string& k, const std::string& v) { c.amplitude = to_double(k, v); }},
      {"N", [](RunConfig& c, const std::string& k, const std::string& v) { c.N = to_uint(k, v); }},
      {"rescaled", [](RunConfig& c, const std::string& k, const std::string& v) { c.rescaled = to_bool(k, v); }},
      {"snapshot_every",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.snapshot_every = to_uint(k, v); }},
      {"psd_tol", [](RunConfig& c, const std::string& k, const std::string& v) { c.psd_tol = to_double(k, v); }},
      {"poincare", [](RunConfig& c, const std::string& k, const std::string& v) { c.poincare = to_double(k, v); }},
      {"c0", [](RunConfig& c, const std::string&, const std::string& v) { c.c0 = v; }},
  };
  return table;
}

void assign(RunConfig& config, const std::string& key, const std::string& value) {
  const auto it = setters().find(key);
  if (it == setters().end()) throw ConfigError("unknown key '" + key + "'");
  it->second(config, key, value);
}

}  // namespace

void apply_override(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  const std::string key = trim(std::string_view(assignment).substr(0, eq));
  const std::string value = trim(std::string_view(assignment).substr(eq + 1));
  if (key.empty()) throw ConfigError("empty key in '" + assignment + "'");
  assign(config, key, value);
}

void apply_config_text(RunConfig& config, const std::string& text, const std::string& origin) {
  std::stringstream ss(text);
  std::string line;
  std::size_t no = 0;
  while (std::getline(ss, line)) {
    ++no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    try {
      apply_override(config, t);
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(no) + ": " + e.what());
    }
  }
}

void validate(const RunConfig& c) {
  static const char* commands[] = {"discrete", "verify", "flow", "steady1d", "steady-plap", "steady-penalized",
                                   "converge"};
  if (c.command.empty()) throw ConfigError("missing command\n" + usage());
  bool known = false;
  for (const char* name : commands) known = known || c.command == name;
  if (!known) throw ConfigError("unknown command '" + c.command + "'");
  if (!(c.gamma > 0.0)) throw ConfigError("gamma must be positive");
  if (c.nx < 1 || c.ny < 1) throw ConfigError("nx and ny must be at least 1");
  if (!(c.r >= 0.0)) throw ConfigError("r must be nonnegative");
  if (!(c.c2 > 0.0)) throw ConfigError("c2 must be positive");
  if (!(c.D >= 0.0)) throw ConfigError("D must be nonnegative");
  if (!(c.dt > 0.0)) throw ConfigError("dt must be positive");
  if (!(c.t_end >= 0.0)) throw ConfigError("t_end must be nonnegative");
  for (double e : c.eps)
    if (!(e > 0.0)) throw ConfigError("eps values must be positive");
  if (c.N < 1) throw ConfigError("N must be at least 1");
  if (!(c.psd_tol >= 0.0)) throw ConfigError("psd_tol must be nonnegative");
  if (!(c.poincare > 0.0)) throw ConfigError("poincare must be positive");
  if (c.command == "converge" && c.levels < 3) throw ConfigError("levels must be at least 3");
  if (c.command == "converge" && c.coarse_nx < 1) throw ConfigError("coarse_nx must be at least 1");
  if ((c.command == "flow" || c.command == "steady1d" || c.command == "steady-plap" ||
       c.command == "steady-penalized") && !(c.r > 0.0))
    throw ConfigError("r must be positive for command '" + c.command + "'");
  if (c.command == "steady-plap" && !(c.gamma > 1.0)) throw ConfigError("gamma must exceed 1 for steady-plap");
  static const char* sources[] = {"cos", "cos2d", "cosxy", "zero"};
  bool source_ok = false;
  for (const char* s : sources) source_ok = source_ok || c.source == s;
  if (!source_ok) throw ConfigError("source must be one of cos, cos2d, cosxy, zero");
  if (c.c0 != "bump" && c.c0 != "identity" && c.c0 != "zero") throw ConfigError("c0 must be bump, identity or zero");
}

RunConfig parse_config(std::span<const std::string> args) {
  RunConfig config;
  std::vector<std::string> overrides;
  std::optional<std::string> file;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a == "--config") {
      if (i + 1 >= args.size()) throw ConfigError("--config needs a file name");
      file = args[++i];
    } else if (a.rfind("--config=", 0) == 0) {
      file = a.substr(9);
    } else {
      overrides.push_back(a);
    }
  }
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("cannot read config file '" + *file + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    apply_config_text(config, ss.str(), *file);
  }
  for (const auto& o : overrides) apply_override(config, o);
  validate(config);
  return config;
}

std::string usage() {
  return "usage: netflow [--config FILE] [key=value ...]\n"
         "  command=discrete|verify|flow|steady1d|steady-plap|steady-penalized|converge\n"
         "  keys: mesh_file nx ny r c2 D gamma dt t_end eps levels coarse_nx seed out source\n"
         "        amplitude N rescaled snapshot_every psd_tol poincare c0\n"
         "  defaults: r=1 c2=1 D=0 gamma=2 dt=0.01 t_end=1 nx=ny=8 out=netflow_out\n";
}

}  // namespace netflow::cli
