#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "core.hpp"
#include "continuation.hpp"
#include "energy.hpp"
#include "grid.hpp"
#include "problem.hpp"

namespace equipot {

class IoError : public Error {
 public:
  using Error::Error;
};

namespace io {

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (const unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

/** Shortest decimal that round-trips a double (17 significant digits). */
inline std::string g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/** One cosine term amp * cos(2 pi (kx x + ky y)) of a potential or weight. */
struct TrigTerm {
  int kx = 0, ky = 0;
  double amp = 0.0;
};

struct FormSpec {
  double mass = 0.0;
  std::vector<TrigTerm> terms;
};

/**
 * Fully resolved run configuration. The file format is flat `section.key =
 * value` lines; `form.mass` opens a new form and subsequent `form.term`
 * lines attach cosine terms to it. Unknown keys are rejected so that typos
 * fail loudly instead of silently running defaults.
 */
struct RunConfig {
  int ndim = 1;
  int n = 64;
  std::vector<FormSpec> forms;
  std::string weight_kind = "trig";  // trig | max_of_trig
  std::vector<TrigTerm> weight_terms;
  std::vector<TrigTerm> weight_components;
  BetaSchedule schedule;
  double solver_tol = 1e-10;
  int solver_max_newton = 60;
  std::string energy_prefactor = "standard";  // standard | none
  std::string out_dir = "out";
  bool dump_fields = false;
  bool dump_every_rung = false;
  double check_tol = 1e-3;
  std::vector<double> derivative_steps = {0.05, 0.02, 0.005};
  std::vector<TrigTerm> derivative_terms;
  int uniqueness_starts = 5;
  double uniqueness_tol = 1e-4;
  std::vector<int> sweep_grids = {32, 64, 128};
  double beta = 1.0;  // for single-beta runs
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& v, int line) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return x;
  } catch (...) {
    throw ConfigError("line " + std::to_string(line) + ": expected a number, got '" + v + "'");
  }
}

inline int parse_int(const std::string& v, int line) {
  try {
    std::size_t pos = 0;
    const int x = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return x;
  } catch (...) {
    throw ConfigError("line " + std::to_string(line) + ": expected an integer, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& v, int line) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("line " + std::to_string(line) + ": expected true/false, got '" + v + "'");
}

inline TrigTerm parse_term(const std::string& v, int line) {
  std::istringstream in(v);
  TrigTerm t;
  if (!(in >> t.kx >> t.ky >> t.amp))
    throw ConfigError("line " + std::to_string(line) + ": expected 'kx ky amplitude', got '" +
                      v + "'");
  std::string rest;
  if (in >> rest)
    throw ConfigError("line " + std::to_string(line) + ": trailing tokens in term '" + v + "'");
  return t;
}

}  // namespace detail

inline RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  bool saw_sweep_grids = false, saw_steps = false;
  std::istringstream lines(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(lines, raw)) {
    ++lineno;
    const std::size_t hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string line = detail::trim(raw);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'section.key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));

    if (key == "grid.ndim") {
      cfg.ndim = detail::parse_int(val, lineno);
    } else if (key == "grid.n") {
      cfg.n = detail::parse_int(val, lineno);
    } else if (key == "form.mass") {
      FormSpec f;
      f.mass = detail::parse_double(val, lineno);
      if (!(f.mass > 0.0))
        throw ConfigError("line " + std::to_string(lineno) + ": form " +
                          std::to_string(cfg.forms.size() + 1) + " has non-positive mass " + val);
      cfg.forms.push_back(f);
    } else if (key == "form.term") {
      if (cfg.forms.empty())
        throw ConfigError("line " + std::to_string(lineno) +
                          ": form.term before any form.mass");
      cfg.forms.back().terms.push_back(detail::parse_term(val, lineno));
    } else if (key == "weight.kind") {
      if (val != "trig" && val != "max_of_trig")
        throw ConfigError("line " + std::to_string(lineno) + ": weight.kind must be trig or " +
                          "max_of_trig, got '" + val + "'");
      cfg.weight_kind = val;
    } else if (key == "weight.term") {
      cfg.weight_terms.push_back(detail::parse_term(val, lineno));
    } else if (key == "weight.component") {
      cfg.weight_components.push_back(detail::parse_term(val, lineno));
    } else if (key == "schedule.beta0") {
      cfg.schedule.beta0 = detail::parse_double(val, lineno);
    } else if (key == "schedule.growth") {
      cfg.schedule.growth = detail::parse_double(val, lineno);
    } else if (key == "schedule.beta_max") {
      cfg.schedule.beta_max = detail::parse_double(val, lineno);
    } else if (key == "schedule.ladder_tol") {
      cfg.schedule.ladder_tol = detail::parse_double(val, lineno);
    } else if (key == "solver.tol") {
      cfg.solver_tol = detail::parse_double(val, lineno);
    } else if (key == "solver.max_newton") {
      cfg.solver_max_newton = detail::parse_int(val, lineno);
    } else if (key == "solver.energy_prefactor") {
      if (val != "standard" && val != "none")
        throw ConfigError("line " + std::to_string(lineno) +
                          ": energy_prefactor must be standard or none");
      cfg.energy_prefactor = val;
    } else if (key == "solver.beta") {
      cfg.beta = detail::parse_double(val, lineno);
    } else if (key == "outputs.dir") {
      cfg.out_dir = val;
    } else if (key == "outputs.dump_fields") {
      cfg.dump_fields = detail::parse_bool(val, lineno);
    } else if (key == "outputs.dump_every_rung") {
      cfg.dump_every_rung = detail::parse_bool(val, lineno);
    } else if (key == "check.tol") {
      cfg.check_tol = detail::parse_double(val, lineno);
    } else if (key == "derivative.step") {
      if (!saw_steps) {
        cfg.derivative_steps.clear();
        saw_steps = true;
      }
      cfg.derivative_steps.push_back(detail::parse_double(val, lineno));
    } else if (key == "derivative.term") {
      cfg.derivative_terms.push_back(detail::parse_term(val, lineno));
    } else if (key == "uniqueness.starts") {
      cfg.uniqueness_starts = detail::parse_int(val, lineno);
    } else if (key == "uniqueness.tol") {
      cfg.uniqueness_tol = detail::parse_double(val, lineno);
    } else if (key == "sweep.grid") {
      if (!saw_sweep_grids) {
        cfg.sweep_grids.clear();
        saw_sweep_grids = true;
      }
      cfg.sweep_grids.push_back(detail::parse_int(val, lineno));
    } else {
      throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  if (cfg.forms.empty()) throw ConfigError("config defines no forms (need form.mass)");
  return cfg;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline RunConfig load_config(const std::string& path) { return parse_config(read_file(path)); }

inline Field build_trig_field(const Grid& g, const std::vector<TrigTerm>& terms) {
  Field f(g, 0.0);
  for (const TrigTerm& t : terms) {
    std::vector<int> k(g.axes(), 0);
    k[0] = t.kx;
    if (g.axes() > 1) k[1] = t.ky;
    f += cos_mode(g, k, t.amp);
  }
  return f;
}

inline Field build_weight(const Grid& g, const RunConfig& cfg) {
  if (cfg.weight_kind == "trig") return build_trig_field(g, cfg.weight_terms);
  if (cfg.weight_components.empty())
    throw ConfigError("weight.kind = max_of_trig needs weight.component lines");
  std::vector<std::vector<int>> ks;
  std::vector<double> amps;
  for (const TrigTerm& t : cfg.weight_components) {
    std::vector<int> k(g.axes(), 0);
    k[0] = t.kx;
    if (g.axes() > 1) k[1] = t.ky;
    ks.push_back(std::move(k));
    amps.push_back(t.amp);
  }
  return max_of_modes(g, ks, amps);
}

inline ProblemData build_problem(const RunConfig& cfg) {
  const Grid g(cfg.ndim, cfg.n);
  std::vector<KahlerForm> forms;
  for (std::size_t j = 0; j < cfg.forms.size(); ++j) {
    try {
      forms.push_back(form_from_potential(cfg.forms[j].mass,
                                          build_trig_field(g, cfg.forms[j].terms)));
    } catch (const NotPositive& e) {
      throw ConfigError("form " + std::to_string(j + 1) + ": " + e.what());
    }
  }
  return ProblemData(g, std::move(forms), build_weight(g, cfg),
                     cfg.weight_kind == "trig");
}

/** Complex-2D variant: forms must be constant (metric sqrt(mass) * I). */
inline Problem2 build_problem2(const RunConfig& cfg) {
  const Grid g(cfg.ndim, cfg.n);
  std::vector<Metric2> ms;
  for (std::size_t j = 0; j < cfg.forms.size(); ++j) {
    if (!cfg.forms[j].terms.empty())
      throw ConfigError("form " + std::to_string(j + 1) +
                        ": complex-2D forms must be constant (no form.term)");
    Metric2 m;
    m.g11 = m.g22 = std::sqrt(cfg.forms[j].mass);
    ms.push_back(m);
  }
  return Problem2(g, std::move(ms), build_weight(g, cfg));
}

inline EnergyPrefactor build_prefactor(const RunConfig& cfg) {
  return cfg.energy_prefactor == "none" ? EnergyPrefactor::none : EnergyPrefactor::standard;
}

/** Canonical serialization of the resolved config: every effective value in
 *  fixed order, independent of how sparse the input file was. */
inline std::string canonical_config(const RunConfig& cfg) {
  std::ostringstream out;
  out << "grid.ndim = " << cfg.ndim << "\n";
  out << "grid.n = " << cfg.n << "\n";
  for (const FormSpec& f : cfg.forms) {
    out << "form.mass = " << g17(f.mass) << "\n";
    for (const TrigTerm& t : f.terms)
      out << "form.term = " << t.kx << " " << t.ky << " " << g17(t.amp) << "\n";
  }
  out << "weight.kind = " << cfg.weight_kind << "\n";
  for (const TrigTerm& t : cfg.weight_terms)
    out << "weight.term = " << t.kx << " " << t.ky << " " << g17(t.amp) << "\n";
  for (const TrigTerm& t : cfg.weight_components)
    out << "weight.component = " << t.kx << " " << t.ky << " " << g17(t.amp) << "\n";
  out << "schedule.beta0 = " << g17(cfg.schedule.beta0) << "\n";
  out << "schedule.growth = " << g17(cfg.schedule.growth) << "\n";
  out << "schedule.beta_max = " << g17(cfg.schedule.beta_max) << "\n";
  out << "schedule.ladder_tol = " << g17(cfg.schedule.ladder_tol) << "\n";
  out << "solver.tol = " << g17(cfg.solver_tol) << "\n";
  out << "solver.max_newton = " << cfg.solver_max_newton << "\n";
  out << "solver.energy_prefactor = " << cfg.energy_prefactor << "\n";
  out << "solver.beta = " << g17(cfg.beta) << "\n";
  out << "outputs.dir = " << cfg.out_dir << "\n";
  out << "outputs.dump_fields = " << (cfg.dump_fields ? "true" : "false") << "\n";
  out << "outputs.dump_every_rung = " << (cfg.dump_every_rung ? "true" : "false") << "\n";
  out << "check.tol = " << g17(cfg.check_tol) << "\n";
  for (const double s : cfg.derivative_steps) out << "derivative.step = " << g17(s) << "\n";
  for (const TrigTerm& t : cfg.derivative_terms)
    out << "derivative.term = " << t.kx << " " << t.ky << " " << g17(t.amp) << "\n";
  out << "uniqueness.starts = " << cfg.uniqueness_starts << "\n";
  out << "uniqueness.tol = " << g17(cfg.uniqueness_tol) << "\n";
  for (const int n : cfg.sweep_grids) out << "sweep.grid = " << n << "\n";
  return out.str();
}

// --- field dumps -----------------------------------------------------------

inline void dump_field(const Field& f, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "field,v1,ndim=" << f.grid.ndim << ",N=" << f.grid.n << "\n";
  const int n = f.grid.n;
  const std::size_t rows = f.v.size() / static_cast<std::size_t>(n);
  for (std::size_t r = 0; r < rows; ++r) {
    for (int c = 0; c < n; ++c) {
      if (c) out << ",";
      out << g17(f.v[r * n + c]);
    }
    out << "\n";
  }
  if (!out) throw IoError("write failed on " + path);
}

inline Field load_field(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string header;
  if (!std::getline(in, header))
    throw FormatError(path + ": empty file (byte 0)");
  int nd = 0, n = 0;
  if (std::sscanf(header.c_str(), "field,v1,ndim=%d,N=%d", &nd, &n) != 2)
    throw FormatError(path + ": bad header at byte 0: '" + header + "'");
  Grid g(nd, n);
  Field f(g);
  std::size_t idx = 0;
  std::size_t offset = header.size() + 1;
  std::string line;
  while (std::getline(in, line)) {
    std::size_t pos = 0;
    while (pos < line.size()) {
      std::size_t comma = line.find(',', pos);
      if (comma == std::string::npos) comma = line.size();
      if (idx >= f.v.size())
        throw FormatError(path + ": too many values at byte " + std::to_string(offset + pos));
      try {
        f.v[idx++] = std::stod(line.substr(pos, comma - pos));
      } catch (...) {
        throw FormatError(path + ": bad number at byte " + std::to_string(offset + pos));
      }
      pos = comma + 1;
    }
    offset += line.size() + 1;
  }
  if (idx != f.v.size())
    throw FormatError(path + ": expected " + std::to_string(f.v.size()) + " values, got " +
                      std::to_string(idx));
  return f;
}

inline Field load_field(const std::string& path, const Grid& expect) {
  Field f = load_field(path);
  if (!(f.grid == expect))
    throw FormatError(path + ": grid mismatch, expected ndim=" + std::to_string(expect.ndim) +
                      " N=" + std::to_string(expect.n) + ", file has ndim=" +
                      std::to_string(f.grid.ndim) + " N=" + std::to_string(f.grid.n));
  return f;
}

// --- summaries --------------------------------------------------------------

/** Deterministic summary document: config echo with content hash, then the
 *  caller's sections. No timestamps, no environment: reruns must diff clean. */
class Summary {
 public:
  Summary(const std::string& raw_config, const RunConfig& cfg) {
    char hash[32];
    std::snprintf(hash, sizeof hash, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(raw_config)));
    body_ << "config_hash = " << hash << "\n";
    body_ << "[config]\n" << canonical_config(cfg);
  }

  void section(const std::string& name) { body_ << "[" << name << "]\n"; }
  void kv(const std::string& key, const std::string& value) {
    body_ << key << " = " << value << "\n";
  }
  void kv(const std::string& key, double value) { kv(key, g17(value)); }
  void kv(const std::string& key, int value) { kv(key, std::to_string(value)); }
  void line(const std::string& s) { body_ << s << "\n"; }
  void assertion(const std::string& name, bool pass, const std::string& detail) {
    body_ << name << ": " << (pass ? "PASS" : "FAIL") << " (" << detail << ")\n";
  }

  std::string str() const { return body_.str(); }

  void write(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << body_.str();
    if (!out) throw IoError("write failed on " + path);
  }

 private:
  std::ostringstream body_;
};

/** Per-rung ladder table in fixed column order. */
inline void ladder_table(Summary& s, const std::vector<Rung>& ladder) {
  s.section("ladder");
  s.line("beta residual sup_gap sum_bound increment f_value energies");
  for (const Rung& r : ladder) {
    std::ostringstream row;
    row << g17(r.beta) << " " << g17(r.residual) << " " << g17(r.sup_gap) << " "
        << g17(r.sum_bound) << " " << g17(r.increment) << " " << g17(r.f_value);
    for (const double e : r.energies) row << " " << g17(e);
    s.line(row.str());
  }
}

}  // namespace io
}  // namespace equipot
