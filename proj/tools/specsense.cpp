#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "CLI11.hpp"
#include "json.hpp"
#include "specsense/oracle.hpp"
#include "specsense/parallel.hpp"
#include "specsense/timecorr.hpp"

using namespace specsense;
using nlohmann::json;

namespace {

constexpr double solver_residual = 1e-10;
constexpr double quadrature_tolerance = 1e-9;

struct Options {
  std::string model = "builtin-dimer";
  std::string out;
  int threads = 1;
  double gamma_sensor = 1.0 / 4.8;
  double omega1 = 18515.0;
  double omega2 = 17455.0;
  std::string omegas;
  std::string grid;
  std::string grid2;
  std::string tau = "-20:20:201";
  std::string oracle;
  bool components = false;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string show(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) parts.push_back(item);
  return parts;
}

double to_number(const std::string& s, const std::string& code, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw error(code, "cannot read " + what + " from '" + s + "'");
  }
}

std::vector<double> parse_range(const std::string& spec, const std::string& what) {
  const auto parts = split(spec, ':');
  if (parts.size() != 3) throw error("invalid_grid", what + " must be LO:HI:N, got '" + spec + "'");
  const double lo = to_number(parts[0], "invalid_grid", what), hi = to_number(parts[1], "invalid_grid", what);
  const double count = to_number(parts[2], "invalid_grid", what);
  if (count < 1 || count != std::floor(count)) throw error("invalid_grid", what + " needs a positive integer point count");
  const int n = static_cast<int>(count);
  if (n == 1) {
    if (lo != hi) throw error("invalid_grid", what + " with one point needs LO = HI");
    return {lo};
  }
  if (!(hi > lo)) throw error("invalid_grid", what + " must be strictly increasing");
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = lo + (hi - lo) * i / (n - 1);
  return v;
}

std::vector<double> parse_oracle(const std::string& spec) {
  if (spec.rfind("eps=", 0) != 0) throw error("invalid_eps", "--oracle expects eps=V[,V...]");
  std::vector<double> eps;
  for (const auto& s : split(spec.substr(4), ',')) {
    const double v = to_number(s, "invalid_eps", "oracle eps");
    if (!(v > 0.0)) throw error("invalid_eps", "oracle eps must be positive");
    eps.push_back(v);
  }
  if (eps.empty()) throw error("invalid_eps", "--oracle lists no eps values");
  return eps;
}

struct LoadedModel {
  EmitterModel model;
  std::string source;
  std::string op;
};

LoadedModel load(const Options& o) {
  LoadedModel m;
  m.source = o.model;
  m.model = o.model == "builtin-dimer" ? build_vibronic_dimer() : load_model_file(o.model);
  if (m.model.emission_ops.empty()) throw error("invalid_model", "model defines no emission operator");
  m.op = m.model.emission_ops.front().first;
  for (const auto& [name, op] : m.model.emission_ops)
    if (name == "a") m.op = name;
  return m;
}

SensorSpec sensor(const Options& o, const LoadedModel& m, double omega_cm1) {
  SensorSpec s = sensor_at_cm1(omega_cm1, o.gamma_sensor, m.op);
  s.validate();
  return s;
}

void add_warnings(json& side, const std::vector<std::string>& w) {
  for (const auto& s : w)
    if (std::find(side["warnings"].begin(), side["warnings"].end(), s) == side["warnings"].end())
      side["warnings"].push_back(s);
}

json sidecar(const std::string& command, const Options& o, const LoadedModel& m) {
  json side;
  side["command"] = command;
  side["version"] = SPECSENSE_VERSION;
  side["model"] = {{"source", m.source}, {"hash", model_hash(m.model)}, {"dim", m.model.dim}, {"emission_op", m.op}};
  side["tolerances"] = {{"solver_residual", solver_residual}, {"quadrature", quadrature_tolerance}};
  side["threads"] = o.threads;
  side["gamma_sensor_ps"] = o.gamma_sensor;
  side["warnings"] = json::array();
  return side;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

void write_output(const Options& o, const std::string& command, const Table& t, const json& side) {
  std::ostringstream csv;
  for (std::size_t i = 0; i < t.header.size(); ++i) csv << (i ? "," : "") << t.header[i];
  csv << "\n";
  for (const auto& r : t.rows) {
    for (std::size_t i = 0; i < r.size(); ++i) csv << (i ? "," : "") << fmt(r[i]);
    csv << "\n";
  }
  const std::string path = o.out.empty() ? command + ".csv" : o.out;
  if (path == "-") {
    std::cout << csv.str();
    std::cerr << side.dump() << "\n";
    return;
  }
  std::ofstream f(path);
  if (!f) throw error("io_error", "cannot write '" + path + "'");
  f << csv.str();
  std::ofstream s(path + ".json");
  if (!s) throw error("io_error", "cannot write '" + path + ".json'");
  s << side.dump(2) << "\n";
}

std::string eps_label(const std::string& base, double eps) { return base + "_eps=" + fmt(eps); }

double log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(std::abs(y[i])));
  }
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / lx.size();
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / ly.size();
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  return sxy / sxx;
}

void cmd_model_export(const Options& o) {
  const std::string text = save_model(build_vibronic_dimer());
  if (o.out.empty() || o.out == "-") {
    std::cout << text << "\n";
    return;
  }
  std::ofstream f(o.out);
  if (!f) throw error("io_error", "cannot write '" + o.out + "'");
  f << text << "\n";
}

void cmd_model_inspect(const Options& o) {
  const LoadedModel m = load(o);
  const EmitterModel& em = m.model;
  std::cout << "source: " << m.source << "\n";
  std::cout << "dim: " << em.dim << "\n";
  std::cout << "hash: " << model_hash(em) << "\n";
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(em.hamiltonian / cm_to_rad_ps, Eigen::EigenvaluesOnly);
  std::cout << "hamiltonian eigenvalues (cm-1):";
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) std::cout << " " << show(es.eigenvalues()(i));
  std::cout << "\n";
  std::cout << "excited eigenstates: " << excited_eigensystem(em).size() << "\n";
  std::cout << "channels: " << em.channels.size() << "\n";
  for (std::size_t k = 0; k < em.channels.size(); ++k) {
    const auto& ch = em.channels[k];
    std::cout << "  channel " << k << ": rate " << show(ch.rate) << " ps^-1, nonzeros "
              << (ch.jump.array() != cplx(0.0)).count() << "\n";
  }
  std::cout << "emission operators:";
  for (const auto& [name, op] : em.emission_ops) std::cout << " " << name;
  std::cout << "\n";
  if (em.dimer) std::cout << "delta_E (cm-1): " << show(em.dimer->delta_E()) << "\n";
}

void cmd_spectrum(const Options& o) {
  const LoadedModel m = load(o);
  const std::vector<double> grid = parse_range(o.grid.empty() ? "17000:19000:801" : o.grid, "--grid");
  const std::vector<double> eps = o.oracle.empty() ? std::vector<double>{} : parse_oracle(o.oracle);
  const HierarchySolver solver(m.model);
  std::vector<double> rad;
  for (double w : grid) rad.push_back(w * cm_to_rad_ps);
  const CorrelationCurve c = power_spectrum(solver, sensor(o, m, grid[0]), rad, o.threads);

  json side = sidecar("spectrum", o, m);
  side["grid_cm1"] = {grid.front(), grid.back(), grid.size()};
  Table t;
  t.header = {"omega_cm1", "S"};
  for (std::size_t i = 0; i < grid.size(); ++i) t.rows.push_back({grid[i], c.values[i]});

  std::vector<std::pair<double, double>> maxima;
  for (std::size_t i = 1; i + 1 < grid.size(); ++i)
    if (c.values[i] > c.values[i - 1] && c.values[i] >= c.values[i + 1]) maxima.emplace_back(c.values[i], grid[i]);
  std::sort(maxima.rbegin(), maxima.rend());
  side["local_maxima_cm1"] = json::array();
  for (std::size_t k = 0; k < std::min<std::size_t>(2, maxima.size()); ++k) side["local_maxima_cm1"].push_back(maxima[k].second);

  for (double e : eps) {
    std::vector<double> col(grid.size());
    std::vector<std::vector<std::string>> warn(grid.size());
    parallel_for(grid.size(), o.threads, [&](std::size_t i) {
      const JointSystem j = build_joint(m.model, {sensor(o, m, grid[i])}, e * cm_to_rad_ps);
      warn[i] = j.warnings;
      col[i] = oracle_spectrum(j);
    });
    for (const auto& w : warn) add_warnings(side, w);
    t.header.push_back(eps_label("S_oracle", e));
    bool below = true;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      t.rows[i].push_back(col[i]);
      below = below && col[i] <= c.values[i];
    }
    side["oracle"].push_back({{"eps_cm1", e}, {"below_hierarchy", below}});
  }
  write_output(o, "spectrum", t, side);
}

void cmd_g2map(const Options& o) {
  const LoadedModel m = load(o);
  const std::vector<double> g1 = parse_range(o.grid.empty() ? "17000:19000:201" : o.grid, "--grid");
  const std::vector<double> g2 = o.grid2.empty() ? std::vector<double>{o.omega2} : parse_range(o.grid2, "--grid2");
  const std::vector<double> eps = o.oracle.empty() ? std::vector<double>{} : parse_oracle(o.oracle);
  const HierarchySolver solver(m.model);

  std::vector<std::pair<double, double>> points;
  for (double b : g2)
    for (double a : g1) points.emplace_back(a, b);
  std::vector<double> values(points.size());
  parallel_for(points.size(), o.threads, [&](std::size_t i) {
    values[i] = g2_zero(solver, sensor(o, m, points[i].first), sensor(o, m, points[i].second));
  });

  json side = sidecar("g2map", o, m);
  Table t;
  t.header = {"omega1_cm1", "omega2_cm1", "g2"};
  for (std::size_t i = 0; i < points.size(); ++i) t.rows.push_back({points[i].first, points[i].second, values[i]});
  side["max_g2"] = *std::max_element(values.begin(), values.end());

  std::vector<std::vector<double>> deltas;
  for (double e : eps) {
    std::vector<double> col(points.size());
    std::vector<std::vector<std::string>> warn(points.size());
    parallel_for(points.size(), o.threads, [&](std::size_t i) {
      const JointSystem j =
          build_joint(m.model, {sensor(o, m, points[i].first), sensor(o, m, points[i].second)}, e * cm_to_rad_ps);
      warn[i] = j.warnings;
      col[i] = oracle_gM_zero(j);
    });
    for (const auto& w : warn) add_warnings(side, w);
    t.header.push_back(eps_label("g2_oracle", e));
    std::vector<double> d;
    for (std::size_t i = 0; i < points.size(); ++i) {
      t.rows[i].push_back(col[i]);
      d.push_back(std::abs(col[i] - values[i]));
    }
    deltas.push_back(d);
  }
  for (std::size_t k = 1; k < eps.size(); ++k) {
    std::vector<double> ratios;
    for (std::size_t i = 0; i < points.size(); ++i)
      if (deltas[k][i] > 0.0) ratios.push_back(deltas[k - 1][i] / deltas[k][i]);
    if (ratios.empty()) continue;
    std::nth_element(ratios.begin(), ratios.begin() + ratios.size() / 2, ratios.end());
    side["oracle_delta_ratios"].push_back({{"eps_a_cm1", eps[k - 1]},
                                           {"eps_b_cm1", eps[k]},
                                           {"median_ratio", ratios[ratios.size() / 2]},
                                           {"quadratic_expectation", std::pow(eps[k - 1] / eps[k], 2)}});
  }
  write_output(o, "g2map", t, side);
}

void cmd_g2tau(const Options& o) {
  const LoadedModel m = load(o);
  const std::vector<double> taus = parse_range(o.tau, "--tau");
  const std::vector<double> eps = o.oracle.empty() ? std::vector<double>{} : parse_oracle(o.oracle);
  const SensorSpec s1 = sensor(o, m, o.omega1), s2 = sensor(o, m, o.omega2);
  const HierarchySolver solver(m.model);
  G2TauOptions opts;
  opts.components = o.components;
  const CorrelationCurve c = g2_tau(solver, s1, s2, taus, opts);

  json side = sidecar("g2tau", o, m);
  side["omega1_cm1"] = o.omega1;
  side["omega2_cm1"] = o.omega2;
  side["curve"] = c.metadata;
  Table t;
  t.header = {"tau_ps", "g2"};
  if (o.components) t.header.insert(t.header.end(), {"I0", "I1", "I2"});
  for (std::size_t i = 0; i < taus.size(); ++i) {
    std::vector<double> row{taus[i], c.values[i]};
    if (o.components) row.insert(row.end(), (*c.components)[i].begin(), (*c.components)[i].end());
    t.rows.push_back(row);
  }
  std::vector<CorrelationCurve> oracle(eps.size());
  std::vector<std::vector<std::string>> warn(eps.size());
  parallel_for(eps.size(), o.threads, [&](std::size_t k) {
    const JointSystem j = build_joint(m.model, {s1, s2}, eps[k] * cm_to_rad_ps);
    warn[k] = j.warnings;
    oracle[k] = oracle_g2_tau(j, taus);
  });
  for (std::size_t k = 0; k < eps.size(); ++k) {
    add_warnings(side, warn[k]);
    t.header.push_back(eps_label("g2_oracle", eps[k]));
    double worst = 0.0;
    for (std::size_t i = 0; i < taus.size(); ++i) {
      t.rows[i].push_back(oracle[k].values[i]);
      worst = std::max(worst, std::abs(oracle[k].values[i] - c.values[i]) / std::abs(c.values[i]));
    }
    side["oracle"].push_back({{"eps_cm1", eps[k]}, {"max_relative_deviation", worst}});
  }
  write_output(o, "g2tau", t, side);
}

void cmd_gM(const Options& o) {
  const LoadedModel m = load(o);
  if (o.omegas.empty()) throw error("invalid_sensor", "--omegas is required");
  std::vector<double> omegas;
  for (const auto& s : split(o.omegas, ',')) omegas.push_back(to_number(s, "invalid_sensor", "sensor frequency"));
  std::vector<SensorSpec> sensors;
  for (double w : omegas) sensors.push_back(sensor(o, m, w));
  const std::vector<double> eps = o.oracle.empty() ? std::vector<double>{} : parse_oracle(o.oracle);

  json side = sidecar("gM", o, m);
  side["omegas_cm1"] = omegas;
  Table t;
  t.header = {"M", "gM"};
  t.rows.push_back({double(sensors.size()), gM_zero(m.model, sensors)});
  for (double e : eps) {
    const JointSystem j = build_joint(m.model, sensors, e * cm_to_rad_ps);
    add_warnings(side, j.warnings);
    t.header.push_back(eps_label("gM_oracle", e));
    t.rows[0].push_back(sensors.size() == 1 ? 1.0 : oracle_gM_zero(j));
  }
  write_output(o, "gM", t, side);
}

void cmd_convergence(const Options& o) {
  const LoadedModel m = load(o);
  if (o.oracle.empty()) throw error("invalid_eps", "convergence needs --oracle eps=V[,V...]");
  const std::vector<double> eps = parse_oracle(o.oracle);
  const SensorSpec s1 = sensor(o, m, o.omega1), s2 = sensor(o, m, o.omega2);
  const HierarchySolver solver(m.model);
  const double S = power_spectrum(solver, s2, {s2.omega}).values[0];
  const double g = g2_zero(solver, s1, s2);

  std::vector<double> so(eps.size()), go(eps.size());
  std::vector<std::vector<std::string>> warn(eps.size());
  parallel_for(eps.size(), o.threads, [&](std::size_t k) {
    const double e = eps[k] * cm_to_rad_ps;
    const JointSystem one = build_joint(m.model, {s2}, e);
    const JointSystem two = build_joint(m.model, {s1, s2}, e);
    warn[k] = one.warnings;
    warn[k].insert(warn[k].end(), two.warnings.begin(), two.warnings.end());
    so[k] = oracle_spectrum(one);
    go[k] = oracle_gM_zero(two);
  });

  json side = sidecar("convergence", o, m);
  side["omega1_cm1"] = o.omega1;
  side["omega2_cm1"] = o.omega2;
  Table t;
  t.header = {"eps_cm1", "S_oracle", "g2_oracle", "S_hierarchy", "g2_hierarchy", "delta_S", "delta_g2"};
  std::vector<double> ds, dg;
  for (std::size_t k = 0; k < eps.size(); ++k) {
    add_warnings(side, warn[k]);
    ds.push_back(so[k] - S);
    dg.push_back(go[k] - g);
    t.rows.push_back({eps[k], so[k], go[k], S, g, ds.back(), dg.back()});
  }
  if (eps.size() >= 2) side["slopes"] = {{"spectrum", log_slope(eps, ds)}, {"g2", log_slope(eps, dg)}};
  write_output(o, "convergence", t, side);
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Frequency-filtered photon correlations of open quantum emitters"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* c) {
    c->add_option("--model", o.model, "model file or builtin-dimer");
    c->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
    c->add_option("--out", o.out, "output CSV path, '-' for stdout");
    c->add_option("--gamma-sensor", o.gamma_sensor, "sensor linewidth (ps^-1)");
    c->add_option("--oracle", o.oracle, "eps=V[,V...] oracle couplings (cm^-1)");
  };

  auto* model = app.add_subcommand("model", "export or inspect an emitter model");
  model->require_subcommand(1);
  auto* exp = model->add_subcommand("export", "write the builtin dimer");
  exp->add_option("--out", o.out, "output path");
  auto* insp = model->add_subcommand("inspect", "summarize a model");
  insp->add_option("--model", o.model, "model file or builtin-dimer");

  auto* spectrum = app.add_subcommand("spectrum", "filtered power spectrum");
  common(spectrum);
  spectrum->add_option("--grid", o.grid, "LO:HI:N in cm^-1");

  auto* g2map = app.add_subcommand("g2map", "zero-delay g2 over sensor frequencies");
  common(g2map);
  g2map->add_option("--grid", o.grid, "omega1 LO:HI:N in cm^-1");
  g2map->add_option("--grid2", o.grid2, "omega2 LO:HI:N in cm^-1 (default: --omega2 only)");
  g2map->add_option("--omega2", o.omega2, "fixed omega2 in cm^-1");

  auto* g2tau = app.add_subcommand("g2tau", "delay-resolved g2");
  common(g2tau);
  g2tau->add_option("--omega1", o.omega1, "cm^-1");
  g2tau->add_option("--omega2", o.omega2, "cm^-1");
  g2tau->add_option("--tau", o.tau, "LO:HI:N in ps");
  g2tau->add_flag("--components", o.components, "also write I0, I1, I2");

  auto* gm = app.add_subcommand("gM", "zero-delay M-sensor correlation");
  common(gm);
  gm->add_option("--omegas", o.omegas, "comma-separated sensor frequencies in cm^-1");

  auto* conv = app.add_subcommand("convergence", "oracle convergence sweep");
  common(conv);
  conv->add_option("--omega1", o.omega1, "cm^-1");
  conv->add_option("--omega2", o.omega2, "cm^-1");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: usage: " << one_line(e.what()) << "\n";
    return 2;
  }

  try {
    if (exp->parsed()) cmd_model_export(o);
    else if (insp->parsed()) cmd_model_inspect(o);
    else if (spectrum->parsed()) cmd_spectrum(o);
    else if (g2map->parsed()) cmd_g2map(o);
    else if (g2tau->parsed()) cmd_g2tau(o);
    else if (gm->parsed()) cmd_gM(o);
    else if (conv->parsed()) cmd_convergence(o);
  } catch (const error& e) {
    std::cerr << "error: " << e.code() << ": " << one_line(e.what()) << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << one_line(e.what()) << "\n";
    return 1;
  }
  return 0;
}
