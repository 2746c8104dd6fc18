#include "specsense/emitter.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "json.hpp"

namespace specsense {

using nlohmann::json;

double DimerParams::delta_E() const {
  const double da = delta_alpha();
  return std::sqrt(da * da + 4.0 * V * V);
}

double DimerParams::mixing_angle() const { return 0.5 * std::atan(2.0 * std::abs(V) / delta_alpha()); }

void DimerParams::validate() const {
  auto fail = [](const std::string& what) { throw error("invalid_parameters", what); };
  if (!(delta_alpha() > 0.0)) fail("alpha1 - alpha2 must be positive");
  if (std::abs(E - 0.5 * (alpha1 + alpha2)) > 1e-9 * std::max(1.0, std::abs(E)))
    fail("E must equal the mean of alpha1 and alpha2");
  if (gamma_pd < 0 || gamma_rad < 0 || pump_X1 < 0 || Gamma_th < 0) fail("rates must be non-negative");
  if (temperature_energy < 0) fail("temperature energy must be non-negative");
  if (omega_vib <= 0) fail("omega_vib must be positive");
  if (L < 0) fail("L must be non-negative");
}

const HilbertOperator& EmitterModel::emission_op(const std::string& name) const {
  for (const auto& [n, op] : emission_ops)
    if (n == name) return op;
  throw error("unknown_emission_op", "model has no emission operator named '" + name + "'");
}

void EmitterModel::validate() const {
  auto fail = [](const std::string& code, const std::string& what) { throw error(code, what); };
  if (dim <= 0) fail("dimension_mismatch", "dim must be positive");
  auto check = [&](const HilbertOperator& op, const std::string& what) {
    if (op.rows() != dim || op.cols() != dim)
      fail("dimension_mismatch", what + " is " + std::to_string(op.rows()) + "x" + std::to_string(op.cols()) +
                                     ", expected " + std::to_string(dim) + "x" + std::to_string(dim));
    if (!op.allFinite()) fail("invalid_model", what + " has non-finite entries");
  };
  check(hamiltonian, "hamiltonian");
  if (!is_hermitian(hamiltonian, 1e-12)) fail("non_hermitian", "hamiltonian is not Hermitian");
  for (size_t k = 0; k < channels.size(); ++k) {
    check(channels[k].jump, "channel " + std::to_string(k));
    if (!(channels[k].rate >= 0.0)) fail("invalid_rate", "channel " + std::to_string(k) + " has a negative rate");
  }
  std::set<std::string> names;
  for (const auto& [n, op] : emission_ops) {
    check(op, "emission operator '" + n + "'");
    if (!names.insert(n).second) fail("invalid_model", "duplicate emission operator '" + n + "'");
  }
  if (!basis_labels.empty() && static_cast<int>(basis_labels.size()) != dim)
    fail("dimension_mismatch", "basis_labels has " + std::to_string(basis_labels.size()) + " entries, expected " +
                                   std::to_string(dim));
}

double thermal_occupation(double omega, double temperature_energy) {
  if (temperature_energy <= 0.0) return 0.0;
  return 1.0 / std::expm1(omega / temperature_energy);
}

EmitterModel build_vibronic_dimer(const DimerParams& p) {
  p.validate();
  const int nv = p.L + 1;
  const int d = 3 * nv;

  Eigen::MatrixXcd lower = Eigen::MatrixXcd::Zero(nv, nv);
  for (int l = 1; l < nv; ++l) lower(l - 1, l) = std::sqrt(static_cast<double>(l));
  const Eigen::MatrixXcd iv = Eigen::MatrixXcd::Identity(nv, nv);

  auto el = [](int i, int j) {
    Eigen::Matrix3cd m = Eigen::Matrix3cd::Zero();
    m(i, j) = 1.0;
    return m;
  };
  auto kron = [&](const Eigen::Matrix3cd& e, const Eigen::MatrixXcd& v) {
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(d, d);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        if (e(i, j) != cplx(0.0)) out.block(i * nv, j * nv, nv, nv) = e(i, j) * v;
    return out;
  };

  const Eigen::Matrix3cd excited = el(1, 1) + el(2, 2);
  const Eigen::Matrix3cd sz = el(1, 1) - el(2, 2);
  const Eigen::Matrix3cd sx = el(1, 2) + el(2, 1);
  const double dE = p.delta_E();
  const double theta = p.mixing_angle();
  const Eigen::MatrixXcd number = lower.adjoint() * lower;
  const Eigen::MatrixXcd position = lower + lower.adjoint();

  Eigen::MatrixXcd h = p.E * kron(excited, iv) + 0.5 * dE * kron(sz, iv) +
                       p.omega_vib * kron(Eigen::Matrix3cd::Identity(), number) +
                       p.g / std::sqrt(2.0) * kron(std::cos(2 * theta) * sz - std::sin(2 * theta) * sx, position);

  EmitterModel m;
  m.dim = d;
  m.hamiltonian = h * cm_to_rad_ps;
  m.dimer = p;
  const char* names[3] = {"G", "X1", "X2"};
  for (int e = 0; e < 3; ++e)
    for (int l = 0; l < nv; ++l) m.basis_labels.push_back(std::string(names[e]) + "," + std::to_string(l));

  // Site states written in the exciton basis.
  const double c = std::cos(theta), s = std::sin(theta), sgn = p.V < 0 ? -1.0 : 1.0;
  Eigen::Vector3cd site1(0.0, c, -sgn * s), site2(0.0, sgn * s, c);
  m.channels.push_back({kron(site1 * site1.adjoint(), iv), p.gamma_pd});
  m.channels.push_back({kron(site2 * site2.adjoint(), iv), p.gamma_pd});

  const double eta = thermal_occupation(p.omega_vib, p.temperature_energy);
  m.channels.push_back({kron(Eigen::Matrix3cd::Identity(), lower), p.Gamma_th * (eta + 1.0)});
  m.channels.push_back({kron(Eigen::Matrix3cd::Identity(), lower.adjoint().eval()), p.Gamma_th * eta});

  const HilbertOperator emission = kron(el(0, 1) + el(0, 2), iv);
  m.emission_ops.emplace_back("a", emission);

  for (const auto& f : excited_eigensystem(m)) {
    for (int l = 0; l < nv; ++l) {
      HilbertOperator jump = HilbertOperator::Zero(d, d);
      jump.row(l) = f.state.adjoint();
      m.channels.push_back({jump, p.gamma_rad});
    }
  }
  m.channels.push_back({kron(el(1, 0), iv), p.pump_X1});
  m.validate();
  return m;
}

Superoperator emitter_liouvillian(const EmitterModel& model) { return lindbladian(model.hamiltonian, model.channels); }

std::vector<Eigenpair> excited_eigensystem(const EmitterModel& model) {
  std::vector<int> support;
  for (int j = 0; j < model.dim; ++j) {
    bool used = false;
    for (const auto& [n, op] : model.emission_ops) used = used || op.col(j).cwiseAbs().maxCoeff() > 0.0;
    if (used) support.push_back(j);
  }
  const auto k = static_cast<Eigen::Index>(support.size());
  Eigen::MatrixXcd block(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j) block(i, j) = model.hamiltonian(support[i], support[j]);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(block);

  std::vector<Eigenpair> out;
  for (Eigen::Index v = 0; v < k; ++v) {
    CVector state = CVector::Zero(model.dim);
    for (Eigen::Index i = 0; i < k; ++i) state(support[i]) = es.eigenvectors()(i, v);
    out.push_back({es.eigenvalues()(v), state});
  }
  return out;
}

namespace {

json matrix_to_json(const HilbertOperator& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back({m(i, j).real(), m(i, j).imag()});
    rows.push_back(std::move(row));
  }
  return rows;
}

HilbertOperator matrix_from_json(const json& j, int dim, const std::string& field) {
  auto fail = [&](const std::string& what) { throw error("parse_error", "field '" + field + "': " + what); };
  if (!j.is_array()) fail("expected an array of rows");
  if (static_cast<int>(j.size()) != dim)
    throw error("dimension_mismatch", "field '" + field + "' has " + std::to_string(j.size()) + " rows, expected " +
                                          std::to_string(dim));
  HilbertOperator m(dim, dim);
  for (int r = 0; r < dim; ++r) {
    const json& row = j[r];
    if (!row.is_array()) fail("row " + std::to_string(r) + " is not an array");
    if (static_cast<int>(row.size()) != dim)
      throw error("dimension_mismatch", "field '" + field + "' row " + std::to_string(r) + " has " +
                                            std::to_string(row.size()) + " entries, expected " + std::to_string(dim));
    for (int c = 0; c < dim; ++c) {
      const json& e = row[c];
      if (e.is_number()) {
        m(r, c) = e.get<double>();
      } else if (e.is_array() && e.size() == 2 && e[0].is_number() && e[1].is_number()) {
        m(r, c) = cplx(e[0].get<double>(), e[1].get<double>());
      } else {
        fail("entry (" + std::to_string(r) + "," + std::to_string(c) + ") is not a number or [re, im] pair");
      }
    }
  }
  return m;
}

json dimer_to_json(const DimerParams& p) {
  return json{{"alpha1", p.alpha1},
              {"alpha2", p.alpha2},
              {"V", p.V},
              {"omega_vib", p.omega_vib},
              {"g", p.g},
              {"E", p.E},
              {"gamma_pd", p.gamma_pd},
              {"gamma_rad", p.gamma_rad},
              {"pump_X1", p.pump_X1},
              {"Gamma_th", p.Gamma_th},
              {"temperature_energy", p.temperature_energy},
              {"L", p.L},
              {"delta_E_cm1", p.delta_E()}};
}

DimerParams dimer_from_json(const json& j) {
  DimerParams p;
  p.alpha1 = j.at("alpha1").get<double>();
  p.alpha2 = j.at("alpha2").get<double>();
  p.V = j.at("V").get<double>();
  p.omega_vib = j.at("omega_vib").get<double>();
  p.g = j.at("g").get<double>();
  p.E = j.at("E").get<double>();
  p.gamma_pd = j.at("gamma_pd").get<double>();
  p.gamma_rad = j.at("gamma_rad").get<double>();
  p.pump_X1 = j.at("pump_X1").get<double>();
  p.Gamma_th = j.at("Gamma_th").get<double>();
  p.temperature_energy = j.at("temperature_energy").get<double>();
  p.L = j.at("L").get<int>();
  return p;
}

}  // namespace

EmitterModel load_model(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw error("parse_error", e.what());
  }
  if (!j.is_object()) throw error("parse_error", "model file must be an object");

  EmitterModel m;
  try {
    if (!j.contains("dim")) throw error("parse_error", "missing field 'dim'");
    if (!j["dim"].is_number_integer() || j["dim"].get<int>() <= 0)
      throw error("parse_error", "field 'dim': expected a positive integer");
    m.dim = j["dim"].get<int>();

    double unit = 1.0;
    const std::string units = j.value("units", std::string("rad/ps"));
    if (units == "cm-1")
      unit = cm_to_rad_ps;
    else if (units != "rad/ps")
      throw error("parse_error", "field 'units': expected \"cm-1\" or \"rad/ps\", got \"" + units + "\"");

    if (!j.contains("hamiltonian")) throw error("parse_error", "missing field 'hamiltonian'");
    m.hamiltonian = matrix_from_json(j["hamiltonian"], m.dim, "hamiltonian") * unit;

    if (j.contains("basis_labels")) m.basis_labels = j["basis_labels"].get<std::vector<std::string>>();

    if (j.contains("channels")) {
      if (!j["channels"].is_array()) throw error("parse_error", "field 'channels': expected an array");
      for (size_t k = 0; k < j["channels"].size(); ++k) {
        const json& ch = j["channels"][k];
        const std::string field = "channels[" + std::to_string(k) + "]";
        if (!ch.contains("rate") || !ch["rate"].is_number())
          throw error("parse_error", "field '" + field + ".rate': expected a number");
        if (!ch.contains("matrix")) throw error("parse_error", "missing field '" + field + ".matrix'");
        m.channels.push_back({matrix_from_json(ch["matrix"], m.dim, field + ".matrix"), ch["rate"].get<double>()});
      }
    }

    if (j.contains("emission_ops")) {
      if (!j["emission_ops"].is_object()) throw error("parse_error", "field 'emission_ops': expected an object");
      for (const auto& [name, mat] : j["emission_ops"].items())
        m.emission_ops.emplace_back(name, matrix_from_json(mat, m.dim, "emission_ops." + name));
    }

    if (j.contains("metadata") && j["metadata"].contains("dimer")) m.dimer = dimer_from_json(j["metadata"]["dimer"]);
  } catch (const json::exception& e) {
    throw error("parse_error", e.what());
  }
  m.validate();
  return m;
}

EmitterModel load_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw error("io_error", "cannot open model file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_model(ss.str());
}

std::string save_model(const EmitterModel& model) {
  json j;
  j["dim"] = model.dim;
  j["units"] = "rad/ps";
  j["basis_labels"] = model.basis_labels;
  j["hamiltonian"] = matrix_to_json(model.hamiltonian);
  j["channels"] = json::array();
  for (const auto& ch : model.channels) j["channels"].push_back({{"rate", ch.rate}, {"matrix", matrix_to_json(ch.jump)}});
  j["emission_ops"] = json::object();
  for (const auto& [name, op] : model.emission_ops) j["emission_ops"][name] = matrix_to_json(op);
  if (model.dimer) j["metadata"]["dimer"] = dimer_to_json(*model.dimer);
  return j.dump() + "\n";
}

std::string model_hash(const EmitterModel& model) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : save_model(model)) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace specsense
