#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "specsense/liouville.hpp"

namespace specsense {

// Vibronic dimer parameters. Energies in cm^-1, rates in ps^-1.
struct DimerParams {
  double alpha1 = 18521.0;
  double alpha2 = 17479.0;
  double V = 92.0;
  double omega_vib = 1111.0;
  double g = 267.1;
  double E = 18000.0;
  double gamma_pd = 1.0;
  double gamma_rad = 1.0 / 500.0;
  double pump_X1 = 1.0 / 600.0;
  double Gamma_th = 1.0 / 4.8;
  double temperature_energy = 200.0;
  int L = 5;

  double delta_alpha() const { return alpha1 - alpha2; }
  double delta_E() const;
  double mixing_angle() const;
  void validate() const;
};

struct EmitterModel {
  int dim = 0;
  HilbertOperator hamiltonian;
  std::vector<LindbladChannel> channels;
  std::vector<std::pair<std::string, HilbertOperator>> emission_ops;
  std::vector<std::string> basis_labels;
  std::optional<DimerParams> dimer;

  const HilbertOperator& emission_op(const std::string& name) const;
  void validate() const;
};

struct Eigenpair {
  double energy;
  CVector state;
};

double thermal_occupation(double omega, double temperature_energy);

EmitterModel build_vibronic_dimer(const DimerParams& p = {});
Superoperator emitter_liouvillian(const EmitterModel& model);

// Eigenpairs of the Hamiltonian restricted to the support of the emission operators
// (the excited electronic manifold), embedded back into the full space, ascending.
std::vector<Eigenpair> excited_eigensystem(const EmitterModel& model);

EmitterModel load_model(const std::string& text);
EmitterModel load_model_file(const std::string& path);
std::string save_model(const EmitterModel& model);

// Stable fingerprint of the serialized model.
std::string model_hash(const EmitterModel& model);

}  // namespace specsense
