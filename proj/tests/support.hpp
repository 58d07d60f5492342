#pragma once

// Fixtures and small oracles shared by the test binaries.

#include <cmath>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <unistd.h>

#include "glytwin/domain.hpp"
#include "glytwin/harness.hpp"
#include "glytwin/pipeline.hpp"

namespace glytwin::testing {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// p(hyperglycemia) = 1 - sigmoid(w.x + b), so the normoglycemia probability
// is the plain logistic sigmoid(w.x + b).
struct Logistic {
  std::vector<double> w;
  double b = 0.0;

  double target(std::span<const double> x) const {
    double z = b;
    for (std::size_t i = 0; i < w.size(); ++i) z += w[i] * x[i];
    return sigmoid(z);
  }
  Proba predict_proba(std::span<const double> x) const {
    const double p = target(x);
    return {p, 1.0 - p};
  }
};

inline FeatureSpec lever(std::string name, double lo, double hi, double step) {
  auto f = continuous_feature(std::move(name), "", -1e6, 1e6);
  f.modifiable = true;
  f.min = lo;
  f.max = hi;
  f.step = step;
  return f;
}

inline FactualSample point(std::vector<double> x) {
  FactualSample s;
  s.patient_id = "P";
  s.features = std::move(x);
  return s;
}

// Two worked meal contexts, one normoglycemic and one hyperglycemic.
inline FactualSample sample_r1() {
  PatientProfile p{"R1", 61, Sex::F, Ethnicity::White, 6.7, 20};
  return make_sample(p, Timestamp{}, {20, 7.57, -5, Mode::Regular, 2.475, 2.943, 129}, Outcome::Normoglycemia);
}

inline FactualSample sample_r2() {
  PatientProfile p{"R2", 32, Sex::F, Ethnicity::Hispanic, 5.0, 10};
  return make_sample(p, Timestamp{}, {35, 5.83, 15, Mode::Regular, 0.357, 1.457, 134}, Outcome::Hyperglycemia);
}

inline Timestamp at(int hour, int minute = 0) {
  using namespace std::chrono;
  return sys_days{year{2024} / March / 4} + hours{hour} + minutes{minute};
}

// CGM at 5-minute cadence over [from, to] with a value per timestamp.
template <class F>
std::vector<CgmReading> cgm_series(Timestamp from, Timestamp to, F value) {
  std::vector<CgmReading> out;
  for (Timestamp t = from; t <= to; t += std::chrono::minutes(5)) out.push_back({t, value(t)});
  return out;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("glytwin_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// The default experiment, prepared once per process.
inline const Experiment& default_experiment() {
  static const auto e = std::make_unique<Experiment>(prepare_experiment(ExperimentConfig{}));
  return *e;
}

}  // namespace glytwin::testing
