#pragma once

// Synthetic T1D cohorts: CGM + pump streams whose postprandial response is a
// carb absorption bump minus a (time-shifted) insulin action bump on top of a
// slowly wandering baseline.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "glytwin/domain.hpp"
#include "glytwin/error.hpp"
#include "glytwin/time.hpp"

namespace glytwin::synth {

struct Demographics {
  double age_mean = 57.4;
  double age_sd = 16.2;
  double female_fraction = 11.0 / 21.0;
  double a1c_mean = 6.63;
  double a1c_sd = 0.73;
  double a1c_min = 5.0;
  double a1c_max = 8.2;
  double yfd_mean = 32.38;
  double yfd_sd = 15.27;
  double hispanic_fraction = 3.0 / 21.0;
  double other_fraction = 0.0;
};

struct SynthConfig {
  int n_patients = 21;
  double days_per_patient = 26.0;
  std::uint64_t seed = 7;
  double meal_rate = 2.7;           // meals per day
  double noise_sd = 4.0;            // CGM sensor noise, mg/dL
  double post_meal_bolus_fraction = 0.32;
  double gap_rate = 0.25;           // CGM dropouts per day
  double secondary_carb_rate = 0.12;  // share of meals followed by a small extra carb entry
  // When set, patients keep the physiology drawn from `seed` but their days
  // (meals, modes, noise) are drawn from this seed instead.
  std::optional<std::uint64_t> observation_seed;
  Demographics demographics;
};

inline void validate(const SynthConfig& c) {
  if (c.n_patients < 1) throw Error(ErrorCode::InvalidArgument, "n_patients must be >= 1");
  if (!(c.days_per_patient > 0.0)) throw Error(ErrorCode::InvalidArgument, "days_per_patient must be > 0");
  if (!(c.meal_rate > 0.0 && c.meal_rate <= 4.0)) throw Error(ErrorCode::InvalidArgument, "meal_rate must be in (0, 4]");
  if (!(c.noise_sd >= 0.0)) throw Error(ErrorCode::InvalidArgument, "noise_sd must be >= 0");
  if (!(c.post_meal_bolus_fraction >= 0.0 && c.post_meal_bolus_fraction <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "post_meal_bolus_fraction must be in [0, 1]");
  }
}

// Per-patient physiology, drawn once per patient.
struct PatientParams {
  double carb_gain = 3.0;        // mg/dL per gram at the absorption peak
  double insulin_gain = 30.0;    // mg/dL per unit at the action peak
  double carb_ratio = 10.0;      // grams covered per unit
  double baseline_mean = 130.0;  // mg/dL
  double baseline_sd = 25.0;
  double basal_reference = 0.9;  // units over 90 min that keep glucose level
  double basal_gain = 20.0;      // mg/dL per hour per unit of basal deviation
  double exercise_uptake = 25.0; // mg/dL per hour while exercising
  double noise_sd = 0.0;
};

inline constexpr double kCarbPeakMin = 60.0;
inline constexpr double kInsulinPeakMin = 90.0;
inline constexpr double kCarbShape = 3.0;
inline constexpr double kInsulinShape = 2.0;

// Gamma-like bump with unit height at `peak`; zero for tau <= 0.
inline double gamma_kernel(double tau, double peak, double shape) {
  if (tau <= 0.0) return 0.0;
  const double r = tau / peak;
  return std::pow(r, shape) * std::exp(shape * (1.0 - r));
}

// Area under a unit-height kernel: peak * e^k * Gamma(k + 1) / k^(k + 1).
inline double kernel_area(double peak, double shape) {
  return peak * std::exp(shape) * std::tgamma(shape + 1.0) / std::pow(shape, shape + 1.0);
}

inline double kernel_area_ratio() {
  return kernel_area(kCarbPeakMin, kCarbShape) / kernel_area(kInsulinPeakMin, kInsulinShape);
}

inline double carb_absorption(double tau) { return gamma_kernel(tau, kCarbPeakMin, kCarbShape); }
inline double insulin_action(double tau) { return gamma_kernel(tau, kInsulinPeakMin, kInsulinShape); }

inline constexpr double kBglFloor = 40.0;
inline constexpr double kBglCeil = 400.0;

// Glucose drift (mg/dL per hour) from basal deviation and device mode.
inline double basal_drift(double basal_units_90min, Mode mode, const PatientParams& p) {
  double drift = p.basal_gain * (p.basal_reference - basal_units_90min);
  if (mode == Mode::Exercise) drift -= p.exercise_uptake;
  return drift;
}

// 2-hour postprandial curve at 5-minute cadence (25 points, tau = 0..120 min
// after the meal). delta_t = bolus time - meal time.
inline std::vector<double> simulate_postprandial_curve(double premeal_bgl, double carb, double bolus, double delta_t,
                                                       double basal, Mode mode, const PatientParams& p,
                                                       std::uint64_t noise_seed) {
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double drift = basal_drift(basal, mode, p);
  std::vector<double> out;
  out.reserve(25);
  for (int k = 0; k <= 24; ++k) {
    const double tau = 5.0 * k;
    double bgl = premeal_bgl + p.carb_gain * carb * carb_absorption(tau) -
                 p.insulin_gain * bolus * insulin_action(tau - delta_t) + drift * tau / 60.0;
    if (p.noise_sd > 0.0) bgl += p.noise_sd * noise(rng);
    out.push_back(std::clamp(bgl, kBglFloor, kBglCeil));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cohort generation

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t patient_seed(std::uint64_t seed, std::uint64_t patient_index) {
  return splitmix64(seed ^ splitmix64(patient_index + 1));
}

struct Cohort {
  std::vector<PatientStream> streams;
  std::vector<PatientProfile> profiles;
  std::vector<PatientParams> params;
};

struct GeneratedMeal {
  Timestamp t_eat;
  Timestamp t_fb;
  double carb = 0.0;
  double bolus = 0.0;
};

namespace detail {

inline Timestamp epoch_start() {
  using namespace std::chrono;
  return sys_days{year{2024} / January / 1};
}

inline double clamp_normal(std::mt19937_64& rng, double mean, double sd, double lo, double hi) {
  std::normal_distribution<double> d(mean, sd);
  return std::clamp(d(rng), lo, hi);
}

inline double round_to(double v, double q) { return std::round(v / q) * q; }

inline std::string patient_id(int index, int n) {
  const int width = n > 99 ? 3 : 2;
  std::string num = std::to_string(index + 1);
  while (static_cast<int>(num.size()) < width) num.insert(num.begin(), '0');
  return "P" + num;
}

struct PatientDraw {
  PatientProfile profile;
  PatientParams params;
  double carb_mean = 45.0;       // typical meal size, grams
  double bolus_habit = -15.0;    // mean pre-meal bolus lead (minutes, negative)
  double adherence_sd = 0.25;    // log-sd of dose error
  std::array<double, 3> basal_rates{0.6, 0.8, 0.7};  // u/h for 00-06, 06-20, 20-24
};

inline PatientDraw draw_patient(int index, const SynthConfig& cfg, std::mt19937_64& rng) {
  const auto& dem = cfg.demographics;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  PatientDraw d;
  auto& pr = d.profile;
  pr.patient_id = patient_id(index, cfg.n_patients);
  pr.age = static_cast<int>(std::lround(clamp_normal(rng, dem.age_mean, dem.age_sd, 20.0, 85.0)));
  pr.sex = u01(rng) < dem.female_fraction ? Sex::F : Sex::M;
  const double e = u01(rng);
  pr.ethnicity = e < dem.hispanic_fraction ? Ethnicity::Hispanic
                 : e < dem.hispanic_fraction + dem.other_fraction ? Ethnicity::Other
                                                                  : Ethnicity::White;
  pr.a1c = round_to(clamp_normal(rng, dem.a1c_mean, dem.a1c_sd, dem.a1c_min, dem.a1c_max), 0.1);
  pr.years_from_diagnosis =
      std::min(static_cast<double>(pr.age) - 1.0, std::round(clamp_normal(rng, dem.yfd_mean, dem.yfd_sd, 1.0, 70.0)));

  auto& pp = d.params;
  const double a1c_z = (pr.a1c - dem.a1c_mean) / dem.a1c_sd;
  pp.baseline_mean = 114.0 + 12.0 * a1c_z + clamp_normal(rng, 0.0, 6.0, -15.0, 15.0);
  pp.baseline_sd = clamp_normal(rng, 24.0, 5.0, 12.0, 40.0);
  pp.carb_gain = clamp_normal(rng, 2.6 + 0.25 * a1c_z + (pr.age < 45 ? -0.2 : 0.1), 0.35, 1.4, 4.2);
  pp.carb_ratio = clamp_normal(rng, 10.0, 2.0, 5.0, 18.0);
  // A correctly dosed meal nets to zero area; the pump ratio is mis-set by a
  // patient-specific factor.
  const double mismatch = clamp_normal(rng, 1.0, 0.15, 0.6, 1.5);
  pp.insulin_gain = pp.carb_gain * pp.carb_ratio * kernel_area_ratio() * mismatch;
  d.basal_rates = {clamp_normal(rng, 0.7, 0.2, 0.2, 1.6), clamp_normal(rng, 0.9, 0.25, 0.2, 1.8),
                   clamp_normal(rng, 0.8, 0.2, 0.2, 1.6)};
  pp.basal_reference = 1.5 * d.basal_rates[1];
  pp.basal_gain = clamp_normal(rng, 20.0, 5.0, 5.0, 35.0);
  pp.exercise_uptake = clamp_normal(rng, 25.0, 6.0, 10.0, 40.0);
  pp.noise_sd = cfg.noise_sd;
  d.carb_mean = clamp_normal(rng, 45.0, 10.0, 20.0, 80.0);
  d.bolus_habit = clamp_normal(rng, -15.0, 6.0, -35.0, -3.0);
  d.adherence_sd = clamp_normal(rng, 0.22, 0.06, 0.08, 0.4);
  return d;
}

inline double basal_rate_at(const PatientDraw& d, double hour_of_day, Mode mode) {
  const double base = hour_of_day < 6.0 ? d.basal_rates[0] : hour_of_day < 20.0 ? d.basal_rates[1] : d.basal_rates[2];
  return mode == Mode::Sleep ? 0.8 * base : base;
}

}  // namespace detail

struct PatientSimulation {
  PatientStream stream;
  PatientProfile profile;
  PatientParams params;
  std::vector<GeneratedMeal> meals;
};

inline PatientSimulation simulate_patient(int index, const SynthConfig& cfg) {
  using detail::round_to;
  std::mt19937_64 rng(patient_seed(cfg.seed, static_cast<std::uint64_t>(index)));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> n01(0.0, 1.0);

  detail::PatientDraw draw = detail::draw_patient(index, cfg, rng);
  if (cfg.observation_seed) rng.seed(splitmix64(patient_seed(*cfg.observation_seed, static_cast<std::uint64_t>(index))));
  const PatientParams& pp = draw.params;
  PatientSimulation sim;
  sim.profile = draw.profile;
  sim.params = pp;
  auto& stream = sim.stream;
  stream.patient_id = draw.profile.patient_id;

  const Timestamp start = detail::epoch_start();
  const int n_days = static_cast<int>(std::ceil(cfg.days_per_patient));
  const int n_steps = static_cast<int>(cfg.days_per_patient * 24.0 * 12.0);
  const auto t_at = [&](double minute) { return start + from_minutes(minute); };

  // Device modes: sleep most nights, occasional afternoon exercise.
  std::vector<std::pair<double, Mode>> mode_changes;  // minute, mode
  for (int day = 0; day < n_days; ++day) {
    const double day0 = 1440.0 * day;
    if (u01(rng) < 0.3) {
      const double ex = day0 + 60.0 * (15.0 + 4.0 * u01(rng));
      mode_changes.push_back({round_to(ex, 1.0), Mode::Exercise});
      mode_changes.push_back({round_to(ex + 45.0 + 45.0 * u01(rng), 1.0), Mode::Regular});
    }
    if (u01(rng) < 0.6) {
      const double sl = day0 + 60.0 * (22.0 + 1.5 * u01(rng));
      mode_changes.push_back({round_to(sl, 1.0), Mode::Sleep});
      mode_changes.push_back({round_to(sl + 60.0 * (7.0 + 1.5 * u01(rng)), 1.0), Mode::Regular});
    }
  }
  std::sort(mode_changes.begin(), mode_changes.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  const auto mode_at_minute = [&](double minute) {
    Mode m = Mode::Regular;
    for (const auto& [t, mode] : mode_changes) {
      if (t > minute) break;
      m = mode;
    }
    return m;
  };
  const double horizon = 1440.0 * cfg.days_per_patient;
  for (const auto& [t, mode] : mode_changes) {
    if (t < horizon && (stream.modes.empty() || stream.modes.back().time < t_at(t))) {
      stream.modes.push_back({t_at(t), mode});
    }
  }

  // Basal: one record per schedule boundary or mode change.
  {
    std::vector<double> boundaries;
    for (int day = 0; day < n_days; ++day) {
      for (double h : {0.0, 6.0, 20.0}) boundaries.push_back(1440.0 * day + 60.0 * h);
    }
    for (const auto& [t, mode] : mode_changes) boundaries.push_back(t);
    std::sort(boundaries.begin(), boundaries.end());
    boundaries.erase(std::unique(boundaries.begin(), boundaries.end()), boundaries.end());
    for (double b : boundaries) {
      if (b >= horizon) continue;
      const double rate = round_to(detail::basal_rate_at(draw, std::fmod(b, 1440.0) / 60.0, mode_at_minute(b)), 0.001);
      if (!stream.basals.empty() && stream.basals.back().rate == rate) continue;
      stream.basals.push_back({t_at(b), rate});
    }
  }

  // Meals: breakfast, lunch, dinner slots kept with probability meal_rate / 3.
  const double keep = std::min(1.0, cfg.meal_rate / 3.0);
  const std::array<double, 3> slot_hour{7.5, 12.5, 18.5};
  const std::array<double, 3> slot_sd{0.6, 0.8, 0.8};
  std::vector<double> eat_minutes;
  for (int day = 0; day < n_days; ++day) {
    for (int s = 0; s < 3; ++s) {
      if (u01(rng) >= keep) continue;
      const double m = 1440.0 * day + 60.0 * (slot_hour[s] + slot_sd[s] * std::clamp(n01(rng), -2.0, 2.0));
      if (m + 240.0 < horizon) eat_minutes.push_back(round_to(m, 1.0));
    }
  }

  struct Effect {
    double minute;
    double carb;
    double insulin;
  };
  std::vector<Effect> effects;  // carb absorption starts / insulin doses
  std::vector<double> corrections;

  // Baseline wander (Ornstein-Uhlenbeck at 5-minute steps, ~3 h time constant).
  std::vector<double> baseline(static_cast<std::size_t>(n_steps));
  {
    const double theta = 5.0 / 180.0;
    const double step_sd = pp.baseline_sd * std::sqrt(1.0 - (1.0 - theta) * (1.0 - theta));
    double b = pp.baseline_mean + pp.baseline_sd * n01(rng);
    for (int k = 0; k < n_steps; ++k) {
      b = pp.baseline_mean + (1.0 - theta) * (b - pp.baseline_mean) + step_sd * n01(rng);
      baseline[static_cast<std::size_t>(k)] = b;
    }
  }
  const auto baseline_at = [&](double minute) {
    const auto k = std::clamp(static_cast<long>(minute / 5.0), 0L, static_cast<long>(n_steps - 1));
    return baseline[static_cast<std::size_t>(k)];
  };

  for (double eat : eat_minutes) {
    GeneratedMeal meal;
    const double carb = std::round(std::clamp(draw.carb_mean * std::exp(0.35 * n01(rng)), 8.0, 150.0));
    double lead;
    if (u01(rng) < cfg.post_meal_bolus_fraction) {
      lead = std::round(30.0 * u01(rng));  // during or after the meal
    } else {
      lead = std::round(std::min(-1.0, draw.bolus_habit + 10.0 * n01(rng)));
    }
    const double fb = eat + lead;
    double dose = carb / pp.carb_ratio * std::exp(draw.adherence_sd * n01(rng));
    const double pre = baseline_at(fb);
    if (pre > 150.0 && u01(rng) < 0.5) dose += (pre - 150.0) / (pp.insulin_gain * 1.5);
    dose = round_to(std::clamp(dose, 0.1, 25.0), 0.01);
    meal.t_eat = t_at(eat);
    meal.t_fb = t_at(fb);
    meal.carb = carb;
    meal.bolus = dose;
    sim.meals.push_back(meal);
    stream.boluses.push_back({meal.t_fb, dose, BolusKind::Food});
    stream.carbs.push_back({meal.t_fb, carb});
    effects.push_back({eat, carb, 0.0});
    effects.push_back({fb, 0.0, dose});
    if (u01(rng) < cfg.secondary_carb_rate) {
      const double extra_t = round_to(fb + 15.0 + 25.0 * u01(rng), 1.0);
      const double extra = std::round(std::clamp(0.3 * carb * (0.5 + u01(rng)), 5.0, 40.0));
      stream.carbs.push_back({t_at(extra_t), extra});
      effects.push_back({extra_t, extra, 0.0});
    }
  }
  // Occasional correction boluses away from meals.
  for (int day = 0; day < n_days; ++day) {
    if (u01(rng) < 0.35) {
      const double m = round_to(1440.0 * day + 60.0 * (14.5 + 6.0 * u01(rng)), 1.0);
      const bool clear = std::none_of(eat_minutes.begin(), eat_minutes.end(),
                                      [&](double e) { return std::abs(e - m) < 90.0; });
      if (clear && m < horizon) {
        const double u = round_to(0.5 + 1.5 * u01(rng), 0.01);
        stream.boluses.push_back({t_at(m), u, BolusKind::Correction});
        effects.push_back({m, 0.0, u});
      }
    }
  }
  std::sort(stream.boluses.begin(), stream.boluses.end(),
            [](const BolusEvent& a, const BolusEvent& b) { return a.time < b.time; });
  std::sort(stream.carbs.begin(), stream.carbs.end(), [](const CarbEntry& a, const CarbEntry& b) { return a.time < b.time; });
  // Same-minute duplicates would break strict ordering; nudge them apart.
  for (std::size_t i = 1; i < stream.boluses.size(); ++i) {
    if (!(stream.boluses[i - 1].time < stream.boluses[i].time)) stream.boluses[i].time = stream.boluses[i - 1].time + Seconds(60);
  }
  for (std::size_t i = 1; i < stream.carbs.size(); ++i) {
    if (!(stream.carbs[i - 1].time < stream.carbs[i].time)) stream.carbs[i].time = stream.carbs[i - 1].time + Seconds(60);
  }
  std::sort(effects.begin(), effects.end(), [](const Effect& a, const Effect& b) { return a.minute < b.minute; });

  // CGM dropouts.
  std::vector<std::pair<double, double>> gaps;
  for (int day = 0; day < n_days; ++day) {
    if (u01(rng) < cfg.gap_rate) {
      const double g0 = 1440.0 * day + 1440.0 * u01(rng);
      gaps.push_back({g0, g0 + 20.0 + 100.0 * u01(rng)});
    }
  }

  // Glucose: baseline + meal and insulin bumps + basal/mode drift.
  std::normal_distribution<double> sensor(0.0, 1.0);
  double drift_state = 0.0;
  std::size_t first_effect = 0;
  for (int k = 0; k < n_steps; ++k) {
    const double minute = 5.0 * k;
    const Mode mode = mode_at_minute(minute);
    const double rate = detail::basal_rate_at(draw, std::fmod(minute, 1440.0) / 60.0, mode);
    // Drift relaxes toward zero with a 2 h time constant.
    const double push = pp.basal_gain * (pp.basal_reference - 1.5 * rate) - (mode == Mode::Exercise ? pp.exercise_uptake : 0.0);
    drift_state += (push * 5.0 / 60.0) - drift_state * (5.0 / 120.0);
    while (first_effect < effects.size() && effects[first_effect].minute < minute - 600.0) ++first_effect;
    double bgl = baseline[static_cast<std::size_t>(k)] + drift_state;
    for (std::size_t e = first_effect; e < effects.size() && effects[e].minute <= minute; ++e) {
      const double tau = minute - effects[e].minute;
      bgl += pp.carb_gain * effects[e].carb * carb_absorption(tau) - pp.insulin_gain * effects[e].insulin * insulin_action(tau);
    }
    const double noise = pp.noise_sd > 0.0 ? pp.noise_sd * sensor(rng) : 0.0;
    const double reading = std::round(std::clamp(bgl + noise, kBglFloor, kBglCeil));
    const bool dropped = std::any_of(gaps.begin(), gaps.end(),
                                     [&](const auto& g) { return minute >= g.first && minute < g.second; });
    if (!dropped) stream.cgm.push_back({t_at(minute), reading});
  }
  return sim;
}

inline Cohort generate_cohort(const SynthConfig& cfg) {
  validate(cfg);
  Cohort c;
  for (int i = 0; i < cfg.n_patients; ++i) {
    auto sim = simulate_patient(i, cfg);
    c.streams.push_back(std::move(sim.stream));
    c.profiles.push_back(std::move(sim.profile));
    c.params.push_back(sim.params);
  }
  return c;
}

}  // namespace glytwin::synth
