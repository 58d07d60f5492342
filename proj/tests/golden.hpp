#pragma once

// Hand-worked pipeline fixtures. Each check recomputes the expected value
// from first principles (clock arithmetic, piecewise integration, least
// squares) and compares exactly.

#include <cmath>
#include <string>
#include <vector>

#include "glytwin/pipeline.hpp"
#include "support.hpp"

namespace glytwin::testing {

struct Check {
  std::string name;
  bool ok = false;
  std::string detail;
};

inline Check check_eq(std::string name, double got, double want) {
  return {std::move(name), got == want, "got " + csv::format_number(got) + ", want " + csv::format_number(want)};
}

inline Check check_near(std::string name, double got, double want, double tol) {
  return {std::move(name), std::abs(got - want) <= tol,
          "got " + csv::format_number(got) + ", want " + csv::format_number(want)};
}

// Ordinary least squares slope per minute, textbook two-pass form.
inline double ols_slope_per_min(const std::vector<CgmReading>& r, Timestamp origin) {
  double n = 0, st = 0, sb = 0;
  for (const auto& c : r) {
    n += 1;
    st += to_minutes(c.time - origin);
    sb += c.bgl;
  }
  double num = 0, den = 0;
  for (const auto& c : r) {
    const double t = to_minutes(c.time - origin);
    num += (t - st / n) * (c.bgl - sb / n);
    den += (t - st / n) * (t - st / n);
  }
  return num / den;
}

inline std::vector<Check> pipeline_golden() {
  using namespace pipeline;
  using std::chrono::minutes;
  std::vector<Check> out;

  // t_meal = t_max - 72 min; delta_t = t_fb - t_meal.
  {
    const auto m = infer_meal_and_delta_t(at(12), at(13, 30));
    out.push_back({"delta_t worked example: t_meal 12:18", m.t_meal == at(12, 18), format_timestamp(m.t_meal)});
    out.push_back(check_eq("delta_t worked example: -18 min", m.delta_t, -18.0));
    const auto z = infer_meal_and_delta_t(at(12), at(13, 12));
    out.push_back(check_eq("delta_t boundary: 0", z.delta_t, 0.0));
    const auto after = infer_meal_and_delta_t(at(12, 15), at(13, 12));
    out.push_back(check_eq("delta_t bolus after meal: +15", after.delta_t, 15.0));
  }

  // Exact linear premeal readings: 100..160 at 5-minute cadence.
  {
    PatientStream s;
    s.patient_id = "G";
    const Timestamp t_meal = at(12);
    for (int k = 0; k < 7; ++k) s.cgm.push_back({t_meal - minutes(30 - 5 * k), 100.0 + 10.0 * k});
    const auto p = premeal_bgl_and_slope(s, t_meal);
    out.push_back(check_eq("linear slope 10 per 5 min", p.slope, 10.0));
    out.push_back(check_eq("linear premeal bgl 160", p.bgl, 160.0));
    PatientStream flat = s;
    for (auto& c : flat.cgm) c.bgl = 129;
    const auto q = premeal_bgl_and_slope(flat, t_meal);
    out.push_back(check_eq("constant slope 0", q.slope, 0.0));
    out.push_back(check_eq("constant bgl 129", q.bgl, 129.0));
  }

  // Noisy linear readings around slope 2.943 per 5 min; ending at 129.
  {
    PatientStream s;
    s.patient_id = "G";
    const Timestamp t_meal = at(12);
    const double noise[] = {0.0, -0.3, 0.2, 0.1, 0.2, -0.3, 0.0};
    for (int k = 0; k < 7; ++k) {
      const double t = -30.0 + 5.0 * k;
      s.cgm.push_back({t_meal + minutes(static_cast<int>(t)), 129.0 + 2.943 / 5.0 * t + noise[k]});
    }
    const auto p = premeal_bgl_and_slope(s, t_meal);
    const double oracle = 5.0 * ols_slope_per_min(s.cgm, t_meal);
    out.push_back({"noisy slope matches least squares", std::abs(p.slope - oracle) <= 1e-9,
                   csv::format_number(p.slope) + " vs " + csv::format_number(oracle)});
    out.push_back({"noisy slope recovers 2.943 within 0.01", std::abs(p.slope - 2.943) <= 0.01, csv::format_number(p.slope)});
  }

  // Labels: strictly above 180 mg/dL.
  {
    auto label_for = [](double peak) {
      PatientStream s;
      s.patient_id = "G";
      s.cgm = cgm_series(at(12), at(14), [&](Timestamp t) { return t == at(13) ? peak : 120.0; });
      return label_outcome(s, at(12));
    };
    out.push_back({"label 195 hyperglycemia", label_for(195) == Outcome::Hyperglycemia, ""});
    out.push_back({"label 180.1 hyperglycemia", label_for(180.1) == Outcome::Hyperglycemia, ""});
    out.push_back({"label 180 normoglycemia", label_for(180) == Outcome::Normoglycemia, ""});
    out.push_back({"label 179.9 normoglycemia", label_for(179.9) == Outcome::Normoglycemia, ""});
  }

  // Basal integration over the 90 minutes before the meal.
  {
    const Timestamp t_meal = at(12);
    PatientStream s;
    s.patient_id = "G";
    s.basals = {{t_meal - minutes(180), 1.0}};
    out.push_back(check_eq("basal 1.0 u/h over 90 min", total_basal(s, t_meal), 1.0 * 1.5));
    s.basals = {{t_meal - minutes(180), 0.0}};
    out.push_back(check_eq("basal zero", total_basal(s, t_meal), 0.0));
    s.basals = {{t_meal - minutes(90), 2.0}, {t_meal - minutes(60), 0.0}};
    out.push_back(check_eq("basal 2 u/h then 0", total_basal(s, t_meal), 2.0 * 0.5));
    s.basals = {{t_meal - minutes(120), 0.6}, {t_meal - minutes(45), 1.2}, {t_meal + minutes(10), 5.0}};
    out.push_back(check_near("basal piecewise 0.6 then 1.2", total_basal(s, t_meal), 0.6 * 0.75 + 1.2 * 0.75, 1e-12));
    s.basals = {{t_meal - minutes(30), 3.0}};
    out.push_back(check_eq("basal before first record contributes nothing", total_basal(s, t_meal), 3.0 * 0.5));
  }
  return out;
}

}  // namespace glytwin::testing
