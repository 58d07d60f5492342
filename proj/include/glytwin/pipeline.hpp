#pragma once

// Meal-event feature extraction from CGM + pump streams.
//
// For every food bolus at t_fb:
//   peak       max CGM over [t_fb, t_fb + 120 min], earliest on ties
//   t_meal     t_max - 72 min;  delta_t = t_fb - t_meal (minutes)
//   bolus      all boluses in [min(t_meal, t_fb), t_max]
//   basal      step-function integral over [t_meal - 90 min, t_meal]
//   premeal    reading at/just before t_meal, LS slope over the prior 30 min
//   carbs      largest entry in [min(t_meal, t_fb), t_max]
//   outcome    hyperglycemia iff max CGM over [t_meal, t_meal + 120] > 180
// Windows of an event never extend past the next food bolus.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "glytwin/csv.hpp"
#include "glytwin/domain.hpp"
#include "glytwin/error.hpp"
#include "glytwin/time.hpp"

namespace glytwin::pipeline {

inline constexpr double kPeakWindowMin = 120.0;
inline constexpr double kPeakOffsetMin = 72.0;
inline constexpr double kBasalWindowMin = 90.0;
inline constexpr double kSlopeWindowMin = 30.0;
inline constexpr double kPremealToleranceMin = 5.0;
inline constexpr double kLabelWindowMin = 120.0;
inline constexpr double kMaxGapMin = 15.0;
inline constexpr double kFoodBolusCarbToleranceMin = 10.0;
inline constexpr double kHyperglycemiaThreshold = 180.0;
inline constexpr std::size_t kMinSlopeReadings = 4;

struct MealWindow {
  Timestamp t_fb;
  Timestamp t_meal;
  Timestamp t_max;
  double bgl_max = 0.0;
};

struct Peak {
  double bgl_max = 0.0;
  Timestamp t_max;
};

struct MealTiming {
  Timestamp t_meal;
  double delta_t = 0.0;  // minutes, negative = bolus before meal
};

namespace detail {

inline Timestamp cap_end(Timestamp end, std::optional<Timestamp> next_event) {
  // The next event itself is excluded from this event's windows.
  if (next_event && *next_event - Seconds(1) < end) return *next_event - Seconds(1);
  return end;
}

inline auto readings_in(const std::vector<CgmReading>& cgm, Timestamp lo, Timestamp hi) {
  auto first = std::lower_bound(cgm.begin(), cgm.end(), lo,
                                [](const CgmReading& r, Timestamp t) { return r.time < t; });
  auto last = std::upper_bound(first, cgm.end(), hi, [](Timestamp t, const CgmReading& r) { return t < r.time; });
  if (last < first) last = first;
  return std::span<const CgmReading>(cgm.data() + (first - cgm.begin()), static_cast<std::size_t>(last - first));
}

}  // namespace detail

// Throws InsufficientCoverage when the window holds no reading or any gap
// (including window edges) exceeds 15 minutes.
inline void require_coverage(const std::vector<CgmReading>& cgm, Timestamp start, Timestamp end) {
  const auto in = detail::readings_in(cgm, start, end);
  if (in.empty()) {
    throw Error(ErrorCode::InsufficientCoverage, "no CGM readings in [" + format_timestamp(start) + ", " +
                                                     format_timestamp(end) + "]");
  }
  const Seconds max_gap = from_minutes(kMaxGapMin);
  Timestamp prev = start;
  for (const auto& r : in) {
    if (r.time - prev > max_gap) {
      throw Error(ErrorCode::InsufficientCoverage, "CGM gap of " + csv::format_number(to_minutes(r.time - prev)) +
                                                       " min before " + format_timestamp(r.time));
    }
    prev = r.time;
  }
  if (end - prev > max_gap) {
    throw Error(ErrorCode::InsufficientCoverage, "CGM gap of " + csv::format_number(to_minutes(end - prev)) +
                                                     " min before " + format_timestamp(end));
  }
}

inline Peak locate_postprandial_peak(const PatientStream& stream, Timestamp t_fb,
                                     std::optional<Timestamp> next_food_bolus = std::nullopt) {
  const Timestamp end = detail::cap_end(t_fb + from_minutes(kPeakWindowMin), next_food_bolus);
  require_coverage(stream.cgm, t_fb, end);
  Peak best{-1.0, t_fb};
  for (const auto& r : detail::readings_in(stream.cgm, t_fb, end)) {
    if (r.bgl > best.bgl_max) best = {r.bgl, r.time};
  }
  return best;
}

inline MealTiming infer_meal_and_delta_t(Timestamp t_fb, Timestamp t_max) {
  const Timestamp t_meal = t_max - from_minutes(kPeakOffsetMin);
  return {t_meal, to_minutes(t_fb - t_meal)};
}

inline double total_bolus(const PatientStream& stream, Timestamp t_meal, Timestamp t_fb, Timestamp t_max) {
  const Timestamp lo = std::min(t_meal, t_fb);
  double sum = 0.0;
  for (const auto& b : stream.boluses) {
    if (b.time >= lo && b.time <= t_max) sum += b.units;
  }
  return sum;
}

// Each basal record holds until the next one; time before the first record
// contributes nothing.
inline double total_basal(const PatientStream& stream, Timestamp t_meal) {
  const Timestamp lo = t_meal - from_minutes(kBasalWindowMin);
  const Timestamp hi = t_meal;
  double units = 0.0;
  const auto& basals = stream.basals;
  for (std::size_t i = 0; i < basals.size(); ++i) {
    const Timestamp seg_start = std::max(basals[i].time, lo);
    const Timestamp seg_end = std::min(i + 1 < basals.size() ? basals[i + 1].time : hi, hi);
    if (seg_end <= seg_start) continue;
    units += basals[i].rate * static_cast<double>((seg_end - seg_start).count()) / 3600.0;
  }
  return units;
}

struct Premeal {
  double bgl = 0.0;
  double slope = 0.0;  // mg/dL per 5 minutes
};

inline Premeal premeal_bgl_and_slope(const PatientStream& stream, Timestamp t_meal) {
  const auto near = detail::readings_in(stream.cgm, t_meal - from_minutes(kPremealToleranceMin), t_meal);
  if (near.empty()) {
    throw Error(ErrorCode::InsufficientCoverage, "no CGM reading within 5 min before " + format_timestamp(t_meal));
  }
  const auto window = detail::readings_in(stream.cgm, t_meal - from_minutes(kSlopeWindowMin), t_meal);
  if (window.size() < kMinSlopeReadings) {
    throw Error(ErrorCode::InsufficientCoverage, "fewer than 4 CGM readings in the 30 min before " +
                                                     format_timestamp(t_meal));
  }
  // Least squares on time in minutes relative to t_meal.
  double mt = 0.0, mb = 0.0;
  for (const auto& r : window) {
    mt += to_minutes(r.time - t_meal);
    mb += r.bgl;
  }
  const double n = static_cast<double>(window.size());
  mt /= n;
  mb /= n;
  double sxy = 0.0, sxx = 0.0;
  for (const auto& r : window) {
    const double dt = to_minutes(r.time - t_meal) - mt;
    sxy += dt * (r.bgl - mb);
    sxx += dt * dt;
  }
  return {near.back().bgl, sxx > 0.0 ? 5.0 * sxy / sxx : 0.0};
}

inline double filter_carbs(const PatientStream& stream, Timestamp t_meal, Timestamp t_fb, Timestamp t_max) {
  const Timestamp lo = std::min(t_meal, t_fb);
  std::optional<double> best;
  for (const auto& c : stream.carbs) {
    if (c.time >= lo && c.time <= t_max && (!best || c.grams > *best)) best = c.grams;
  }
  if (!best) {
    throw Error(ErrorCode::NoCarbEntry, "no carb entry in [" + format_timestamp(lo) + ", " +
                                            format_timestamp(t_max) + "]");
  }
  return *best;
}

inline Outcome label_outcome(const PatientStream& stream, Timestamp t_meal,
                             std::optional<Timestamp> next_food_bolus = std::nullopt) {
  const Timestamp end = detail::cap_end(t_meal + from_minutes(kLabelWindowMin), next_food_bolus);
  require_coverage(stream.cgm, t_meal, end);
  double peak = 0.0;
  for (const auto& r : detail::readings_in(stream.cgm, t_meal, end)) peak = std::max(peak, r.bgl);
  return peak > kHyperglycemiaThreshold ? Outcome::Hyperglycemia : Outcome::Normoglycemia;
}

inline Mode mode_at(const PatientStream& stream, Timestamp t) {
  Mode m = Mode::Regular;
  for (const auto& c : stream.modes) {
    if (c.time > t) break;
    m = c.mode;
  }
  return m;
}

// A bolus is a food bolus when a carb entry lies within +-10 minutes.
inline std::vector<Timestamp> food_bolus_times(const PatientStream& stream) {
  std::vector<Timestamp> out;
  const Seconds tol = from_minutes(kFoodBolusCarbToleranceMin);
  for (const auto& b : stream.boluses) {
    const bool has_carb = std::any_of(stream.carbs.begin(), stream.carbs.end(), [&](const CarbEntry& c) {
      return c.time >= b.time - tol && c.time <= b.time + tol;
    });
    if (has_carb) out.push_back(b.time);
  }
  return out;
}

struct SkippedEvent {
  std::string patient_id;
  Timestamp t_fb;
  ErrorCode code;
  std::string reason;
};

struct Dataset {
  std::vector<FactualSample> samples;
  std::vector<SkippedEvent> skipped;
};

// Extracts one event; the building blocks above throw on coverage failures.
inline FactualSample extract_event(const PatientStream& stream, const PatientProfile& profile, Timestamp t_fb,
                                   std::optional<Timestamp> next_food_bolus) {
  const Peak peak = locate_postprandial_peak(stream, t_fb, next_food_bolus);
  const MealTiming timing = infer_meal_and_delta_t(t_fb, peak.t_max);
  MealFeatures m;
  m.carb_size = filter_carbs(stream, timing.t_meal, t_fb, peak.t_max);
  m.total_bolus = total_bolus(stream, timing.t_meal, t_fb, peak.t_max);
  m.delta_t = timing.delta_t;
  m.mode = mode_at(stream, timing.t_meal);
  m.total_basal = total_basal(stream, timing.t_meal);
  const Premeal pre = premeal_bgl_and_slope(stream, timing.t_meal);
  m.premeal_bgl = pre.bgl;
  m.premeal_slope = pre.slope;
  const Outcome outcome = label_outcome(stream, timing.t_meal, next_food_bolus);
  return make_sample(profile, timing.t_meal, m, outcome);
}

inline Dataset build_dataset(std::span<const PatientStream> streams, std::span<const PatientProfile> profiles) {
  std::map<std::string, const PatientProfile*> by_id;
  for (const auto& p : profiles) by_id[p.patient_id] = &p;
  const FeatureSchema schema = default_schema();

  Dataset out;
  for (const auto& stream : streams) {
    auto it = by_id.find(stream.patient_id);
    if (it == by_id.end()) {
      throw Error(ErrorCode::UnknownPatient, "no profile for stream '" + stream.patient_id + "'");
    }
    const auto fbs = food_bolus_times(stream);
    for (std::size_t e = 0; e < fbs.size(); ++e) {
      const std::optional<Timestamp> next = e + 1 < fbs.size() ? std::optional(fbs[e + 1]) : std::nullopt;
      try {
        FactualSample s = extract_event(stream, *it->second, fbs[e], next);
        validate_sample(schema, s.features);
        out.samples.push_back(std::move(s));
      } catch (const Error& err) {
        out.skipped.push_back({stream.patient_id, fbs[e], err.code(), err.detail()});
      }
    }
  }
  std::stable_sort(out.samples.begin(), out.samples.end(), [](const FactualSample& a, const FactualSample& b) {
    return a.patient_id != b.patient_id ? a.patient_id < b.patient_id : a.meal_time < b.meal_time;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Raw per-patient CSV: timestamp,event_type,value

inline constexpr std::string_view kRawCsvHeader = "timestamp,event_type,value";
inline constexpr std::string_view kProfilesCsvHeader = "patient_id,age,sex,ethnicity,a1c,years_from_diagnosis";

inline void write_stream_csv(std::ostream& out, const PatientStream& s) {
  struct Row {
    Timestamp t;
    int order;
    std::string type;
    std::string value;
  };
  std::vector<Row> rows;
  using csv::format_number;
  for (const auto& r : s.cgm) rows.push_back({r.time, 0, "cgm", format_number(r.bgl)});
  for (const auto& m : s.modes) rows.push_back({m.time, 1, "mode", std::string(to_string(m.mode))});
  for (const auto& b : s.basals) rows.push_back({b.time, 2, "basal_rate", format_number(b.rate)});
  for (const auto& c : s.carbs) rows.push_back({c.time, 3, "carb", format_number(c.grams)});
  for (const auto& b : s.boluses) {
    rows.push_back({b.time, 4, b.kind == BolusKind::Food ? "bolus_food" : "bolus_correction", format_number(b.units)});
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const Row& a, const Row& b) { return a.t != b.t ? a.t < b.t : a.order < b.order; });
  out << kRawCsvHeader << '\n';
  for (const auto& r : rows) out << format_timestamp(r.t) << ',' << r.type << ',' << r.value << '\n';
}

inline PatientStream read_stream_csv(std::istream& in, std::string patient_id) {
  const auto table = csv::read(in, kRawCsvHeader);
  PatientStream s;
  s.patient_id = std::move(patient_id);
  for (const auto& r : table.rows) {
    const Timestamp t = parse_timestamp(r[0]);
    const std::string& type = r[1];
    if (type == "cgm") {
      s.cgm.push_back({t, csv::parse_number(r[2], "value")});
    } else if (type == "bolus_food") {
      s.boluses.push_back({t, csv::parse_number(r[2], "value"), BolusKind::Food});
    } else if (type == "bolus_correction") {
      s.boluses.push_back({t, csv::parse_number(r[2], "value"), BolusKind::Correction});
    } else if (type == "basal_rate") {
      s.basals.push_back({t, csv::parse_number(r[2], "value")});
    } else if (type == "carb") {
      s.carbs.push_back({t, csv::parse_number(r[2], "value")});
    } else if (type == "mode") {
      s.modes.push_back({t, parse_mode(r[2])});
    } else {
      throw Error(ErrorCode::SchemaMismatch, "unknown event_type '" + type + "'");
    }
  }
  validate(s);
  return s;
}

inline void write_profiles_csv(std::ostream& out, std::span<const PatientProfile> profiles) {
  out << kProfilesCsvHeader << '\n';
  for (const auto& p : profiles) {
    out << p.patient_id << ',' << p.age << ',' << to_string(p.sex) << ',' << to_string(p.ethnicity) << ','
        << csv::format_number(p.a1c) << ',' << csv::format_number(p.years_from_diagnosis) << '\n';
  }
}

inline std::vector<PatientProfile> read_profiles_csv(std::istream& in) {
  const auto table = csv::read(in, kProfilesCsvHeader);
  std::vector<PatientProfile> out;
  for (const auto& r : table.rows) {
    PatientProfile p;
    p.patient_id = r[0];
    p.age = static_cast<int>(csv::parse_number(r[1], "age"));
    p.sex = parse_sex(r[2]);
    p.ethnicity = parse_ethnicity(r[3]);
    p.a1c = csv::parse_number(r[4], "a1c");
    p.years_from_diagnosis = csv::parse_number(r[5], "years_from_diagnosis");
    validate(p);
    out.push_back(std::move(p));
  }
  return out;
}

// Directory layout: profiles.csv plus one <patient_id>.csv per profile.
struct RawCohort {
  std::vector<PatientStream> streams;
  std::vector<PatientProfile> profiles;
};

inline void write_raw_cohort(const std::filesystem::path& dir, std::span<const PatientStream> streams,
                             std::span<const PatientProfile> profiles) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "profiles.csv");
    if (!out) throw Error(ErrorCode::Io, "cannot write " + (dir / "profiles.csv").string());
    write_profiles_csv(out, profiles);
  }
  for (const auto& s : streams) {
    std::ofstream out(dir / (s.patient_id + ".csv"));
    if (!out) throw Error(ErrorCode::Io, "cannot write stream for " + s.patient_id);
    write_stream_csv(out, s);
  }
}

inline RawCohort read_raw_cohort(const std::filesystem::path& dir) {
  RawCohort c;
  std::ifstream pin(dir / "profiles.csv");
  if (!pin) throw Error(ErrorCode::Io, "cannot open " + (dir / "profiles.csv").string());
  c.profiles = read_profiles_csv(pin);
  for (const auto& p : c.profiles) {
    std::ifstream in(dir / (p.patient_id + ".csv"));
    if (!in) throw Error(ErrorCode::Io, "missing stream file for patient '" + p.patient_id + "'");
    c.streams.push_back(read_stream_csv(in, p.patient_id));
  }
  return c;
}

}  // namespace glytwin::pipeline
