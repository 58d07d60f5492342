#pragma once

// Shared domain types: patient records, the 11-feature meal sample, the
// feature schema, and the raw <-> model-input transforms.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <iosfwd>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "glytwin/csv.hpp"
#include "glytwin/error.hpp"
#include "glytwin/time.hpp"

namespace glytwin {

// ---------------------------------------------------------------------------
// Categorical levels

enum class Sex { F, M };
enum class Ethnicity { White, Hispanic, Other };
enum class Mode { Regular, Sleep, Exercise };

// Class indices are fixed: normoglycemia = 0, hyperglycemia = 1.
enum class Outcome { Normoglycemia = 0, Hyperglycemia = 1 };

inline constexpr std::size_t kNumClasses = 2;

inline constexpr std::size_t class_index(Outcome o) { return static_cast<std::size_t>(o); }

inline std::string_view to_string(Sex s) { return s == Sex::F ? "F" : "M"; }

inline std::string_view to_string(Ethnicity e) {
  switch (e) {
    case Ethnicity::White: return "White";
    case Ethnicity::Hispanic: return "Hispanic";
    case Ethnicity::Other: return "Other";
  }
  return "Other";
}

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::Regular: return "regular";
    case Mode::Sleep: return "sleep";
    case Mode::Exercise: return "exercise";
  }
  return "regular";
}

inline std::string_view to_string(Outcome o) {
  return o == Outcome::Normoglycemia ? "normoglycemia" : "hyperglycemia";
}

inline Sex parse_sex(std::string_view s) {
  if (s == "F") return Sex::F;
  if (s == "M") return Sex::M;
  throw Error(ErrorCode::SchemaMismatch, "unknown sex level '" + std::string(s) + "'");
}

inline Ethnicity parse_ethnicity(std::string_view s) {
  if (s == "White") return Ethnicity::White;
  if (s == "Hispanic") return Ethnicity::Hispanic;
  if (s == "Other") return Ethnicity::Other;
  throw Error(ErrorCode::SchemaMismatch, "unknown ethnicity level '" + std::string(s) + "'");
}

inline Mode parse_mode(std::string_view s) {
  if (s == "regular") return Mode::Regular;
  if (s == "sleep") return Mode::Sleep;
  if (s == "exercise") return Mode::Exercise;
  throw Error(ErrorCode::SchemaMismatch, "unknown mode level '" + std::string(s) + "'");
}

inline Outcome parse_outcome(std::string_view s) {
  if (s == "normoglycemia") return Outcome::Normoglycemia;
  if (s == "hyperglycemia") return Outcome::Hyperglycemia;
  throw Error(ErrorCode::SchemaMismatch, "unknown outcome literal '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Patients

struct PatientProfile {
  std::string patient_id;
  int age = 0;
  Sex sex = Sex::F;
  Ethnicity ethnicity = Ethnicity::White;
  double a1c = 0.0;
  double years_from_diagnosis = 0.0;
};

inline void validate(const PatientProfile& p) {
  auto fail = [&](const std::string& what) {
    throw Error(ErrorCode::InvalidSample, "profile '" + p.patient_id + "': " + what);
  };
  if (p.patient_id.empty()) fail("empty patient_id");
  if (p.age < 18 || p.age > 100) fail("age outside [18, 100]");
  if (!(p.a1c >= 4.0 && p.a1c <= 14.0)) fail("a1c outside [4, 14]");
  if (!(p.years_from_diagnosis >= 0.0) || p.years_from_diagnosis > p.age) {
    fail("years_from_diagnosis outside [0, age]");
  }
}

enum class BolusKind { Food, Correction };

struct CgmReading {
  Timestamp time;
  double bgl = 0.0;  // mg/dL
};

struct BolusEvent {
  Timestamp time;
  double units = 0.0;
  BolusKind kind = BolusKind::Food;
};

struct BasalRate {
  Timestamp time;
  double rate = 0.0;  // units/hour, constant until the next record
};

struct CarbEntry {
  Timestamp time;
  double grams = 0.0;
};

struct ModeChange {
  Timestamp time;
  Mode mode = Mode::Regular;
};

struct PatientStream {
  std::string patient_id;
  std::vector<CgmReading> cgm;
  std::vector<BolusEvent> boluses;
  std::vector<BasalRate> basals;
  std::vector<CarbEntry> carbs;
  std::vector<ModeChange> modes;
};

namespace detail {
template <class Series>
void check_ordered(const Series& s, const std::string& id, std::string_view name) {
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (!(s[i - 1].time < s[i].time)) {
      throw Error(ErrorCode::InvalidSample,
                  "stream '" + id + "': " + std::string(name) + " not strictly time-ordered");
    }
  }
}
}  // namespace detail

inline void validate(const PatientStream& s) {
  detail::check_ordered(s.cgm, s.patient_id, "cgm");
  detail::check_ordered(s.boluses, s.patient_id, "boluses");
  detail::check_ordered(s.basals, s.patient_id, "basals");
  detail::check_ordered(s.carbs, s.patient_id, "carbs");
  detail::check_ordered(s.modes, s.patient_id, "modes");
  for (const auto& r : s.cgm) {
    if (!(r.bgl >= 20.0 && r.bgl <= 500.0)) {
      throw Error(ErrorCode::InvalidSample, "stream '" + s.patient_id + "': bgl outside [20, 500]");
    }
  }
  for (const auto& b : s.boluses) {
    if (!(b.units >= 0.0)) throw Error(ErrorCode::InvalidSample, "stream '" + s.patient_id + "': negative bolus");
  }
  for (const auto& b : s.basals) {
    if (!(b.rate >= 0.0)) throw Error(ErrorCode::InvalidSample, "stream '" + s.patient_id + "': negative basal");
  }
  for (const auto& c : s.carbs) {
    if (!(c.grams >= 0.0)) throw Error(ErrorCode::InvalidSample, "stream '" + s.patient_id + "': negative carbs");
  }
}

// ---------------------------------------------------------------------------
// Factual samples

// Column order of the 11 meal features.
enum class Feature : std::size_t {
  Age,
  Sex,
  Ethnicity,
  A1c,
  CarbSize,
  TotalBolus,
  DeltaT,
  Mode,
  TotalBasal,
  PremealSlope,
  PremealBgl,
};

inline constexpr std::size_t kNumFeatures = 11;

inline constexpr std::size_t index(Feature f) { return static_cast<std::size_t>(f); }

using FeatureVector = std::vector<double>;

// Nominal features hold their level index as an integral double.
struct FactualSample {
  std::string patient_id;
  Timestamp meal_time{};
  FeatureVector features = FeatureVector(kNumFeatures, 0.0);
  Outcome outcome = Outcome::Normoglycemia;

  double operator[](Feature f) const { return features[index(f)]; }
  double& operator[](Feature f) { return features[index(f)]; }

  Sex sex() const { return static_cast<Sex>(static_cast<int>(features[index(Feature::Sex)])); }
  Ethnicity ethnicity() const {
    return static_cast<Ethnicity>(static_cast<int>(features[index(Feature::Ethnicity)]));
  }
  Mode mode() const { return static_cast<Mode>(static_cast<int>(features[index(Feature::Mode)])); }
};

struct MealFeatures {
  double carb_size = 0.0;
  double total_bolus = 0.0;
  double delta_t = 0.0;
  Mode mode = Mode::Regular;
  double total_basal = 0.0;
  double premeal_slope = 0.0;
  double premeal_bgl = 0.0;
};

inline FactualSample make_sample(const PatientProfile& profile, Timestamp meal_time, const MealFeatures& m,
                                 Outcome outcome) {
  FactualSample s;
  s.patient_id = profile.patient_id;
  s.meal_time = meal_time;
  s[Feature::Age] = profile.age;
  s[Feature::Sex] = static_cast<double>(static_cast<int>(profile.sex));
  s[Feature::Ethnicity] = static_cast<double>(static_cast<int>(profile.ethnicity));
  s[Feature::A1c] = profile.a1c;
  s[Feature::CarbSize] = m.carb_size;
  s[Feature::TotalBolus] = m.total_bolus;
  s[Feature::DeltaT] = m.delta_t;
  s[Feature::Mode] = static_cast<double>(static_cast<int>(m.mode));
  s[Feature::TotalBasal] = m.total_basal;
  s[Feature::PremealSlope] = m.premeal_slope;
  s[Feature::PremealBgl] = m.premeal_bgl;
  s.outcome = outcome;
  return s;
}

// ---------------------------------------------------------------------------
// Feature schema

enum class FeatureKind { Continuous, Nominal };
enum class Encoding { Identity, OneHot };

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::Continuous;
  std::string units;
  bool modifiable = false;
  double min = 0.0;   // counterfactual search bounds
  double max = 0.0;
  double step = 0.0;  // perturbation size, same units as the feature
  Encoding encoding = Encoding::Identity;
  std::vector<std::string> levels;  // nominal only
  double physical_min = -std::numeric_limits<double>::infinity();
  double physical_max = std::numeric_limits<double>::infinity();
  bool per_patient_bounds = false;  // min/max are placeholders until personalized
};

struct FeatureSchema {
  std::vector<FeatureSpec> features;

  std::size_t size() const { return features.size(); }
  const FeatureSpec& operator[](std::size_t i) const { return features[i]; }
  FeatureSpec& operator[](std::size_t i) { return features[i]; }

  std::optional<std::size_t> find(std::string_view name) const {
    for (std::size_t i = 0; i < features.size(); ++i) {
      if (features[i].name == name) return i;
    }
    return std::nullopt;
  }

  std::size_t index_of(std::string_view name) const {
    if (auto i = find(name)) return *i;
    throw Error(ErrorCode::SchemaMismatch, "unknown feature '" + std::string(name) + "'");
  }

  std::vector<std::size_t> modifiable_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < features.size(); ++i) {
      if (features[i].modifiable) out.push_back(i);
    }
    return out;
  }

  std::vector<double> steps() const {
    std::vector<double> out;
    for (const auto& f : features) out.push_back(f.step);
    return out;
  }
};

inline void validate(const FeatureSchema& schema) {
  for (const auto& f : schema.features) {
    if (f.kind == FeatureKind::Continuous && !(f.min < f.max)) {
      throw Error(ErrorCode::InvalidArgument, "feature '" + f.name + "': min must be < max");
    }
    if (f.modifiable && !(f.step > 0.0)) {
      throw Error(ErrorCode::InvalidArgument, "feature '" + f.name + "': modifiable feature needs step > 0");
    }
    if (f.kind == FeatureKind::Nominal && f.modifiable) {
      throw Error(ErrorCode::InvalidArgument, "feature '" + f.name + "': nominal features cannot be modifiable");
    }
  }
}

inline FeatureSpec continuous_feature(std::string name, std::string units, double physical_min, double physical_max) {
  FeatureSpec f;
  f.name = std::move(name);
  f.units = std::move(units);
  f.min = physical_min;
  f.max = physical_max;
  f.physical_min = physical_min;
  f.physical_max = physical_max;
  return f;
}

inline FeatureSpec nominal_feature(std::string name, std::vector<std::string> levels) {
  FeatureSpec f;
  f.name = std::move(name);
  f.kind = FeatureKind::Nominal;
  f.encoding = Encoding::OneHot;
  f.min = 0.0;
  f.max = static_cast<double>(levels.size() - 1);
  f.physical_min = f.min;
  f.physical_max = f.max;
  f.levels = std::move(levels);
  return f;
}

inline constexpr double kPremealBglMin = 100.0;
inline constexpr double kPremealBglMax = 170.0;

// Four modifiable levers with steps of 5 g, 0.5 u, 5 min and 10 mg/dL.
// Carb, bolus and delta_t bounds are per-patient placeholders.
inline FeatureSchema default_schema() {
  FeatureSchema s;
  s.features.push_back(continuous_feature("age", "years", 18, 100));
  s.features.push_back(nominal_feature("sex", {"F", "M"}));
  s.features.push_back(nominal_feature("ethnicity", {"White", "Hispanic", "Other"}));
  s.features.push_back(continuous_feature("a1c", "%", 4.0, 14.0));

  auto carb = continuous_feature("carb_size", "g", 0.0, 400.0);
  carb.modifiable = true;
  carb.step = 5.0;
  carb.per_patient_bounds = true;
  s.features.push_back(carb);

  auto bolus = continuous_feature("total_bolus", "units", 0.0, 60.0);
  bolus.modifiable = true;
  bolus.step = 0.5;
  bolus.per_patient_bounds = true;
  s.features.push_back(bolus);

  auto dt = continuous_feature("delta_t", "min", -240.0, 240.0);
  dt.modifiable = true;
  dt.step = 5.0;
  dt.per_patient_bounds = true;
  s.features.push_back(dt);

  s.features.push_back(nominal_feature("mode", {"regular", "sleep", "exercise"}));
  s.features.push_back(continuous_feature("total_basal", "units", 0.0, 30.0));
  s.features.push_back(continuous_feature("premeal_slope", "mg/dL per 5 min", -100.0, 100.0));

  auto bgl = continuous_feature("premeal_bgl", "mg/dL", 20.0, 500.0);
  bgl.modifiable = true;
  bgl.step = 10.0;
  bgl.min = kPremealBglMin;
  bgl.max = kPremealBglMax;
  s.features.push_back(bgl);
  return s;
}

inline constexpr std::size_t kMinHistory = 5;

// Replaces the per-patient placeholders with the patient's observed min/max.
inline FeatureSchema personalize_bounds(const FeatureSchema& schema, std::span<const FactualSample> history,
                                        std::string_view patient_id) {
  std::vector<const FactualSample*> mine;
  for (const auto& s : history) {
    if (s.patient_id == patient_id) mine.push_back(&s);
  }
  if (mine.empty()) throw Error(ErrorCode::UnknownPatient, "no samples for patient '" + std::string(patient_id) + "'");
  if (mine.size() < kMinHistory) {
    throw Error(ErrorCode::InsufficientHistory, "patient '" + std::string(patient_id) + "' has " +
                                                    std::to_string(mine.size()) + " samples, need " +
                                                    std::to_string(kMinHistory));
  }
  FeatureSchema out = schema;
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto& f = out[i];
    if (!f.per_patient_bounds) continue;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto* s : mine) {
      lo = std::min(lo, s->features[i]);
      hi = std::max(hi, s->features[i]);
    }
    f.min = lo;
    f.max = hi;
  }
  return out;
}

// Returns one message per violated constraint; empty means valid.
inline std::vector<std::string> check_sample(const FeatureSchema& schema, const FeatureVector& x) {
  std::vector<std::string> problems;
  if (x.size() != schema.size()) {
    problems.push_back("expected " + std::to_string(schema.size()) + " features, got " + std::to_string(x.size()));
    return problems;
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto& f = schema[i];
    if (!std::isfinite(x[i])) {
      problems.push_back(f.name + ": not finite");
    } else if (f.kind == FeatureKind::Nominal) {
      if (x[i] != std::floor(x[i]) || x[i] < 0 || x[i] >= static_cast<double>(f.levels.size())) {
        problems.push_back(f.name + ": unknown level");
      }
    } else if (x[i] < f.physical_min || x[i] > f.physical_max) {
      problems.push_back(f.name + ": outside physical range [" + csv::format_number(f.physical_min) + ", " +
                         csv::format_number(f.physical_max) + "]");
    }
  }
  return problems;
}

inline void validate_sample(const FeatureSchema& schema, const FeatureVector& x) {
  auto problems = check_sample(schema, x);
  if (problems.empty()) return;
  std::string msg;
  for (const auto& p : problems) msg += (msg.empty() ? "" : "; ") + p;
  throw Error(ErrorCode::InvalidSample, msg);
}

// ---------------------------------------------------------------------------
// Preference weights

struct PreferenceWeights {
  std::vector<double> user;
  std::vector<double> physician;

  static PreferenceWeights uniform(std::size_t d, double value = 1.0) {
    return {std::vector<double>(d, value), std::vector<double>(d, value)};
  }
};

inline void validate(const PreferenceWeights& w, std::size_t d) {
  if (w.user.size() != d || w.physician.size() != d) {
    throw Error(ErrorCode::InvalidArgument, "preference weights must have one entry per feature");
  }
  for (std::size_t i = 0; i < d; ++i) {
    if (!(w.user[i] >= 0.0 && w.user[i] <= 1.0) || !(w.physician[i] >= 0.0 && w.physician[i] <= 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "preference weights must lie in [0, 1]");
    }
  }
}

// ---------------------------------------------------------------------------
// Encoding: z-scored continuous features, one-hot nominal features.

struct TrainingStats {
  std::vector<double> mean;  // per feature; unused for nominal
  std::vector<double> stddev;
};

inline TrainingStats compute_training_stats(const FeatureSchema& schema, std::span<const FactualSample> train) {
  if (train.empty()) throw Error(ErrorCode::EmptyTrainingSet, "cannot compute statistics of an empty set");
  const std::size_t d = schema.size();
  TrainingStats st{std::vector<double>(d, 0.0), std::vector<double>(d, 1.0)};
  for (std::size_t i = 0; i < d; ++i) {
    if (schema[i].kind != FeatureKind::Continuous) continue;
    double sum = 0.0;
    for (const auto& s : train) sum += s.features[i];
    const double mean = sum / static_cast<double>(train.size());
    double ss = 0.0;
    for (const auto& s : train) ss += (s.features[i] - mean) * (s.features[i] - mean);
    const double sd = std::sqrt(ss / static_cast<double>(train.size()));
    st.mean[i] = mean;
    st.stddev[i] = sd > 0.0 ? sd : 1.0;
  }
  return st;
}

using EncodedSample = std::vector<double>;

class Encoder {
 public:
  Encoder() = default;
  Encoder(FeatureSchema schema, TrainingStats stats) : schema_(std::move(schema)), stats_(std::move(stats)) {
    if (stats_.mean.size() != schema_.size() || stats_.stddev.size() != schema_.size()) {
      throw Error(ErrorCode::InvalidArgument, "training statistics do not match schema");
    }
    for (std::size_t i = 0; i < schema_.size(); ++i) {
      if (schema_[i].kind == FeatureKind::Continuous && !(stats_.stddev[i] > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "feature '" + schema_[i].name + "': std must be > 0");
      }
      width_ += schema_[i].kind == FeatureKind::Nominal ? schema_[i].levels.size() : 1;
    }
  }

  std::size_t encoded_width() const { return width_; }
  std::size_t raw_width() const { return schema_.size(); }
  const FeatureSchema& schema() const { return schema_; }
  const TrainingStats& stats() const { return stats_; }

  void encode_into(std::span<const double> x, std::span<double> out) const {
    if (x.size() != schema_.size() || out.size() != width_) {
      throw Error(ErrorCode::SchemaMismatch, "encode: width mismatch");
    }
    std::size_t k = 0;
    for (std::size_t i = 0; i < schema_.size(); ++i) {
      const auto& f = schema_[i];
      if (f.kind == FeatureKind::Continuous) {
        out[k++] = (x[i] - stats_.mean[i]) / stats_.stddev[i];
        continue;
      }
      const double level = x[i];
      if (level != std::floor(level) || level < 0 || level >= static_cast<double>(f.levels.size())) {
        throw Error(ErrorCode::SchemaMismatch, "feature '" + f.name + "': unknown level");
      }
      for (std::size_t l = 0; l < f.levels.size(); ++l) out[k++] = (static_cast<double>(l) == level) ? 1.0 : 0.0;
    }
  }

  EncodedSample encode(std::span<const double> x) const {
    EncodedSample out(width_);
    encode_into(x, out);
    return out;
  }

  FeatureVector decode(std::span<const double> z) const {
    if (z.size() != width_) throw Error(ErrorCode::SchemaMismatch, "decode: width mismatch");
    FeatureVector x(schema_.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < schema_.size(); ++i) {
      const auto& f = schema_[i];
      if (f.kind == FeatureKind::Continuous) {
        x[i] = z[k++] * stats_.stddev[i] + stats_.mean[i];
        continue;
      }
      std::size_t best = 0;
      for (std::size_t l = 1; l < f.levels.size(); ++l) {
        if (z[k + l] > z[k + best]) best = l;
      }
      x[i] = static_cast<double>(best);
      k += f.levels.size();
    }
    return x;
  }

 private:
  FeatureSchema schema_;
  TrainingStats stats_;
  std::size_t width_ = 0;
};

// ---------------------------------------------------------------------------
// Factual-sample CSV

inline constexpr std::string_view kSampleCsvHeader =
    "patient_id,meal_timestamp,age,sex,ethnicity,a1c,carb_size,total_bolus,delta_t,mode,total_basal,"
    "premeal_slope,premeal_bgl,outcome";

inline void write_samples_csv(std::ostream& out, std::span<const FactualSample> samples) {
  using csv::format_number;
  out << kSampleCsvHeader << '\n';
  for (const auto& s : samples) {
    out << s.patient_id << ',' << format_timestamp(s.meal_time) << ',' << format_number(s[Feature::Age]) << ','
        << to_string(s.sex()) << ',' << to_string(s.ethnicity()) << ',' << format_number(s[Feature::A1c]) << ','
        << format_number(s[Feature::CarbSize]) << ',' << format_number(s[Feature::TotalBolus]) << ','
        << format_number(s[Feature::DeltaT]) << ',' << to_string(s.mode()) << ','
        << format_number(s[Feature::TotalBasal]) << ',' << format_number(s[Feature::PremealSlope]) << ','
        << format_number(s[Feature::PremealBgl]) << ',' << to_string(s.outcome) << '\n';
  }
}

inline std::vector<FactualSample> read_samples_csv(std::istream& in) {
  const auto table = csv::read(in, kSampleCsvHeader);
  std::vector<FactualSample> out;
  out.reserve(table.rows.size());
  for (const auto& r : table.rows) {
    FactualSample s;
    s.patient_id = r[0];
    s.meal_time = parse_timestamp(r[1]);
    s[Feature::Age] = csv::parse_number(r[2], "age");
    s[Feature::Sex] = static_cast<int>(parse_sex(r[3]));
    s[Feature::Ethnicity] = static_cast<int>(parse_ethnicity(r[4]));
    s[Feature::A1c] = csv::parse_number(r[5], "a1c");
    s[Feature::CarbSize] = csv::parse_number(r[6], "carb_size");
    s[Feature::TotalBolus] = csv::parse_number(r[7], "total_bolus");
    s[Feature::DeltaT] = csv::parse_number(r[8], "delta_t");
    s[Feature::Mode] = static_cast<int>(parse_mode(r[9]));
    s[Feature::TotalBasal] = csv::parse_number(r[10], "total_basal");
    s[Feature::PremealSlope] = csv::parse_number(r[11], "premeal_slope");
    s[Feature::PremealBgl] = csv::parse_number(r[12], "premeal_bgl");
    s.outcome = parse_outcome(r[13]);
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<FactualSample> read_samples_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  return read_samples_csv(in);
}

}  // namespace glytwin
