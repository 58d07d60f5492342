// glytwin command-line driver.
//
// Every subcommand exits 0 on success; on failure it prints one JSON error
// record {"error": <code>, "message": <text>} to stderr and exits nonzero.

#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "glytwin/engine.hpp"
#include "glytwin/harness.hpp"
#include "glytwin/json_io.hpp"
#include "glytwin/models/io.hpp"
#include "glytwin/pipeline.hpp"
#include "glytwin/service.hpp"
#include "glytwin/synthgen.hpp"

namespace fs = std::filesystem;
using namespace glytwin;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

ExperimentConfig experiment_config(const Globals& g) {
  ExperimentConfig c = g.config.empty() ? ExperimentConfig{} : load_config(g.config);
  if (g.seed) c.seed = *g.seed;
  if (!g.out.empty()) c.output_dir = g.out;
  return c;
}

std::string out_dir(const Globals& g, const std::string& fallback) { return g.out.empty() ? fallback : g.out; }

void print_json(const Json& j) { std::cout << j.dump(2) << '\n'; }

int cmd_synth(const Globals& g) {
  auto c = experiment_config(g);
  const auto cohort = synth::generate_cohort(cohort_config(c));
  const auto dir = out_dir(g, "raw");
  pipeline::write_raw_cohort(dir, cohort.streams, cohort.profiles);
  print_json({{"patients", cohort.profiles.size()}, {"out", dir}});
  return 0;
}

int cmd_ingest(const Globals& g, const std::string& raw) {
  const auto cohort = pipeline::read_raw_cohort(raw);
  const auto ds = pipeline::build_dataset(cohort.streams, cohort.profiles);
  const auto path = out_dir(g, "samples.csv");
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path + "'");
  write_samples_csv(out, ds.samples);
  Json skipped = Json::array();
  for (const auto& s : ds.skipped) {
    skipped.push_back({{"patient_id", s.patient_id},
                       {"food_bolus", format_timestamp(s.t_fb)},
                       {"code", to_string(s.code)},
                       {"reason", s.reason}});
  }
  print_json({{"samples", ds.samples.size()}, {"skipped", skipped.size()}, {"out", path}, {"skipped_events", skipped}});
  return 0;
}

int cmd_train(const Globals& g, const std::string& data, const std::string& sim_data) {
  auto c = experiment_config(g);
  const auto samples = read_samples_csv(data);
  const auto dir = out_dir(g, "models");
  ensure_dir(dir);
  const auto mlp = train_mlp(samples, c.mlp, c.seed);
  const auto sim_samples = sim_data.empty() ? samples : read_samples_csv(sim_data);
  const auto gbt = train_simulator(sim_samples, c.gbt, c.seed);
  write_json_file((fs::path(dir) / "classifier.json").string(), model_to_json(mlp.classifier, mlp.report));
  write_json_file((fs::path(dir) / "simulator.json").string(), model_to_json(gbt.model, gbt.report));
  print_json({{"classifier", to_json(mlp.report)}, {"simulator", to_json(gbt.report)}, {"out", dir}});
  return 0;
}

int cmd_generate(const Globals& g, const std::string& model_path, const std::string& data, std::size_t row) {
  auto c = experiment_config(g);
  const auto model = load_model(model_path);
  const auto samples = read_samples_csv(data);
  if (row >= samples.size()) throw Error(ErrorCode::InvalidArgument, "row " + std::to_string(row) + " out of range");
  const auto& x = samples[row];
  CfParams p;
  p.gamma = c.gamma;
  p.max_iter = c.max_iter;
  p.plateau_eps = c.plateau_eps;
  p.plateau_patience = c.plateau_patience;
  p.weights = PreferenceWeights{c.w_user, c.w_physician};
  p.schema = personalize_bounds(default_schema(), samples, x.patient_id);
  const auto r = generate_counterfactual(model.predictor(), x, p);
  Json j{{"factual", to_json(x)},
         {"counterfactual", to_json(r.counterfactual)},
         {"converged", r.converged},
         {"termination", to_string(r.termination)},
         {"iterations", r.iterations},
         {"final_confidence", r.final_confidence},
         {"narrative", r.converged ? Json(narrate(x, r)) : Json(nullptr)},
         {"trajectory", trajectory_json(r, p.schema)}};
  if (!g.out.empty()) {
    ensure_dir(g.out);
    write_text_file(fs::path(g.out) / "counterfactual.json", j.dump(2) + "\n");
    write_text_file(fs::path(g.out) / "trajectory.jsonl", trajectory_log(r, p.schema));
  }
  print_json(j);
  return 0;
}

int cmd_evaluate(const Globals& g) {
  const auto c = experiment_config(g);
  const auto e = prepare_experiment(c);
  const auto out = run_evaluation(e);
  write_evaluation(e, out, c.output_dir);
  write_text_file(fs::path(c.output_dir) / "config.json", to_json(c).dump(2) + "\n");
  std::cout << metrics_table(out.table);
  return 0;
}

int cmd_sweep(const Globals& g, bool gamma) {
  const auto c = experiment_config(g);
  const auto e = prepare_experiment(c);
  const auto s = gamma ? ablate_gamma(e) : ablate_delta(e);
  write_sweep(s, c.output_dir, gamma ? "gamma_sweep" : "delta_sweep");
  std::cout << sweep_csv(s);
  return 0;
}

int cmd_subgroups(const Globals& g) {
  const auto c = experiment_config(g);
  const auto e = prepare_experiment(c);
  const auto rows = subgroup_report(run_glytwin(e, c.gamma), e.profiles, c.bins);
  write_subgroups(rows, c.output_dir);
  Json j = Json::array();
  for (const auto& r : rows) j.push_back(to_json(r));
  print_json(j);
  return 0;
}

httplib::Server* g_server = nullptr;

int cmd_serve(const Globals& g, std::optional<int> port) {
  auto sc = resolve_service_config(g.config);
  if (port) sc.port = *port;
  const auto state = load_state(sc);
  httplib::Server server;
  register_routes(server, state, sc.cors_origin);
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server) g_server->stop();
  });
  std::cerr << "listening on " << sc.host << ":" << sc.port << '\n';
  if (!server.listen(sc.host, sc.port)) throw Error(ErrorCode::Io, "cannot listen on " + sc.host + ":" + std::to_string(sc.port));
  return 0;
}

void print_error(std::string_view code, const std::string& message) {
  std::cerr << Json{{"error", code}, {"message", message}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"glytwin: counterfactual interventions for postprandial hyperglycemia"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config, "experiment or service config (JSON)");
  auto* seed_opt = app.add_option("--seed", seed, "override the experiment seed");
  app.add_option("--out", g.out, "output directory or file");

  auto* synth = app.add_subcommand("synth", "generate a raw synthetic cohort");
  std::string raw_dir;
  auto* ingest = app.add_subcommand("ingest", "turn raw event streams into factual samples");
  ingest->add_option("--raw", raw_dir, "directory with profiles.csv and <patient>.csv")->required();
  std::string data, sim_data, model;
  std::size_t row = 0;
  auto* train = app.add_subcommand("train", "train the classifier and the simulator");
  train->add_option("--data", data, "samples CSV")->required();
  train->add_option("--simulator-data", sim_data, "separate samples CSV for the simulator");
  auto* generate = app.add_subcommand("generate", "generate one counterfactual");
  generate->add_option("--model", model, "classifier model file")->required();
  generate->add_option("--data", data, "samples CSV (history for personal bounds)")->required();
  generate->add_option("--row", row, "0-based sample row");
  auto* evaluate = app.add_subcommand("evaluate", "full evaluation against the nearest-instance baseline");
  auto* ag = app.add_subcommand("ablate-gamma", "sweep the target confidence");
  auto* ad = app.add_subcommand("ablate-delta", "sweep the step size as a share of the feature range");
  auto* sub = app.add_subcommand("subgroups", "metrics by age, sex, A1C and years from diagnosis");
  auto* serve = app.add_subcommand("serve", "run the HTTP service");
  int port = 0;
  auto* port_opt = serve->add_option("--port", port, "override the configured port");
  for (auto* s : app.get_subcommands({})) s->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("UsageError", e.what());
    return 2;
  }
  if (*seed_opt) g.seed = seed;

  try {
    if (*synth) return cmd_synth(g);
    if (*ingest) return cmd_ingest(g, raw_dir);
    if (*train) return cmd_train(g, data, sim_data);
    if (*generate) return cmd_generate(g, model, data, row);
    if (*evaluate) return cmd_evaluate(g);
    if (*ag) return cmd_sweep(g, true);
    if (*ad) return cmd_sweep(g, false);
    if (*sub) return cmd_subgroups(g);
    if (*serve) return cmd_serve(g, *port_opt ? std::optional<int>(port) : std::nullopt);
  } catch (const Error& e) {
    print_error(to_string(e.code()), e.detail());
    return 1;
  } catch (const std::exception& e) {
    print_error("InternalError", e.what());
    return 1;
  }
  return 1;
}
