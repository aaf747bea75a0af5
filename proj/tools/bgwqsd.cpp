#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bgw/errors.hpp"
#include "bgw/pipeline.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::string> output_dir;
  std::optional<long long> radius;
  std::optional<std::string> mode;
  std::optional<unsigned long long> samples;
  std::optional<unsigned long long> seed;
  std::optional<double> tol;
  std::optional<std::string> lambda_grid;
  std::optional<std::string> anchors;
  std::optional<double> tail_tol;
  std::optional<double> a;
  std::optional<std::string> small_set;
  std::optional<int> window;
  std::optional<std::string> z0;
  std::optional<int> horizon;
  std::optional<unsigned long long> n_traj;
  std::optional<std::string> chain;
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string part;
  std::istringstream in(s);
  while (std::getline(in, part, sep)) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

bgw::Json state_arg(const std::string& s) {
  bgw::Json a = bgw::Json::array();
  for (auto v : bgw::parse_state(s)) a.push_back(v);
  return a;
}

void apply(bgw::Json& raw, const std::string& stage, const Overrides& o) {
  bgw::Json& p = raw[stage];
  if (p.is_null()) p = bgw::Json::object();
  if (o.output_dir) raw["output_dir"] = *o.output_dir;
  if (o.radius) p["radius"] = *o.radius;
  if (o.mode) p["mode"] = *o.mode;
  if (o.samples) p["samples"] = *o.samples;
  if (o.seed) p["seed"] = *o.seed;
  if (o.tol) p["tol"] = *o.tol;
  if (o.lambda_grid) {
    if (*o.lambda_grid == "default") {
      p["lambda_grid"] = "default";
    } else {
      bgw::Json g = bgw::Json::array();
      for (const auto& x : split(*o.lambda_grid, ',')) g.push_back(std::stod(x));
      p["lambda_grid"] = g;
    }
  }
  if (o.anchors) {
    if (*o.anchors == "auto") {
      p["anchors"] = "auto";
    } else {
      bgw::Json list = bgw::Json::array();
      for (const auto& x : split(*o.anchors, ';')) list.push_back(state_arg(x));
      p["anchors"] = list;
    }
  }
  if (o.tail_tol) p["tail_tol"] = *o.tail_tol;
  if (o.a) p["a"] = *o.a;
  if (o.small_set) p["small_set"] = *o.small_set;
  if (o.window) p["window"] = *o.window;
  if (o.z0) p["z0"] = *o.z0 == "nu" ? bgw::Json("nu") : state_arg(*o.z0);
  if (o.horizon) p[stage == "yaglom" ? "horizons" : "horizon"] = *o.horizon;
  if (o.n_traj) p["n_traj"] = *o.n_traj;
  if (o.chain) p["chain"] = *o.chain;
}

int run(const std::string& stage, const Overrides& o) {
  bgw::ExperimentConfig base = bgw::ExperimentConfig::load(o.config);
  bgw::Json raw = base.raw;
  if (stage != "pipeline") apply(raw, stage, o);
  else if (o.output_dir) raw["output_dir"] = *o.output_dir;
  const auto config = bgw::ExperimentConfig::from_json(raw, base.base_dir);
  const auto result = stage == "pipeline" ? bgw::run_pipeline(config) : bgw::run_stage(config, stage);
  for (const auto& c : result.summary.value("checks", bgw::OrderedJson::array())) {
    std::cout << c.at("status").get<std::string>() << "  " << c.at("name").get<std::string>()
              << (c.at("hard").get<bool>() ? "" : " (diagnostic)") << '\n';
  }
  std::cout << "artifacts in " << config.output_dir.string() << '\n';
  return result.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quasi-stationary analysis of multitype bisexual Galton-Watson processes"};
  app.require_subcommand(1);
  Overrides o;
  std::string chosen;

  const auto add = [&](const std::string& name, const std::string& help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", o.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--output-dir", o.output_dir, "override the output directory");
    sub->callback([&chosen, name] { chosen = name; });
    return sub;
  };

  add("validate", "check the model assumptions")
      ->add_option("--samples", o.samples, "random pairs for unbounded matings");
  app.get_subcommand("validate")->add_option("--seed", o.seed);
  add("spectral", "eigen-data of the limit operator")->add_option("--tol", o.tol);

  auto* kernel = add("kernel", "build the truncated kernel");
  kernel->add_option("--radius", o.radius);
  kernel->add_option("--mode", o.mode)->check(CLI::IsMember({"exact", "mc"}));
  kernel->add_option("--samples", o.samples);
  kernel->add_option("--seed", o.seed);

  add("qsd", "quasi-stationary distribution of the kernel")->add_option("--tol", o.tol);

  auto* family = add("qsd-family", "resolvent-series family of QSDs");
  family->add_option("--lambda-grid", o.lambda_grid, "default or comma-separated values");
  family->add_option("--anchors", o.anchors, "auto or states separated by ';' (coordinates by ',')");
  family->add_option("--tail-tol", o.tail_tol);

  auto* lyap = add("lyapunov", "drift inequality for Q_a = P^a");
  lyap->add_option("--a", o.a);
  lyap->add_option("--radius", o.radius);
  lyap->add_option("--mode", o.mode)->check(CLI::IsMember({"exact", "mc"}));
  lyap->add_option("--samples", o.samples);
  lyap->add_option("--seed", o.seed);

  auto* ve = add("verify-e", "Assumption E diagnostics");
  ve->add_option("--small-set", o.small_set, "auto or radius=r");
  ve->add_option("--window", o.window);
  ve->add_option("--a", o.a);

  auto* sim = add("simulate", "Monte Carlo extinction times");
  sim->add_option("--z0", o.z0, "initial state, e.g. 1 or 2,1");
  sim->add_option("--horizon", o.horizon);
  sim->add_option("--n-traj", o.n_traj);
  sim->add_option("--seed", o.seed);

  auto* yag = add("yaglom", "conditional law versus the QSD");
  yag->add_option("--z0", o.z0, "initial state or nu");
  yag->add_option("--horizon", o.horizon, "largest horizon");
  yag->add_option("--n-traj", o.n_traj);
  yag->add_option("--seed", o.seed);
  yag->add_option("--chain", o.chain)->check(CLI::IsMember({"kernel", "process"}));

  add("pipeline", "run every configured stage and write summary.json");

  CLI11_PARSE(app, argc, argv);

  try {
    return run(chosen, o);
  } catch (const bgw::DependencyError& e) {
    std::cerr << "dependency error: " << e.what() << '\n';
    return 3;
  } catch (const bgw::ValidationError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const bgw::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
}
