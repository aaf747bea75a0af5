#include "bgw/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <optional>
#include <sstream>

#include <unistd.h>

#include "bgw/errors.hpp"
#include "bgw/lyapunov.hpp"
#include "bgw/montecarlo.hpp"
#include "bgw/qsd_family.hpp"

namespace bgw {

namespace fs = std::filesystem;

const std::vector<std::string>& pipeline_stages() {
  static const std::vector<std::string> stages{"validate", "spectral", "kernel",   "qsd",     "qsd-family",
                                               "lyapunov", "verify-e", "simulate", "yaglom"};
  return stages;
}

std::vector<std::string> stage_dependencies(const std::string& stage) {
  if (stage == "qsd") return {"kernel"};
  if (stage == "qsd-family") return {"spectral", "kernel", "qsd"};
  if (stage == "lyapunov") return {"spectral", "kernel", "qsd"};
  if (stage == "verify-e") return {"spectral", "kernel", "qsd"};
  if (stage == "yaglom") return {"kernel", "qsd"};
  return {};
}

namespace {

bool known_stage(const std::string& s) {
  const auto& all = pipeline_stages();
  return std::find(all.begin(), all.end(), s) != all.end();
}

const Json& empty_object() {
  static const Json j = Json::object();
  return j;
}

void require_seed(const Json& params, const std::string& stage) {
  if (!params.contains("seed")) {
    throw ValidationError("stage '" + stage + "' needs an explicit \"seed\"");
  }
}

BuildMode parse_mode(const std::string& s) {
  if (s == "exact") return BuildMode::exact;
  if (s == "mc" || s == "monte_carlo") return BuildMode::monte_carlo;
  throw ValidationError("mode must be exact or mc, got '" + s + "'");
}

template <class E>
void rewrap_as(const Error& e, const std::string& prefix) {
  if (dynamic_cast<const E*>(&e)) throw E(prefix + e.what());
}

[[noreturn]] void rethrow_in_stage(const Error& e, const std::string& stage) {
  const std::string prefix = "stage '" + stage + "': ";
  rewrap_as<PeriodicityError>(e, prefix);
  rewrap_as<ConvergenceError>(e, prefix);
  rewrap_as<ValidationError>(e, prefix);
  rewrap_as<DomainError>(e, prefix);
  rewrap_as<ResourceError>(e, prefix);
  rewrap_as<NumericError>(e, prefix);
  rewrap_as<RangeError>(e, prefix);
  rewrap_as<StatisticsError>(e, prefix);
  rewrap_as<DependencyError>(e, prefix);
  throw Error(prefix + e.what());
}

OrderedJson vector_json(const Eigen::VectorXd& v) {
  OrderedJson a = OrderedJson::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Eigen::VectorXd vector_from_json(const Json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].is_null() ? NAN : j[i].get<double>();
  return v;
}

OrderedJson doubles_json(const std::vector<double>& v) {
  OrderedJson a = OrderedJson::array();
  for (double x : v) a.push_back(x);
  return a;
}

OrderedJson optional_json(const std::optional<double>& x) {
  return x ? OrderedJson(*x) : OrderedJson(nullptr);
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

class Runner {
 public:
  Runner(const ExperimentConfig& config, bool load_missing)
      : config_(config), out_(config.output_dir), load_missing_(load_missing), spec_(config.model()) {
    fs::create_directories(out_);
    log_.open(out_ / "run.log", std::ios::app);
    char host[256] = {};
    gethostname(host, sizeof host - 1);
    log("run start host=" + std::string(host) + " model=" + spec_.name());
  }

  void run(const std::string& stage) {
    const auto t0 = std::chrono::steady_clock::now();
    log("stage " + stage + " start");
    try {
      dispatch(stage);
    } catch (const Error& e) {
      log("stage " + stage + " error: " + e.what());
      rethrow_in_stage(e, stage);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log("stage " + stage + " done in " + format_double(secs) + " s");
  }

  void log(const std::string& msg) {
    if (log_) log_ << timestamp() << ' ' << msg << '\n' << std::flush;
  }

 private:
  const Json& params(const std::string& stage) const { return config_.stage_params(stage); }

  void dispatch(const std::string& stage) {
    if (stage == "validate") return validate();
    if (stage == "spectral") return spectral();
    if (stage == "kernel") return kernel();
    if (stage == "qsd") return qsd();
    if (stage == "qsd-family") return family();
    if (stage == "lyapunov") return lyapunov();
    if (stage == "verify-e") return verify_e();
    if (stage == "simulate") return simulate();
    if (stage == "yaglom") return yaglom();
    throw ValidationError("unknown stage '" + stage + "'");
  }

  void write(const std::string& name, const OrderedJson& j) { write_text(out_ / name, dump_artifact(j)); }

  OrderedJson header(const std::string& stage) const {
    OrderedJson j;
    j["stage"] = stage;
    j["model"] = spec_.name();
    j["model_digest"] = spec_digest(spec_);
    return j;
  }

  // Inputs from earlier stages, re-read from disk when this run did not
  // produce them.
  const SpectralResult& need_spectral() {
    if (spectral_) return *spectral_;
    if (!load_missing_ || !fs::exists(out_ / "spectral.json")) {
      throw DependencyError("needs the spectral stage (spectral.json missing)");
    }
    const Json j = read_json(out_ / "spectral.json");
    SpectralResult s;
    s.lambda_star = j.at("lambda_star").get<double>();
    s.z_star = j.at("z_star").get<std::vector<double>>();
    if (!j.at("n0").is_null()) s.n0 = j.at("n0").get<int>();
    s.iterations = j.at("iterations").get<int>();
    s.residual = j.at("residual").get<double>();
    spectral_ = s;
    return *spectral_;
  }

  const TruncatedKernel& need_kernel() {
    if (kernel_) return *kernel_;
    if (!load_missing_) throw DependencyError("needs the kernel stage");
    kernel_ = read_kernel(out_ / "kernel.triplets", out_ / "kernel.states");
    return *kernel_;
  }

  const QsdEstimate& need_qsd() {
    if (qsd_) return *qsd_;
    if (!load_missing_ || !fs::exists(out_ / "qsd.json")) throw DependencyError("needs the qsd stage (qsd.json missing)");
    const Json j = read_json(out_ / "qsd.json");
    QsdEstimate q;
    q.theta = j.at("theta").get<double>();
    q.nu = vector_from_json(j.at("nu"));
    q.eta = vector_from_json(j.at("eta"));
    q.residual_left = j.at("residual_left").get<double>();
    q.residual_right = j.at("residual_right").get<double>();
    q.method = j.at("method").get<std::string>();
    if (q.nu.size() != static_cast<Eigen::Index>(need_kernel().size())) {
      throw DependencyError("qsd.json does not match the kernel on disk; rerun qsd");
    }
    qsd_ = q;
    return *qsd_;
  }

  void validate() {
    const Json& p = params("validate");
    const auto report = validate_model(spec_, p.value("samples", std::uint64_t{10000}), p.at("seed").get<std::uint64_t>());
    OrderedJson j = header("validate");
    j["pass"] = report.pass();
    j["exhaustive"] = report.exhaustive;
    j["superadditivity_checks"] = report.superadditivity_checks;
    j["subaffinity_checks"] = report.subaffinity_checks;
    j["certificate_alpha"] = doubles_json(spec_.mating().certificate().alpha);
    j["certificate_beta"] = doubles_json(spec_.mating().certificate().beta);
    j["certificate_derived"] = spec_.mating().certificate_derived();
    j["continuity_modulus"] = optional_json(report.continuity_modulus);
    OrderedJson v = OrderedJson::array();
    for (const auto& x : report.violations) v.push_back(OrderedJson{{"invariant", x.invariant}, {"witness", x.witness}});
    j["violations"] = v;
    write("validate.json", j);
  }

  void spectral() {
    const Json& p = params("spectral");
    spectral_ = power_iterate(spec_, p.value("tol", 1e-13), p.value("max_iter", 100000));
    const auto prim = check_primitivity(spec_, p.value("primitivity_max_m", 50));
    OrderedJson j = header("spectral");
    j["lambda_star"] = spectral_->lambda_star;
    j["z_star"] = doubles_json(spectral_->z_star);
    j["n0"] = spectral_->n0 ? OrderedJson(*spectral_->n0) : OrderedJson(nullptr);
    j["residual"] = spectral_->residual;
    j["iterations"] = spectral_->iterations;
    OrderedJson off = OrderedJson::array();
    for (const auto& [i, c] : prim.offending) off.push_back(OrderedJson::array({i + 1, c + 1}));
    j["primitivity_offending"] = off;
    write("spectral.json", j);
  }

  void kernel() {
    const Json& p = params("kernel");
    const Count radius = p.value("radius", Count{8});
    const BuildMode mode = parse_mode(p.value("mode", std::string("exact")));
    if (mode == BuildMode::exact) {
      kernel_ = build_kernel_exact(spec_, radius, p.value("cap", kDefaultCap));
    } else {
      require_seed(p, "kernel");
      kernel_ = build_kernel_mc(spec_, radius, p.value("samples", std::uint64_t{100000}), p.at("seed").get<std::uint64_t>());
    }
    write_kernel(*kernel_, out_ / "kernel.triplets", out_ / "kernel.states");
    OrderedJson j = header("kernel");
    j["radius"] = radius;
    j["mode"] = mode == BuildMode::exact ? "exact" : "mc";
    j["states"] = kernel_->size();
    j["nonzeros"] = kernel_->matrix.nonZeros();
    j["max_escaped"] = kernel_->size() ? kernel_->escaped.maxCoeff() : 0.0;
    j["conservation_error"] = kernel_->conservation_error();
    j["samples"] = kernel_->samples;
    j["seed"] = kernel_->seed;
    j["triplets"] = "kernel.triplets";
    j["state_map"] = "kernel.states";
    write("kernel.json", j);
  }

  void qsd() {
    const Json& p = params("qsd");
    const auto& k = need_kernel();
    qsd_ = solve_qsd(k, p.value("tol", 1e-12), p.value("max_iter", 100000), p.value("j_lo", 50), p.value("j_hi", 200));
    const auto classes = communication_classes(k, qsd_->theta, p.value("class_tol", 1e-10));
    OrderedJson j = header("qsd");
    j["theta"] = qsd_->theta;
    j["method"] = qsd_->method;
    j["iterations"] = qsd_->iterations;
    j["residual_left"] = qsd_->residual_left;
    j["residual_right"] = qsd_->residual_right;
    j["check_tol"] = p.value("check_tol", 1e-10);
    j["nu"] = vector_json(qsd_->nu);
    j["eta"] = vector_json(qsd_->eta);
    OrderedJson cl = OrderedJson::array();
    for (const auto& c : classes.classes) {
      OrderedJson members = OrderedJson::array();
      for (auto s : c.states) members.push_back(state_json(k.states[s]));
      cl.push_back(OrderedJson{{"theta", c.theta}, {"period", c.period}, {"states", members}});
    }
    j["classes"] = cl;
    j["theta_bar"] = classes.theta_bar;
    j["classes_consistent"] = classes.consistent;
    OrderedJson je = OrderedJson::array();
    for (std::size_t s = 0; s < qsd_->j_estimates.size(); ++s) {
      const auto& e = qsd_->j_estimates[s];
      je.push_back(OrderedJson{{"state", state_json(k.states[s])},
                               {"j", e.j ? OrderedJson(*e.j) : OrderedJson(nullptr)},
                               {"slope", e.slope},
                               {"residual", e.residual}});
    }
    j["j_estimates"] = je;
    write("qsd.json", j);
  }

  void family() {
    const Json& p = params("qsd-family");
    const auto& k = need_kernel();
    const auto& q = need_qsd();
    const auto& s = need_spectral();
    std::vector<double> grid;
    const Json lg = p.value("lambda_grid", Json("default"));
    if (lg.is_string()) {
      if (lg.get<std::string>() != "default") throw ValidationError("lambda_grid must be \"default\" or a list");
      grid = default_lambda_grid(q.theta, p.value("grid_points", 8));
    } else {
      grid = lg.get<std::vector<double>>();
    }
    std::vector<std::size_t> anchors;
    const Json an = p.value("anchors", Json("auto"));
    if (an.is_string()) {
      if (an.get<std::string>() != "auto") throw ValidationError("anchors must be \"auto\" or a list of states");
      anchors = auto_anchors(k, s);
    } else {
      for (const auto& a : an) anchors.push_back(k.states.at(state_from_json(a)));
    }
    const double tail_tol = p.value("tail_tol", 1e-12);
    const auto report = build_family(k, q.theta, grid, anchors, tail_tol);
    const auto ups = estimate_upsilon0(k, q, p.value("upsilon_lo", 100), p.value("upsilon_hi", 200));

    OrderedJson j = header("qsd-family");
    j["theta"] = q.theta;
    j["lambda_grid"] = doubles_json(grid);
    OrderedJson al = OrderedJson::array();
    for (auto a : anchors) al.push_back(state_json(k.states[a]));
    j["anchors"] = al;
    j["tail_tol"] = tail_tol;
    j["check_tol"] = p.value("check_tol", 1e-10);
    j["max_identity_residual"] = report.max_identity_residual;
    OrderedJson dec = OrderedJson::array();
    for (bool b : report.defect_decreasing) dec.push_back(b);
    j["defect_decreasing"] = dec;
    j["min_pairwise_distance"] = optional_json(report.min_pairwise_distance);
    j["upsilon0"] = OrderedJson{{"value", ups.value},
                                {"regression_rate", ups.regression_rate},
                                {"n_lo", ups.n_lo},
                                {"n_hi", ups.n_hi},
                                {"start_state", state_json(k.states[ups.start_state])},
                                {"consistent", ups.consistent}};
    OrderedJson entries = OrderedJson::array();
    for (const auto& e : report.entries) {
      OrderedJson mu = OrderedJson::array();
      for (Eigen::Index i = 0; i < e.mu.size(); ++i) {
        if (e.mu(i) != 0.0) mu.push_back(OrderedJson::array({state_json(k.states[static_cast<std::size_t>(i)]), e.mu(i)}));
      }
      entries.push_back(OrderedJson{{"lambda", e.lambda},
                                    {"anchor", state_json(k.states[e.anchor])},
                                    {"S", e.S},
                                    {"defect", e.one_step_defect},
                                    {"identity_residual", e.identity_residual},
                                    {"terms", e.terms},
                                    {"mu", mu}});
    }
    j["entries"] = entries;
    write("qsd_family.json", j);
  }

  void lyapunov() {
    const Json& p = params("lyapunov");
    const auto& s = need_spectral();
    const auto& q = need_qsd();
    DriftOptions o;
    o.a = p.value("a", o.a);
    o.radius = p.value("radius", o.radius);
    o.mode = parse_mode(p.value("mode", std::string("exact")));
    o.cap = p.value("cap", o.cap);
    o.samples = p.value("samples", o.samples);
    if (o.mode == BuildMode::monte_carlo) {
      require_seed(p, "lyapunov");
      o.seed = p.at("seed").get<std::uint64_t>();
    }
    o.theta0_hat = q.theta;
    o.grid_points = p.value("grid_points", o.grid_points);
    if (p.contains("ladder")) o.ladder = p.at("ladder").get<std::vector<Count>>();
    const auto r = verify_drift(spec_, s, o);

    OrderedJson j = header("lyapunov");
    j["a"] = r.a;
    j["radius"] = r.checked_radius;
    j["mode"] = r.mode == BuildMode::exact ? "exact" : "mc";
    j["theta0_hat"] = r.theta0_hat;
    j["lambda_star_pow_a"] = r.asymptotic_rate;
    j["theta_a"] = r.theta_a;
    j["C_a"] = r.C_a;
    j["theta_a_below_theta0"] = r.theta_a_below_theta0;
    j["violation_free"] = r.violation_free();
    j["violations"] = r.violations.size();
    j["undetermined"] = r.undetermined.size();
    j["step1_monotone"] = r.step1_monotone;
    OrderedJson st = OrderedJson::array();
    for (const auto& pt : r.step1) {
      st.push_back(OrderedJson{{"k", pt.k}, {"z", state_json(pt.z)}, {"ratio", pt.ratio}, {"excess", pt.excess}});
    }
    j["step1"] = st;
    if (p.contains("r")) {
      const auto m = check_moment_assumption(spec_, s, q.theta, p.at("r").get<double>());
      j["moment"] = OrderedJson{{"r", m.r},
                                {"pass", m.pass},
                                {"margin", m.margin},
                                {"minimal_r", m.minimal_r},
                                {"moments", doubles_json(m.moments)},
                                {"note", m.note}};
    }
    OrderedJson states = OrderedJson::array();
    for (const auto& d : r.states) {
      states.push_back(OrderedJson{{"z", state_json(d.z)},
                                   {"Q", d.q},
                                   {"lhs", d.lhs},
                                   {"rhs", d.rhs},
                                   {"ci_lo", d.ci_lo},
                                   {"ci_hi", d.ci_hi}});
    }
    j["states"] = states;
    write("lyapunov.json", j);
  }

  void verify_e() {
    const Json& p = params("verify-e");
    const auto& k = need_kernel();
    const auto& s = need_spectral();
    const auto& q = need_qsd();
    const auto w = lyapunov_weights(spec_, s, p.value("a", 2.5), k.states);
    EOptions o;
    const std::string ss = p.value("small_set", std::string("auto"));
    if (ss.rfind("radius=", 0) == 0) {
      o.small_set_radius = std::stoll(ss.substr(7));
    } else if (ss != "auto") {
      throw ValidationError("small_set must be auto or radius=r");
    }
    if (p.contains("reference")) o.reference = state_from_json(p.at("reference"));
    o.window = p.value("window", o.window);
    o.n1_cap = p.value("n1_cap", o.n1_cap);
    o.n2_cap = p.value("n2_cap", o.n2_cap);
    o.grid_points = p.value("grid_points", o.grid_points);
    o.tol = p.value("tol", o.tol);
    const auto r = verify_assumption_E(k, q.theta, w, o);

    OrderedJson j = header("verify-e");
    j["small_set_radius"] = r.small_set_radius;
    j["small_set_size"] = r.small_set.size();
    j["theta0_hat"] = r.theta0_hat;
    j["theta_a"] = r.theta_a;
    j["C_a"] = r.C_a;
    j["theta1"] = r.theta1;
    j["theta2"] = r.theta2;
    j["E1"] = OrderedJson{{"pass", r.e1},
                          {"reference", state_json(k.states[r.reference])},
                          {"n1", r.n1 ? OrderedJson(*r.n1) : OrderedJson(nullptr)},
                          {"c1", r.c1}};
    j["E2prime"] = OrderedJson{{"pass", r.e2prime}, {"c2", r.c2}, {"worst_outside_K", r.e2prime_worst}};
    j["E3"] = OrderedJson{{"pass", r.e3}, {"c3", r.c3}, {"stabilized", r.c3_stabilized}, {"window", o.window}};
    OrderedJson periods = OrderedJson::array();
    for (int x : r.periods) periods.push_back(x);
    OrderedJson aper = OrderedJson::array();
    for (bool b : r.aperiodic) aper.push_back(b);
    j["E4"] = OrderedJson{{"pass", r.e4}, {"periods", periods}, {"reachable", aper}};
    j["E2"] = OrderedJson{{"pass", r.e2},
                          {"n2", r.n2 ? OrderedJson(*r.n2) : OrderedJson(nullptr)},
                          {"C_theta2", r.c_theta2},
                          {"identity_residual", r.phi2_identity_residual},
                          {"drift_worst", r.phi2_drift_worst},
                          {"inf_small_set", r.phi2_inf_small_set},
                          {"sup", r.phi2_sup},
                          {"note", r.e2_note}};
    j["all_pass"] = r.all_pass();
    write("verify_e.json", j);
  }

  InitialLaw initial_law(const Json& p, const char* stage) {
    const Json z0 = p.value("z0", Json::array({1}));
    if (z0.is_string()) {
      if (z0.get<std::string>() != "nu") throw ValidationError(std::string(stage) + ": z0 must be a state or \"nu\"");
      return InitialLaw::from_vector(need_kernel().states, need_qsd().nu);
    }
    StateVector z = state_from_json(z0);
    if (z.size() != spec_.p()) throw ValidationError(std::string(stage) + ": z0 has the wrong dimension");
    return InitialLaw::dirac(std::move(z));
  }

  static OrderedJson initial_json(const Json& p) {
    const Json z0 = p.value("z0", Json::array({1}));
    return z0.is_string() ? OrderedJson(z0.get<std::string>()) : state_json(state_from_json(z0));
  }

  void simulate() {
    const Json& p = params("simulate");
    require_seed(p, "simulate");
    const auto seed = p.at("seed").get<std::uint64_t>();
    const int horizon = p.value("horizon", 30);
    const auto n_traj = p.value("n_traj", std::uint64_t{100000});
    SimulationOptions so;
    so.population_cap = p.value("population_cap", so.population_cap);
    const auto batch = simulate_batch(spec_, initial_law(p, "simulate"), horizon, n_traj, seed, so);

    std::string tsv = "n\tsurvivors\tsurvival\n";
    for (int n = 0; n <= horizon; ++n) {
      const auto s = batch.survivors[static_cast<std::size_t>(n)];
      tsv += std::to_string(n) + '\t' + std::to_string(s) + '\t' +
             format_double(static_cast<double>(s) / static_cast<double>(n_traj)) + '\n';
    }
    write_text(out_ / "simulate.tsv", tsv);

    OrderedJson j = header("simulate");
    j["z0"] = initial_json(p);
    j["horizon"] = horizon;
    j["n_traj"] = n_traj;
    j["seed"] = seed;
    j["capped"] = batch.capped;
    j["censored"] = batch.survivors.back();
    try {
      const auto t = estimate_theta0(batch, p.value("min_survivors", std::uint64_t{50}), p.value("bootstrap", 400),
                                     seed ^ 0x9e3779b97f4a7c15ULL);
      j["theta_hat"] = t.theta;
      j["ci_lo"] = t.ci_lo;
      j["ci_hi"] = t.ci_hi;
      j["fit_lo"] = t.n_lo;
      j["fit_hi"] = t.n_hi;
    } catch (const RangeError& e) {
      j["theta_hat"] = nullptr;
      j["note"] = e.what();
    }
    j["table"] = "simulate.tsv";
    write("simulate.json", j);
  }

  void yaglom() {
    const Json& p = params("yaglom");
    require_seed(p, "yaglom");
    const auto& k = need_kernel();
    const auto& q = need_qsd();
    const auto seed = p.at("seed").get<std::uint64_t>();
    const auto n_traj = p.value("n_traj", std::uint64_t{100000});
    std::vector<int> horizons;
    const Json h = p.value("horizons", Json(20));
    if (h.is_number_integer()) {
      for (int n = 0; n <= h.get<int>(); ++n) horizons.push_back(n);
    } else {
      horizons = h.get<std::vector<int>>();
    }
    YaglomOptions yo;
    yo.threshold = p.value("threshold", yo.threshold);
    const std::string chain = p.value("chain", std::string("kernel"));
    const auto z0 = initial_law(p, "yaglom");
    YaglomResult r;
    if (chain == "kernel") {
      r = yaglom_convergence_kernel(k, z0, horizons, q, n_traj, seed, yo);
    } else if (chain == "process") {
      r = yaglom_convergence(spec_, z0, horizons, k, q, n_traj, seed, yo);
    } else {
      throw ValidationError("yaglom chain must be kernel or process");
    }

    std::string tsv = "n\tsurvivors\tsurvival\ttv\tnoise\n";
    OrderedJson rows = OrderedJson::array();
    for (const auto& row : r.rows) {
      tsv += std::to_string(row.n) + '\t' + std::to_string(row.survivors) + '\t' + format_double(row.survival) + '\t' +
             (row.tv ? format_double(*row.tv) : std::string("NA")) + '\t' + format_double(row.noise) + '\n';
      rows.push_back(OrderedJson{{"n", row.n},
                                 {"survivors", row.survivors},
                                 {"survival", row.survival},
                                 {"tv", optional_json(row.tv)},
                                 {"noise", row.noise}});
    }
    write_text(out_ / "yaglom.tsv", tsv);

    OrderedJson j = header("yaglom");
    j["chain"] = chain;
    j["z0"] = initial_json(p);
    j["n_traj"] = n_traj;
    j["seed"] = seed;
    j["gamma_hat"] = optional_json(r.gamma_hat);
    j["envelope_C"] = r.envelope_C;
    j["fit_lo"] = r.fit_lo;
    j["fit_hi"] = r.fit_hi;
    j["reference_ratio"] = optional_json(r.reference_ratio);
    j["eventually_decreasing"] = r.eventually_decreasing;
    j["envelope_holds"] = r.envelope_holds;
    j["rows"] = rows;
    j["table"] = "yaglom.tsv";
    write("yaglom.json", j);
  }

  const ExperimentConfig& config_;
  fs::path out_;
  bool load_missing_;
  ModelSpec spec_;
  std::ofstream log_;
  std::optional<SpectralResult> spectral_;
  std::optional<TruncatedKernel> kernel_;
  std::optional<QsdEstimate> qsd_;
};

struct CheckList {
  OrderedJson items = OrderedJson::array();
  std::vector<std::string> hard_failures;

  void add(const std::string& name, bool hard, bool pass, OrderedJson detail) {
    items.push_back(OrderedJson{{"name", name}, {"hard", hard}, {"status", pass ? "PASS" : "FAIL"}, {"detail", detail}});
    if (hard && !pass) hard_failures.push_back(name);
  }
};

std::optional<OrderedJson> maybe_read(const fs::path& p) {
  if (!fs::exists(p)) return std::nullopt;
  std::ifstream in(p);
  return OrderedJson::parse(in);
}

}  // namespace

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  return from_json(read_json(path), path.parent_path());
}

ExperimentConfig ExperimentConfig::from_json(Json raw, const fs::path& base_dir) {
  ExperimentConfig c;
  c.raw = std::move(raw);
  c.base_dir = base_dir;
  if (!c.raw.is_object()) throw ValidationError("config must be a JSON object");
  if (!c.raw.contains("model")) throw ValidationError("config needs a \"model\"");
  if (c.raw.at("model").is_string()) {
    c.model_path = base_dir / c.raw.at("model").get<std::string>();
  } else if (!c.raw.at("model").is_object()) {
    throw ValidationError("\"model\" must be a path or an inline model");
  }
  c.output_dir = base_dir / c.raw.value("output_dir", std::string("out"));
  if (c.raw.contains("stages")) {
    for (const auto& s : c.raw.at("stages")) {
      const auto name = s.get<std::string>();
      if (!known_stage(name)) throw ValidationError("unknown stage '" + name + "'");
      c.stages.push_back(name);
    }
  }
  return c;
}

const Json& ExperimentConfig::stage_params(const std::string& stage) const {
  if (raw.contains(stage)) {
    const Json& j = raw.at(stage);
    if (!j.is_object()) throw ValidationError("parameters of stage '" + stage + "' must be an object");
    return j;
  }
  return empty_object();
}

ModelSpec ExperimentConfig::model() const {
  if (model_path.empty()) return parse_model(raw.at("model"), raw.value("name", std::string("inline")));
  return load_model(model_path);
}

namespace {

void check_stage_config(const ExperimentConfig& c, const std::string& stage) {
  const Json& p = c.stage_params(stage);
  if (stage == "validate" || stage == "simulate" || stage == "yaglom") require_seed(p, stage);
  if ((stage == "kernel" || stage == "lyapunov") && p.value("mode", std::string("exact")) != "exact") {
    require_seed(p, stage);
  }
}

}  // namespace

PipelineResult run_pipeline(const ExperimentConfig& config) {
  if (config.stages.empty()) throw ValidationError("config lists no stages");
  for (const auto& s : config.stages) {
    for (const auto& d : stage_dependencies(s)) {
      if (std::find(config.stages.begin(), config.stages.end(), d) == config.stages.end()) {
        throw DependencyError("stage '" + s + "' requires stage '" + d + "'");
      }
    }
    check_stage_config(config, s);
  }
  {
    Runner runner(config, false);
    for (const auto& s : pipeline_stages()) {
      if (std::find(config.stages.begin(), config.stages.end(), s) != config.stages.end()) runner.run(s);
    }
    runner.log("summary");
  }
  auto result = summarize(config.output_dir, config.stages);
  write_text(config.output_dir / "summary.json", dump_artifact(result.summary));
  return result;
}

PipelineResult run_stage(const ExperimentConfig& config, const std::string& stage) {
  if (!known_stage(stage)) throw ValidationError("unknown stage '" + stage + "'");
  check_stage_config(config, stage);
  Runner runner(config, true);
  runner.run(stage);
  return summarize(config.output_dir, {stage});
}

PipelineResult summarize(const fs::path& out, const std::vector<std::string>& stages) {
  const auto read = [&](const std::string& stage, const char* file) -> std::optional<OrderedJson> {
    if (std::find(stages.begin(), stages.end(), stage) == stages.end()) return std::nullopt;
    return maybe_read(out / file);
  };
  CheckList checks;
  OrderedJson s;
  const auto validate = read("validate", "validate.json");
  const auto spectral = read("spectral", "spectral.json");
  const auto kernel = read("kernel", "kernel.json");
  const auto qsd = read("qsd", "qsd.json");
  const auto family = read("qsd-family", "qsd_family.json");
  const auto lyap = read("lyapunov", "lyapunov.json");
  const auto ve = read("verify-e", "verify_e.json");
  const auto sim = read("simulate", "simulate.json");
  const auto yag = read("yaglom", "yaglom.json");

  for (const auto* j : {&validate, &spectral, &kernel, &qsd, &family, &lyap, &ve, &sim, &yag}) {
    if (*j) {
      s["model"] = (**j).at("model");
      s["model_digest"] = (**j).at("model_digest");
      break;
    }
  }

  std::optional<double> lambda, theta, upsilon;
  if (spectral) lambda = spectral->at("lambda_star").get<double>();
  if (qsd) theta = qsd->at("theta").get<double>();
  if (family) upsilon = family->at("upsilon0").at("value").get<double>();
  s["lambda_star"] = optional_json(lambda);
  s["theta0"] = optional_json(theta);
  s["upsilon0"] = optional_json(upsilon);

  constexpr double slack = 1e-9;
  if (validate) {
    checks.add("model_assumptions", true, validate->at("pass").get<bool>(),
               OrderedJson{{"violations", validate->at("violations").size()}});
  }
  if (spectral) {
    checks.add("subcritical", false, *lambda < 1.0, OrderedJson{{"lambda_star", *lambda}});
    checks.add("primitive", false, !spectral->at("n0").is_null(), OrderedJson{{"n0", spectral->at("n0")}});
  }
  if (theta && upsilon) {
    checks.add("theta0<=upsilon0", true, *theta <= *upsilon + slack,
               OrderedJson{{"theta0", *theta}, {"upsilon0", *upsilon}});
    checks.add("upsilon0_regression_consistent", false, family->at("upsilon0").at("consistent").get<bool>(),
               OrderedJson{{"regression_rate", family->at("upsilon0").at("regression_rate")}});
  }
  if (upsilon && lambda) {
    checks.add("upsilon0<=lambda_star", true, *upsilon <= *lambda + slack,
               OrderedJson{{"upsilon0", *upsilon}, {"lambda_star", *lambda}});
  }
  if (theta && lambda && !upsilon) {
    checks.add("theta0<=lambda_star", true, *theta <= *lambda + slack,
               OrderedJson{{"theta0", *theta}, {"lambda_star", *lambda}});
  }
  if (qsd) {
    const double tol = qsd->at("check_tol").get<double>();
    const double rl = qsd->at("residual_left").get<double>();
    const double rr = qsd->at("residual_right").get<double>();
    checks.add("qsd_residuals", true, rl <= tol && rr <= tol,
               OrderedJson{{"left", rl}, {"right", rr}, {"tol", tol}});
    checks.add("class_theta_consistent", false, qsd->at("classes_consistent").get<bool>(),
               OrderedJson{{"theta_bar", qsd->at("theta_bar")}});
  }
  if (family) {
    const double tol = family->at("check_tol").get<double>();
    const double res = family->at("max_identity_residual").get<double>();
    checks.add("family_defect_identity", true, res <= tol, OrderedJson{{"max_residual", res}, {"tol", tol}});
    bool dec = true;
    for (const auto& b : family->at("defect_decreasing")) dec = dec && b.get<bool>();
    checks.add("family_defect_decreasing", false, dec, OrderedJson{{"per_lambda", family->at("defect_decreasing")}});
  }
  if (lyap) {
    checks.add("drift", true, lyap->at("violation_free").get<bool>(),
               OrderedJson{{"theta_a", lyap->at("theta_a")},
                           {"C_a", lyap->at("C_a")},
                           {"violations", lyap->at("violations")},
                           {"undetermined", lyap->at("undetermined")}});
    checks.add("theta_a<theta0", false, lyap->at("theta_a_below_theta0").get<bool>(),
               OrderedJson{{"theta_a", lyap->at("theta_a")}, {"theta0_hat", lyap->at("theta0_hat")}});
    checks.add("step1_trend", false, lyap->at("step1_monotone").get<bool>(),
               OrderedJson{{"lambda_star_pow_a", lyap->at("lambda_star_pow_a")}});
    if (lyap->contains("moment")) {
      checks.add("moment_assumption", false, lyap->at("moment").at("pass").get<bool>(),
                 OrderedJson{{"r", lyap->at("moment").at("r")}, {"minimal_r", lyap->at("moment").at("minimal_r")}});
    }
  }
  if (ve) {
    for (const char* key : {"E1", "E2prime", "E3", "E4", "E2"}) {
      checks.add(std::string("assumption_") + key, false, ve->at(key).at("pass").get<bool>(), OrderedJson(ve->at(key)));
    }
  }
  if (sim) {
    OrderedJson d{{"theta_hat", sim->at("theta_hat")}};
    if (sim->contains("ci_lo")) {
      d["ci_lo"] = sim->at("ci_lo");
      d["ci_hi"] = sim->at("ci_hi");
    }
    s["simulation"] = d;
  }
  if (yag) {
    checks.add("yaglom_eventually_decreasing", false, yag->at("eventually_decreasing").get<bool>(),
               OrderedJson{{"gamma_hat", yag->at("gamma_hat")}, {"reference_ratio", yag->at("reference_ratio")}});
    checks.add("yaglom_envelope", false, yag->at("envelope_holds").get<bool>(),
               OrderedJson{{"envelope_C", yag->at("envelope_C")}});
    s["yaglom_table"] = yag->at("rows");
  }
  s["checks"] = checks.items;
  s["hard_failures"] = checks.hard_failures.size();
  s["status"] = checks.hard_failures.empty() ? "PASS" : "FAIL";

  PipelineResult r;
  r.summary = std::move(s);
  r.hard_failures = checks.hard_failures;
  r.exit_code = checks.hard_failures.empty() ? 0 : 1;
  return r;
}

}  // namespace bgw
