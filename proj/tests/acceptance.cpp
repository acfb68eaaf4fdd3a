// Acceptance suite. `acceptance` runs every criterion, `acceptance N` runs
// criterion N only. One PASS/FAIL line per criterion; exit status 1 when any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <boost/math/special_functions/gamma.hpp>
#include <json.hpp>

#include "lsgpr/benchmark.hpp"
#include "lsgpr/cli.hpp"
#include "lsgpr/embed.hpp"
#include "lsgpr/gp.hpp"
#include "lsgpr/sim.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace lsgpr;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

std::string fmt(const char* f, double a, double b, double c) {
  char buf[200];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// Subjects with random embeddings and one covariate so every block of the
// kernel carries signal.
std::vector<Subject> random_subjects(int n, int p, int d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 0.4);
  std::vector<Subject> out;
  for (int i = 0; i < n; ++i) {
    Subject s;
    s.id = std::to_string(i);
    s.embedding.intercept = normal(rng);
    s.embedding.latent.resize(p, d);
    for (int k = 0; k < p; ++k)
      for (int c = 0; c < d; ++c) s.embedding.latent(k, c) = c == 0 ? 0.5 : normal(rng);
    s.covariates = Eigen::VectorXd::Constant(1, normal(rng));
    out.push_back(std::move(s));
  }
  return out;
}

Eigen::VectorXd standard_normal(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

GpHyperparams random_theta(std::mt19937_64& rng, const DistanceMatrices& dist, const Eigen::VectorXd& y) {
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  GpHyperparams hp = default_initial_hyperparams(y, dist);
  for (int j = 0; j < 5; ++j) hp.theta[j] += unif(rng);
  return hp;
}

Outcome criterion1() {
  std::mt19937_64 rng(101);
  double worst = 0.0;
  int checked = 0;
  for (int instance = 0; instance < 5; ++instance) {
    const auto subjects = random_subjects(20, 8, 4, rng);
    const auto dist = distance_matrices(subjects);
    const Eigen::VectorXd y = standard_normal(20, rng);
    for (int t = 0; t < 10; ++t) {
      const GpHyperparams hp = random_theta(rng, dist, y);
      const auto g = gradient(hp, y, dist);
      for (int j = 0; j < 5; ++j) {
        const double h = 1e-5;
        GpHyperparams plus = hp, minus = hp;
        plus.theta[j] += h;
        minus.theta[j] -= h;
        const double fd = (neg_log_likelihood(plus, y, dist) - neg_log_likelihood(minus, y, dist)) / (2 * h);
        const double scale = std::max({std::abs(fd), std::abs(g[j]), 1e-12});
        worst = std::max(worst, std::abs(g[j] - fd) / scale);
        ++checked;
      }
    }
  }
  return {worst < 1e-5, fmt("max relative error %.2e over %.0f coordinates", worst, checked)};
}

Outcome criterion2() {
  std::mt19937_64 rng(202);
  int monotone = 0, terminated = 0;
  int converged = 0, capped = 0, underflow = 0;
  for (int instance = 0; instance < 20; ++instance) {
    const int n = 15 + instance;
    const auto subjects = random_subjects(n, 6, 3, rng);
    const auto dist = distance_matrices(subjects);
    const Eigen::VectorXd y = standard_normal(n, rng);
    const MleResult fit = fit_mle(y, dist, default_initial_hyperparams(y, dist));
    bool ok = true;
    for (std::size_t i = 1; i < fit.trace.size(); ++i) ok &= fit.trace[i] <= fit.trace[i - 1];
    monotone += ok;
    const std::size_t m = fit.trace.size();
    const bool small_step = m >= 2 && std::abs(fit.trace[m - 1] - fit.trace[m - 2]) < 1e-8;
    if (fit.status == MleStatus::Converged && small_step) ++converged, ++terminated;
    else if (fit.status == MleStatus::MaxIterations && fit.iterations == 1000) ++capped, ++terminated;
    else if (fit.status == MleStatus::StepUnderflow) ++underflow;
  }
  return {monotone == 20 && terminated == 20,
          std::to_string(monotone) + "/20 monotone traces; " + std::to_string(converged) + " converged, " +
              std::to_string(capped) + " hit maxiter, " + std::to_string(underflow) + " step underflow"};
}

Outcome criterion3() {
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> dens(0.1, 0.6);
  EmConfig cfg;
  cfg.dim = 5;
  cfg.prior_mode = PriorTermMode::SingleCopy;
  double worst_drop = 0.0;
  int iterations = 0;
  for (int net = 0; net < 10; ++net) {
    const EdgeSet edges = edge_vector(testing::random_network(30, dens(rng), rng));
    Rng em_rng(static_cast<std::uint64_t>(net) + 1);
    const EmResult res = embed_subject(edges, cfg, em_rng);
    for (std::size_t i = 1; i < res.trace.size(); ++i) worst_drop = std::max(worst_drop, res.trace[i - 1] - res.trace[i]);
    iterations += res.iterations;
  }
  return {worst_drop <= 1e-8, fmt("largest per-iteration decrease %.2e over %.0f EM iterations", worst_drop, iterations)};
}

Outcome criterion4() {
  bool ok = pg_expectation(0.0) == 0.25;
  std::string detail = ok ? "omega(0)=0.25" : fmt("omega(0)=%.17g", pg_expectation(0.0));
  double worst = 0.0;
  bool even = true;
  for (int i = 0; i < 1000; ++i) {
    const double delta = -20.0 + 40.0 * (i + 0.5) / 1000.0 + (i % 7) * 1e-7;
    const long double half = static_cast<long double>(delta) / 2.0L;
    const double reference = static_cast<double>(std::tanh(half) / (4.0L * half));
    worst = std::max(worst, std::abs(pg_expectation(delta) - reference));
    even &= pg_expectation(delta) == pg_expectation(-delta);
  }
  bool decreasing = true;
  double prev = pg_expectation(0.0);
  for (int i = 1; i <= 1000; ++i) {
    const double cur = pg_expectation(20.0 * i / 1000.0);
    decreasing &= cur < prev;
    prev = cur;
  }
  ok = ok && even && decreasing && worst <= 1e-12;
  detail += std::string(even ? ", even" : ", NOT even") + (decreasing ? ", strictly decreasing" : ", NOT decreasing") +
            fmt(", max deviation %.2e at 1000 points", worst);
  return {ok, detail};
}

Outcome criterion5() {
  SimConfig sim;
  sim.nodes = 50;
  sim.d0 = 5;
  sim.n_train = 10;
  sim.n_test = 0;
  sim.seed = 505;
  const SimDataset data = generate_scenario1(sim);
  EmConfig cfg;
  cfg.dim = 5;
  int good = 0;
  std::string rs;
  for (int i = 0; i < data.size(); ++i) {
    Rng rng(embedding_seed(sim.seed, i));
    const EmResult res = embed_subject(data.networks[static_cast<std::size_t>(i)], cfg, rng);
    const double r = testing::pearson(fitted_edge_probabilities(res.embedding),
                                      data.true_probabilities[static_cast<std::size_t>(i)]);
    good += r > 0.9;
    rs += fmt(i ? " %.2f" : "%.2f", r);
  }
  return {good >= 9, std::to_string(good) + "/10 subjects with r > 0.9 (r = " + rs + ")"};
}

Outcome criterion6() {
  const int n = 6;
  std::mt19937_64 rng(606);
  const auto subjects = random_subjects(n, 5, 3, rng);
  const auto dist = distance_matrices(subjects);
  const Eigen::VectorXd y = standard_normal(n, rng);

  SamplerState s;
  s.tau = 1.3;
  s.psi1 = 0.8;
  s.psi_u = 0.7;
  s.psi_a = 1.1;
  s.psi_z = 0.9;
  s.atoms = standard_normal(n, rng);
  GpPriors priors;
  priors.a_tau = 2.0;
  priors.b_tau = 1.0;
  priors.a_psi1 = 1.5;
  priors.b_psi1 = 0.7;

  SamplerConfig cfg;
  cfg.iterations = 5000;
  cfg.burn_in = 0;
  cfg.seed = 66;
  cfg.update_psi1 = cfg.update_lengthscales = cfg.update_atoms = false;
  const Chains tau_chain = gibbs_sample(y, dist, priors, cfg, s);
  const double tau_shape = priors.a_tau + 0.5 * n;
  const double tau_rate = priors.b_tau + 0.5 * (y - s.atoms).squaredNorm();
  const Eigen::VectorXd tau = tau_chain.hyper.col(0);
  const double p_tau = testing::ks_pvalue(std::vector<double>(tau.data(), tau.data() + tau.size()),
                                          [&](double x) { return boost::math::gamma_p(tau_shape, tau_rate * x); });

  cfg = SamplerConfig{};
  cfg.iterations = 5000;
  cfg.burn_in = 0;
  cfg.seed = 67;
  cfg.update_tau = cfg.update_lengthscales = cfg.update_atoms = false;
  const Chains psi_chain = gibbs_sample(y, dist, priors, cfg, s);
  Eigen::MatrixXd e0 = (-s.psi_u * dist.latent.array() - s.psi_a * dist.intercept.array() -
                        s.psi_z * dist.covariate.array()).exp().matrix();
  const double quad = s.atoms.dot(testing::gauss_solve(e0, s.atoms).solution);
  const double psi_shape = priors.a_psi1 + 0.5 * n;
  const double psi_scale = priors.b_psi1 + 0.5 * quad;
  const Eigen::VectorXd psi1 = psi_chain.hyper.col(1);
  const double p_psi = testing::ks_pvalue(std::vector<double>(psi1.data(), psi1.data() + psi1.size()),
                                          [&](double x) { return boost::math::gamma_q(psi_shape, psi_scale / x); });
  return {p_tau > 0.01 && p_psi > 0.01, fmt("KS p-values: tau %.3f, psi1 %.3f (5000 draws each)", p_tau, p_psi)};
}

// Shared by criteria 7 and 8.
const std::vector<BenchmarkRow>& desk_grid() {
  static const std::vector<BenchmarkRow> rows = [] {
    BenchmarkSpec spec;
    spec.cells = {{5, 0.5}};
    spec.replicates = 10;
    spec.sim.nodes = 40;
    spec.sim.n_train = 50;
    spec.sim.n_test = 50;
    spec.em.dim = 10;
    spec.methods = {Method::LsGpr1, Method::LsGpr2, Method::Ridge};
    spec.seed = 707;
    return run_benchmark(spec);
  }();
  return rows;
}

std::map<Method, std::vector<BenchmarkRow>> by_method(const std::vector<BenchmarkRow>& rows) {
  std::map<Method, std::vector<BenchmarkRow>> out;
  for (const auto& r : rows) out[r.method].push_back(r);
  return out;
}

Outcome criterion7() {
  const auto groups = by_method(desk_grid());
  for (const auto& r : desk_grid())
    if (!r.ok) return {false, "replicate " + std::to_string(r.replicate) + " " + to_string(r.method) + " failed: " + r.message};
  auto mean_mse = [&](Method m) {
    double s = 0.0;
    for (const auto& r : groups.at(m)) s += r.report.mse;
    return s / static_cast<double>(groups.at(m).size());
  };
  const double gpr1 = mean_mse(Method::LsGpr1), gpr2 = mean_mse(Method::LsGpr2), ridge = mean_mse(Method::Ridge);
  int wins = 0;
  for (std::size_t i = 0; i < groups.at(Method::Ridge).size(); ++i)
    wins += groups.at(Method::LsGpr1)[i].report.mse < groups.at(Method::Ridge)[i].report.mse;
  return {gpr1 < ridge && gpr2 < ridge && wins >= 8,
          fmt("mean MSE ls-GPR1 %.4f, ls-GPR2 %.4f, ridge %.4f", gpr1, gpr2, ridge) + "; ls-GPR1 better in " +
              std::to_string(wins) + "/10 replicates"};
}

Outcome criterion8() {
  const auto groups = by_method(desk_grid());
  double coverage = 0.0, width = 0.0, range = 0.0;
  const auto& rows = groups.at(Method::LsGpr2);
  for (const auto& r : rows) {
    if (!r.ok) return {false, "replicate " + std::to_string(r.replicate) + " failed: " + r.message};
    coverage += r.report.coverage;
    width += r.report.width;
    // trivial interval: the range of the standardized test responses
    SimConfig cfg;
    cfg.nodes = 40;
    cfg.seed = r.seed;
    const SimDataset data = generate_scenario1(cfg);
    const Eigen::VectorXd test = data.y.tail(cfg.n_test);
    range += test.maxCoeff() - test.minCoeff();
  }
  const double k = static_cast<double>(rows.size());
  coverage /= k;
  width /= k;
  range /= k;
  return {coverage >= 0.85 && width < range,
          fmt("ls-GPR2 coverage %.3f, mean width %.3f vs response range %.3f", coverage, width, range)};
}

Outcome criterion9() {
  int wins = 0;
  std::string detail;
  for (int run = 0; run < 5; ++run) {
    SimConfig sim;
    sim.nodes = 20;
    sim.sparsity = 0.25;
    sim.n_train = 50;
    sim.n_test = 0;
    sim.seed = 900 + static_cast<std::uint64_t>(run);
    const SimDataset data = generate_scenario1(sim);
    EmConfig em;
    em.dim = 10;
    auto subjects = embed_dataset(data, em, sim.seed);
    FitOptions opt;
    opt.mode = FitMode::Mcmc;
    opt.node_selection = true;
    opt.sampler.seed = derive_seed(sim.seed, 2);
    const GpModel model = fit_model(std::move(subjects), data.y, opt);
    const Eigen::VectorXd incl = model.chains->inclusion_probabilities();
    std::vector<bool> active(20, false);
    for (int k : data.active_nodes) active[static_cast<std::size_t>(k)] = true;
    double in = 0.0, out = 0.0;
    for (int k = 0; k < 20; ++k) (active[static_cast<std::size_t>(k)] ? in : out) += incl[k];
    in /= 5.0;
    out /= 15.0;
    wins += in > out;
    detail += fmt(run ? "; %.2f vs %.2f" : "%.2f vs %.2f", in, out);
  }
  return {wins >= 4, std::to_string(wins) + "/5 runs with active > inactive mean inclusion (" + detail + ")"};
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// JSON outputs embed the run configuration, which names the output paths;
// everything else must match byte for byte.
std::string numeric_content(const fs::path& path) {
  std::string text = slurp(path);
  if (path.extension() != ".json" || text.empty()) return text;
  auto j = nlohmann::ordered_json::parse(text);
  j.erase("run");
  return j.dump(2);
}

Outcome criterion10() {
  const fs::path root = fs::temp_directory_path() / ("lsgpr_accept_" + std::to_string(::getpid()));
  fs::remove_all(root);
  auto p = [&](const std::string& name) { return (root / name).string(); };
  auto run = [](std::vector<std::string> args) {
    std::ostringstream out, err;
    return cli::run(args, out, err);
  };

  // Each command runs twice from flags and once from the config it recorded.
  struct Step {
    std::vector<std::string> args;  // without --out
    std::string out;                // output name (file or directory)
    std::vector<std::string> files; // numeric outputs compared byte for byte
    std::string recorded;           // file holding the recorded config, relative to out
  };
  const std::string responses = p("data_a") + "/responses.csv";
  const std::vector<Step> steps{
      {{"simulate", "--nodes", "15", "--d0", "3", "--sparsity", "0.4", "--seed", "21", "--n-train", "25", "--n-test", "8"},
       "data", {"responses.csv", "networks/s01.csv", "networks/s33.csv"}, "meta.json"},
      {{"embed", "--in", p("data_a"), "--dim", "4", "--seed", "22"}, "emb", {"manifest.csv", "s01.json", "s33.json"}, "run.json"},
      {{"fit", "--embeddings", p("emb_a"), "--responses", responses, "--mode", "mle"}, "mle.json", {""}, ""},
      {{"fit", "--embeddings", p("emb_a"), "--responses", responses, "--mode", "mcmc", "--iters", "300", "--burnin",
        "100", "--seed", "23"}, "mcmc.json", {"", ".chain.csv"}, ""},
      {{"predict", "--model", p("mcmc_a.json"), "--embeddings", p("emb_a"), "--responses", responses, "--seed", "24"},
       "pred.csv", {"", ".report.csv"}, ".run.json"},
      {{"select", "--embeddings", p("emb_a"), "--responses", responses, "--iters", "150", "--burnin", "50", "--seed",
        "25"}, "sel", {"chain.csv", "inclusion.csv"}, "run.json"},
      {{"benchmark", "--nodes", "12", "--d0", "2", "--dim", "3", "--n-train", "15", "--n-test", "5", "--replicates",
        "2", "--iters", "200", "--burnin", "50", "--seed", "26"}, "bench", {"replicates.csv", "summary.csv"}, "run.json"},
  };

  auto named = [](const std::string& out, const std::string& tag) {
    const auto dot = out.find('.');
    return dot == std::string::npos ? out + "_" + tag : out.substr(0, dot) + "_" + tag + out.substr(dot);
  };
  auto file_of = [&](const std::string& out, const std::string& tag, const std::string& f) {
    const std::string base = p(named(out, tag));
    if (f.empty()) return base;
    if (f[0] == '.') return base.substr(0, base.rfind('.')) + f;
    return base + "/" + f;
  };

  int identical = 0, compared = 0;
  std::string broken;
  for (const auto& step : steps) {
    for (const std::string tag : {"a", "b"}) {
      auto args = step.args;
      args.push_back("--out");
      args.push_back(p(named(step.out, tag)));
      if (run(args) != 0) broken += " " + step.args[0] + "(run " + tag + ")";
    }
    const std::string recorded = step.recorded.empty() ? file_of(step.out, "a", "") : file_of(step.out, "a", step.recorded);
    if (run({step.args[0], "--config", recorded, "--out", p(named(step.out, "c"))}) != 0)
      broken += " " + step.args[0] + "(replay)";
    for (const auto& f : step.files) {
      const std::string a = numeric_content(file_of(step.out, "a", f));
      for (const std::string tag : {"b", "c"}) {
        ++compared;
        if (!a.empty() && a == numeric_content(file_of(step.out, tag, f))) ++identical;
        else broken += " " + step.args[0] + ":" + (f.empty() ? step.out : f) + "(" + tag + ")";
      }
    }
  }
  fs::remove_all(root);
  return {identical == compared && broken.empty(),
          std::to_string(identical) + "/" + std::to_string(compared) + " reruns byte-identical across 7 commands" +
              (broken.empty() ? "" : "; differing:" + broken)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient matches central differences", criterion1},
      {"Armijo descent contract", criterion2},
      {"EM ascent (single-copy prior)", criterion3},
      {"Polya-Gamma E-step", criterion4},
      {"embedding recovery p=50, d0=d=5", criterion5},
      {"conjugate Gibbs blocks (KS)", criterion6},
      {"desk-scale trend: ls-GPR beats ridge", criterion7},
      {"ls-GPR2 coverage and width", criterion8},
      {"node-selection signal", criterion9},
      {"CLI determinism", criterion10},
  };
  std::vector<int> which;
  for (int i = 1; i < argc; ++i) which.push_back(std::atoi(argv[i]));
  if (which.empty())
    for (int i = 1; i <= 10; ++i) which.push_back(i);

  int failed = 0;
  for (int c : which) {
    if (c < 1 || c > 10) {
      std::fprintf(stderr, "unknown criterion %d\n", c);
      return 2;
    }
    const auto& [name, check] = criteria[static_cast<std::size_t>(c - 1)];
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %2d %s: %s (%s) [%.1fs]\n", c, o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), sec);
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed ? 1 : 0;
}
