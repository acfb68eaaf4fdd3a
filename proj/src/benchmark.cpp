#include "lsgpr/benchmark.hpp"

#include <cmath>
#include <limits>
#include <map>

#include "lsgpr/error.hpp"

namespace lsgpr {

namespace {

constexpr std::uint64_t kEmbedStream = 1;
constexpr std::uint64_t kSamplerStream = 2;
constexpr std::uint64_t kPredictStream = 3;

std::string subject_name(int i) { return "s" + std::to_string(i + 1); }

template <class T>
std::vector<T> pick(const std::vector<T>& all, const std::vector<int>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(all[static_cast<std::size_t>(i)]);
  return out;
}

Eigen::VectorXd pick(const Eigen::VectorXd& all, const std::vector<int>& idx) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out[static_cast<Eigen::Index>(k)] = all[idx[k]];
  return out;
}

std::pair<double, double> mean_sd(const std::vector<double>& v) {
  if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return {mean, std::numeric_limits<double>::quiet_NaN()};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

}  // namespace

Method parse_method(const std::string& name) {
  if (name == "ls-gpr1") return Method::LsGpr1;
  if (name == "ls-gpr2") return Method::LsGpr2;
  if (name == "ridge") return Method::Ridge;
  if (name == "pca-gpr") return Method::PcaGpr;
  throw ValidationError("unknown method '" + name + "' (expected ls-gpr1, ls-gpr2, ridge or pca-gpr)");
}

std::string to_string(Method method) {
  switch (method) {
    case Method::LsGpr1: return "ls-gpr1";
    case Method::LsGpr2: return "ls-gpr2";
    case Method::Ridge: return "ridge";
    case Method::PcaGpr: return "pca-gpr";
  }
  return "?";
}

void BenchmarkSpec::validate() const {
  if (cells.empty()) throw ValidationError("benchmark grid has no cells");
  if (replicates < 1) throw ValidationError("replicates must be at least 1");
  if (methods.empty()) throw ValidationError("no benchmark methods selected");
  for (const auto& c : cells) {
    SimConfig cfg = sim;
    cfg.d0 = c.d0;
    cfg.sparsity = c.sparsity;
    cfg.validate();
  }
  em.validate();
  sampler.validate();
  priors.validate();
}

std::vector<BenchmarkCell> BenchmarkSpec::grid(const std::vector<int>& d0, const std::vector<double>& sparsity) {
  std::vector<BenchmarkCell> out;
  for (int d : d0)
    for (double s : sparsity) out.push_back({d, s});
  return out;
}

std::uint64_t replicate_seed(const BenchmarkSpec& spec, int cell, int replicate) {
  return derive_seed(spec.seed, static_cast<std::uint64_t>(cell), static_cast<std::uint64_t>(replicate));
}

std::uint64_t embedding_seed(std::uint64_t seed, int index) {
  return derive_seed(seed, kEmbedStream, static_cast<std::uint64_t>(index));
}

std::vector<Subject> embed_dataset(const SimDataset& data, const EmConfig& cfg, std::uint64_t seed) {
  std::vector<Subject> subjects;
  subjects.reserve(static_cast<std::size_t>(data.size()));
  for (int i = 0; i < data.size(); ++i) {
    Rng rng(embedding_seed(seed, i));
    Subject s;
    s.id = subject_name(i);
    s.embedding = embed_subject(data.networks[static_cast<std::size_t>(i)], cfg, rng).embedding;
    subjects.push_back(std::move(s));
  }
  return subjects;
}

std::vector<BenchmarkRow> run_replicate(const BenchmarkSpec& spec, int cell, int replicate) {
  const BenchmarkCell& c = spec.cells.at(static_cast<std::size_t>(cell));
  SimConfig cfg = spec.sim;
  cfg.d0 = c.d0;
  cfg.sparsity = c.sparsity;
  cfg.seed = replicate_seed(spec, cell, replicate);

  std::vector<BenchmarkRow> rows;
  auto base_row = [&](Method m) {
    BenchmarkRow r;
    r.cell = cell;
    r.d0 = c.d0;
    r.sparsity = c.sparsity;
    r.replicate = replicate;
    r.seed = cfg.seed;
    r.method = m;
    return r;
  };

  SimDataset data;
  std::vector<Subject> subjects;
  bool needs_embedding = false;
  for (Method m : spec.methods) needs_embedding |= (m == Method::LsGpr1 || m == Method::LsGpr2);
  try {
    data = generate_scenario1(cfg);
    if (needs_embedding) subjects = embed_dataset(data, spec.em, cfg.seed);
  } catch (const std::exception& e) {
    for (Method m : spec.methods) {
      BenchmarkRow r = base_row(m);
      r.ok = false;
      r.message = e.what();
      rows.push_back(r);
    }
    return rows;
  }

  const std::vector<int> train_idx = data.train_indices();
  const std::vector<int> test_idx = data.test_indices();
  const Eigen::VectorXd y_train = pick(data.y, train_idx);
  const Eigen::VectorXd y_test = pick(data.y, test_idx);
  const auto train_edges = pick(data.networks, train_idx);
  const auto test_edges = pick(data.networks, test_idx);

  std::optional<GpModel> mle_model;
  for (Method m : spec.methods) {
    BenchmarkRow r = base_row(m);
    try {
      Rng rng(derive_seed(cfg.seed, kPredictStream, static_cast<std::uint64_t>(m)));
      switch (m) {
        case Method::LsGpr1:
        case Method::LsGpr2: {
          FitOptions opt;
          opt.priors = spec.priors;
          opt.sampler = spec.sampler;
          opt.sampler.seed = derive_seed(cfg.seed, kSamplerStream);
          if (m == Method::LsGpr2) {
            opt.mode = FitMode::Mcmc;
            if (mle_model) opt.init = mle_model->mle.hyperparams;
          }
          GpModel model = fit_model(pick(subjects, train_idx), y_train, opt);
          const auto test = pick(subjects, test_idx);
          const Prediction pred = predict(model, test, rng);
          r.report = evaluate(pred.mean, pred.lower, pred.upper, y_test);
          if (m == Method::LsGpr1) mle_model = std::move(model);
          break;
        }
        case Method::Ridge:
          r.report = evaluate(ridge_baseline(train_edges, y_train, test_edges), y_test);
          break;
        case Method::PcaGpr: {
          const PcaGprResult res = pca_gpr_baseline(train_edges, y_train, test_edges, std::nullopt);
          r.report = evaluate(res.prediction.mean, res.prediction.lower, res.prediction.upper, y_test);
          if (res.reduced) r.message = "components reduced to " + std::to_string(res.components);
          break;
        }
      }
    } catch (const std::exception& e) {
      r.ok = false;
      r.message = e.what();
    }
    rows.push_back(r);
  }
  return rows;
}

std::vector<BenchmarkRow> run_benchmark(const BenchmarkSpec& spec) {
  spec.validate();
  std::vector<BenchmarkRow> rows;
  for (int c = 0; c < static_cast<int>(spec.cells.size()); ++c)
    for (int r = 0; r < spec.replicates; ++r) {
      auto part = run_replicate(spec, c, r);
      rows.insert(rows.end(), part.begin(), part.end());
    }
  return rows;
}

std::vector<BenchmarkSummary> summarize(const std::vector<BenchmarkRow>& rows) {
  std::vector<BenchmarkSummary> out;
  std::map<std::pair<int, int>, std::size_t> slot;
  std::vector<std::array<std::vector<double>, 3>> values;
  for (const auto& r : rows) {
    const auto key = std::make_pair(r.cell, static_cast<int>(r.method));
    auto it = slot.find(key);
    if (it == slot.end()) {
      BenchmarkSummary s;
      s.cell = r.cell;
      s.d0 = r.d0;
      s.sparsity = r.sparsity;
      s.method = r.method;
      it = slot.emplace(key, out.size()).first;
      out.push_back(s);
      values.emplace_back();
    }
    BenchmarkSummary& s = out[it->second];
    if (!r.ok) {
      ++s.failed;
      continue;
    }
    ++s.completed;
    auto& v = values[it->second];
    v[0].push_back(r.report.mse);
    if (!std::isnan(r.report.coverage)) v[1].push_back(r.report.coverage);
    if (!std::isnan(r.report.width)) v[2].push_back(r.report.width);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::tie(out[i].mse_mean, out[i].mse_sd) = mean_sd(values[i][0]);
    std::tie(out[i].coverage_mean, out[i].coverage_sd) = mean_sd(values[i][1]);
    std::tie(out[i].width_mean, out[i].width_sd) = mean_sd(values[i][2]);
  }
  return out;
}

}  // namespace lsgpr
