#include "lsgpr/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lsgpr/embed.hpp"
#include "lsgpr/error.hpp"

namespace lsgpr {

namespace {

Eigen::MatrixXd pairwise_squared_distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j) out(i, j) = (a.row(i) - b.row(j)).squaredNorm();
  return out;
}

DistanceMatrices single_block(Eigen::MatrixXd latent) {
  const auto r = latent.rows();
  const auto c = latent.cols();
  return {std::move(latent), Eigen::MatrixXd::Zero(r, c), Eigen::MatrixXd::Zero(r, c)};
}

}  // namespace

void SimConfig::validate() const {
  if (n_train < 1 || n_test < 0) throw ValidationError("need n_train >= 1 and n_test >= 0");
  if (nodes < 2) throw ValidationError("need at least two nodes");
  if (d0 < 1) throw ValidationError("true latent dimension d0 must be at least 1");
  if (!(sparsity > 0.0 && sparsity < 1.0)) throw ValidationError("response sparsity must lie in (0, 1)");
  if (!(intercept_sd >= 0 && latent_sd >= 0 && eta_sd >= 0 && noise_sd >= 0))
    throw ValidationError("standard deviations must be non-negative");
  if (active_node_count() < 2) throw ValidationError("sparsity leaves fewer than two active nodes (no active edges)");
}

int SimConfig::active_node_count() const {
  return static_cast<int>(std::ceil(sparsity * static_cast<double>(nodes) - 1e-9));
}

std::vector<int> SimDataset::train_indices() const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i)
    if (is_train[static_cast<std::size_t>(i)]) out.push_back(i);
  return out;
}

std::vector<int> SimDataset::test_indices() const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i)
    if (!is_train[static_cast<std::size_t>(i)]) out.push_back(i);
  return out;
}

SimDataset generate_scenario1(const SimConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  SimDataset data;
  data.config = cfg;
  const int p = cfg.nodes;
  const int total = cfg.n_train + cfg.n_test;

  // partial Fisher-Yates for the active nodes
  std::vector<int> order(p);
  std::iota(order.begin(), order.end(), 0);
  const int active = cfg.active_node_count();
  for (int i = 0; i < active; ++i) {
    const int j = i + static_cast<int>(draw_uniform(rng) * (p - i));
    std::swap(order[i], order[std::min(j, p - 1)]);
  }
  data.active_nodes.assign(order.begin(), order.begin() + active);
  std::sort(data.active_nodes.begin(), data.active_nodes.end());
  std::vector<bool> is_active(p, false);
  for (int k : data.active_nodes) is_active[k] = true;

  data.y_raw.resize(total);
  for (int i = 0; i < total; ++i) {
    const double a = draw_normal(rng, 0.0, cfg.intercept_sd);
    Eigen::MatrixXd u(p, cfg.d0);
    for (int k = 0; k < p; ++k)
      for (int c = 0; c < cfg.d0; ++c) u(k, c) = draw_normal(rng, 0.0, cfg.latent_sd);

    Eigen::VectorXd probs(edge_count_for(p));
    Eigen::VectorXd edges(edge_count_for(p));
    double response = 0.0;
    Eigen::Index idx = 0;
    for (int k = 0; k < p; ++k)
      for (int l = k + 1; l < p; ++l, ++idx) {
        probs[idx] = sigmoid(a + u.row(k).dot(u.row(l)));
        edges[idx] = draw_uniform(rng) < probs[idx] ? 1.0 : 0.0;
        if (is_active[k] && is_active[l]) {
          const double eta = draw_normal(rng, cfg.eta_mean, cfg.eta_sd);
          response += std::sin(probs[idx] * eta);
        }
      }
    response += draw_normal(rng, 0.0, cfg.noise_sd);

    data.networks.emplace_back(p, std::move(edges));
    data.true_probabilities.push_back(std::move(probs));
    data.true_intercepts.push_back(a);
    data.y_raw[i] = response;
    data.is_train.push_back(i < cfg.n_train);
  }

  const Eigen::VectorXd train = data.y_raw.head(cfg.n_train);
  data.y_mean = train.mean();
  data.y_sd = 1.0;
  if (cfg.n_train > 1) {
    const double sd = std::sqrt((train.array() - data.y_mean).square().sum() / (cfg.n_train - 1));
    if (sd > 0.0) data.y_sd = sd;
  }
  data.y = (data.y_raw.array() - data.y_mean) / data.y_sd;
  return data;
}

EvalReport evaluate(const Eigen::VectorXd& predictions, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                    const Eigen::VectorXd& truth) {
  const auto n = truth.size();
  if (predictions.size() != n || lower.size() != n || upper.size() != n)
    throw ValidationError("prediction, interval and truth lengths differ");
  EvalReport report;
  report.count = static_cast<std::size_t>(n);
  if (n == 0) {
    report.mse = report.coverage = report.width = std::numeric_limits<double>::quiet_NaN();
    return report;
  }
  report.mse = (predictions - truth).squaredNorm() / static_cast<double>(n);
  report.coverage = ((truth.array() >= lower.array()) && (truth.array() <= upper.array())).cast<double>().mean();
  report.width = (upper - lower).mean();
  return report;
}

EvalReport evaluate(const Eigen::VectorXd& predictions, const Eigen::VectorXd& truth) {
  if (predictions.size() != truth.size()) throw ValidationError("prediction and truth lengths differ");
  EvalReport report;
  report.count = static_cast<std::size_t>(truth.size());
  report.mse = truth.size() ? (predictions - truth).squaredNorm() / static_cast<double>(truth.size())
                            : std::numeric_limits<double>::quiet_NaN();
  report.coverage = report.width = std::numeric_limits<double>::quiet_NaN();
  return report;
}

Eigen::MatrixXd stack_edges(std::span<const EdgeSet> networks) {
  if (networks.empty()) return {};
  const auto dim = networks.front().size();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(networks.size()), dim);
  for (std::size_t i = 0; i < networks.size(); ++i) {
    if (networks[i].size() != dim) throw ValidationError("edge vectors have inconsistent lengths");
    x.row(static_cast<Eigen::Index>(i)) = networks[i].values().transpose();
  }
  return x;
}

Eigen::VectorXd RidgeFit::predict(const Eigen::MatrixXd& x) const {
  return (x * coefficients).array() + intercept;
}

RidgeFit ridge_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda) {
  if (x.rows() != y.size()) throw ValidationError("ridge design and response lengths differ");
  if (x.rows() == 0) throw ValidationError("ridge needs at least one observation");
  if (!(lambda >= 0.0)) throw ValidationError("ridge penalty must be non-negative");
  const Eigen::RowVectorXd x_mean = x.colwise().mean();
  const double y_mean = y.mean();
  const Eigen::MatrixXd xc = x.rowwise() - x_mean;
  const Eigen::VectorXd yc = y.array() - y_mean;

  RidgeFit fit;
  fit.lambda = lambda;
  if (lambda == 0.0) {
    if (x.rows() <= x.cols()) throw ValidationError("unpenalized fit needs more observations than features");
    fit.coefficients = xc.colPivHouseholderQr().solve(yc);
  } else if (x.cols() <= x.rows()) {
    Eigen::MatrixXd gram = xc.transpose() * xc;
    gram.diagonal().array() += lambda;
    fit.coefficients = gram.llt().solve(xc.transpose() * yc);
  } else {
    Eigen::MatrixXd gram = xc * xc.transpose();
    gram.diagonal().array() += lambda;
    fit.coefficients = xc.transpose() * gram.llt().solve(yc);
  }
  fit.intercept = y_mean - x_mean.dot(fit.coefficients);
  return fit;
}

std::vector<double> default_ridge_grid() {
  std::vector<double> grid;
  for (int i = -12; i <= 12; ++i) grid.push_back(std::pow(10.0, i / 4.0));
  return grid;
}

RidgeFit ridge_cv(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<double>& grid, int folds) {
  if (grid.empty()) throw ValidationError("empty ridge penalty grid");
  if (folds < 2) throw ValidationError("cross-validation needs at least two folds");
  const auto n = x.rows();
  folds = static_cast<int>(std::min<Eigen::Index>(folds, n));
  double best_error = std::numeric_limits<double>::infinity();
  double best_lambda = grid.front();
  for (double lambda : grid) {
    double error = 0.0;
    for (int f = 0; f < folds; ++f) {
      std::vector<Eigen::Index> train_rows, test_rows;
      for (Eigen::Index i = 0; i < n; ++i) (i % folds == f ? test_rows : train_rows).push_back(i);
      if (train_rows.empty() || test_rows.empty()) continue;
      const RidgeFit fit = ridge_fit(x(train_rows, Eigen::all), y(train_rows), lambda);
      error += (fit.predict(x(test_rows, Eigen::all)) - y(test_rows)).squaredNorm();
    }
    if (error < best_error) {
      best_error = error;
      best_lambda = lambda;
    }
  }
  return ridge_fit(x, y, best_lambda);
}

Eigen::VectorXd ridge_baseline(std::span<const EdgeSet> train, const Eigen::VectorXd& y_train,
                               std::span<const EdgeSet> test) {
  const Eigen::MatrixXd x = stack_edges(train);
  const RidgeFit fit = ridge_cv(x, y_train, default_ridge_grid(), 5);
  if (test.empty()) return {};
  const Eigen::MatrixXd x_test = stack_edges(test);
  if (x_test.cols() != x.cols()) throw ValidationError("test edge vectors differ in length from training");
  return fit.predict(x_test);
}

Eigen::MatrixXd PcaProjection::project(const Eigen::MatrixXd& x) const {
  return (x.rowwise() - center.transpose()) * directions;
}

namespace {

struct CenteredSvd {
  Eigen::VectorXd center;
  Eigen::VectorXd singular;
  Eigen::MatrixXd v;
};

CenteredSvd centered_svd(const Eigen::MatrixXd& x) {
  CenteredSvd out;
  out.center = x.colwise().mean().transpose();
  const Eigen::MatrixXd xc = x.rowwise() - out.center.transpose();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(xc, Eigen::ComputeThinV);
  out.singular = svd.singularValues();
  out.v = svd.matrixV();
  return out;
}

int numerical_rank(const Eigen::VectorXd& singular) {
  if (singular.size() == 0 || singular[0] <= 0.0) return 0;
  const double tol = 1e-10 * singular[0];
  return static_cast<int>((singular.array() > tol).count());
}

}  // namespace

PcaProjection fit_pca(const Eigen::MatrixXd& x, int components) {
  if (components < 1) throw ValidationError("PCA needs at least one component");
  if (components > std::min(x.rows(), x.cols()))
    throw ValidationError("PCA components exceed min(observations, features)");
  const CenteredSvd svd = centered_svd(x);
  PcaProjection proj;
  proj.center = svd.center;
  proj.directions = svd.v.leftCols(components);
  const double denom = x.rows() > 1 ? static_cast<double>(x.rows() - 1) : 1.0;
  proj.variances = svd.singular.array().square() / denom;
  return proj;
}

int default_pca_components(const Eigen::MatrixXd& x, double fraction) {
  const CenteredSvd svd = centered_svd(x);
  const Eigen::VectorXd var = svd.singular.array().square();
  const double total = var.sum();
  const int cap = std::max<int>(1, static_cast<int>(x.rows()) - 5);
  if (total <= 0.0) return 1;
  double running = 0.0;
  int k = 0;
  while (k < var.size()) {
    running += var[k++];
    if (running >= fraction * total) break;
  }
  return std::clamp(k, 1, cap);
}

PcaGprResult pca_gpr_baseline(std::span<const EdgeSet> train, const Eigen::VectorXd& y_train,
                              std::span<const EdgeSet> test, std::optional<int> components) {
  const Eigen::MatrixXd x = stack_edges(train);
  if (x.rows() != y_train.size()) throw ValidationError("training edges and responses differ in length");
  PcaGprResult result;
  int k = components ? *components : default_pca_components(x);
  if (k < 1) throw ValidationError("PCA-GPR needs at least one component");
  if (k > std::min(x.rows(), x.cols())) throw ValidationError("PCA components exceed min(observations, features)");
  const int rank = std::max(1, numerical_rank(centered_svd(x).singular));
  if (k > rank) {
    k = rank;
    result.reduced = true;
  }
  result.components = k;
  const PcaProjection proj = fit_pca(x, k);
  const Eigen::MatrixXd scores = proj.project(x);
  const Eigen::MatrixXd test_scores = test.empty() ? Eigen::MatrixXd(0, k) : proj.project(stack_edges(test));

  const DistanceMatrices train_dist = single_block(pairwise_squared_distances(scores, scores));
  const DistanceMatrices cross_dist = single_block(pairwise_squared_distances(test_scores, scores));
  const MleResult mle = fit_mle(y_train, train_dist, default_initial_hyperparams(y_train, train_dist));
  result.prediction = predict_mle(mle.hyperparams, y_train, train_dist, cross_dist);
  return result;
}

}  // namespace lsgpr
