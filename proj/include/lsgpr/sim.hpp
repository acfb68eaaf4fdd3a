#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lsgpr/gp.hpp"
#include "lsgpr/network.hpp"

namespace lsgpr {

// Synthetic design: networks from the latent-scale model, response driven by
// the edge probabilities among a random subset of "active" nodes.
struct SimConfig {
  int n_train = 50;
  int n_test = 50;
  int nodes = 40;
  int d0 = 5;
  double sparsity = 0.5;
  std::uint64_t seed = 1;
  double intercept_sd = 2.0;
  double latent_sd = 1.0;
  double eta_mean = 2.0;
  double eta_sd = 1.0;
  double noise_sd = 0.5;

  void validate() const;
  int active_node_count() const;
};

struct SimDataset {
  SimConfig config;
  std::vector<EdgeSet> networks;
  Eigen::VectorXd y;        // standardized with training mean / sd
  Eigen::VectorXd y_raw;
  double y_mean = 0.0;
  double y_sd = 1.0;
  std::vector<Eigen::VectorXd> true_probabilities;
  std::vector<double> true_intercepts;
  std::vector<int> active_nodes;  // 0-indexed, sorted
  std::vector<bool> is_train;

  int size() const { return static_cast<int>(networks.size()); }
  std::vector<int> train_indices() const;
  std::vector<int> test_indices() const;
};

SimDataset generate_scenario1(const SimConfig& cfg);

struct EvalReport {
  double mse = 0.0;
  double coverage = 0.0;
  double width = 0.0;
  std::size_t count = 0;
};

EvalReport evaluate(const Eigen::VectorXd& predictions, const Eigen::VectorXd& lower,
                    const Eigen::VectorXd& upper, const Eigen::VectorXd& truth);
// Point predictions only; coverage and width are reported as NaN.
EvalReport evaluate(const Eigen::VectorXd& predictions, const Eigen::VectorXd& truth);

// Rows of the returned matrix are edge vectors.
Eigen::MatrixXd stack_edges(std::span<const EdgeSet> networks);

struct RidgeFit {
  double intercept = 0.0;
  Eigen::VectorXd coefficients;
  double lambda = 0.0;
  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;
};

// Ridge with unpenalized intercept for a fixed penalty. lambda = 0 requires
// more rows than columns.
RidgeFit ridge_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda);

std::vector<double> default_ridge_grid();

// Penalty chosen by k-fold cross-validation (fold = row index mod k).
RidgeFit ridge_cv(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                  const std::vector<double>& grid, int folds = 5);

Eigen::VectorXd ridge_baseline(std::span<const EdgeSet> train, const Eigen::VectorXd& y_train,
                               std::span<const EdgeSet> test);

struct PcaProjection {
  Eigen::VectorXd center;
  Eigen::MatrixXd directions;  // columns are principal directions
  Eigen::VectorXd variances;   // all eigenvalues of the training covariance, descending
  Eigen::MatrixXd project(const Eigen::MatrixXd& x) const;
};

PcaProjection fit_pca(const Eigen::MatrixXd& x, int components);
// Smallest k explaining `fraction` of variance, capped at max(1, n_train - 5).
int default_pca_components(const Eigen::MatrixXd& x, double fraction = 0.9);

struct PcaGprResult {
  Prediction prediction;
  int components = 0;
  bool reduced = false;  // requested more components than the data rank supports
};

// GP regression on principal component scores with one squared-exponential
// lengthscale. Without `components`, default_pca_components is used.
PcaGprResult pca_gpr_baseline(std::span<const EdgeSet> train, const Eigen::VectorXd& y_train,
                              std::span<const EdgeSet> test, std::optional<int> components);

}  // namespace lsgpr
