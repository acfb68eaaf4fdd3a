#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lsgpr/embed.hpp"
#include "lsgpr/random.hpp"

namespace lsgpr {

// Log-scale GP hyperparameters (log tau, log psi1, log psi_u, log psi_a, log psi_z).
//   tau    residual precision
//   psi1   kernel scale
//   psi_u  lengthscale on ||U_i - U_j||_F^2
//   psi_a  lengthscale on (a_i - a_j)^2
//   psi_z  lengthscale on ||z_i - z_j||^2
struct GpHyperparams {
  using Vector = Eigen::Matrix<double, 5, 1>;
  Vector theta = Vector::Zero();

  static GpHyperparams from_natural(double tau, double psi1, double psi_u, double psi_a,
                                    double psi_z);

  double tau() const { return std::exp(theta[0]); }
  double psi1() const { return std::exp(theta[1]); }
  double psi_u() const { return std::exp(theta[2]); }
  double psi_a() const { return std::exp(theta[3]); }
  double psi_z() const { return std::exp(theta[4]); }
};

// One stage-2 input: a fitted embedding plus optional supplementary covariates.
struct Subject {
  std::string id;
  Embedding embedding;
  Eigen::VectorXd covariates;
};

// Squared distances between subjects on each kernel block.
struct DistanceMatrices {
  Eigen::MatrixXd latent;     // ||U_i - U_j||_F^2
  Eigen::MatrixXd intercept;  // (a_i - a_j)^2
  Eigen::MatrixXd covariate;  // ||z_i - z_j||^2

  Eigen::Index rows() const { return latent.rows(); }
  Eigen::Index cols() const { return latent.cols(); }
};

DistanceMatrices distance_matrices(std::span<const Subject> subjects);
// rows index `rows_of`, columns index `cols_of`
DistanceMatrices cross_distance_matrices(std::span<const Subject> rows_of,
                                         std::span<const Subject> cols_of);

// Per-node contributions D_j(i,i') = ||u_ij - u_i'j||^2, so that the latent
// distance under node mask beta is sum_j beta_j D_j.
std::vector<Eigen::MatrixXd> node_distance_contributions(std::span<const Subject> rows_of,
                                                         std::span<const Subject> cols_of);
Eigen::MatrixXd masked_latent_distance(const std::vector<Eigen::MatrixXd>& contributions,
                                       const std::vector<int>& mask);

// psi1 * exp(-psi_u E_u - psi_a E_a - psi_z E_z), plus tau^-1 I when include_noise.
Eigen::MatrixXd kernel_matrix(const GpHyperparams& hp, const DistanceMatrices& dist,
                              bool include_noise);

// 0.5 log|K| + 0.5 y' K^-1 y with K = kernel_matrix(..., include_noise = true).
double neg_log_likelihood(const GpHyperparams& hp, const Eigen::VectorXd& y,
                          const DistanceMatrices& dist);

// Analytic d/dtheta of neg_log_likelihood.
GpHyperparams::Vector gradient(const GpHyperparams& hp, const Eigen::VectorXd& y,
                               const DistanceMatrices& dist);

// Starting point for the optimizer: tau = 2 / var(y), psi1 = var(y) / 2,
// each lengthscale set to the inverse median off-diagonal distance of its block.
GpHyperparams default_initial_hyperparams(const Eigen::VectorXd& y, const DistanceMatrices& dist);

struct MleOptions {
  int max_iters = 1000;
  double tolerance = 1e-8;
  double initial_step = 1.0;
  double min_step = 1e-12;
};

enum class MleStatus { Converged, MaxIterations, StepUnderflow };
std::string to_string(MleStatus status);

struct MleResult {
  GpHyperparams hyperparams;
  std::vector<double> trace;  // objective at start and after every accepted step
  int iterations = 0;
  MleStatus status = MleStatus::MaxIterations;
  double objective() const { return trace.back(); }
};

// Gradient descent with Armijo-style step control: a successful step grows the
// step size by 1.5, otherwise it is halved until the objective decreases.
MleResult fit_mle(const Eigen::VectorXd& y, const DistanceMatrices& dist, const GpHyperparams& init,
                  const MleOptions& options = {});

struct GpPriors {
  double a_tau = 1.0, b_tau = 1.0;    // Gamma(shape, rate) on tau
  double a_psi1 = 1.0, b_psi1 = 1.0;  // InvGamma(shape, scale) on psi1
  double a_pi = 1.0, b_pi = 1.0;      // Beta on inclusion probability

  void validate() const;
};

struct SamplerConfig {
  int iterations = 2000;
  int burn_in = 500;
  int thin = 1;
  double proposal_sd = 0.01;  // random walk sd on log lengthscales
  std::uint64_t seed = 1;
  // Block switches; disabling a block freezes it at its initial value.
  bool update_tau = true;
  bool update_psi1 = true;
  bool update_lengthscales = true;
  bool update_atoms = true;

  void validate() const;
  int retained() const { return (iterations - burn_in + thin - 1) / thin; }
};

struct SamplerState {
  double tau = 1.0;
  double psi1 = 1.0;
  double psi_u = 1.0;
  double psi_a = 1.0;
  double psi_z = 1.0;
  Eigen::VectorXd atoms;
  std::vector<int> mask;  // node indicators; empty when node selection is off
  double inclusion_prob = 0.5;

  GpHyperparams hyperparams() const {
    return GpHyperparams::from_natural(tau, psi1, psi_u, psi_a, psi_z);
  }
};

// Retained draws, one row per draw.
struct Chains {
  Eigen::MatrixXd hyper;   // columns: tau, psi1, psi_u, psi_a, psi_z
  Eigen::MatrixXd atoms;   // draws x n
  Eigen::MatrixXi mask;    // draws x p (0 columns without node selection)
  Eigen::VectorXd inclusion_prob;
  std::array<int, 3> accepted{0, 0, 0};  // psi_u, psi_a, psi_z acceptances over all iterations
  int iterations = 0;

  Eigen::Index draws() const { return hyper.rows(); }
  bool has_node_selection() const { return mask.cols() > 0; }
  // Column means of mask.
  Eigen::VectorXd inclusion_probabilities() const;
  SamplerState state(Eigen::Index draw) const;
};

// Atoms at the conditional mean K (K + tau^-1 I)^-1 y, the natural start when
// initializing from MLE hyperparameters.
SamplerState initial_state(const GpHyperparams& hp, const Eigen::VectorXd& y,
                           const DistanceMatrices& dist);

// log of |psi1 E0 + tau^-1 I|^-1/2 exp(-y' (psi1 E0 + tau^-1 I)^-1 y / 2).
double marginal_log_likelihood(const SamplerState& s, const Eigen::VectorXd& y,
                               const DistanceMatrices& dist);

// Single sweeps, exposed for block-level tests.
void sample_tau(SamplerState& s, const Eigen::VectorXd& y, const GpPriors& priors, Rng& rng);
void sample_psi1(SamplerState& s, const DistanceMatrices& dist, const GpPriors& priors, Rng& rng);
// Returns acceptance flags for psi_u, psi_a, psi_z.
std::array<bool, 3> sample_lengthscales(SamplerState& s, const Eigen::VectorXd& y,
                                        const DistanceMatrices& dist, double proposal_sd,
                                        Rng& rng);
// log acceptance ratio for moving from `current` to `proposal`
double lengthscale_log_acceptance(const SamplerState& current, const SamplerState& proposal,
                                  const Eigen::VectorXd& y, const DistanceMatrices& dist);
void sample_atoms(SamplerState& s, const Eigen::VectorXd& y, const DistanceMatrices& dist,
                  Rng& rng);

// inclusion probability ~ Beta(a_pi + sum(mask), b_pi + p - sum(mask))
void sample_inclusion_prob(SamplerState& s, const GpPriors& priors, Rng& rng);

// Metropolis-within-Gibbs over (tau, psi1, psi_u, psi_a, psi_z, atoms).
Chains gibbs_sample(const Eigen::VectorXd& y, const DistanceMatrices& dist, const GpPriors& priors,
                    const SamplerConfig& config, const SamplerState& init);

// Probability that node j is included given the other indicators.
double node_inclusion_probability(int j, const SamplerState& s, const Eigen::VectorXd& y,
                                  const std::vector<Eigen::MatrixXd>& contributions,
                                  const DistanceMatrices& dist);

// Sampler extended with per-node indicators beta_j (node j's latent row
// zeroed when beta_j = 0) and their Beta-distributed inclusion probability.
// `dist.latent` is ignored; the latent block is rebuilt from `contributions`.
Chains node_selection_sample(const Eigen::VectorXd& y, const DistanceMatrices& dist,
                             const std::vector<Eigen::MatrixXd>& contributions,
                             const GpPriors& priors, const SamplerConfig& config,
                             const SamplerState& init);

struct Prediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

// Plug-in predictive distribution: mean K*(K + tau^-1 I)^-1 y with Gaussian
// 95% intervals from the conditional variance (including noise).
Prediction predict_mle(const GpHyperparams& hp, const Eigen::VectorXd& y,
                       const DistanceMatrices& train, const DistanceMatrices& cross);

// Atom-based predictive: per draw K* K^-1 phi plus N(0, tau^-1) noise,
// summarized by the mean and 2.5/97.5 percentiles. For node-selection chains
// the latent distances are rebuilt per draw from the contribution matrices.
struct ChainPredictInputs {
  const DistanceMatrices* train = nullptr;
  const DistanceMatrices* cross = nullptr;
  const std::vector<Eigen::MatrixXd>* train_contributions = nullptr;
  const std::vector<Eigen::MatrixXd>* cross_contributions = nullptr;
};
Prediction predict_chains(const Chains& chains, const ChainPredictInputs& inputs, Rng& rng);

enum class FitMode { Mle, Mcmc };
FitMode parse_fit_mode(const std::string& name);
std::string to_string(FitMode mode);

// A fitted stage-2 model together with its training data.
struct GpModel {
  FitMode mode = FitMode::Mle;
  std::vector<Subject> training;
  Eigen::VectorXd y;
  MleResult mle;
  std::optional<Chains> chains;
  GpPriors priors;
  SamplerConfig sampler;
};

struct FitOptions {
  FitMode mode = FitMode::Mle;
  bool node_selection = false;
  MleOptions mle;
  GpPriors priors;
  SamplerConfig sampler;
  std::optional<GpHyperparams> init;
};

// MLE always runs; in MCMC mode it seeds the sampler.
GpModel fit_model(std::vector<Subject> training, Eigen::VectorXd y, const FitOptions& options);

// Throws ValidationError when test embeddings differ from training in d, p or pin.
void check_compatible(const GpModel& model, std::span<const Subject> test);

// MLE mode: predict_mle. MCMC mode: predict_chains, rng drives the noise draws.
Prediction predict(const GpModel& model, std::span<const Subject> test, Rng& rng);

}  // namespace lsgpr
