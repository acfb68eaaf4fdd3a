#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lsgpr/network.hpp"
#include "lsgpr/random.hpp"

namespace lsgpr {

// How the N(0, sigma_u^2) prior precision enters the per-node latent update.
//  Verbatim:   one sigma_u^-2 I per neighbour (p-1 copies), as the update is
//              commonly written for this model.
//  SingleCopy: one sigma_u^-2 I in total, the exact MAP coordinate update.
enum class PriorTermMode { Verbatim, SingleCopy };

PriorTermMode parse_prior_term_mode(const std::string& name);
std::string to_string(PriorTermMode mode);

struct EmConfig {
  int dim = 10;
  double sigma_u_sq = 0.2;
  double pin = 0.5;
  int max_iters = 500;
  double rel_tol = 1e-6;
  PriorTermMode prior_mode = PriorTermMode::SingleCopy;

  void validate() const;
};

// Per-subject latent-scale model: logit P(edge k~l) = a + u_k . u_l, with the
// first coordinate of every u_k pinned to `pin`.
struct Embedding {
  double intercept = 0.0;
  Eigen::MatrixXd latent;  // p x d, column 0 == pin
  double pin = 0.5;

  int nodes() const { return static_cast<int>(latent.rows()); }
  int dim() const { return static_cast<int>(latent.cols()); }
  // Throws ValidationError if the pinned column drifted or entries are non-finite.
  void validate() const;
};

double sigmoid(double x);
double edge_probability(double intercept, const Eigen::Ref<const Eigen::VectorXd>& u_k,
                        const Eigen::Ref<const Eigen::VectorXd>& u_l);

// Bernoulli log-likelihood of all edges plus the normal prior on the free
// (unpinned) coordinates. The intercept has a flat prior.
double log_posterior(const EdgeSet& edges, const Embedding& emb, const EmConfig& cfg);

// E[omega | delta] for omega ~ PG(1, delta): tanh(delta/2) / (2 delta).
double pg_expectation(double delta);

// Closed-form intercept maximizer of the augmented objective for fixed omega, U.
double em_update_intercept(const EdgeSet& edges, const Eigen::VectorXd& omega,
                           const Eigen::MatrixXd& latent);

// Free coordinates (length d-1) for node k maximizing the augmented objective
// with every other node held at its value in `emb`.
Eigen::VectorXd em_update_latent(int k, const EdgeSet& edges, const Eigen::VectorXd& omega,
                                 double intercept, const Embedding& emb, const EmConfig& cfg);

struct EmResult {
  Embedding embedding;
  std::vector<double> trace;  // log posterior after each iteration (trace[0] = initial)
  int iterations = 0;
  bool converged = false;
};

// Initial latent scales: classical MDS of the hop-distance matrix, then the
// first column overwritten by the pin value.
Eigen::MatrixXd initial_latent(const EdgeSet& edges, const EmConfig& cfg, Rng& rng);

// Polya-Gamma EM to a MAP estimate of (a, U). Without `init`, starts from
// initial_latent(); rng is only used for MDS padding.
EmResult embed_subject(const EdgeSet& edges, const EmConfig& cfg, Rng& rng,
                       const std::optional<Eigen::MatrixXd>& init = std::nullopt);

// sigmoid(a + u_k . u_l) in EdgeSet order.
Eigen::VectorXd fitted_edge_probabilities(const Embedding& emb);

}  // namespace lsgpr
