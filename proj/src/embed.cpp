#include "lsgpr/embed.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lsgpr/error.hpp"

namespace lsgpr {

namespace {

// log(1 + e^x) without overflow
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

void check_shapes(const EdgeSet& edges, const Eigen::MatrixXd& latent) {
  if (latent.rows() != edges.nodes())
    throw ValidationError("latent matrix has " + std::to_string(latent.rows()) + " rows for a " +
                          std::to_string(edges.nodes()) + "-node network");
}

}  // namespace

PriorTermMode parse_prior_term_mode(const std::string& name) {
  if (name == "verbatim") return PriorTermMode::Verbatim;
  if (name == "single-copy") return PriorTermMode::SingleCopy;
  throw ValidationError("unknown prior term mode '" + name + "'");
}

std::string to_string(PriorTermMode mode) {
  return mode == PriorTermMode::Verbatim ? "verbatim" : "single-copy";
}

void EmConfig::validate() const {
  if (dim < 2) throw ValidationError("latent dimension must be at least 2 (one pinned coordinate plus free ones)");
  if (!(sigma_u_sq > 0.0)) throw ValidationError("prior variance sigma_u^2 must be positive");
  if (!(rel_tol > 0.0)) throw ValidationError("relative tolerance must be positive");
  if (max_iters < 1) throw ValidationError("max_iters must be at least 1");
  if (!std::isfinite(pin)) throw ValidationError("pin value must be finite");
}

void Embedding::validate() const {
  if (!std::isfinite(intercept) || !latent.allFinite()) throw ValidationError("embedding has non-finite entries");
  if (latent.cols() < 1) throw ValidationError("embedding has no latent columns");
  if ((latent.col(0).array() != pin).any()) throw ValidationError("pinned latent column differs from the pin value");
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double ex = std::exp(x);
  return ex / (1.0 + ex);
}

double edge_probability(double intercept, const Eigen::Ref<const Eigen::VectorXd>& u_k,
                        const Eigen::Ref<const Eigen::VectorXd>& u_l) {
  return sigmoid(intercept + u_k.dot(u_l));
}

double log_posterior(const EdgeSet& edges, const Embedding& emb, const EmConfig& cfg) {
  check_shapes(edges, emb.latent);
  const int p = edges.nodes();
  const Eigen::MatrixXd gram = emb.latent * emb.latent.transpose();
  double lp = 0.0;
  Eigen::Index idx = 0;
  for (int k = 0; k < p; ++k)
    for (int l = k + 1; l < p; ++l) {
      const double eta = emb.intercept + gram(k, l);
      lp += edges[idx++] * eta - softplus(eta);
    }
  const auto free = emb.latent.rightCols(emb.latent.cols() - 1);
  const double count = static_cast<double>(free.size());
  lp += -0.5 * count * std::log(2.0 * std::numbers::pi * cfg.sigma_u_sq) - 0.5 * free.squaredNorm() / cfg.sigma_u_sq;
  return lp;
}

double pg_expectation(double delta) {
  const double x = std::abs(delta);
  if (x < 1e-4) {
    // tanh(x/2)/(2x) = 1/4 - x^2/48 + x^4/480 - ...
    const double x2 = x * x;
    return 0.25 - x2 / 48.0 + x2 * x2 / 480.0;
  }
  return std::tanh(0.5 * x) / (2.0 * x);
}

double em_update_intercept(const EdgeSet& edges, const Eigen::VectorXd& omega, const Eigen::MatrixXd& latent) {
  check_shapes(edges, latent);
  if (omega.size() != edges.size()) throw ValidationError("omega length does not match edge count");
  const int p = edges.nodes();
  const Eigen::MatrixXd gram = latent * latent.transpose();
  double numer = 0.0;
  double denom = 0.0;
  Eigen::Index idx = 0;
  for (int k = 0; k < p; ++k)
    for (int l = k + 1; l < p; ++l, ++idx) {
      numer += edges[idx] - 0.5 - omega[idx] * gram(k, l);
      denom += omega[idx];
    }
  if (!(denom > 0.0)) throw NumericalError("intercept update with non-positive omega total");
  return numer / denom;
}

Eigen::VectorXd em_update_latent(int k, const EdgeSet& edges, const Eigen::VectorXd& omega, double intercept,
                                 const Embedding& emb, const EmConfig& cfg) {
  check_shapes(edges, emb.latent);
  const int p = edges.nodes();
  if (k < 0 || k >= p) throw ValidationError("node index out of range");
  const int free = emb.dim() - 1;
  const double offset = intercept + emb.pin * emb.pin;
  const double prior_precision = 1.0 / cfg.sigma_u_sq;

  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(free);
  Eigen::MatrixXd precision = Eigen::MatrixXd::Zero(free, free);
  for (int j = 0; j < p; ++j) {
    if (j == k) continue;
    const Eigen::Index idx = edge_index(j, k, p);
    const auto u_j = emb.latent.row(j).tail(free).transpose();
    rhs += (edges[idx] - 0.5 - offset * omega[idx]) * u_j;
    precision.selfadjointView<Eigen::Lower>().rankUpdate(u_j, omega[idx]);
  }
  precision = precision.selfadjointView<Eigen::Lower>();
  const double copies = cfg.prior_mode == PriorTermMode::Verbatim ? static_cast<double>(p - 1) : 1.0;
  precision.diagonal().array() += copies * prior_precision;

  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) throw NumericalError("singular latent update system at node " + std::to_string(k + 1));
  return llt.solve(rhs);
}

Eigen::MatrixXd initial_latent(const EdgeSet& edges, const EmConfig& cfg, Rng& rng) {
  const int p = edges.nodes();
  const Eigen::MatrixXi hops = shortest_path_distances(network_from_edges(edges));
  const int mds_dim = std::min(cfg.dim, p);
  Eigen::MatrixXd latent(p, cfg.dim);
  latent.leftCols(mds_dim) = classical_mds(hops, mds_dim, &rng);
  for (int c = mds_dim; c < cfg.dim; ++c)
    for (int r = 0; r < p; ++r) latent(r, c) = draw_normal(rng, 0.0, 0.01);
  latent.col(0).setConstant(cfg.pin);
  return latent;
}

EmResult embed_subject(const EdgeSet& edges, const EmConfig& cfg, Rng& rng, const std::optional<Eigen::MatrixXd>& init) {
  cfg.validate();
  const int p = edges.nodes();
  if (p < 2) throw ValidationError("embedding needs at least two nodes");

  Embedding emb;
  emb.pin = cfg.pin;
  if (init) {
    if (init->rows() != p || init->cols() != cfg.dim)
      throw ValidationError("initial latent matrix must be p x d");
    emb.latent = *init;
    emb.latent.col(0).setConstant(cfg.pin);
  } else {
    emb.latent = initial_latent(edges, cfg, rng);
  }

  const Eigen::Index m = edges.size();
  {
    // start the intercept at the empirical logit, net of the initial inner products
    const double density = std::clamp(edges.values().mean(), 0.5 / m, 1.0 - 0.5 / m);
    const Eigen::MatrixXd gram = emb.latent * emb.latent.transpose();
    const double mean_inner = (gram.sum() - gram.trace()) / (2.0 * static_cast<double>(m));
    emb.intercept = std::log(density / (1.0 - density)) - mean_inner;
  }

  EmResult result;
  double lp = log_posterior(edges, emb, cfg);
  if (!std::isfinite(lp)) throw NumericalError("non-finite log posterior at initialization");
  result.trace.push_back(lp);

  const int free = cfg.dim - 1;
  Eigen::VectorXd omega(m);
  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    const Eigen::MatrixXd gram = emb.latent * emb.latent.transpose();
    Eigen::Index idx = 0;
    for (int k = 0; k < p; ++k)
      for (int l = k + 1; l < p; ++l) omega[idx++] = pg_expectation(emb.intercept + gram(k, l));

    emb.intercept = em_update_intercept(edges, omega, emb.latent);
    for (int k = 0; k < p; ++k)
      emb.latent.row(k).tail(free) = em_update_latent(k, edges, omega, emb.intercept, emb, cfg).transpose();

    const double next = log_posterior(edges, emb, cfg);
    if (!std::isfinite(next))
      throw NumericalError("non-finite log posterior at EM iteration " + std::to_string(iter) + " (intercept " +
                           std::to_string(emb.intercept) + ", max |U| " +
                           std::to_string(emb.latent.cwiseAbs().maxCoeff()) + ")");
    result.trace.push_back(next);
    result.iterations = iter;
    const double change = std::abs(next - lp) / (std::abs(lp) + 1.0);
    lp = next;
    if (change < cfg.rel_tol) {
      result.converged = true;
      break;
    }
  }
  result.embedding = std::move(emb);
  return result;
}

Eigen::VectorXd fitted_edge_probabilities(const Embedding& emb) {
  const int p = emb.nodes();
  const Eigen::MatrixXd gram = emb.latent * emb.latent.transpose();
  Eigen::VectorXd probs(edge_count_for(p));
  Eigen::Index idx = 0;
  for (int k = 0; k < p; ++k)
    for (int l = k + 1; l < p; ++l) probs[idx++] = sigmoid(emb.intercept + gram(k, l));
  return probs;
}

}  // namespace lsgpr
