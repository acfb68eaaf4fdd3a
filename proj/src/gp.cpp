#include "lsgpr/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lsgpr/error.hpp"
#include "lsgpr/linalg.hpp"

namespace lsgpr {

namespace {

constexpr double kZ975 = 1.959963984540054;

double squared_frobenius(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return (a - b).squaredNorm(); }

void check_subject_shapes(std::span<const Subject> subjects, const Subject& reference) {
  for (const auto& s : subjects) {
    if (s.embedding.latent.rows() != reference.embedding.latent.rows() ||
        s.embedding.latent.cols() != reference.embedding.latent.cols())
      throw ValidationError("subject " + s.id + " has latent shape " + std::to_string(s.embedding.latent.rows()) + "x" +
                            std::to_string(s.embedding.latent.cols()) + ", expected " +
                            std::to_string(reference.embedding.latent.rows()) + "x" +
                            std::to_string(reference.embedding.latent.cols()));
    if (s.covariates.size() != reference.covariates.size())
      throw ValidationError("subject " + s.id + " has " + std::to_string(s.covariates.size()) +
                            " covariates, expected " + std::to_string(reference.covariates.size()));
  }
}

// exp(-psi_u E_u - psi_a E_a - psi_z E_z)
Eigen::MatrixXd correlation(double psi_u, double psi_a, double psi_z, const DistanceMatrices& dist) {
  return (-psi_u * dist.latent.array() - psi_a * dist.intercept.array() - psi_z * dist.covariate.array()).exp().matrix();
}

double objective_or_inf(const GpHyperparams& hp, const Eigen::VectorXd& y, const DistanceMatrices& dist) {
  try {
    const double f = neg_log_likelihood(hp, y, dist);
    return std::isfinite(f) ? f : std::numeric_limits<double>::infinity();
  } catch (const NumericalError&) {
    return std::numeric_limits<double>::infinity();
  }
}

double median_positive_offdiag(const Eigen::MatrixXd& m) {
  std::vector<double> values;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = i + 1; j < m.cols(); ++j)
      if (m(i, j) > 0.0) values.push_back(m(i, j));
  if (values.empty()) return 0.0;
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
  std::nth_element(values.begin(), mid, values.end());
  return *mid;
}

double& lengthscale(SamplerState& s, int which) {
  switch (which) {
    case 0: return s.psi_u;
    case 1: return s.psi_a;
    default: return s.psi_z;
  }
}

// Linear-interpolated sample quantile (type 7).
double quantile(std::vector<double> values, double prob) {
  std::sort(values.begin(), values.end());
  const double pos = prob * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

void record_draw(Chains& chains, Eigen::Index row, const SamplerState& s) {
  chains.hyper.row(row) << s.tau, s.psi1, s.psi_u, s.psi_a, s.psi_z;
  chains.atoms.row(row) = s.atoms.transpose();
  for (std::size_t j = 0; j < s.mask.size(); ++j) chains.mask(row, static_cast<Eigen::Index>(j)) = s.mask[j];
  chains.inclusion_prob[row] = s.inclusion_prob;
}

Chains allocate_chains(const SamplerConfig& config, Eigen::Index n, std::size_t p) {
  Chains chains;
  const int kept = config.retained();
  chains.hyper.resize(kept, 5);
  chains.atoms.resize(kept, n);
  chains.mask.resize(kept, static_cast<Eigen::Index>(p));
  chains.inclusion_prob.resize(kept);
  chains.iterations = config.iterations;
  return chains;
}

bool keep_draw(const SamplerConfig& config, int iter) {
  return iter > config.burn_in && (iter - config.burn_in - 1) % config.thin == 0;
}

void validate_sampler_inputs(const Eigen::VectorXd& y, const DistanceMatrices& dist, const SamplerState& init) {
  if (dist.rows() != y.size() || dist.cols() != y.size()) throw ValidationError("distance matrices do not match response length");
  if (init.atoms.size() != y.size()) throw ValidationError("initial atoms do not match response length");
  if (!(init.tau > 0.0 && init.psi1 > 0.0 && init.psi_u > 0.0 && init.psi_a > 0.0 && init.psi_z > 0.0))
    throw ValidationError("initial sampler state must have positive parameters");
}

}  // namespace

GpHyperparams GpHyperparams::from_natural(double tau, double psi1, double psi_u, double psi_a, double psi_z) {
  if (!(tau > 0.0 && psi1 > 0.0 && psi_u > 0.0 && psi_a > 0.0 && psi_z > 0.0))
    throw ValidationError("GP hyperparameters must be positive");
  GpHyperparams hp;
  hp.theta << std::log(tau), std::log(psi1), std::log(psi_u), std::log(psi_a), std::log(psi_z);
  return hp;
}

DistanceMatrices distance_matrices(std::span<const Subject> subjects) {
  return cross_distance_matrices(subjects, subjects);
}

DistanceMatrices cross_distance_matrices(std::span<const Subject> rows_of, std::span<const Subject> cols_of) {
  const auto m = static_cast<Eigen::Index>(rows_of.size());
  const auto n = static_cast<Eigen::Index>(cols_of.size());
  DistanceMatrices dist{Eigen::MatrixXd::Zero(m, n), Eigen::MatrixXd::Zero(m, n), Eigen::MatrixXd::Zero(m, n)};
  if (m == 0 || n == 0) return dist;
  const Subject& reference = cols_of.front();
  check_subject_shapes(rows_of, reference);
  check_subject_shapes(cols_of, reference);
  const bool same = rows_of.data() == cols_of.data() && m == n;
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = same ? i + 1 : 0; j < n; ++j) {
      const Subject& a = rows_of[i];
      const Subject& b = cols_of[j];
      dist.latent(i, j) = squared_frobenius(a.embedding.latent, b.embedding.latent);
      const double da = a.embedding.intercept - b.embedding.intercept;
      dist.intercept(i, j) = da * da;
      dist.covariate(i, j) = (a.covariates - b.covariates).squaredNorm();
      if (same) {
        dist.latent(j, i) = dist.latent(i, j);
        dist.intercept(j, i) = dist.intercept(i, j);
        dist.covariate(j, i) = dist.covariate(i, j);
      }
    }
  }
  return dist;
}

std::vector<Eigen::MatrixXd> node_distance_contributions(std::span<const Subject> rows_of,
                                                         std::span<const Subject> cols_of) {
  const auto m = static_cast<Eigen::Index>(rows_of.size());
  const auto n = static_cast<Eigen::Index>(cols_of.size());
  if (n == 0) return {};
  check_subject_shapes(rows_of, cols_of.front());
  check_subject_shapes(cols_of, cols_of.front());
  const int p = cols_of.front().embedding.nodes();
  std::vector<Eigen::MatrixXd> out(p, Eigen::MatrixXd::Zero(m, n));
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto diff = (rows_of[i].embedding.latent - cols_of[k].embedding.latent).eval();
      const Eigen::VectorXd per_node = diff.rowwise().squaredNorm();
      for (int j = 0; j < p; ++j) out[j](i, k) = per_node[j];
    }
  return out;
}

Eigen::MatrixXd masked_latent_distance(const std::vector<Eigen::MatrixXd>& contributions, const std::vector<int>& mask) {
  if (contributions.size() != mask.size()) throw ValidationError("node mask length does not match node count");
  if (contributions.empty()) return {};
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(contributions.front().rows(), contributions.front().cols());
  for (std::size_t j = 0; j < mask.size(); ++j)
    if (mask[j]) out += contributions[j];
  return out;
}

Eigen::MatrixXd kernel_matrix(const GpHyperparams& hp, const DistanceMatrices& dist, bool include_noise) {
  const Eigen::ArrayXXd exponent = hp.theta[1] - std::exp(hp.theta[2]) * dist.latent.array() -
                                   std::exp(hp.theta[3]) * dist.intercept.array() -
                                   std::exp(hp.theta[4]) * dist.covariate.array();
  Eigen::MatrixXd k = exponent.exp().matrix();
  if (include_noise) {
    if (k.rows() != k.cols()) throw ValidationError("noise term requires a square kernel");
    k.diagonal().array() += std::exp(-hp.theta[0]);
  }
  return k;
}

double neg_log_likelihood(const GpHyperparams& hp, const Eigen::VectorXd& y, const DistanceMatrices& dist) {
  if (dist.rows() != y.size()) throw ValidationError("distance matrices do not match response length");
  const JitteredCholesky chol(kernel_matrix(hp, dist, true));
  return 0.5 * chol.log_det() + 0.5 * y.dot(chol.solve(y));
}

GpHyperparams::Vector gradient(const GpHyperparams& hp, const Eigen::VectorXd& y, const DistanceMatrices& dist) {
  if (dist.rows() != y.size()) throw ValidationError("distance matrices do not match response length");
  const Eigen::MatrixXd base = kernel_matrix(hp, dist, false);
  Eigen::MatrixXd k = base;
  k.diagonal().array() += std::exp(-hp.theta[0]);
  const JitteredCholesky chol(k);
  const Eigen::VectorXd alpha = chol.solve(y);
  const Eigen::MatrixXd w = chol.inverse() - alpha * alpha.transpose();

  // trace(W dK) = sum(W .* dK) for symmetric dK
  const Eigen::ArrayXXd wb = w.array() * base.array();
  GpHyperparams::Vector g;
  g[0] = 0.5 * (-std::exp(-hp.theta[0])) * w.trace();
  g[1] = 0.5 * wb.sum();
  g[2] = 0.5 * (wb * (-std::exp(hp.theta[2]) * dist.latent.array())).sum();
  g[3] = 0.5 * (wb * (-std::exp(hp.theta[3]) * dist.intercept.array())).sum();
  g[4] = 0.5 * (wb * (-std::exp(hp.theta[4]) * dist.covariate.array())).sum();
  return g;
}

GpHyperparams default_initial_hyperparams(const Eigen::VectorXd& y, const DistanceMatrices& dist) {
  double var = 1.0;
  if (y.size() > 1) {
    const double v = (y.array() - y.mean()).square().sum() / static_cast<double>(y.size() - 1);
    if (v > 0.0) var = v;
  }
  auto inverse_median = [](const Eigen::MatrixXd& m) {
    const double med = median_positive_offdiag(m);
    return med > 0.0 ? 1.0 / med : 1.0;
  };
  return GpHyperparams::from_natural(2.0 / var, 0.5 * var, inverse_median(dist.latent),
                                     inverse_median(dist.intercept), inverse_median(dist.covariate));
}

std::string to_string(MleStatus status) {
  switch (status) {
    case MleStatus::Converged: return "converged";
    case MleStatus::MaxIterations: return "max-iterations";
    default: return "step-underflow";
  }
}

MleResult fit_mle(const Eigen::VectorXd& y, const DistanceMatrices& dist, const GpHyperparams& init,
                  const MleOptions& options) {
  MleResult result;
  GpHyperparams theta = init;
  double f = neg_log_likelihood(theta, y, dist);
  if (!std::isfinite(f)) throw NumericalError("non-finite objective at the initial hyperparameters");
  result.trace.push_back(f);
  double lr = options.initial_step;

  auto accept = [&](const GpHyperparams& next, double f_next) {
    theta = next;
    result.trace.push_back(f_next);
    const bool done = std::abs(f - f_next) < options.tolerance;
    f = f_next;
    return done;
  };

  for (int iter = 1; iter <= options.max_iters; ++iter) {
    result.iterations = iter;
    const GpHyperparams::Vector df = gradient(theta, y, dist);
    if (!df.allFinite()) throw NumericalError("non-finite gradient at iteration " + std::to_string(iter));
    if (df.isZero(0.0)) {
      result.status = MleStatus::Converged;
      break;
    }

    GpHyperparams candidate;
    candidate.theta = theta.theta - lr * df;
    double f_candidate = objective_or_inf(candidate, y, dist);
    if (f_candidate < f) {
      lr *= 1.5;
      if (accept(candidate, f_candidate)) {
        result.status = MleStatus::Converged;
        break;
      }
      continue;
    }

    bool underflow = false;
    while (f_candidate >= f) {
      lr *= 0.5;
      if (lr < options.min_step) {
        underflow = true;
        break;
      }
      candidate.theta = theta.theta - lr * df;
      f_candidate = objective_or_inf(candidate, y, dist);
    }
    if (underflow) {
      result.status = MleStatus::StepUnderflow;
      break;
    }
    if (accept(candidate, f_candidate)) {
      result.status = MleStatus::Converged;
      break;
    }
  }
  result.hyperparams = theta;
  return result;
}

void GpPriors::validate() const {
  if (!(a_tau > 0 && b_tau > 0 && a_psi1 > 0 && b_psi1 > 0 && a_pi > 0 && b_pi > 0))
    throw ValidationError("prior parameters must be positive");
}

void SamplerConfig::validate() const {
  if (iterations < 1) throw ValidationError("sampler needs at least one iteration");
  if (burn_in < 0 || burn_in >= iterations) throw ValidationError("burn-in must be in [0, iterations)");
  if (thin < 1) throw ValidationError("thinning must be at least 1");
  if (!(proposal_sd >= 0.0)) throw ValidationError("proposal sd must be non-negative");
}

Eigen::VectorXd Chains::inclusion_probabilities() const {
  if (mask.cols() == 0 || mask.rows() == 0) return {};
  return mask.cast<double>().colwise().mean().transpose();
}

SamplerState Chains::state(Eigen::Index draw) const {
  SamplerState s;
  s.tau = hyper(draw, 0);
  s.psi1 = hyper(draw, 1);
  s.psi_u = hyper(draw, 2);
  s.psi_a = hyper(draw, 3);
  s.psi_z = hyper(draw, 4);
  s.atoms = atoms.row(draw).transpose();
  s.mask.resize(static_cast<std::size_t>(mask.cols()));
  for (Eigen::Index j = 0; j < mask.cols(); ++j) s.mask[static_cast<std::size_t>(j)] = mask(draw, j);
  s.inclusion_prob = inclusion_prob[draw];
  return s;
}

SamplerState initial_state(const GpHyperparams& hp, const Eigen::VectorXd& y, const DistanceMatrices& dist) {
  SamplerState s;
  s.tau = hp.tau();
  s.psi1 = hp.psi1();
  s.psi_u = hp.psi_u();
  s.psi_a = hp.psi_a();
  s.psi_z = hp.psi_z();
  const Eigen::MatrixXd k = kernel_matrix(hp, dist, false);
  Eigen::MatrixXd c = k;
  c.diagonal().array() += 1.0 / s.tau;
  s.atoms = k * JitteredCholesky(c).solve(y);
  return s;
}

double marginal_log_likelihood(const SamplerState& s, const Eigen::VectorXd& y, const DistanceMatrices& dist) {
  Eigen::MatrixXd c = s.psi1 * correlation(s.psi_u, s.psi_a, s.psi_z, dist);
  c.diagonal().array() += 1.0 / s.tau;
  const JitteredCholesky chol(c);
  return -0.5 * chol.log_det() - 0.5 * y.dot(chol.solve(y));
}

void sample_tau(SamplerState& s, const Eigen::VectorXd& y, const GpPriors& priors, Rng& rng) {
  const double n = static_cast<double>(y.size());
  s.tau = draw_gamma(rng, priors.a_tau + 0.5 * n, priors.b_tau + 0.5 * (y - s.atoms).squaredNorm());
}

void sample_psi1(SamplerState& s, const DistanceMatrices& dist, const GpPriors& priors, Rng& rng) {
  const double n = static_cast<double>(s.atoms.size());
  const JitteredCholesky chol(correlation(s.psi_u, s.psi_a, s.psi_z, dist));
  const double quad = s.atoms.dot(chol.solve(s.atoms));
  s.psi1 = draw_inv_gamma(rng, priors.a_psi1 + 0.5 * n, priors.b_psi1 + 0.5 * quad);
}

double lengthscale_log_acceptance(const SamplerState& current, const SamplerState& proposal, const Eigen::VectorXd& y,
                                  const DistanceMatrices& dist) {
  return marginal_log_likelihood(proposal, y, dist) - marginal_log_likelihood(current, y, dist);
}

std::array<bool, 3> sample_lengthscales(SamplerState& s, const Eigen::VectorXd& y, const DistanceMatrices& dist,
                                        double proposal_sd, Rng& rng) {
  std::array<bool, 3> accepted{false, false, false};
  double current = marginal_log_likelihood(s, y, dist);
  for (int which = 0; which < 3; ++which) {
    SamplerState proposal = s;
    double& value = lengthscale(proposal, which);
    value = std::exp(std::log(value) + draw_normal(rng, 0.0, proposal_sd));
    const double log_u = std::log(draw_uniform(rng));
    double candidate = -std::numeric_limits<double>::infinity();
    try {
      candidate = marginal_log_likelihood(proposal, y, dist);
    } catch (const NumericalError&) {
      continue;  // unfactorizable proposal: reject
    }
    if (std::isfinite(candidate) && log_u < candidate - current) {
      lengthscale(s, which) = value;
      current = candidate;
      accepted[which] = true;
    }
  }
  return accepted;
}

void sample_atoms(SamplerState& s, const Eigen::VectorXd& y, const DistanceMatrices& dist, Rng& rng) {
  // phi ~ N(K (K + tau^-1 I)^-1 y, (K^-1 + tau I)^-1) drawn as a prior sample
  // corrected toward the data: phi = f + K (K + tau^-1 I)^-1 (y - f - eps).
  const auto n = y.size();
  const Eigen::MatrixXd k = s.psi1 * correlation(s.psi_u, s.psi_a, s.psi_z, dist);
  Eigen::MatrixXd c = k;
  c.diagonal().array() += 1.0 / s.tau;
  const JitteredCholesky chol_k(k);
  const JitteredCholesky chol_c(c);
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = draw_normal(rng);
  const Eigen::VectorXd f = chol_k.multiply_lower(z);
  Eigen::VectorXd eps(n);
  const double noise_sd = 1.0 / std::sqrt(s.tau);
  for (Eigen::Index i = 0; i < n; ++i) eps[i] = draw_normal(rng, 0.0, noise_sd);
  s.atoms = f + k * chol_c.solve(Eigen::VectorXd(y - f - eps));
}

void sample_inclusion_prob(SamplerState& s, const GpPriors& priors, Rng& rng) {
  const double p = static_cast<double>(s.mask.size());
  const double included = static_cast<double>(std::count(s.mask.begin(), s.mask.end(), 1));
  s.inclusion_prob = draw_beta(rng, priors.a_pi + included, priors.b_pi + p - included);
}

Chains gibbs_sample(const Eigen::VectorXd& y, const DistanceMatrices& dist, const GpPriors& priors,
                    const SamplerConfig& config, const SamplerState& init) {
  priors.validate();
  config.validate();
  validate_sampler_inputs(y, dist, init);
  Rng rng(config.seed);
  SamplerState s = init;
  s.mask.clear();
  Chains chains = allocate_chains(config, y.size(), 0);
  Eigen::Index row = 0;
  for (int iter = 1; iter <= config.iterations; ++iter) {
    if (config.update_tau) sample_tau(s, y, priors, rng);
    if (config.update_psi1) sample_psi1(s, dist, priors, rng);
    if (config.update_lengthscales) {
      const auto acc = sample_lengthscales(s, y, dist, config.proposal_sd, rng);
      for (int i = 0; i < 3; ++i) chains.accepted[i] += acc[i];
    }
    if (config.update_atoms) sample_atoms(s, y, dist, rng);
    if (keep_draw(config, iter)) record_draw(chains, row++, s);
  }
  return chains;
}

double node_inclusion_probability(int j, const SamplerState& s, const Eigen::VectorXd& y,
                                  const std::vector<Eigen::MatrixXd>& contributions, const DistanceMatrices& dist) {
  if (j < 0 || static_cast<std::size_t>(j) >= s.mask.size()) throw ValidationError("node index out of range");
  std::vector<int> mask = s.mask;
  DistanceMatrices local = dist;
  mask[j] = 1;
  local.latent = masked_latent_distance(contributions, mask);
  const double log_in = marginal_log_likelihood(s, y, local);
  mask[j] = 0;
  local.latent = masked_latent_distance(contributions, mask);
  const double log_out = marginal_log_likelihood(s, y, local);
  const double pi = s.inclusion_prob;
  if (pi <= 0.0) return 0.0;
  if (pi >= 1.0) return 1.0;
  const double logit = std::log(pi) - std::log1p(-pi) + log_in - log_out;
  return std::min(1.0, 1.0 / (1.0 + std::exp(-logit)));
}

Chains node_selection_sample(const Eigen::VectorXd& y, const DistanceMatrices& dist,
                             const std::vector<Eigen::MatrixXd>& contributions, const GpPriors& priors,
                             const SamplerConfig& config, const SamplerState& init) {
  priors.validate();
  config.validate();
  validate_sampler_inputs(y, dist, init);
  if (contributions.empty()) throw ValidationError("node selection needs per-node distance contributions");
  const std::size_t p = contributions.size();
  Rng rng(config.seed);
  SamplerState s = init;
  if (s.mask.size() != p) s.mask.assign(p, 1);
  DistanceMatrices local = dist;
  local.latent = masked_latent_distance(contributions, s.mask);

  Chains chains = allocate_chains(config, y.size(), p);
  Eigen::Index row = 0;
  for (int iter = 1; iter <= config.iterations; ++iter) {
    if (config.update_tau) sample_tau(s, y, priors, rng);
    if (config.update_psi1) sample_psi1(s, local, priors, rng);
    if (config.update_lengthscales) {
      const auto acc = sample_lengthscales(s, y, local, config.proposal_sd, rng);
      for (int i = 0; i < 3; ++i) chains.accepted[i] += acc[i];
    }
    if (config.update_atoms) sample_atoms(s, y, local, rng);

    for (std::size_t j = 0; j < p; ++j) {
      const double prob = node_inclusion_probability(static_cast<int>(j), s, y, contributions, local);
      s.mask[j] = draw_bernoulli(rng, prob) ? 1 : 0;
    }
    local.latent = masked_latent_distance(contributions, s.mask);
    sample_inclusion_prob(s, priors, rng);

    if (keep_draw(config, iter)) record_draw(chains, row++, s);
  }
  return chains;
}

Prediction predict_mle(const GpHyperparams& hp, const Eigen::VectorXd& y, const DistanceMatrices& train,
                       const DistanceMatrices& cross) {
  const auto m = cross.rows();
  Prediction out{Eigen::VectorXd(m), Eigen::VectorXd(m), Eigen::VectorXd(m)};
  if (m == 0) return out;
  if (cross.cols() != y.size()) throw ValidationError("cross distances do not match training size");
  const JitteredCholesky chol(kernel_matrix(hp, train, true));
  const Eigen::MatrixXd k_star = kernel_matrix(hp, cross, false);
  out.mean = k_star * chol.solve(y);
  const Eigen::MatrixXd solved = chol.solve(Eigen::MatrixXd(k_star.transpose()));
  const double prior_var = hp.psi1() + 1.0 / hp.tau();
  for (Eigen::Index q = 0; q < m; ++q) {
    const double var = std::max(0.0, prior_var - k_star.row(q).dot(solved.col(q)));
    const double half = kZ975 * std::sqrt(var);
    out.lower[q] = out.mean[q] - half;
    out.upper[q] = out.mean[q] + half;
  }
  return out;
}

Prediction predict_chains(const Chains& chains, const ChainPredictInputs& inputs, Rng& rng) {
  if (!inputs.train || !inputs.cross) throw ValidationError("chain prediction needs train and cross distances");
  const auto m = inputs.cross->rows();
  const auto draws = chains.draws();
  Prediction out{Eigen::VectorXd(m), Eigen::VectorXd(m), Eigen::VectorXd(m)};
  if (m == 0) return out;
  if (draws == 0) throw ValidationError("no retained draws to predict from");
  const bool masked = chains.has_node_selection();
  if (masked && (!inputs.train_contributions || !inputs.cross_contributions))
    throw ValidationError("node-selection chains need per-node distance contributions");

  Eigen::MatrixXd samples(m, draws);
  DistanceMatrices train = *inputs.train;
  DistanceMatrices cross = *inputs.cross;
  for (Eigen::Index d = 0; d < draws; ++d) {
    const SamplerState s = chains.state(d);
    if (masked) {
      train.latent = masked_latent_distance(*inputs.train_contributions, s.mask);
      cross.latent = masked_latent_distance(*inputs.cross_contributions, s.mask);
    }
    const GpHyperparams hp = s.hyperparams();
    const JitteredCholesky chol(kernel_matrix(hp, train, false));
    const Eigen::VectorXd cond_mean = kernel_matrix(hp, cross, false) * chol.solve(s.atoms);
    const double noise_sd = 1.0 / std::sqrt(s.tau);
    for (Eigen::Index q = 0; q < m; ++q) samples(q, d) = cond_mean[q] + draw_normal(rng, 0.0, noise_sd);
  }
  for (Eigen::Index q = 0; q < m; ++q) {
    std::vector<double> row(static_cast<std::size_t>(draws));
    for (Eigen::Index d = 0; d < draws; ++d) row[static_cast<std::size_t>(d)] = samples(q, d);
    out.mean[q] = samples.row(q).mean();
    out.lower[q] = quantile(row, 0.025);
    out.upper[q] = quantile(std::move(row), 0.975);
  }
  return out;
}

FitMode parse_fit_mode(const std::string& name) {
  if (name == "mle") return FitMode::Mle;
  if (name == "mcmc") return FitMode::Mcmc;
  throw ValidationError("unknown fit mode '" + name + "' (expected mle or mcmc)");
}

std::string to_string(FitMode mode) { return mode == FitMode::Mle ? "mle" : "mcmc"; }

GpModel fit_model(std::vector<Subject> training, Eigen::VectorXd y, const FitOptions& options) {
  if (training.empty()) throw ValidationError("no training subjects");
  if (static_cast<Eigen::Index>(training.size()) != y.size())
    throw ValidationError("response count does not match training subject count");
  GpModel model;
  model.mode = options.mode;
  model.priors = options.priors;
  model.sampler = options.sampler;
  model.training = std::move(training);
  model.y = std::move(y);

  const DistanceMatrices dist = distance_matrices(model.training);
  const GpHyperparams init = options.init ? *options.init : default_initial_hyperparams(model.y, dist);
  model.mle = fit_mle(model.y, dist, init, options.mle);

  if (options.mode == FitMode::Mcmc) {
    SamplerState start = initial_state(model.mle.hyperparams, model.y, dist);
    if (options.node_selection) {
      const auto contributions = node_distance_contributions(model.training, model.training);
      start.inclusion_prob = options.priors.a_pi / (options.priors.a_pi + options.priors.b_pi);
      model.chains = node_selection_sample(model.y, dist, contributions, options.priors, options.sampler, start);
    } else {
      model.chains = gibbs_sample(model.y, dist, options.priors, options.sampler, start);
    }
  }
  return model;
}

void check_compatible(const GpModel& model, std::span<const Subject> test) {
  if (model.training.empty()) throw ValidationError("model has no training subjects");
  const Subject& ref = model.training.front();
  for (const auto& s : test) {
    if (s.embedding.dim() != ref.embedding.dim())
      throw ValidationError("subject " + s.id + " embedded with d=" + std::to_string(s.embedding.dim()) +
                            ", model trained with d=" + std::to_string(ref.embedding.dim()));
    if (s.embedding.nodes() != ref.embedding.nodes())
      throw ValidationError("subject " + s.id + " has " + std::to_string(s.embedding.nodes()) +
                            " nodes, model trained on " + std::to_string(ref.embedding.nodes()));
    if (s.embedding.pin != ref.embedding.pin)
      throw ValidationError("subject " + s.id + " embedded with a different pin value than the training set");
    if (s.covariates.size() != ref.covariates.size())
      throw ValidationError("subject " + s.id + " covariate count differs from the training set");
  }
}

Prediction predict(const GpModel& model, std::span<const Subject> test, Rng& rng) {
  check_compatible(model, test);
  const DistanceMatrices train = distance_matrices(model.training);
  const DistanceMatrices cross = cross_distance_matrices(test, model.training);
  if (model.mode == FitMode::Mle || !model.chains) return predict_mle(model.mle.hyperparams, model.y, train, cross);

  ChainPredictInputs inputs{&train, &cross, nullptr, nullptr};
  std::vector<Eigen::MatrixXd> train_contrib;
  std::vector<Eigen::MatrixXd> cross_contrib;
  if (model.chains->has_node_selection()) {
    train_contrib = node_distance_contributions(model.training, model.training);
    cross_contrib = node_distance_contributions(test, model.training);
    inputs.train_contributions = &train_contrib;
    inputs.cross_contributions = &cross_contrib;
  }
  return predict_chains(*model.chains, inputs, rng);
}

}  // namespace lsgpr
