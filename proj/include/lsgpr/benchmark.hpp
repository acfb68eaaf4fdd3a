#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lsgpr/embed.hpp"
#include "lsgpr/gp.hpp"
#include "lsgpr/sim.hpp"

namespace lsgpr {

enum class Method { LsGpr1, LsGpr2, Ridge, PcaGpr };

Method parse_method(const std::string& name);
std::string to_string(Method method);

struct BenchmarkCell {
  int d0 = 5;
  double sparsity = 0.5;
};

struct BenchmarkSpec {
  std::vector<BenchmarkCell> cells{{5, 0.5}};
  int replicates = 10;
  std::vector<Method> methods{Method::LsGpr1, Method::LsGpr2, Method::Ridge, Method::PcaGpr};
  SimConfig sim;  // d0, sparsity and seed are overwritten per replicate
  EmConfig em;
  SamplerConfig sampler;
  GpPriors priors;
  std::uint64_t seed = 1;

  void validate() const;
  // Cartesian product of the given d0 and sparsity values, d0 outermost.
  static std::vector<BenchmarkCell> grid(const std::vector<int>& d0, const std::vector<double>& sparsity);
};

struct BenchmarkRow {
  int cell = 0;
  int d0 = 0;
  double sparsity = 0.0;
  int replicate = 0;
  std::uint64_t seed = 0;
  Method method = Method::LsGpr1;
  EvalReport report;
  bool ok = true;
  std::string message;
};

// Seeds: the dataset of (cell, replicate) uses derive_seed(seed, cell, replicate);
// embedding, sampler and prediction streams are derived from that seed.
std::uint64_t replicate_seed(const BenchmarkSpec& spec, int cell, int replicate);

// One simulate -> embed -> fit -> predict pass; a failing method yields a row
// with ok = false instead of throwing.
std::vector<BenchmarkRow> run_replicate(const BenchmarkSpec& spec, int cell, int replicate);
std::vector<BenchmarkRow> run_benchmark(const BenchmarkSpec& spec);

struct BenchmarkSummary {
  int cell = 0;
  int d0 = 0;
  double sparsity = 0.0;
  Method method = Method::LsGpr1;
  int completed = 0;
  int failed = 0;
  double mse_mean = 0.0, mse_sd = 0.0;
  double coverage_mean = 0.0, coverage_sd = 0.0;
  double width_mean = 0.0, width_sd = 0.0;
};

// Means and sample standard deviations over completed replicates, one entry
// per (cell, method) in first-seen order.
std::vector<BenchmarkSummary> summarize(const std::vector<BenchmarkRow>& rows);

// Seed for the i-th subject's embedding (MDS padding) under master `seed`.
std::uint64_t embedding_seed(std::uint64_t seed, int index);

// Embeds every network of `data` with per-subject seeds derived from `seed`.
std::vector<Subject> embed_dataset(const SimDataset& data, const EmConfig& cfg, std::uint64_t seed);

}  // namespace lsgpr
