#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <random>

#include "lsgpr/error.hpp"
#include "lsgpr/network.hpp"
#include "support.hpp"

using namespace lsgpr;

namespace {

std::string write_temp(const std::string& name, const std::string& text) {
  const std::string path = "/tmp/lsgpr_test_" + name;
  std::ofstream(path) << text;
  return path;
}

BinaryNetwork path3() { return BinaryNetwork::from_edges(3, {{0, 1}, {1, 2}}); }

}  // namespace

TEST_CASE("adjacency csv loads and validates") {
  const auto net = load_network(write_temp("adj.csv", "0,1,0\n1,0,1\n0,1,0\n"), NetworkFormat::AdjacencyCsv);
  CHECK(net.nodes() == 3);
  CHECK(net.has_edge(0, 1));
  CHECK(net.has_edge(1, 2));
  CHECK_FALSE(net.has_edge(0, 2));
  CHECK(net == path3());
}

TEST_CASE("edge list matches adjacency form") {
  const auto net = load_network(write_temp("edges.csv", "1,2\n2,3\n"), NetworkFormat::EdgeListCsv, 3);
  CHECK(net == path3());
  // reversed pair is symmetrized
  CHECK(parse_edge_list_csv("2,1\n3,2\n", 3) == path3());
}

TEST_CASE("malformed networks are rejected") {
  CHECK_THROWS_AS(parse_adjacency_csv("0,2,0\n2,0,1\n0,1,0\n"), ValidationError);
  CHECK_THROWS_AS(parse_adjacency_csv("0,1,0\n0,0,1\n0,1,0\n"), ValidationError);
  CHECK_THROWS_AS(parse_adjacency_csv("1,1\n1,0\n"), ValidationError);
  CHECK_THROWS_AS(parse_adjacency_csv("0,1\n1\n"), ValidationError);
  CHECK_THROWS_AS(parse_adjacency_csv("0,x\nx,0\n"), ValidationError);
  CHECK_THROWS_AS(parse_edge_list_csv("1,1\n", 3), ValidationError);
  CHECK_THROWS_AS(parse_edge_list_csv("1,4\n", 3), ValidationError);
  CHECK_THROWS_AS(load_network("/nonexistent/net.csv", NetworkFormat::AdjacencyCsv), ValidationError);
  CHECK_THROWS_AS(load_network(write_temp("e2.csv", "1,2\n"), NetworkFormat::EdgeListCsv), ValidationError);
}

TEST_CASE("edge vector ordering") {
  CHECK(edge_vector(path3()).values() == Eigen::Vector3d(1, 0, 1));
  CHECK(edge_vector(BinaryNetwork::empty(4)).values() == Eigen::VectorXd::Zero(6));
  Eigen::MatrixXi complete = Eigen::MatrixXi::Ones(4, 4);
  complete.diagonal().setZero();
  CHECK(edge_vector(BinaryNetwork(complete)).values() == Eigen::VectorXd::Ones(6));

  // row-major upper triangle
  const int p = 6;
  Eigen::Index expected = 0;
  for (int k = 0; k < p; ++k)
    for (int l = k + 1; l < p; ++l) {
      CHECK(edge_index(k, l, p) == expected);
      CHECK(edge_index(l, k, p) == expected);
      ++expected;
    }
  CHECK_THROWS_AS(EdgeSet(4, Eigen::VectorXd::Zero(5)), ValidationError);
}

TEST_CASE("edge vector round trip is exhaustive for p <= 5") {
  for (int p = 2; p <= 5; ++p) {
    const auto m = edge_count_for(p);
    for (long mask = 0; mask < (1L << m); ++mask) {
      Eigen::VectorXd e(m);
      for (Eigen::Index i = 0; i < m; ++i) e[i] = (mask >> i) & 1;
      const EdgeSet edges(p, e);
      const BinaryNetwork net = network_from_edges(edges);
      REQUIRE(edge_vector(net) == edges);
      REQUIRE(network_from_edges(edge_vector(net)) == net);
    }
  }
}

TEST_CASE("shortest path distances") {
  const auto d = shortest_path_distances(path3());
  CHECK(d(0, 2) == 2);
  CHECK(d(2, 0) == 2);
  CHECK(shortest_path_distances(BinaryNetwork::empty(2))(0, 1) == 2);

  Eigen::MatrixXi complete = Eigen::MatrixXi::Ones(5, 5);
  complete.diagonal().setZero();
  const auto dc = shortest_path_distances(BinaryNetwork(complete));
  CHECK(dc == complete);
}

TEST_CASE("shortest paths agree with Floyd-Warshall") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int p = 2 + trial % 11;
    const double density = 0.05 + 0.5 * (trial % 7) / 7.0;
    const auto net = testing::random_network(p, density, rng);
    REQUIRE(shortest_path_distances(net) == testing::floyd_warshall(net.adjacency()));
  }
}

TEST_CASE("classical MDS of a path graph is a line") {
  const Eigen::MatrixXd x = classical_mds(shortest_path_distances(path3()), 1);
  CHECK(std::abs(std::abs(x(0, 0) - x(1, 0)) - 1.0) < 1e-12);
  CHECK(std::abs(std::abs(x(1, 0) - x(2, 0)) - 1.0) < 1e-12);
  CHECK(std::abs(std::abs(x(0, 0) - x(2, 0)) - 2.0) < 1e-12);
}

TEST_CASE("classical MDS reproduces Euclidean distances at full dimension") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  const int p = 7;
  Eigen::MatrixXd pts(p, 3);
  for (int i = 0; i < p; ++i)
    for (int c = 0; c < 3; ++c) pts(i, c) = normal(rng);
  Eigen::MatrixXd d(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) d(i, j) = (pts.row(i) - pts.row(j)).norm();

  for (int dim : {3, p}) {
    const Eigen::MatrixXd x = classical_mds(d, dim);
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < p; ++j) CHECK(std::abs((x.row(i) - x.row(j)).norm() - d(i, j)) < 1e-9);
  }
}

TEST_CASE("classical MDS spectrum matches an independent eigensolver") {
  std::mt19937_64 rng(5);
  const int p = 6;
  const auto net = testing::random_network(p, 0.5, rng);
  const Eigen::MatrixXd dist = shortest_path_distances(net).cast<double>();

  Eigen::MatrixXd b(p, p);
  const Eigen::MatrixXd sq = dist.array().square();
  const double grand = sq.mean();
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) b(i, j) = -0.5 * (sq(i, j) - sq.row(i).mean() - sq.col(j).mean() + grand);
  const Eigen::VectorXd spectrum = testing::jacobi_eigenvalues(b);

  const int dim = 3;
  const Eigen::MatrixXd x = classical_mds(dist, dim);
  for (int c = 0; c < dim; ++c) {
    const double lambda = std::max(0.0, spectrum[c]);
    CHECK(x.col(c).squaredNorm() == doctest::Approx(lambda).epsilon(1e-9));
    if (lambda > 1e-9) CHECK((b * x.col(c) - lambda * x.col(c)).norm() < 1e-8);
  }
  // strain of the top-dim configuration equals the discarded spectrum mass
  const Eigen::MatrixXd resid = b - x * x.transpose();
  double discarded = 0.0;
  for (int c = dim; c < p; ++c) discarded += std::pow(std::max(0.0, spectrum[c]), 2) + std::pow(std::min(0.0, spectrum[c]), 2);
  CHECK(resid.squaredNorm() == doctest::Approx(discarded).epsilon(1e-8));
}

TEST_CASE("classical MDS output is centered and validates dimension") {
  std::mt19937_64 gen(9);
  Rng pad(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto net = testing::random_network(10, 0.3, gen);
    const Eigen::MatrixXd x = classical_mds(shortest_path_distances(net), 10, &pad);
    for (int c = 0; c < 10; ++c) CHECK(std::abs(x.col(c).mean()) < 1e-10);
  }
  CHECK_THROWS_AS(classical_mds(shortest_path_distances(path3()), 4), ValidationError);
  CHECK_THROWS_AS(classical_mds(shortest_path_distances(path3()), 0), ValidationError);
}

TEST_CASE("classical MDS pads degenerate directions only when asked") {
  // empty graph: every distance is p, one zero eigenvalue from centering
  const auto d = shortest_path_distances(BinaryNetwork::empty(4));
  const Eigen::MatrixXd plain = classical_mds(d, 4);
  CHECK(plain.col(3).isZero());
  Rng pad(2);
  const Eigen::MatrixXd padded = classical_mds(d, 4, &pad);
  CHECK_FALSE(padded.col(3).isZero());
  CHECK(padded.col(3).cwiseAbs().maxCoeff() < 0.1);
}
