#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lsgpr/random.hpp"

namespace lsgpr {

// Undirected binary graph on p nodes: symmetric 0/1 adjacency, empty diagonal.
class BinaryNetwork {
 public:
  BinaryNetwork() = default;
  // Validates symmetry, binary entries and zero diagonal.
  explicit BinaryNetwork(Eigen::MatrixXi adjacency, std::vector<std::string> node_labels = {});

  static BinaryNetwork empty(int p);
  // 0-indexed (k, l) pairs; duplicates are harmless, self-loops are rejected.
  static BinaryNetwork from_edges(int p, const std::vector<std::pair<int, int>>& edges);

  int nodes() const { return static_cast<int>(adj_.rows()); }
  bool has_edge(int k, int l) const { return adj_(k, l) != 0; }
  const Eigen::MatrixXi& adjacency() const { return adj_; }
  const std::vector<std::string>& node_labels() const { return labels_; }
  std::size_t edge_count() const;

  bool operator==(const BinaryNetwork& other) const { return adj_ == other.adj_; }

 private:
  Eigen::MatrixXi adj_;
  std::vector<std::string> labels_;
};

// Upper-triangle edge indicators in row-major order:
// (0,1),(0,2),...,(0,p-1),(1,2),...,(p-2,p-1).
class EdgeSet {
 public:
  EdgeSet() = default;
  EdgeSet(int p, Eigen::VectorXd values);

  int nodes() const { return p_; }
  Eigen::Index size() const { return values_.size(); }
  double operator[](Eigen::Index i) const { return values_[i]; }
  double at(int k, int l) const;
  const Eigen::VectorXd& values() const { return values_; }

  bool operator==(const EdgeSet& other) const { return p_ == other.p_ && values_ == other.values_; }

 private:
  int p_ = 0;
  Eigen::VectorXd values_;
};

inline Eigen::Index edge_count_for(int p) { return static_cast<Eigen::Index>(p) * (p - 1) / 2; }

// Position of pair (k, l), k != l, in EdgeSet order.
Eigen::Index edge_index(int k, int l, int p);

enum class NetworkFormat { AdjacencyCsv, EdgeListCsv };

NetworkFormat parse_network_format(const std::string& name);

// Edge-list files are 1-indexed "k,l" lines and need the node count.
BinaryNetwork load_network(const std::string& path, NetworkFormat format,
                           std::optional<int> nodes = std::nullopt);
BinaryNetwork parse_adjacency_csv(const std::string& text);
BinaryNetwork parse_edge_list_csv(const std::string& text, int nodes);
void save_adjacency_csv(const BinaryNetwork& net, const std::string& path);

EdgeSet edge_vector(const BinaryNetwork& net);
BinaryNetwork network_from_edges(const EdgeSet& edges);

// BFS hop counts. Pairs in different components get distance p.
Eigen::MatrixXi shortest_path_distances(const BinaryNetwork& net);

// Classical (Torgerson) scaling of a distance matrix into dim columns,
// ordered by decreasing eigenvalue. Negative eigenvalues are clamped to zero.
// Columns without a strictly positive eigenvalue are zero, or, when `padding`
// is given, centered N(0, 0.01^2) draws.
Eigen::MatrixXd classical_mds(const Eigen::MatrixXi& distances, int dim, Rng* padding = nullptr);
Eigen::MatrixXd classical_mds(const Eigen::MatrixXd& distances, int dim, Rng* padding = nullptr);

}  // namespace lsgpr
