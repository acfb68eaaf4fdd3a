#include "lsgpr/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <sstream>

#include "lsgpr/error.hpp"

namespace lsgpr {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

int parse_int(const std::string& token, const std::string& context) {
  std::size_t used = 0;
  int value = 0;
  try {
    value = std::stoi(token, &used);
  } catch (const std::exception&) {
    throw ValidationError("cannot parse '" + token + "' in " + context);
  }
  if (used != token.size()) throw ValidationError("cannot parse '" + token + "' in " + context);
  return value;
}

std::vector<std::string> non_empty_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    line = trim(line);
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

}  // namespace

BinaryNetwork::BinaryNetwork(Eigen::MatrixXi adjacency, std::vector<std::string> node_labels)
    : adj_(std::move(adjacency)), labels_(std::move(node_labels)) {
  if (adj_.rows() != adj_.cols()) throw ValidationError("adjacency matrix is not square");
  const auto p = adj_.rows();
  if (!labels_.empty() && static_cast<Eigen::Index>(labels_.size()) != p)
    throw ValidationError("node label count does not match node count");
  for (Eigen::Index k = 0; k < p; ++k) {
    if (adj_(k, k) != 0) throw ValidationError("non-zero diagonal entry at node " + std::to_string(k + 1));
    for (Eigen::Index l = 0; l < p; ++l) {
      const int v = adj_(k, l);
      if (v != 0 && v != 1)
        throw ValidationError("non-binary entry " + std::to_string(v) + " at (" + std::to_string(k + 1) +
                              "," + std::to_string(l + 1) + ")");
      if (v != adj_(l, k)) throw ValidationError("adjacency matrix is not symmetric");
    }
  }
}

BinaryNetwork BinaryNetwork::empty(int p) {
  if (p < 1) throw ValidationError("network needs at least one node");
  return BinaryNetwork(Eigen::MatrixXi::Zero(p, p));
}

BinaryNetwork BinaryNetwork::from_edges(int p, const std::vector<std::pair<int, int>>& edges) {
  if (p < 1) throw ValidationError("network needs at least one node");
  Eigen::MatrixXi adj = Eigen::MatrixXi::Zero(p, p);
  for (const auto& [k, l] : edges) {
    if (k < 0 || l < 0 || k >= p || l >= p)
      throw ValidationError("edge (" + std::to_string(k + 1) + "," + std::to_string(l + 1) + ") out of range");
    if (k == l) throw ValidationError("self-loop at node " + std::to_string(k + 1));
    adj(k, l) = 1;
    adj(l, k) = 1;
  }
  return BinaryNetwork(std::move(adj));
}

std::size_t BinaryNetwork::edge_count() const {
  return static_cast<std::size_t>(adj_.sum() / 2);
}

EdgeSet::EdgeSet(int p, Eigen::VectorXd values) : p_(p), values_(std::move(values)) {
  if (p < 1) throw ValidationError("edge set needs at least one node");
  if (values_.size() != edge_count_for(p))
    throw ValidationError("edge vector length " + std::to_string(values_.size()) + " does not match p(p-1)/2 = " +
                          std::to_string(edge_count_for(p)));
  for (Eigen::Index i = 0; i < values_.size(); ++i)
    if (values_[i] != 0.0 && values_[i] != 1.0) throw ValidationError("edge vector entry is not 0/1");
}

double EdgeSet::at(int k, int l) const { return values_[edge_index(k, l, p_)]; }

Eigen::Index edge_index(int k, int l, int p) {
  if (k > l) std::swap(k, l);
  // rows 0..k-1 contribute (p-1) + (p-2) + ... + (p-k) entries
  const Eigen::Index before = static_cast<Eigen::Index>(k) * (2 * p - k - 1) / 2;
  return before + (l - k - 1);
}

NetworkFormat parse_network_format(const std::string& name) {
  if (name == "adjacency-csv" || name == "adjacency") return NetworkFormat::AdjacencyCsv;
  if (name == "edge-list-csv" || name == "edge-list") return NetworkFormat::EdgeListCsv;
  throw ValidationError("unknown network format '" + name + "'");
}

BinaryNetwork parse_adjacency_csv(const std::string& text) {
  const auto lines = non_empty_lines(text);
  if (lines.empty()) throw ValidationError("empty adjacency file");
  const auto p = static_cast<Eigen::Index>(lines.size());
  Eigen::MatrixXi adj(p, p);
  for (Eigen::Index k = 0; k < p; ++k) {
    const auto cells = split(lines[k], ',');
    if (static_cast<Eigen::Index>(cells.size()) != p)
      throw ValidationError("row " + std::to_string(k + 1) + " has " + std::to_string(cells.size()) +
                            " entries, expected " + std::to_string(p));
    for (Eigen::Index l = 0; l < p; ++l) adj(k, l) = parse_int(cells[l], "adjacency row " + std::to_string(k + 1));
  }
  return BinaryNetwork(std::move(adj));
}

BinaryNetwork parse_edge_list_csv(const std::string& text, int nodes) {
  std::vector<std::pair<int, int>> edges;
  for (const auto& line : non_empty_lines(text)) {
    const auto cells = split(line, ',');
    if (cells.size() != 2) throw ValidationError("edge list line '" + line + "' is not a k,l pair");
    const int k = parse_int(cells[0], "edge list");
    const int l = parse_int(cells[1], "edge list");
    if (k == l) throw ValidationError("self-loop at node " + std::to_string(k));
    edges.emplace_back(k - 1, l - 1);
  }
  return BinaryNetwork::from_edges(nodes, edges);
}

BinaryNetwork load_network(const std::string& path, NetworkFormat format, std::optional<int> nodes) {
  const std::string text = read_file(path);
  if (format == NetworkFormat::AdjacencyCsv) return parse_adjacency_csv(text);
  if (!nodes) throw ValidationError("edge-list input requires the node count (--nodes)");
  return parse_edge_list_csv(text, *nodes);
}

void save_adjacency_csv(const BinaryNetwork& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  const auto& adj = net.adjacency();
  for (Eigen::Index k = 0; k < adj.rows(); ++k) {
    for (Eigen::Index l = 0; l < adj.cols(); ++l) {
      if (l) out << ',';
      out << adj(k, l);
    }
    out << '\n';
  }
}

EdgeSet edge_vector(const BinaryNetwork& net) {
  const int p = net.nodes();
  Eigen::VectorXd e(edge_count_for(p));
  Eigen::Index idx = 0;
  for (int k = 0; k < p; ++k)
    for (int l = k + 1; l < p; ++l) e[idx++] = net.adjacency()(k, l);
  return EdgeSet(p, std::move(e));
}

BinaryNetwork network_from_edges(const EdgeSet& edges) {
  const int p = edges.nodes();
  Eigen::MatrixXi adj = Eigen::MatrixXi::Zero(p, p);
  Eigen::Index idx = 0;
  for (int k = 0; k < p; ++k)
    for (int l = k + 1; l < p; ++l) {
      const int v = edges[idx++] != 0.0 ? 1 : 0;
      adj(k, l) = v;
      adj(l, k) = v;
    }
  return BinaryNetwork(std::move(adj));
}

Eigen::MatrixXi shortest_path_distances(const BinaryNetwork& net) {
  const int p = net.nodes();
  const auto& adj = net.adjacency();
  std::vector<std::vector<int>> neighbours(p);
  for (int k = 0; k < p; ++k)
    for (int l = 0; l < p; ++l)
      if (adj(k, l)) neighbours[k].push_back(l);

  Eigen::MatrixXi dist = Eigen::MatrixXi::Constant(p, p, -1);
  std::queue<int> frontier;
  for (int source = 0; source < p; ++source) {
    dist(source, source) = 0;
    frontier.push(source);
    while (!frontier.empty()) {
      const int v = frontier.front();
      frontier.pop();
      for (int w : neighbours[v]) {
        if (dist(source, w) < 0) {
          dist(source, w) = dist(source, v) + 1;
          frontier.push(w);
        }
      }
    }
  }
  // unreachable pairs
  return (dist.array() < 0).select(Eigen::MatrixXi::Constant(p, p, p), dist);
}

Eigen::MatrixXd classical_mds(const Eigen::MatrixXi& distances, int dim, Rng* padding) {
  return classical_mds(Eigen::MatrixXd(distances.cast<double>()), dim, padding);
}

Eigen::MatrixXd classical_mds(const Eigen::MatrixXd& distances, int dim, Rng* padding) {
  const auto p = distances.rows();
  if (distances.cols() != p) throw ValidationError("distance matrix is not square");
  if (dim < 1) throw ValidationError("MDS dimension must be at least 1");
  if (dim > p) throw ValidationError("MDS dimension " + std::to_string(dim) + " exceeds node count " + std::to_string(p));

  const Eigen::MatrixXd sq = distances.array().square();
  const Eigen::MatrixXd centering =
      Eigen::MatrixXd::Identity(p, p) - Eigen::MatrixXd::Constant(p, p, 1.0 / static_cast<double>(p));
  Eigen::MatrixXd gram = -0.5 * centering * sq * centering;
  gram = 0.5 * (gram + gram.transpose());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  if (eig.info() != Eigen::Success) throw NumericalError("MDS eigendecomposition failed");
  // eigenvalues ascend; walk from the top
  const double tol = 1e-10 * std::max(1.0, std::abs(eig.eigenvalues()[p - 1]));
  Eigen::MatrixXd coords(p, dim);
  for (int c = 0; c < dim; ++c) {
    const Eigen::Index idx = p - 1 - c;
    const double lambda = eig.eigenvalues()[idx];
    if (lambda > tol) {
      coords.col(c) = eig.eigenvectors().col(idx) * std::sqrt(lambda);
    } else if (padding) {
      for (Eigen::Index r = 0; r < p; ++r) coords(r, c) = draw_normal(*padding, 0.0, 0.01);
      coords.col(c).array() -= coords.col(c).mean();
    } else {
      coords.col(c).setZero();
    }
  }
  return coords;
}

}  // namespace lsgpr
