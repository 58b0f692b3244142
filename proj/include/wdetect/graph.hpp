#pragma once

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <map>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"

namespace wdetect {

using Agent = std::size_t;

// A directed edge j -> i: agent j transmits to agent i with weight a_ij.
struct Edge {
  Agent from;
  Agent to;
  double weight = 1.0;
};

inline std::string edge_name(Agent j, Agent i) {
  return "(" + std::to_string(j) + "," + std::to_string(i) + ")";
}

// Anything that answers size() and has_edge(from, to).
template <class G>
concept DigraphView = requires(const G& g, std::size_t a, std::size_t b) {
  { g.size() } -> std::convertible_to<std::size_t>;
  { g.has_edge(a, b) } -> std::convertible_to<bool>;
};

// Weighted digraph over agents 0..N, agent 0 being the leader.
// Immutable after construction.
class Topology {
 public:
  Topology() = default;

  Topology(std::size_t n_agents, const std::vector<Edge>& edges)
      : n_(n_agents), in_(n_agents), out_(n_agents) {
    if (n_agents == 0) throw ValidationError("topology.n_agents", "must be positive");
    for (const auto& e : edges) {
      const auto name = edge_name(e.from, e.to);
      if (e.from >= n_ || e.to >= n_) throw ValidationError(name, "agent index out of range");
      if (e.from == e.to) throw ValidationError(name, "self-loop");
      if (!(e.weight > 0.0)) throw ValidationError(name, "weight must be positive");
      if (!weights_.emplace(std::make_pair(e.from, e.to), e.weight).second)
        throw ValidationError(name, "duplicate edge");
      edges_.push_back(e);
      in_[e.to].push_back(e.from);
      out_[e.from].push_back(e.to);
    }
    for (auto& v : in_) std::sort(v.begin(), v.end());
    for (auto& v : out_) std::sort(v.begin(), v.end());
    std::sort(edges_.begin(), edges_.end(), [](const Edge& a, const Edge& b) {
      return std::pair(a.to, a.from) < std::pair(b.to, b.from);
    });
  }

  std::size_t size() const { return n_; }
  std::size_t followers() const { return n_ - 1; }
  const std::vector<Edge>& edges() const { return edges_; }
  // N_i^+ : agents that transmit to i
  const std::vector<Agent>& in_neighbors(Agent i) const { return in_.at(i); }
  // N_j^- : agents that receive from j
  const std::vector<Agent>& out_neighbors(Agent j) const { return out_.at(j); }

  bool has_edge(Agent from, Agent to) const { return weights_.count({from, to}) > 0; }
  double weight(Agent from, Agent to) const {
    auto it = weights_.find({from, to});
    return it == weights_.end() ? 0.0 : it->second;
  }

 private:
  std::size_t n_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<Agent>> in_, out_;
  std::map<std::pair<Agent, Agent>, double> weights_;
};

// l_ii = sum_j a_ij, l_ij = -a_ij over all agents (leader included).
inline Eigen::MatrixXd laplacian(const Topology& t) {
  const auto n = static_cast<Eigen::Index>(t.size());
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
  for (const auto& e : t.edges()) {
    const auto i = static_cast<Eigen::Index>(e.to), j = static_cast<Eigen::Index>(e.from);
    L(i, j) -= e.weight;
    L(i, i) += e.weight;
  }
  return L;
}

// Follower block of the Laplacian with the leader's row and column removed.
inline Eigen::MatrixXd grounded_laplacian(const Topology& t) {
  const auto n = static_cast<Eigen::Index>(t.size());
  return laplacian(t).bottomRightCorner(n - 1, n - 1);
}

struct SpectralBound {
  double lambda_min = 0.0;
  bool has_complex = false;  // some eigenvalue carried a non-negligible imaginary part
};

// Smallest real part among the eigenvalues of C * L2, C = diag(c).
inline SpectralBound grounded_laplacian_min_eigenvalue(const Topology& t, const Eigen::VectorXd& c) {
  if (t.followers() == 0) throw ValidationError("topology", "no followers");
  if (c.size() != static_cast<Eigen::Index>(t.followers()))
    throw ValidationError("scaling", "size must equal the number of followers");
  if ((c.array() <= 0.0).any()) throw ValidationError("scaling", "entries must be positive");
  const Eigen::MatrixXd M = c.asDiagonal() * grounded_laplacian(t);
  Eigen::EigenSolver<Eigen::MatrixXd> es(M, false);
  SpectralBound out{std::numeric_limits<double>::infinity(), false};
  constexpr double tol = 1e-9;
  for (Eigen::Index r = 0; r < es.eigenvalues().size(); ++r) {
    const auto ev = es.eigenvalues()(r);
    if (std::abs(ev.imag()) > tol * std::max(1.0, std::abs(ev))) out.has_complex = true;
    out.lambda_min = std::min(out.lambda_min, ev.real());
  }
  return out;
}

inline SpectralBound grounded_laplacian_min_eigenvalue(const Topology& t) {
  return grounded_laplacian_min_eigenvalue(t, Eigen::VectorXd::Ones(static_cast<Eigen::Index>(t.followers())));
}

// Every agent reachable from root along edge directions.
inline bool has_spanning_tree(const Topology& t, Agent root) {
  if (root >= t.size()) throw ValidationError("root", "agent index out of range");
  std::vector<char> seen(t.size(), 0);
  std::queue<Agent> q;
  q.push(root);
  seen[root] = 1;
  std::size_t count = 1;
  while (!q.empty()) {
    const Agent a = q.front();
    q.pop();
    for (Agent b : t.out_neighbors(a))
      if (!seen[b]) {
        seen[b] = 1;
        ++count;
        q.push(b);
      }
  }
  return count == t.size();
}

// Number of intermediates s (s != i, j) with j -> s and s -> i.
template <DigraphView G>
std::size_t count_directed_two_hop_paths(const G& g, std::size_t j, std::size_t i) {
  std::size_t count = 0;
  for (std::size_t s = 0; s < g.size(); ++s)
    if (s != i && s != j && g.has_edge(j, s) && g.has_edge(s, i)) ++count;
  return count;
}

// Local attack budget: at most L misbehaving in-neighbors and P attacked
// in-channels per agent.
struct LocalAttackBudget {
  std::size_t L = 0;
  std::size_t P = 0;
};

struct EdgeShortfall {
  Agent from;
  Agent to;
  std::size_t paths;
};

struct DetectabilityReport {
  bool satisfied = true;
  std::size_t required = 1;
  std::vector<EdgeShortfall> violations;
};

// Every edge (j, i) needs at least L + P + 1 two-hop paths j -> s -> i.
inline DetectabilityReport check_hybrid_detectability(const Topology& t, LocalAttackBudget b) {
  DetectabilityReport r;
  r.required = b.L + b.P + 1;
  for (const auto& e : t.edges()) {
    const auto paths = count_directed_two_hop_paths(t, e.from, e.to);
    if (paths < r.required) r.violations.push_back({e.from, e.to, paths});
  }
  r.satisfied = r.violations.empty();
  return r;
}

}  // namespace wdetect
