#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "graph.hpp"

namespace wdetect {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// x(k+1) = A x(k) + B u(k), scalar input.
struct AgentModel {
  Mat A;
  Vec B;
  Eigen::Index n() const { return A.rows(); }
};

// Companion form: superdiagonal ones, last row rho, B = e_n.
inline AgentModel companion_model(const Vec& rho) {
  const auto n = rho.size();
  if (n < 1) throw ValidationError("model.rho", "empty coefficient vector");
  AgentModel m{Mat::Zero(n, n), Vec::Zero(n)};
  for (Eigen::Index r = 0; r + 1 < n; ++r) m.A(r, r + 1) = 1.0;
  m.A.row(n - 1) = rho.transpose();
  m.B(n - 1) = 1.0;
  return m;
}

// Discretized vehicle with state (position, velocity, acceleration) and
// first-order actuator lag delta.
inline AgentModel platoon_model(double delta, double T) {
  if (!(delta > 0.0)) throw ValidationError("model.delta", "must be positive");
  if (!(T > 0.0)) throw ValidationError("model.T", "must be positive");
  AgentModel m{Mat::Identity(3, 3), Vec::Zero(3)};
  m.A(0, 1) = T;
  m.A(1, 2) = T;
  m.A(2, 2) -= T / delta;
  m.B(2) = 1.0;
  return m;
}

struct ControllerGains {
  Vec K1;
  Vec K2;
  std::optional<std::string> warning;
};

// Gains for the companion model given b = (b_1..b_{n-1}), the coefficients of
// s^{n-1} + b_{n-1} s^{n-2} + ... + b_1. A root outside the unit circle is
// reported in `warning`; the gains are still returned.
inline ControllerGains companion_gains(const Vec& rho, const Vec& b) {
  const auto n = rho.size();
  if (n < 1) throw ValidationError("controller.rho", "empty coefficient vector");
  if (b.size() != n - 1) throw ValidationError("controller.b", "must have n-1 entries");
  ControllerGains g{Vec::Zero(n), Vec::Zero(n), std::nullopt};
  for (Eigen::Index r = 0; r < n; ++r) {
    const double br = r < n - 1 ? b(r) : 0.0;
    const double bprev = r > 0 ? b(r - 1) : 0.0;
    g.K1(r) = -rho(r) + br - bprev;
    g.K2(r) = r < n - 1 ? b(r) : 1.0;
  }
  g.K1(n - 1) += 1.0;
  if (n > 1) {
    // roots of the monic polynomial via its companion matrix
    Mat C = Mat::Zero(n - 1, n - 1);
    for (Eigen::Index r = 0; r + 1 < n - 1; ++r) C(r, r + 1) = 1.0;
    C.row(n - 2) = -b.transpose();
    Eigen::EigenSolver<Mat> es(C, false);
    for (Eigen::Index r = 0; r < es.eigenvalues().size(); ++r)
      if (std::abs(es.eigenvalues()(r)) >= 1.0) {
        g.warning = "polynomial in b has a root on or outside the unit circle";
        break;
      }
  }
  return g;
}

// Ackermann's formula: K with eig(A - B K) = poles (real poles only).
inline Vec place_poles(const AgentModel& m, const std::vector<double>& poles) {
  const auto n = m.n();
  if (static_cast<Eigen::Index>(poles.size()) != n) throw ValidationError("poles", "need one pole per state");
  Mat ctrb(n, n);
  Vec col = m.B;
  for (Eigen::Index c = 0; c < n; ++c) {
    ctrb.col(c) = col;
    col = m.A * col;
  }
  Eigen::FullPivLU<Mat> lu(ctrb);
  if (!lu.isInvertible()) throw ValidationError("model", "pair (A, B) is not controllable");
  Mat p = Mat::Identity(n, n);
  for (double z : poles) p = p * (m.A - z * Mat::Identity(n, n));
  Vec en = Vec::Zero(n);
  en(n - 1) = 1.0;
  return (en.transpose() * lu.inverse() * p).transpose();
}

struct ControllerParams {
  Vec K1;
  Vec K2;
  double gain_mu = 1.0;
  double gain_lambda = 0.6;
  double noise_var = 0.0;  // per-element channel noise variance
};

// a(k) = mu * k^(-Lambda). The first control move happens at k = 0 and uses a(1).
inline double noise_gain(std::size_t k, const ControllerParams& p) {
  const double kk = k == 0 ? 1.0 : static_cast<double>(k);
  return p.gain_mu * std::pow(kk, -p.gain_lambda);
}

// u_i = K1 x_i + a(k) sum_j a_ij K2 (y_ij - x_i); the leader uses K1 x_0 only.
inline double compute_control(Agent i, const Vec& x_i, const std::map<Agent, Vec>& received, std::size_t k,
                              const Topology& t, const ControllerParams& p) {
  double u = p.K1.dot(x_i);
  if (i == 0) return u;
  double acc = 0.0;
  for (Agent j : t.in_neighbors(i)) {
    auto it = received.find(j);
    if (it == received.end()) throw ValidationError(edge_name(j, i), "missing neighbor message");
    acc += t.weight(j, i) * p.K2.dot(it->second - x_i);
  }
  return u + noise_gain(k, p) * acc;
}

using Snapshot = std::vector<Vec>;  // one state per agent at a fixed step

struct SystemState {
  std::size_t k = 0;
  Snapshot x;
};

inline SystemState step_system(const SystemState& s, const std::vector<double>& u, const AgentModel& m) {
  if (u.size() != s.x.size()) throw ValidationError("controls", "need one control per agent");
  SystemState next{s.k + 1, Snapshot(s.x.size())};
  for (std::size_t a = 0; a < s.x.size(); ++a) next.x[a] = m.A * s.x[a] + m.B * u[a];
  return next;
}

// eta(k) = max over followers of the cross-trial mean of |x_i - x_0| / |x_0|.
// Empty when the leader state is zero in any trial.
inline std::optional<double> transient_metric(const std::vector<Snapshot>& trials) {
  if (trials.empty()) return std::nullopt;
  const std::size_t agents = trials.front().size();
  std::vector<double> sum(agents, 0.0);
  for (const auto& snap : trials) {
    const double ref = snap[0].norm();
    if (ref == 0.0) return std::nullopt;
    for (std::size_t i = 1; i < agents; ++i) sum[i] += (snap[i] - snap[0]).norm() / ref;
  }
  double eta = 0.0;
  for (std::size_t i = 1; i < agents; ++i) eta = std::max(eta, sum[i] / static_cast<double>(trials.size()));
  return eta;
}

// Component-wise extremes of the states, known to the attacker.
struct StateBounds {
  double eps1 = 0.0;
  double eps2 = 0.0;
};

inline StateBounds compute_state_bounds(const std::vector<Snapshot>& snapshots) {
  if (snapshots.empty()) throw ValidationError("trajectories", "empty");
  StateBounds b{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& snap : snapshots)
    for (const auto& x : snap) {
      b.eps1 = std::min(b.eps1, x.minCoeff());
      b.eps2 = std::max(b.eps2, x.maxCoeff());
    }
  return b;
}

}  // namespace wdetect
