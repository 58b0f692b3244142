#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dynamics.hpp"
#include "seed.hpp"
#include "watermark.hpp"

namespace wdetect {

// Half-open step window [start, end); no end means active until the horizon.
struct Window {
  std::size_t start = 0;
  std::optional<std::size_t> end;

  bool contains(std::size_t k) const { return k >= start && (!end || k < *end); }
  bool empty() const { return end && *end <= start; }
  bool overlaps(const Window& o) const {
    const bool a_before_b = end && *end <= o.start;
    const bool b_before_a = o.end && *o.end <= start;
    return !a_before_b && !b_before_a;
  }
};

// Element-wise time profile used for diagonal gains and offsets.
struct Schedule {
  enum class Kind { constant, sinusoid, ramp };
  Kind kind = Kind::constant;
  Vec a;  // constant value, sinusoid amplitude, or ramp intercept
  Vec b;  // sinusoid offset or ramp slope (zero when absent)
  double omega = 1.0;
  double phase = 0.0;

  static Schedule constant(Vec v) { return {Kind::constant, std::move(v), Vec(), 1.0, 0.0}; }

  // sinusoid: a sin(omega k + phase) + b, in absolute step k
  // ramp:     a + b (k - start)
  Vec value(std::size_t k, std::size_t start) const {
    const Vec off = b.size() ? b : Vec::Zero(a.size());
    switch (kind) {
      case Kind::constant:
        return a;
      case Kind::sinusoid:
        return a * std::sin(omega * static_cast<double>(k) + phase) + off;
      case Kind::ramp:
        return a + off * (static_cast<double>(k) - static_cast<double>(start));
    }
    return a;
  }
};

// ybar^a_r = Xi_r ybar_r + Lam_r on one edge, Xi_r diagonal.
struct ChannelAttack {
  Agent from = 0, to = 0;
  Window window;
  Schedule xi1, lam1, xi2, lam2;
};

struct ByzantineBehavior {
  enum class Kind { constant_offset, divergent_ramp, frozen_state, per_neighbor_random, geometric };
  Agent agent = 0;
  Window window;
  Kind kind = Kind::constant_offset;
  Vec c;               // offset, ramp slope, or geometric base
  double ratio = 1.0;  // geometric growth per step
  double scale = 1.0;  // per-neighbor random spread
};

struct AttackScenario {
  std::vector<ChannelAttack> channel;
  std::vector<ByzantineBehavior> byzantine;
  LocalAttackBudget budget{1, 1};
};

struct StealthSet {
  double xi_lo = -1.0, xi_hi = 1.0;
  double lam_lo = 0.0, lam_hi = 0.0;
};

// Multiplicative and additive ranges that keep tampered values inside the
// attacker-known bounds [eps1, eps2].
inline StealthSet stealth_admissible_set(const StateBounds& b) {
  if (b.eps1 > b.eps2) throw ValidationError("bounds", "eps1 > eps2");
  StealthSet s;
  if (b.eps1 > 0.0) {
    s.lam_lo = 0.0;
    s.lam_hi = b.eps1 + b.eps2;
  } else if (b.eps2 < 0.0) {
    s.lam_lo = b.eps1 + b.eps2;
    s.lam_hi = 0.0;
  } else {
    s.lam_lo = b.eps1;
    s.lam_hi = b.eps2;
  }
  return s;
}

struct StealthViolation {
  std::size_t k;
  std::string term;  // Xi1, Lam1, Xi2, Lam2
  Eigen::Index element;
  double value;
};

struct StealthReport {
  bool admissible = true;
  std::vector<StealthViolation> violations;
};

// Samples the attack over its window (clipped to the horizon).
inline StealthReport validate_stealth(const ChannelAttack& a, const StateBounds& b, std::size_t horizon) {
  const auto set = stealth_admissible_set(b);
  StealthReport r;
  const std::size_t stop = a.window.end ? std::min(*a.window.end, horizon) : horizon;
  auto check = [&](std::size_t k, const Schedule& s, const char* term, double lo, double hi) {
    const Vec v = s.value(k, a.window.start);
    for (Eigen::Index l = 0; l < v.size(); ++l)
      if (v(l) < lo || v(l) > hi) r.violations.push_back({k, term, l, v(l)});
  };
  for (std::size_t k = a.window.start; k < stop; ++k) {
    check(k, a.xi1, "Xi1", set.xi_lo, set.xi_hi);
    check(k, a.lam1, "Lam1", set.lam_lo, set.lam_hi);
    check(k, a.xi2, "Xi2", set.xi_lo, set.xi_hi);
    check(k, a.lam2, "Lam2", set.lam_lo, set.lam_hi);
  }
  r.admissible = r.violations.empty();
  return r;
}

inline MessageSet tamper_channel(const MessageSet& msg, const ChannelAttack& a, std::size_t k) {
  if (!a.window.contains(k)) return msg;
  const auto s = a.window.start;
  return {(a.xi1.value(k, s).array() * msg.y1.array()).matrix() + a.lam1.value(k, s),
          (a.xi2.value(k, s).array() * msg.y2.array()).matrix() + a.lam2.value(k, s)};
}

// Value the Byzantine agent transmits to `neighbor`. Its own state is untouched.
// `at_start` is the agent's true state at the window start (frozen behavior).
inline Vec byzantine_emit(const ByzantineBehavior& bz, Agent neighbor, std::size_t k, const Vec& true_state,
                          const Vec& at_start, std::uint64_t key) {
  if (!bz.window.contains(k)) return true_state;
  using K = ByzantineBehavior::Kind;
  switch (bz.kind) {
    case K::constant_offset:
      return true_state + bz.c;
    case K::divergent_ramp:
      return true_state + bz.c * static_cast<double>(k);
    case K::frozen_state:
      return at_start;
    case K::per_neighbor_random: {
      auto eng = stream({key, tag(Purpose::byzantine), bz.agent, neighbor, k});
      std::normal_distribution<double> z(0.0, bz.scale);
      Vec out = true_state;
      for (Eigen::Index l = 0; l < out.size(); ++l) out(l) += z(eng);
      return out;
    }
    case K::geometric:
      return true_state + bz.c * std::pow(bz.ratio, static_cast<double>(k - bz.window.start));
  }
  return true_state;
}

struct ActiveSet {
  std::vector<const ChannelAttack*> channel;
  std::vector<const ByzantineBehavior*> byzantine;
};

inline ActiveSet active_attacks(const AttackScenario& s, std::size_t k) {
  ActiveSet out;
  for (const auto& a : s.channel)
    if (a.window.contains(k)) out.channel.push_back(&a);
  for (const auto& b : s.byzantine)
    if (b.window.contains(k)) out.byzantine.push_back(&b);
  return out;
}

inline const ChannelAttack* channel_attack_on(const AttackScenario& s, Agent j, Agent i, std::size_t k) {
  for (const auto& a : s.channel)
    if (a.from == j && a.to == i && a.window.contains(k)) return &a;
  return nullptr;
}

inline const ByzantineBehavior* byzantine_at(const AttackScenario& s, Agent j, std::size_t k) {
  for (const auto& b : s.byzantine)
    if (b.agent == j && b.window.contains(k)) return &b;
  return nullptr;
}

// Structural checks plus the per-agent budget at every step below `horizon`.
inline void validate_attacks(const AttackScenario& s, const Topology& t, std::size_t horizon, Eigen::Index n) {
  for (std::size_t a = 0; a < s.channel.size(); ++a) {
    const auto& ca = s.channel[a];
    const std::string where = "attacks.channel[" + std::to_string(a) + "]";
    if (!t.has_edge(ca.from, ca.to)) throw ValidationError(where, "edge " + edge_name(ca.from, ca.to) + " not in topology");
    if (ca.window.empty()) throw ValidationError(where, "empty window");
    for (const Schedule* sc : {&ca.xi1, &ca.lam1, &ca.xi2, &ca.lam2})
      if (sc->a.size() != n || (sc->b.size() && sc->b.size() != n))
        throw ValidationError(where, "schedule dimension must equal the state dimension");
    for (std::size_t b = 0; b < a; ++b) {
      const auto& other = s.channel[b];
      if (other.from == ca.from && other.to == ca.to && other.window.overlaps(ca.window))
        throw ValidationError(where, "overlaps another attack on edge " + edge_name(ca.from, ca.to));
    }
  }
  for (std::size_t a = 0; a < s.byzantine.size(); ++a) {
    const auto& bz = s.byzantine[a];
    const std::string where = "attacks.byzantine[" + std::to_string(a) + "]";
    if (bz.agent >= t.size()) throw ValidationError(where, "agent out of range");
    if (bz.window.empty()) throw ValidationError(where, "empty window");
    const bool needs_c = bz.kind != ByzantineBehavior::Kind::frozen_state &&
                         bz.kind != ByzantineBehavior::Kind::per_neighbor_random;
    if (needs_c && bz.c.size() != n) throw ValidationError(where, "offset dimension must equal the state dimension");
    for (std::size_t b = 0; b < a; ++b)
      if (s.byzantine[b].agent == bz.agent && s.byzantine[b].window.overlaps(bz.window))
        throw ValidationError(where, "overlaps another behavior of agent " + std::to_string(bz.agent));
  }
  for (std::size_t k = 0; k < horizon; ++k)
    for (Agent i = 0; i < t.size(); ++i) {
      std::size_t bad_agents = 0, bad_channels = 0;
      for (Agent j : t.in_neighbors(i)) {
        if (byzantine_at(s, j, k)) ++bad_agents;
        if (channel_attack_on(s, j, i, k)) ++bad_channels;
      }
      if (bad_agents > s.budget.L || bad_channels > s.budget.P)
        throw ValidationError("attacks.budget", "exceeded at agent " + std::to_string(i) + ", step " + std::to_string(k));
    }
}

}  // namespace wdetect
