#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "dynamics.hpp"
#include "seed.hpp"

namespace wdetect {

struct WatermarkParams {
  double lambda1 = 2.0, lambda2 = 5.0;
  double var_M1 = 7.2, var_M2 = 4.3;
  double var_F1 = 2.0, var_F2 = 3.5;
  bool identity = false;  // debug: every draw is M^-1 = I, F = 0

  void validate() const {
    auto pos = [](double v, const char* where) {
      if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(where, "must be positive and finite");
    };
    pos(lambda1, "watermark.lambda1");
    pos(lambda2, "watermark.lambda2");
    pos(var_M1, "watermark.var_M1");
    pos(var_M2, "watermark.var_M2");
    pos(var_F1, "watermark.var_F1");
    pos(var_F2, "watermark.var_F2");
  }
};

// Diagonals of M_r^-1 = lambda_r I + diag(M_r^2) and the additive keys F_r.
struct WatermarkDraw {
  Vec g1, g2;
  Vec F1, F2;
};

// Which side multiplies by the diagonal lambda + M^2.
//  sender:   ybar = g * y + F,  y* = (ybar - F) / g
//  receiver: ybar = y / g + F,  y* = g * (ybar - F)
// Both invert exactly on a clean channel; they differ in how tampering is
// amplified after removal (see README).
enum class GainSide { sender, receiver };

struct MessageSet {
  Vec y1, y2;
};

// Deterministic in (key, edge, k). Sender and receiver share `key`.
inline WatermarkDraw draw_watermark(Agent j, Agent i, std::size_t k, const WatermarkParams& p,
                                    std::uint64_t key, Eigen::Index n) {
  WatermarkDraw d{Vec::Ones(n), Vec::Ones(n), Vec::Zero(n), Vec::Zero(n)};
  if (p.identity) return d;
  auto eng = stream({key, tag(Purpose::watermark), j, i, k});
  std::normal_distribution<double> z(0.0, 1.0);
  const double sM1 = std::sqrt(p.var_M1), sM2 = std::sqrt(p.var_M2);
  const double sF1 = std::sqrt(p.var_F1), sF2 = std::sqrt(p.var_F2);
  for (Eigen::Index l = 0; l < n; ++l) {
    const double m = sM1 * z(eng);
    d.g1(l) = p.lambda1 + m * m;
  }
  for (Eigen::Index l = 0; l < n; ++l) {
    const double m = sM2 * z(eng);
    d.g2(l) = p.lambda2 + m * m;
  }
  for (Eigen::Index l = 0; l < n; ++l) d.F1(l) = sF1 * z(eng);
  for (Eigen::Index l = 0; l < n; ++l) d.F2(l) = sF2 * z(eng);
  return d;
}

inline MessageSet apply_watermark(const MessageSet& plain, const WatermarkDraw& d, GainSide side) {
  if (side == GainSide::sender)
    return {(d.g1.array() * plain.y1.array()).matrix() + d.F1, (d.g2.array() * plain.y2.array()).matrix() + d.F2};
  return {(plain.y1.array() / d.g1.array()).matrix() + d.F1, (plain.y2.array() / d.g2.array()).matrix() + d.F2};
}

// The second message is unmasked with its own key M_2 (never M_1).
inline MessageSet remove_watermark(const MessageSet& received, const WatermarkDraw& d, GainSide side) {
  const auto r1 = (received.y1 - d.F1).array();
  const auto r2 = (received.y2 - d.F2).array();
  if (side == GainSide::sender) return {(r1 / d.g1.array()).matrix(), (r2 / d.g2.array()).matrix()};
  return {(r1 * d.g1.array()).matrix(), (r2 * d.g2.array()).matrix()};
}

}  // namespace wdetect
