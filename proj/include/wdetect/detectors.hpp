#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "dynamics.hpp"
#include "watermark.hpp"

namespace wdetect {

// Closed-form KL(N(mu_a, var_a) || N(mu_b, var_b)) summed over independent elements.
inline double gaussian_kl(const Vec& mu_a, const Vec& var_a, const Vec& mu_b, const Vec& var_b) {
  if ((var_a.array() <= 0.0).any() || (var_b.array() <= 0.0).any())
    throw ValidationError("gaussian_kl", "variances must be positive");
  double kl = 0.0;
  for (Eigen::Index l = 0; l < mu_a.size(); ++l) {
    const double d = mu_a(l) - mu_b(l);
    kl += 0.5 * std::log(var_b(l) / var_a(l)) + (var_a(l) + d * d) / (2.0 * var_b(l)) - 0.5;
  }
  return kl;
}

enum class Estimator { gaussian_fit, histogram };

struct KlDetectorConfig {
  double theta = 4.61;
  Estimator estimator = Estimator::gaussian_fit;
  std::size_t min_samples = 30;
  std::size_t bins = 64;
  double smoothing = 1e-6;
  // Fitted variances are floored here so that a degenerate (noise-free) sample
  // set gives a finite statistic instead of an error.
  double var_floor = 1e-12;
};

struct GaussianFit {
  Vec mean, var;
};

// Per-element sample mean and unbiased variance.
inline GaussianFit fit_gaussian(const std::vector<Vec>& s, double var_floor) {
  const auto n = s.front().size();
  GaussianFit f{Vec::Zero(n), Vec::Zero(n)};
  for (const auto& v : s) f.mean += v;
  f.mean /= static_cast<double>(s.size());
  for (const auto& v : s) f.var += (v - f.mean).array().square().matrix();
  f.var /= static_cast<double>(s.size() - 1);
  f.var = f.var.cwiseMax(var_floor);
  return f;
}

inline double histogram_kl(const std::vector<Vec>& a, const std::vector<Vec>& b, const KlDetectorConfig& cfg) {
  const auto n = a.front().size();
  const auto bins = static_cast<double>(cfg.bins);
  double kl = 0.0;
  for (Eigen::Index l = 0; l < n; ++l) {
    double lo = a.front()(l), hi = lo;
    for (const auto* side : {&a, &b})
      for (const auto& v : *side) {
        lo = std::min(lo, v(l));
        hi = std::max(hi, v(l));
      }
    if (!(hi > lo)) continue;
    const double width = (hi - lo) / bins;
    auto histogram = [&](const std::vector<Vec>& s) {
      std::vector<double> h(cfg.bins, cfg.smoothing);
      for (const auto& v : s) {
        auto idx = static_cast<std::size_t>((v(l) - lo) / width);
        h[std::min(idx, cfg.bins - 1)] += 1.0;
      }
      const double total = static_cast<double>(s.size()) + bins * cfg.smoothing;
      for (auto& x : h) x /= total;
      return h;
    };
    const auto p = histogram(a), q = histogram(b);
    for (std::size_t c = 0; c < cfg.bins; ++c) kl += p[c] * std::log(p[c] / q[c]);
  }
  return kl;
}

// KL(a || b) from samples.
inline double estimate_kl(const std::vector<Vec>& a, const std::vector<Vec>& b, const KlDetectorConfig& cfg) {
  if (a.size() < cfg.min_samples || b.size() < cfg.min_samples || a.size() < 2 || b.size() < 2)
    throw ValidationError("estimate_kl", "insufficient samples");
  if (cfg.estimator == Estimator::histogram) return histogram_kl(a, b, cfg);
  const auto fa = fit_gaussian(a, cfg.var_floor), fb = fit_gaussian(b, cfg.var_floor);
  return gaussian_kl(fa.mean, fa.var, fb.mean, fb.var);
}

// KL of fitted residuals against the channel-noise reference N(0, noise_var I).
// The single-value, unwatermarked baseline statistic.
inline double residual_kl(const std::vector<Vec>& residuals, double noise_var, const KlDetectorConfig& cfg) {
  if (residuals.size() < std::max<std::size_t>(cfg.min_samples, 2))
    throw ValidationError("residual_kl", "insufficient samples");
  const auto f = fit_gaussian(residuals, cfg.var_floor);
  const auto n = f.mean.size();
  return gaussian_kl(f.mean, f.var, Vec::Zero(n), Vec::Constant(n, std::max(noise_var, cfg.var_floor)));
}

enum class DetectorKind { kl, envelope1, envelope2 };

inline const char* to_string(DetectorKind d) {
  switch (d) {
    case DetectorKind::kl: return "kl";
    case DetectorKind::envelope1: return "envelope1";
    case DetectorKind::envelope2: return "envelope2";
  }
  return "?";
}

struct EdgeVerdict {
  Agent from = 0, to = 0;
  std::size_t k = 0;
  DetectorKind detector = DetectorKind::kl;
  double statistic = 0.0;
  bool attacked = false;
};

// H0 (secure) iff kl <= theta.
inline EdgeVerdict kl_verdict(double kl, const KlDetectorConfig& cfg, Agent j, Agent i, std::size_t k) {
  return {j, i, k, DetectorKind::kl, kl, kl > cfg.theta};
}

// Cross-trial samples of the unmasked message pair on one edge at one step.
struct SampleStore {
  std::vector<Vec> y1, y2;
  void push(const MessageSet& m) {
    y1.push_back(m.y1);
    y2.push_back(m.y2);
  }
  std::size_t size() const { return y1.size(); }
};

// Secure with statistic 0 until min_samples are available.
inline EdgeVerdict channel_detector(const SampleStore& store, const KlDetectorConfig& cfg, Agent j, Agent i,
                                    std::size_t k) {
  if (store.size() < std::max<std::size_t>(cfg.min_samples, 2)) return {j, i, k, DetectorKind::kl, 0.0, false};
  return kl_verdict(estimate_kl(store.y1, store.y2, cfg), cfg, j, i, k);
}

// widen multiplies the envelope by sqrt(eps1^2 + eps2^2) / |eps2|, narrow divides by it.
enum class FactorMode { widen, narrow };

struct EnvelopeConfig {
  double M_r = 100.0;
  double phi = 0.16;
  double lambda_min = 1.0;
  double delta = 6.0;
  FactorMode factor_mode = FactorMode::widen;

  void validate() const {
    if (!(M_r > 0.0) || !std::isfinite(M_r)) throw ValidationError("detectors.envelope.M_r", "must be positive");
    if (!(lambda_min > 0.0)) throw ValidationError("detectors.envelope.lambda_min", "must be positive");
    if (!(phi > 0.0 && phi < std::min(1.0, lambda_min)))
      throw ValidationError("detectors.envelope.phi", "must lie in (0, min(1, lambda_min))");
    if (!(delta >= 0.0)) throw ValidationError("detectors.envelope.delta", "must be nonnegative");
  }
};

// tau(k) = M_r exp(-lambda_min k^(1 - phi))
inline double envelope(std::size_t k, const EnvelopeConfig& cfg) {
  return cfg.M_r * std::exp(-cfg.lambda_min * std::pow(static_cast<double>(k), 1.0 - cfg.phi));
}

// d_ij(k): cross-trial mean of |y_ij - x_i|.
inline double edge_residual(const std::vector<Vec>& received, const std::vector<Vec>& own) {
  if (received.size() != own.size() || received.empty())
    throw ValidationError("edge_residual", "need one own state per received value");
  double s = 0.0;
  for (std::size_t t = 0; t < received.size(); ++t) s += (received[t] - own[t]).norm();
  return s / static_cast<double>(received.size());
}

inline double envelope_factor(const StateBounds& b, FactorMode mode) {
  if (b.eps2 == 0.0) throw ValidationError("bounds.eps2", "must be nonzero");
  const double f = std::sqrt((b.eps1 * b.eps1 + b.eps2 * b.eps2) / (b.eps2 * b.eps2));
  return mode == FactorMode::widen ? f : 1.0 / f;
}

// Secure iff d_k <= factor * d_{k-1} * (tau(k) + delta); an attacked verdict
// labels the sender Byzantine.
inline EdgeVerdict envelope_verdict(double d_k, double d_km1, std::size_t k, const EnvelopeConfig& cfg,
                                    const StateBounds& b, Agent j, Agent i, DetectorKind which = DetectorKind::envelope1) {
  const double bound = envelope_factor(b, cfg.factor_mode) * d_km1 * (envelope(k, cfg) + cfg.delta);
  const double ratio = d_km1 > 0.0 ? d_k / d_km1 : (d_k > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
  return {j, i, k, which, ratio, d_k > bound};
}

// |G| + |W| <= sqrt((rho1^2 + rho2^2) / rho1^2) |G + W| for components in [rho1, rho2], rho1 > 0.
inline bool norm_sum_bound(const Vec& gamma, const Vec& omega, double rho1, double rho2) {
  if (!(rho1 > 0.0) || rho2 < rho1) throw ValidationError("norm_sum_bound", "need 0 < rho1 <= rho2");
  if (gamma.size() != omega.size()) throw ValidationError("norm_sum_bound", "dimension mismatch");
  for (const Vec* v : {&gamma, &omega})
    if ((v->array() < rho1).any() || (v->array() > rho2).any())
      throw ValidationError("norm_sum_bound", "component outside [rho1, rho2]");
  const double factor = std::sqrt((rho1 * rho1 + rho2 * rho2) / (rho1 * rho1));
  return gamma.norm() + omega.norm() <= factor * (gamma + omega).norm();
}

}  // namespace wdetect
