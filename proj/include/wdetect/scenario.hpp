#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "attacks.hpp"
#include "detectors.hpp"
#include "dynamics.hpp"
#include "graph.hpp"
#include "watermark.hpp"

namespace wdetect {

// How the receiver checks a channel.
//  watermark: two differently keyed copies, KL between the unmasked pair
//  residual:  one unkeyed copy, KL of (y - x_i) against the noise model
enum class ChannelMode { watermark, residual };

struct InitialConditions {
  Vec leader;            // x_0(0)
  double spacing = 10.;  // follower i starts at leader - spacing * i * e_1
};

struct Scenario {
  std::string name;
  Topology topology;
  AgentModel model;
  ControllerParams controller;
  WatermarkParams watermark;
  GainSide gain_side = GainSide::receiver;
  ChannelMode channel_mode = ChannelMode::watermark;
  KlDetectorConfig kl;
  EnvelopeConfig envelope;
  StateBounds bounds;
  AttackScenario attacks;
  InitialConditions initial;
  std::size_t horizon = 61;  // message steps k = 0 .. horizon-1
  std::size_t trials = 100;
  std::uint64_t master_seed = 1;
  double transient_threshold = 0.05;
  bool spectral_complex = false;  // grounded Laplacian had complex eigenvalues

  Eigen::Index n() const { return model.n(); }

  Snapshot initial_state() const {
    Snapshot x(topology.size(), initial.leader);
    for (std::size_t i = 1; i < x.size(); ++i) x[i](0) -= initial.spacing * static_cast<double>(i);
    return x;
  }
};

namespace detail {

using nlohmann::json;

inline std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline const json& need(const json& j, const std::string& path, const std::string& key) {
  if (!j.is_object() || !j.contains(key)) throw ValidationError(join(path, key), "missing");
  return j.at(key);
}

template <class T>
T as(const json& v, const std::string& where) {
  try {
    return v.get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(where, e.what());
  }
}

template <class T>
T req(const json& j, const std::string& path, const std::string& key) {
  return as<T>(need(j, path, key), join(path, key));
}

template <class T>
T opt(const json& j, const std::string& path, const std::string& key, T fallback) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  return as<T>(j.at(key), join(path, key));
}

inline Vec vec(const json& v, const std::string& where) {
  const auto xs = as<std::vector<double>>(v, where);
  Vec out(static_cast<Eigen::Index>(xs.size()));
  for (std::size_t l = 0; l < xs.size(); ++l) out(static_cast<Eigen::Index>(l)) = xs[l];
  return out;
}

inline Vec req_vec(const json& j, const std::string& path, const std::string& key) {
  return vec(need(j, path, key), join(path, key));
}

inline double positive(double v, const std::string& where) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(where, "must be positive");
  return v;
}

inline double nonnegative(double v, const std::string& where) {
  if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError(where, "must be nonnegative");
  return v;
}

inline Window window(const json& j, const std::string& path) {
  Window w;
  w.start = req<std::size_t>(j, path, "start");
  if (j.contains("end") && !j.at("end").is_null()) w.end = req<std::size_t>(j, path, "end");
  return w;
}

inline Schedule schedule(const json& j, const std::string& path, Eigen::Index n, double fill) {
  if (j.is_null()) return Schedule::constant(Vec::Constant(n, fill));
  Schedule s;
  const auto kind = req<std::string>(j, path, "kind");
  if (kind == "constant") {
    s.kind = Schedule::Kind::constant;
    s.a = req_vec(j, path, "value");
  } else if (kind == "sinusoid") {
    s.kind = Schedule::Kind::sinusoid;
    s.a = req_vec(j, path, "amplitude");
    if (j.contains("offset")) s.b = req_vec(j, path, "offset");
    s.omega = opt<double>(j, path, "omega", 1.0);
    s.phase = opt<double>(j, path, "phase", 0.0);
  } else if (kind == "ramp") {
    s.kind = Schedule::Kind::ramp;
    s.a = req_vec(j, path, "value");
    s.b = req_vec(j, path, "slope");
  } else {
    throw ValidationError(join(path, "kind"), "unknown schedule '" + kind + "'");
  }
  return s;
}

inline AttackScenario attacks(const json& j, const std::string& path, Eigen::Index n) {
  AttackScenario a;
  if (j.is_null()) return a;
  if (j.contains("budget")) {
    const auto& b = j.at("budget");
    a.budget.L = req<std::size_t>(b, join(path, "budget"), "L");
    a.budget.P = req<std::size_t>(b, join(path, "budget"), "P");
  }
  if (j.contains("channel"))
    for (std::size_t c = 0; c < j.at("channel").size(); ++c) {
      const auto& e = j.at("channel").at(c);
      const auto p = path + ".channel[" + std::to_string(c) + "]";
      ChannelAttack ca;
      const auto edge = req<std::vector<std::size_t>>(e, p, "edge");
      if (edge.size() != 2) throw ValidationError(join(p, "edge"), "expected [from, to]");
      ca.from = edge[0];
      ca.to = edge[1];
      ca.window = window(e, p);
      auto field = [&](const char* key) { return e.contains(key) ? e.at(key) : json(); };
      ca.xi1 = schedule(field("xi1"), join(p, "xi1"), n, 1.0);
      ca.lam1 = schedule(field("lam1"), join(p, "lam1"), n, 0.0);
      ca.xi2 = schedule(field("xi2"), join(p, "xi2"), n, 1.0);
      ca.lam2 = schedule(field("lam2"), join(p, "lam2"), n, 0.0);
      a.channel.push_back(ca);
    }
  if (j.contains("byzantine"))
    for (std::size_t c = 0; c < j.at("byzantine").size(); ++c) {
      const auto& e = j.at("byzantine").at(c);
      const auto p = path + ".byzantine[" + std::to_string(c) + "]";
      ByzantineBehavior bz;
      bz.agent = req<std::size_t>(e, p, "agent");
      bz.window = window(e, p);
      const auto kind = req<std::string>(e, p, "behavior");
      using K = ByzantineBehavior::Kind;
      if (kind == "constant_offset") {
        bz.kind = K::constant_offset;
        bz.c = req_vec(e, p, "offset");
      } else if (kind == "divergent_ramp") {
        bz.kind = K::divergent_ramp;
        bz.c = req_vec(e, p, "slope");
      } else if (kind == "frozen_state") {
        bz.kind = K::frozen_state;
      } else if (kind == "per_neighbor_random") {
        bz.kind = K::per_neighbor_random;
        bz.scale = positive(req<double>(e, p, "scale"), join(p, "scale"));
      } else if (kind == "geometric") {
        bz.kind = K::geometric;
        bz.c = req_vec(e, p, "base");
        bz.ratio = positive(req<double>(e, p, "ratio"), join(p, "ratio"));
      } else {
        throw ValidationError(join(p, "behavior"), "unknown behavior '" + kind + "'");
      }
      a.byzantine.push_back(bz);
    }
  return a;
}

}  // namespace detail

// Builds a validated scenario from a parsed document. `variant` selects an
// entry of "variants" that is merge-patched over the base document first.
inline Scenario parse_scenario(nlohmann::json doc, const std::string& variant = "") {
  using namespace detail;
  if (!variant.empty()) {
    if (!doc.contains("variants") || !doc.at("variants").contains(variant))
      throw ValidationError("variants." + variant, "unknown variant");
    doc.merge_patch(doc.at("variants").at(variant));
  }
  Scenario s;
  s.name = opt<std::string>(doc, "", "name", "scenario") + (variant.empty() ? "" : "/" + variant);

  const auto& topo = need(doc, "", "topology");
  {
    const auto n_agents = req<std::size_t>(topo, "topology", "n_agents");
    std::vector<Edge> edges;
    const auto& list = need(topo, "topology", "edges");
    for (std::size_t e = 0; e < list.size(); ++e) {
      const auto where = "topology.edges[" + std::to_string(e) + "]";
      const auto row = as<std::vector<double>>(list.at(e), where);
      if (row.size() != 2 && row.size() != 3) throw ValidationError(where, "expected [from, to] or [from, to, weight]");
      if (row[0] < 0 || row[1] < 0) throw ValidationError(where, "negative agent index");
      edges.push_back({static_cast<Agent>(row[0]), static_cast<Agent>(row[1]), row.size() == 3 ? row[2] : 1.0});
    }
    try {
      s.topology = Topology(n_agents, edges);
    } catch (const ValidationError& e) {
      throw ValidationError("topology." + e.where(), e.what());
    }
    if (!has_spanning_tree(s.topology, 0)) throw ValidationError("topology", "leader does not reach every agent");
  }

  const auto& model = need(doc, "", "model");
  const auto kind = req<std::string>(model, "model", "kind");
  if (kind == "platoon")
    s.model = platoon_model(req<double>(model, "model", "delta"), req<double>(model, "model", "T"));
  else if (kind == "companion")
    s.model = companion_model(req_vec(model, "model", "rho"));
  else
    throw ValidationError("model.kind", "unknown model '" + kind + "'");
  const auto n = s.n();

  const auto& ctrl = need(doc, "", "controller");
  s.controller.K1 = req_vec(ctrl, "controller", "K1");
  s.controller.K2 = req_vec(ctrl, "controller", "K2");
  if (s.controller.K1.size() != n) throw ValidationError("controller.K1", "dimension must equal the state dimension");
  if (s.controller.K2.size() != n) throw ValidationError("controller.K2", "dimension must equal the state dimension");
  s.controller.gain_mu = positive(opt<double>(ctrl, "controller", "gain_mu", 1.0), "controller.gain_mu");
  s.controller.gain_lambda = opt<double>(ctrl, "controller", "gain_lambda", 0.6);
  if (!(s.controller.gain_lambda > 0.0 && s.controller.gain_lambda < 1.0))
    throw ValidationError("controller.gain_lambda", "must lie in (0, 1)");
  s.controller.noise_var = nonnegative(req<double>(ctrl, "controller", "noise_var"), "controller.noise_var");

  const auto& wm = need(doc, "", "watermark");
  s.watermark.lambda1 = req<double>(wm, "watermark", "lambda1");
  s.watermark.lambda2 = req<double>(wm, "watermark", "lambda2");
  s.watermark.var_M1 = req<double>(wm, "watermark", "var_M1");
  s.watermark.var_M2 = req<double>(wm, "watermark", "var_M2");
  s.watermark.var_F1 = req<double>(wm, "watermark", "var_F1");
  s.watermark.var_F2 = req<double>(wm, "watermark", "var_F2");
  s.watermark.identity = opt<bool>(wm, "watermark", "identity", false);
  s.watermark.validate();
  const auto side = opt<std::string>(wm, "watermark", "gain_side", "receiver");
  if (side == "receiver") s.gain_side = GainSide::receiver;
  else if (side == "sender") s.gain_side = GainSide::sender;
  else throw ValidationError("watermark.gain_side", "expected 'sender' or 'receiver'");

  const auto& det = need(doc, "", "detectors");
  const auto& kl = need(det, "detectors", "kl");
  s.kl.theta = positive(req<double>(kl, "detectors.kl", "theta"), "detectors.kl.theta");
  const auto est = opt<std::string>(kl, "detectors.kl", "estimator", "gaussian_fit");
  if (est == "gaussian_fit") s.kl.estimator = Estimator::gaussian_fit;
  else if (est == "histogram") s.kl.estimator = Estimator::histogram;
  else throw ValidationError("detectors.kl.estimator", "expected 'gaussian_fit' or 'histogram'");
  s.kl.min_samples = opt<std::size_t>(kl, "detectors.kl", "min_samples", 30);
  if (s.kl.min_samples < 2) throw ValidationError("detectors.kl.min_samples", "must be at least 2");
  const auto mode = opt<std::string>(kl, "detectors.kl", "mode", "watermark");
  if (mode == "watermark") s.channel_mode = ChannelMode::watermark;
  else if (mode == "residual") s.channel_mode = ChannelMode::residual;
  else throw ValidationError("detectors.kl.mode", "expected 'watermark' or 'residual'");

  const auto& env = need(det, "detectors", "envelope");
  s.envelope.M_r = req<double>(env, "detectors.envelope", "M_r");
  s.envelope.phi = req<double>(env, "detectors.envelope", "phi");
  s.envelope.delta = req<double>(env, "detectors.envelope", "delta");
  const auto fm = opt<std::string>(env, "detectors.envelope", "factor_mode", "widen");
  if (fm == "widen") s.envelope.factor_mode = FactorMode::widen;
  else if (fm == "narrow") s.envelope.factor_mode = FactorMode::narrow;
  else throw ValidationError("detectors.envelope.factor_mode", "expected 'widen' or 'narrow'");
  {
    const auto sb = grounded_laplacian_min_eigenvalue(s.topology);
    s.spectral_complex = sb.has_complex;
    if (env.contains("lambda_min") && env.at("lambda_min").is_number())
      s.envelope.lambda_min = req<double>(env, "detectors.envelope", "lambda_min");
    else
      s.envelope.lambda_min = sb.lambda_min;
  }
  s.envelope.validate();

  const auto& sb = need(det, "detectors", "state_bounds");
  s.bounds.eps1 = req<double>(sb, "detectors.state_bounds", "eps1");
  s.bounds.eps2 = req<double>(sb, "detectors.state_bounds", "eps2");
  if (s.bounds.eps1 > s.bounds.eps2) throw ValidationError("detectors.state_bounds", "eps1 > eps2");
  if (s.bounds.eps2 == 0.0) throw ValidationError("detectors.state_bounds.eps2", "must be nonzero");

  const auto& run = need(doc, "", "run");
  s.horizon = req<std::size_t>(run, "run", "horizon");
  s.trials = req<std::size_t>(run, "run", "trials");
  if (s.trials == 0) throw ValidationError("run.trials", "must be positive");
  s.master_seed = req<std::uint64_t>(run, "run", "master_seed");
  s.transient_threshold = positive(opt<double>(run, "run", "transient_threshold", 0.05), "run.transient_threshold");
  const auto& init = need(run, "run", "initial");
  s.initial.leader = req_vec(init, "run.initial", "leader");
  if (s.initial.leader.size() != n) throw ValidationError("run.initial.leader", "dimension must equal the state dimension");
  s.initial.spacing = opt<double>(init, "run.initial", "spacing", 10.0);

  s.attacks = detail::attacks(doc.contains("attacks") ? doc.at("attacks") : json(), "attacks", n);
  validate_attacks(s.attacks, s.topology, s.horizon, n);
  return s;
}

inline nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path, "cannot open scenario file");
  try {
    return nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path, std::string("parse error: ") + e.what());
  }
}

inline Scenario load_scenario(const std::string& path, const std::string& variant = "") {
  return parse_scenario(read_json(path), variant);
}

}  // namespace wdetect
