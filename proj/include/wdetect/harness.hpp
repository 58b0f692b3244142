#pragma once

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "attacks.hpp"
#include "detectors.hpp"
#include "hybrid.hpp"
#include "scenario.hpp"
#include "seed.hpp"

namespace wdetect {

// Everything one trial produces: states at k = 0..H and, per message step
// and edge (in topology order), the pair the receiver ends up with.
struct TrialRecord {
  std::vector<Snapshot> x;
  std::vector<std::vector<MessageSet>> received;
};

inline std::uint64_t trial_key(const Scenario& s, std::size_t trial) {
  return derive_seed({s.master_seed, tag(Purpose::trial_key), trial});
}

inline TrialRecord simulate_trial(const Scenario& s, std::size_t trial) {
  const auto n = s.n();
  const auto key = trial_key(s, trial);
  const auto& edges = s.topology.edges();
  const double sigma = std::sqrt(s.controller.noise_var);

  TrialRecord rec;
  rec.x.reserve(s.horizon + 1);
  rec.received.assign(s.horizon, std::vector<MessageSet>(edges.size()));
  SystemState state{0, s.initial_state()};
  rec.x.push_back(state.x);
  Snapshot at_start = state.x;  // per-agent state when its Byzantine window opened

  for (std::size_t k = 0; k < s.horizon; ++k) {
    for (const auto& bz : s.attacks.byzantine)
      if (bz.window.start == k) at_start[bz.agent] = state.x[bz.agent];

    std::vector<std::map<Agent, Vec>> inbox(s.topology.size());
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const Agent j = edges[e].from, i = edges[e].to;
      Vec sent = state.x[j];
      if (const auto* bz = byzantine_at(s.attacks, j, k)) sent = byzantine_emit(*bz, i, k, state.x[j], at_start[j], key);

      auto eng = stream({key, tag(Purpose::channel_noise), j, i, k});
      std::normal_distribution<double> w(0.0, 1.0);
      Vec y = sent;
      if (sigma > 0.0)
        for (Eigen::Index l = 0; l < n; ++l) y(l) += sigma * w(eng);

      const auto* attack = channel_attack_on(s.attacks, j, i, k);
      MessageSet got;
      if (s.channel_mode == ChannelMode::watermark) {
        // both copies carry the same noisy value, masked with independent keys
        const auto draw = draw_watermark(j, i, k, s.watermark, key, n);
        MessageSet wire = apply_watermark({y, y}, draw, s.gain_side);
        if (attack) wire = tamper_channel(wire, *attack, k);
        got = remove_watermark(wire, draw, s.gain_side);
      } else {
        got = {y, y};
        if (attack) got = tamper_channel(got, *attack, k);
      }
      inbox[i][j] = got.y1;
      rec.received[k][e] = std::move(got);
    }

    std::vector<double> u(s.topology.size());
    for (Agent a = 0; a < s.topology.size(); ++a)
      u[a] = compute_control(a, state.x[a], inbox[a], k, s.topology, s.controller);
    state = step_system(state, u, s.model);
    rec.x.push_back(state.x);
  }
  return rec;
}

// Worker count: WDETECT_WORKERS if set, else the hardware concurrency.
inline std::size_t default_workers() {
  if (const char* env = std::getenv("WDETECT_WORKERS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Trials are independent; each worker fills its own slots so the result does
// not depend on scheduling.
inline std::vector<TrialRecord> simulate_trials(const Scenario& s, std::size_t workers) {
  std::vector<TrialRecord> out(s.trials);
  workers = std::clamp<std::size_t>(workers, 1, s.trials);
  if (workers == 1) {
    for (std::size_t t = 0; t < s.trials; ++t) out[t] = simulate_trial(s, t);
    return out;
  }
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t t = w; t < s.trials; t += workers) out[t] = simulate_trial(s, t);
    });
  for (auto& th : pool) th.join();
  return out;
}

struct EdgeStep {
  EdgeVerdict channel, env1, env2;
  double d1 = 0.0, d2 = 0.0;
  FlagPair flag;
  Classification cls = Classification::normal;
  std::optional<Agent> trusted;
};

struct AttackSummary {
  std::string label;
  std::size_t start = 0, end = 0;  // clipped to the horizon
  std::size_t cells = 0, detected = 0;
  double detection_rate = 0.0;
  double miss_rate = 0.0;
  std::optional<std::size_t> time_to_detect;
};

struct RunReport {
  std::string scenario;
  std::size_t horizon = 0, trials = 0;
  std::vector<Edge> edges;
  std::vector<std::optional<double>> eta;     // k = 0..H-1
  std::vector<double> tau;                    // k = 0..H-1, tau(0) reported as M_r
  std::vector<std::vector<EdgeStep>> steps;   // [k][edge]
  std::optional<std::size_t> transient_end;   // first k with eta < threshold
  std::size_t clean_cells = 0, false_alarms = 0;
  std::size_t clean_channel_alarms = 0, clean_byzantine_accusations = 0;
  double false_alarm_rate = 0.0;
  std::vector<AttackSummary> attacks;
  std::vector<std::string> warnings;

  std::size_t edge_index(Agent j, Agent i) const {
    for (std::size_t e = 0; e < edges.size(); ++e)
      if (edges[e].from == j && edges[e].to == i) return e;
    throw ValidationError(edge_name(j, i), "edge not in report");
  }
};

inline Classification expected_class(const Scenario& s, Agent j, Agent i, std::size_t k) {
  const bool chan = channel_attack_on(s.attacks, j, i, k) != nullptr;
  const bool byz = byzantine_at(s.attacks, j, k) != nullptr;
  if (chan && byz) return Classification::hybrid;
  if (chan) return Classification::channel_only;
  if (byz) return Classification::byzantine_only;
  return Classification::normal;
}

// Pools the trials step by step, runs both detectors and the flag protocol.
inline RunReport analyze(const Scenario& s, const std::vector<TrialRecord>& trials) {
  RunReport r;
  r.scenario = s.name;
  r.horizon = s.horizon;
  r.trials = trials.size();
  r.edges = s.topology.edges();
  const auto& edges = r.edges;

  for (std::size_t k = 0; k < s.horizon; ++k) {
    std::vector<Snapshot> snaps;
    for (const auto& tr : trials) snaps.push_back(tr.x[k]);
    r.eta.push_back(transient_metric(snaps));
    if (!r.transient_end && r.eta.back() && *r.eta.back() < s.transient_threshold) r.transient_end = k;
  }

  std::vector<double> prev1(edges.size(), 0.0), prev2(edges.size(), 0.0);
  for (std::size_t k = 0; k < s.horizon; ++k) {
    r.tau.push_back(k == 0 ? s.envelope.M_r : envelope(k, s.envelope));
    std::vector<EdgeStep> row(edges.size());
    std::map<EdgeKey, EdgeVerdicts> verdicts;
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const Agent j = edges[e].from, i = edges[e].to;
      SampleStore store;
      std::vector<Vec> own;
      for (const auto& tr : trials) {
        store.push(tr.received[k][e]);
        own.push_back(tr.x[k][i]);
      }
      auto& st = row[e];
      if (s.channel_mode == ChannelMode::watermark) {
        st.channel = channel_detector(store, s.kl, j, i, k);
      } else if (store.size() >= std::max<std::size_t>(s.kl.min_samples, 2)) {
        std::vector<Vec> res;
        for (std::size_t t = 0; t < own.size(); ++t) res.push_back(store.y1[t] - own[t]);
        st.channel = kl_verdict(residual_kl(res, s.controller.noise_var, s.kl), s.kl, j, i, k);
      } else {
        st.channel = {j, i, k, DetectorKind::kl, 0.0, false};
      }
      st.d1 = edge_residual(store.y1, own);
      st.d2 = edge_residual(store.y2, own);
      if (k >= 2) {
        st.env1 = envelope_verdict(st.d1, prev1[e], k, s.envelope, s.bounds, j, i, DetectorKind::envelope1);
        st.env2 = envelope_verdict(st.d2, prev2[e], k, s.envelope, s.bounds, j, i, DetectorKind::envelope2);
      } else {
        st.env1 = {j, i, k, DetectorKind::envelope1, 0.0, false};
        st.env2 = {j, i, k, DetectorKind::envelope2, 0.0, false};
      }
      prev1[e] = st.d1;
      prev2[e] = st.d2;
      verdicts[{i, j}] = {st.channel, st.env1, st.env2};
    }
    const auto proto = run_protocol_step(k, verdicts, s.topology);
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const EdgeKey key{edges[e].to, edges[e].from};
      row[e].flag = proto.board.at(key.first, key.second);
      row[e].cls = proto.classes.at(key);
      row[e].trusted = proto.trusted.at(key);
    }
    r.steps.push_back(std::move(row));
  }

  // clean cells
  for (std::size_t k = 0; k < s.horizon; ++k)
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const Agent j = edges[e].from, i = edges[e].to;
      const auto& st = r.steps[k][e];
      if (!channel_attack_on(s.attacks, j, i, k) && st.channel.attacked) ++r.clean_channel_alarms;
      if (!byzantine_at(s.attacks, j, k) && st.flag.phi2 == 1) ++r.clean_byzantine_accusations;
      if (expected_class(s, j, i, k) != Classification::normal) continue;
      ++r.clean_cells;
      if (st.cls != Classification::normal) ++r.false_alarms;
    }
  r.false_alarm_rate = r.clean_cells ? static_cast<double>(r.false_alarms) / static_cast<double>(r.clean_cells) : 0.0;

  // attack windows
  auto summarize = [&](std::string label, const Window& w, const std::vector<std::size_t>& cells_edges, auto hit) {
    AttackSummary a;
    a.label = std::move(label);
    a.start = std::min(w.start, s.horizon);
    a.end = w.end ? std::min(*w.end, s.horizon) : s.horizon;
    for (std::size_t k = a.start; k < a.end; ++k) {
      bool all_correct = !cells_edges.empty();
      for (auto e : cells_edges) {
        ++a.cells;
        if (hit(k, e)) ++a.detected;
        const auto& ed = edges[e];
        if (r.steps[k][e].cls != expected_class(s, ed.from, ed.to, k)) all_correct = false;
      }
      if (all_correct && !a.time_to_detect) a.time_to_detect = k - a.start;
    }
    a.detection_rate = a.cells ? static_cast<double>(a.detected) / static_cast<double>(a.cells) : 0.0;
    a.miss_rate = a.cells ? 1.0 - a.detection_rate : 0.0;
    r.attacks.push_back(std::move(a));
  };
  for (const auto& ca : s.attacks.channel)
    summarize("channel" + edge_name(ca.from, ca.to), ca.window, {r.edge_index(ca.from, ca.to)},
              [&](std::size_t k, std::size_t e) { return r.steps[k][e].channel.attacked; });
  for (const auto& bz : s.attacks.byzantine) {
    std::vector<std::size_t> outs;
    for (Agent i : s.topology.out_neighbors(bz.agent)) outs.push_back(r.edge_index(bz.agent, i));
    summarize("byzantine(" + std::to_string(bz.agent) + ")", bz.window, outs, [&](std::size_t k, std::size_t e) {
      const auto c = r.steps[k][e].cls;
      return c == Classification::byzantine_only || c == Classification::hybrid;
    });
  }

  for (std::size_t a = 0; a < s.attacks.channel.size(); ++a) {
    const auto rep = validate_stealth(s.attacks.channel[a], s.bounds, s.horizon);
    if (!rep.admissible)
      r.warnings.push_back("attacks.channel[" + std::to_string(a) + "] leaves the stealth set at " +
                           std::to_string(rep.violations.size()) + " element-steps (first k=" +
                           std::to_string(rep.violations.front().k) + ", " + rep.violations.front().term + ")");
  }
  if (s.spectral_complex) r.warnings.push_back("grounded Laplacian has complex eigenvalues; using the minimum real part");
  return r;
}

inline RunReport run_monte_carlo(const Scenario& s, std::size_t workers = default_workers()) {
  return analyze(s, simulate_trials(s, workers));
}

// Attacker knowledge: extremes of an attack-free run of the same scenario.
inline StateBounds nominal_state_bounds(Scenario s, std::size_t workers = default_workers()) {
  s.attacks.channel.clear();
  s.attacks.byzantine.clear();
  std::vector<Snapshot> all;
  for (const auto& tr : simulate_trials(s, workers))
    for (const auto& snap : tr.x) all.push_back(snap);
  return compute_state_bounds(all);
}

struct SweepRow {
  double grid_value = 0.0;         // follower spacing
  double initial_error = 0.0;      // max_i |x_i(0) - x_0(0)| / |x_0(0)|
  double watermark_max_kl = 0.0;   // max over edges at the probe step
  double residual_max_kl = 0.0;    // unwatermarked baseline statistic
};

// Attack-free runs over a grid of initial spacings; both channel modes are
// evaluated at step `probe`.
inline std::vector<SweepRow> transient_sweep(Scenario s, const std::vector<double>& grid, std::size_t probe,
                                             std::size_t workers = default_workers()) {
  if (grid.empty()) throw ValidationError("grid", "empty");
  s.attacks.channel.clear();
  s.attacks.byzantine.clear();
  s.horizon = probe + 1;
  std::vector<SweepRow> rows;
  for (double g : grid) {
    s.initial.spacing = g;
    SweepRow row{g, 0.0, 0.0, 0.0};
    const auto x0 = s.initial_state();
    for (std::size_t i = 1; i < x0.size(); ++i)
      row.initial_error = std::max(row.initial_error, (x0[i] - x0[0]).norm() / x0[0].norm());
    for (auto mode : {ChannelMode::watermark, ChannelMode::residual}) {
      s.channel_mode = mode;
      const auto rep = run_monte_carlo(s, workers);
      double best = 0.0;
      for (const auto& st : rep.steps[probe]) best = std::max(best, st.channel.statistic);
      (mode == ChannelMode::watermark ? row.watermark_max_kl : row.residual_max_kl) = best;
    }
    rows.push_back(row);
  }
  return rows;
}

namespace detail {

inline std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  return f;
}

}  // namespace detail

// Writes the six CSV files; returns their paths.
inline std::vector<std::filesystem::path> export_report(const RunReport& r, const std::filesystem::path& dir) {
  using detail::num;
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> out;
  auto file = [&](const char* name) {
    out.push_back(dir / name);
    return detail::open_out(out.back());
  };
  auto decision = [](const EdgeVerdict& v) { return v.attacked ? "attacked" : "secure"; };

  {
    auto f = file("kl_trace.csv");
    f << "k,edge_j,edge_i,detector,statistic,decision\n";
    for (std::size_t k = 0; k < r.steps.size(); ++k)
      for (const auto& st : r.steps[k])
        f << k << ',' << st.channel.from << ',' << st.channel.to << ",kl," << num(st.channel.statistic) << ','
          << decision(st.channel) << '\n';
  }
  {
    auto f = file("residual_trace.csv");
    f << "k,edge_j,edge_i,d1,d2,tau\n";
    for (std::size_t k = 0; k < r.steps.size(); ++k)
      for (std::size_t e = 0; e < r.edges.size(); ++e)
        f << k << ',' << r.edges[e].from << ',' << r.edges[e].to << ',' << num(r.steps[k][e].d1) << ','
          << num(r.steps[k][e].d2) << ',' << num(r.tau[k]) << '\n';
  }
  {
    auto f = file("envelope_trace.csv");
    f << "k,edge_j,edge_i,detector,statistic,decision\n";
    for (std::size_t k = 0; k < r.steps.size(); ++k)
      for (const auto& st : r.steps[k])
        for (const auto* v : {&st.env1, &st.env2})
          f << k << ',' << v->from << ',' << v->to << ',' << to_string(v->detector) << ',' << num(v->statistic)
            << ',' << decision(*v) << '\n';
  }
  {
    auto f = file("flags.csv");
    f << "k,i,j,phi1,phi2,classification\n";
    for (std::size_t k = 0; k < r.steps.size(); ++k)
      for (std::size_t e = 0; e < r.edges.size(); ++e) {
        const auto& st = r.steps[k][e];
        f << k << ',' << r.edges[e].to << ',' << r.edges[e].from << ',' << int(st.flag.phi1) << ','
          << int(st.flag.phi2) << ',' << to_string(st.cls) << '\n';
      }
  }
  {
    auto f = file("eta.csv");
    f << "k,eta\n";
    for (std::size_t k = 0; k < r.eta.size(); ++k)
      f << k << ',' << (r.eta[k] ? num(*r.eta[k]) : std::string("undefined")) << '\n';
  }
  {
    auto f = file("summary.csv");
    f << "metric,value\n";
    f << "scenario," << r.scenario << '\n';
    f << "horizon," << r.horizon << '\n';
    f << "trials," << r.trials << '\n';
    f << "transient_end," << (r.transient_end ? std::to_string(*r.transient_end) : std::string("none")) << '\n';
    f << "clean_cells," << r.clean_cells << '\n';
    f << "false_alarms," << r.false_alarms << '\n';
    f << "false_alarm_rate," << num(r.false_alarm_rate) << '\n';
    f << "clean_channel_alarms," << r.clean_channel_alarms << '\n';
    f << "clean_byzantine_accusations," << r.clean_byzantine_accusations << '\n';
    for (const auto& a : r.attacks) {
      const auto p = a.label + "[" + std::to_string(a.start) + ":" + std::to_string(a.end) + ")";
      f << p << ".detection_rate," << num(a.detection_rate) << '\n';
      f << p << ".miss_rate," << num(a.miss_rate) << '\n';
      f << p << ".time_to_detect," << (a.time_to_detect ? std::to_string(*a.time_to_detect) : std::string("none"))
        << '\n';
    }
  }
  return out;
}

}  // namespace wdetect
