// Acceptance checks. Prints one line per criterion and exits nonzero if any fails.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include <wdetect/wdetect.hpp>

using namespace wdetect;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int n, const std::function<Outcome()>& check) {
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::printf("criterion %d: %s - %s\n", n, o.pass ? "PASS" : "FAIL", o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

bool any_envelope_alarm(const EdgeStep& st) { return st.env1.attacked || st.env2.attacked; }

Outcome clean_soundness(const RunReport& clean, double seconds) {
  std::size_t env = 0, cls = 0;
  for (const auto& row : clean.steps)
    for (const auto& st : row) {
      if (any_envelope_alarm(st)) ++env;
      if (st.cls != Classification::normal) ++cls;
    }
  const bool ok = clean.trials == 100 && clean.clean_channel_alarms == 0 && clean.clean_byzantine_accusations == 0 &&
                  env == 0 && cls == 0 && seconds < 60.0;
  return {ok, fmt("%zu trials, %zu steps, channel alarms %zu, accusations %zu, envelope alarms %zu, "
                  "non-normal cells %zu, transient ends at k=%d, %.1f s",
                  clean.trials, clean.horizon, clean.clean_channel_alarms, clean.clean_byzantine_accusations, env,
                  cls, clean.transient_end ? int(*clean.transient_end) : -1, seconds)};
}

Outcome channel_detection(const Scenario& s) {
  const auto r = run_monte_carlo(s);
  const auto target = r.edge_index(5, 2);
  std::size_t hit = 0, steps = 0, other = 0;
  for (std::size_t k = 0; k < r.horizon; ++k)
    for (std::size_t e = 0; e < r.edges.size(); ++e) {
      const auto& st = r.steps[k][e];
      if (e == target) {
        if (k >= 12 && k <= 60) {
          ++steps;
          if (st.channel.attacked) ++hit;
        }
      } else if (st.channel.attacked || any_envelope_alarm(st)) {
        ++other;
      }
    }
  const double frac = steps ? double(hit) / double(steps) : 0.0;
  return {frac >= 0.9 && other == 0 && steps == 49,
          fmt("(5,2) above theta on %zu/%zu steps in [12,60] (%.1f%%), other-edge alarms %zu", hit, steps,
              100.0 * frac, other)};
}

Outcome byzantine_detection(const Scenario& s, const RunReport& clean) {
  const auto r = run_monte_carlo(s);
  std::string detail;
  bool ok = true;
  for (Agent i : s.topology.out_neighbors(5)) {
    const auto e = r.edge_index(5, i);
    std::optional<std::size_t> first;
    for (std::size_t k = 20; k <= 22 && !first; ++k)
      if (any_envelope_alarm(r.steps[k][e]) && r.steps[k][e].flag.phi2 == 1) first = k;
    ok = ok && first.has_value();
    detail += fmt("(5,%zu)@%d ", i, first ? int(*first) : -1);
  }
  std::size_t clean_env = 0;
  for (const auto& row : clean.steps)
    for (const auto& st : row)
      if (any_envelope_alarm(st)) ++clean_env;
  ok = ok && clean_env == 0;
  return {ok, detail + fmt("first flip; clean envelope alarms %zu", clean_env)};
}

Outcome hybrid_table(const Scenario& s) {
  const auto r = run_monte_carlo(s);
  struct Win {
    std::size_t start, end;
    FlagPair phi25, relay;
    Classification cls25;
  };
  const Win wins[] = {{2, 4, {1, 2}, {0, 0}, Classification::channel_only},
                      {4, 6, {1, 2}, {0, 1}, Classification::hybrid},
                      {6, 8, {0, 1}, {0, 1}, Classification::byzantine_only}};
  auto matches = [&](const Win& w, std::size_t k) {
    for (std::size_t e = 0; e < r.edges.size(); ++e) {
      const auto& ed = r.edges[e];
      const auto& st = r.steps[k][e];
      if (ed.from == 5 && ed.to == 2) {
        if (!(st.flag == w.phi25) || st.cls != w.cls25) return false;
      } else if (ed.from == 5) {
        if (!(st.flag == w.relay)) return false;
        if (st.cls != (w.relay == FlagPair{0, 1} ? Classification::byzantine_only : Classification::normal))
          return false;
      } else if (!(st.flag == FlagPair{0, 0}) || st.cls != Classification::normal) {
        return false;
      }
    }
    return true;
  };
  bool ok = true;
  std::string detail;
  for (const auto& w : wins) {
    std::optional<std::size_t> from;
    for (std::size_t k = w.start; k < w.end; ++k) {
      if (matches(w, k)) {
        if (!from) from = k;
      } else {
        from.reset();
      }
    }
    const bool good = from && *from - w.start <= 2 && *from < w.end;
    ok = ok && good;
    detail += fmt("[%zu,%zu) %s latency %d; ", w.start, w.end, to_string(w.cls25), from ? int(*from - w.start) : -1);
  }
  return {ok, detail + "trusted relay for (5,2): " +
                  (r.steps[4][r.edge_index(5, 2)].trusted ? std::to_string(*r.steps[4][r.edge_index(5, 2)].trusted)
                                                          : std::string("none"))};
}

Outcome transient_flatness(const Scenario& s) {
  const std::vector<double> grid{2.0, 5.0, 10.0, 20.0};
  const auto rows = transient_sweep(s, grid, 4);
  double lo = rows[0].watermark_max_kl, hi = lo;
  bool below = true, increasing = true;
  std::string detail;
  for (std::size_t g = 0; g < rows.size(); ++g) {
    lo = std::min(lo, rows[g].watermark_max_kl);
    hi = std::max(hi, rows[g].watermark_max_kl);
    below = below && rows[g].watermark_max_kl < s.kl.theta;
    if (g > 0) increasing = increasing && rows[g].residual_max_kl > rows[g - 1].residual_max_kl;
    detail += fmt("err %.2f: wm %.3f res %.3f; ", rows[g].initial_error, rows[g].watermark_max_kl,
                  rows[g].residual_max_kl);
  }
  const double span = rows.back().initial_error / rows.front().initial_error;
  const bool ok = below && (hi - lo) < 0.25 * s.kl.theta && increasing && span >= 10.0;
  return {ok, detail + fmt("spread %.3f", hi - lo)};
}

// One scalar channel, receiver-side watermark, y~1 = y~2 = x + w.
double scalar_kl(const double (&attack)[4], const WatermarkParams& p, std::uint64_t seed) {
  const std::size_t S = 1000;
  const double x = 10.0, sigma = 2.0;
  ChannelAttack a;
  a.window = {0, std::nullopt};
  a.xi1 = Schedule::constant(Vec::Constant(1, attack[0]));
  a.lam1 = Schedule::constant(Vec::Constant(1, attack[1]));
  a.xi2 = Schedule::constant(Vec::Constant(1, attack[2]));
  a.lam2 = Schedule::constant(Vec::Constant(1, attack[3]));
  std::vector<Vec> y1, y2;
  for (std::size_t t = 0; t < S; ++t) {
    auto eng = stream({seed, tag(Purpose::scalar_probe), t});
    std::normal_distribution<double> z(0.0, sigma);
    const Vec y = Vec::Constant(1, x + z(eng));
    const auto d = draw_watermark(0, 1, t, p, seed, 1);
    const auto got =
        remove_watermark(tamper_channel(apply_watermark({y, y}, d, GainSide::receiver), a, 0), d, GainSide::receiver);
    y1.push_back(got.y1);
    y2.push_back(got.y2);
  }
  return estimate_kl(y1, y2, KlDetectorConfig{});
}

Outcome key_variance_monotonicity() {
  const double m = 0.5, L = 0.5;
  const double cases[8][4] = {{m, 0, -m, 0}, {1, 0, m, 0}, {1, L, m, 0}, {m, 0, 1, 0},
                              {m, 0, 1, L},  {1, L, 1, -L}, {1, L, 1, 0}, {1, 0, 1, L}};
  const double grid[3] = {4.0, 16.0, 64.0};
  bool ok = true;
  std::string detail;
  for (int c = 0; c < 8; ++c) {
    double med[3];
    for (int g = 0; g < 3; ++g) {
      WatermarkParams p;
      if (c < 5) {
        p.var_F1 = std::sqrt(grid[g]);
        p.var_F2 = grid[g];
      } else {
        p.lambda1 = std::sqrt(grid[g]);
        p.lambda2 = grid[g];
      }
      std::vector<double> kl;
      for (std::uint64_t seed = 0; seed < 50; ++seed) kl.push_back(scalar_kl(cases[c], p, seed));
      std::nth_element(kl.begin(), kl.begin() + 25, kl.end());
      const double upper = kl[25];
      const double lower = *std::max_element(kl.begin(), kl.begin() + 25);
      med[g] = 0.5 * (lower + upper);
    }
    const bool inc = med[0] < med[1] && med[1] < med[2];
    ok = ok && inc;
    detail += fmt("case %d %s(%.3g,%.3g,%.3g) ", c + 1, inc ? "" : "NOT ", med[0], med[1], med[2]);
  }
  return {ok, detail};
}

double simpson_kl(double ma, double va, double mb, double vb) {
  const double sa = std::sqrt(va), sb = std::sqrt(vb);
  const double lo = std::min(ma - 14 * sa, mb - 14 * sb), hi = std::max(ma + 14 * sa, mb + 14 * sb);
  const int n = 20000;
  const double h = (hi - lo) / n;
  auto f = [&](double x) {
    const double lp = -0.5 * std::log(2 * M_PI * va) - (x - ma) * (x - ma) / (2 * va);
    const double lq = -0.5 * std::log(2 * M_PI * vb) - (x - mb) * (x - mb) / (2 * vb);
    return std::exp(lp) * (lp - lq);
  };
  double sum = f(lo) + f(hi);
  for (int i = 1; i < n; ++i) sum += (i % 2 ? 4.0 : 2.0) * f(lo + i * h);
  return sum * h / 3.0;
}

// Adjacency as bitmask rows; node s's out-set in bits of row[s].
struct BitGraph {
  std::size_t n = 0;
  std::uint32_t row[16] = {};
  std::size_t size() const { return n; }
  bool has_edge(std::size_t a, std::size_t b) const { return (row[a] >> b) & 1u; }
};

std::size_t popcount_oracle(const BitGraph& g, std::size_t j, std::size_t i) {
  std::uint32_t into_i = 0;
  for (std::size_t s = 0; s < g.n; ++s)
    if (g.has_edge(s, i)) into_i |= 1u << s;
  const std::uint32_t mids = g.row[j] & into_i & ~(1u << i) & ~(1u << j);
  return static_cast<std::size_t>(std::popcount(mids));
}

BitGraph from_mask(std::size_t n, std::uint64_t mask) {
  BitGraph g;
  g.n = n;
  std::size_t bit = 0;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b)
      if (a != b && ((mask >> bit++) & 1u)) g.row[a] |= 1u << b;
  return g;
}

Outcome oracles() {
  std::mt19937_64 rng(20261017);
  std::string detail;
  bool ok = true;

  // KL closed form against numerical integration
  std::uniform_real_distribution<double> mu(-5, 5), var(0.2, 5);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const double ma = mu(rng), va = var(rng), mb = mu(rng), vb = var(rng);
    const double closed = gaussian_kl(Vec::Constant(1, ma), Vec::Constant(1, va), Vec::Constant(1, mb),
                                      Vec::Constant(1, vb));
    worst = std::max(worst, std::abs(closed - simpson_kl(ma, va, mb, vb)));
  }
  ok = ok && worst < 1e-3;
  detail += fmt("KL max err %.2e; ", worst);

  // every labelled digraph up to 5 nodes, all ordered pairs
  std::size_t checked = 0, bad = 0;
  for (std::size_t n = 1; n <= 5; ++n) {
    const std::uint64_t total = 1ull << (n * (n - 1));
    for (std::uint64_t mask = 0; mask < total; ++mask) {
      const auto g = from_mask(n, mask);
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i) {
          if (i == j) continue;
          ++checked;
          if (count_directed_two_hop_paths(g, j, i) != popcount_oracle(g, j, i)) ++bad;
        }
    }
  }
  // six nodes: every labelled digraph, pair (0,1); any other pair in any
  // graph is a relabelling of this one
  const auto t6 = std::chrono::steady_clock::now();
  for (std::uint64_t mask = 0; mask < (1ull << 30); ++mask) {
    BitGraph g = from_mask(6, mask);
    ++checked;
    if (count_directed_two_hop_paths(g, 0, 1) != popcount_oracle(g, 0, 1)) ++bad;
  }
  const double s6 = std::chrono::duration<double>(std::chrono::steady_clock::now() - t6).count();
  std::bernoulli_distribution coin(0.3);
  for (int t = 0; t < 100; ++t) {
    BitGraph g;
    g.n = 12;
    for (std::size_t a = 0; a < 12; ++a)
      for (std::size_t b = 0; b < 12; ++b)
        if (a != b && coin(rng)) g.row[a] |= 1u << b;
    for (std::size_t j = 0; j < 12; ++j)
      for (std::size_t i = 0; i < 12; ++i)
        if (i != j) {
          ++checked;
          if (count_directed_two_hop_paths(g, j, i) != popcount_oracle(g, j, i)) ++bad;
        }
  }
  ok = ok && bad == 0;
  detail += fmt("two-hop %zu checks, %zu mismatches (6-node pass %.1f s); ", checked, bad, s6);

  // norm-sum bound on random positive vectors
  std::size_t bound_bad = 0;
  std::uniform_real_distribution<double> r1(0.1, 5.0), spread(1.0, 20.0), u01(0.0, 1.0);
  for (int t = 0; t < 100000; ++t) {
    const double rho1 = r1(rng), rho2 = rho1 * spread(rng);
    const Eigen::Index n = 1 + t % 10;
    auto draw = [&] { return rho1 + (rho2 - rho1) * u01(rng); };
    const Vec a = Vec::NullaryExpr(n, draw), b = Vec::NullaryExpr(n, draw);
    if (!norm_sum_bound(a, b, rho1, rho2)) ++bound_bad;
  }
  ok = ok && bound_bad == 0;
  detail += fmt("norm-sum bound violations %zu/100000; ", bound_bad);

  // watermark roundtrip
  double rt = 0.0;
  std::normal_distribution<double> z(0.0, 100.0);
  for (std::size_t t = 0; t < 10000; ++t) {
    const MessageSet m{Vec::NullaryExpr(3, [&] { return z(rng); }), Vec::NullaryExpr(3, [&] { return z(rng); })};
    const auto side = t % 2 ? GainSide::sender : GainSide::receiver;
    const auto d = draw_watermark(t % 7, (t + 1) % 7, t, WatermarkParams{}, 5, 3);
    const auto back = remove_watermark(apply_watermark(m, d, side), d, side);
    rt = std::max({rt, (back.y1 - m.y1).cwiseAbs().maxCoeff(), (back.y2 - m.y2).cwiseAbs().maxCoeff()});
  }
  ok = ok && rt <= 1e-9;
  detail += fmt("roundtrip max err %.2e", rt);
  return {ok, detail};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism(const Scenario& s) {
  const auto base = fs::temp_directory_path() / "wdetect_acceptance";
  fs::remove_all(base);
  const auto a = export_report(run_monte_carlo(s, 1), base / "a");
  const auto b = export_report(run_monte_carlo(s, 1), base / "b");
  const auto c = export_report(run_monte_carlo(s, 4), base / "c");
  std::size_t same = 0, bytes = 0;
  for (std::size_t f = 0; f < a.size(); ++f) {
    const auto ta = slurp(a[f]);
    bytes += ta.size();
    if (ta == slurp(b[f]) && ta == slurp(c[f])) ++same;
  }
  return {same == a.size() && a.size() == 6,
          fmt("%zu/%zu files identical across repeat and 1 vs 4 workers (%zu bytes)", same, a.size(), bytes)};
}

}  // namespace

int main() {
  const std::string preset = WDETECT_PRESET;
  const auto clean_s = load_scenario(preset, "clean");

  const auto t0 = std::chrono::steady_clock::now();
  const auto clean = run_monte_carlo(clean_s);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  report(1, [&] { return clean_soundness(clean, secs); });
  report(2, [&] { return channel_detection(load_scenario(preset, "channel")); });
  report(3, [&] { return byzantine_detection(load_scenario(preset, "byzantine"), clean); });
  report(4, [&] { return hybrid_table(load_scenario(preset, "hybrid")); });
  report(5, [&] { return transient_flatness(clean_s); });
  report(6, [&] { return key_variance_monotonicity(); });
  report(7, [&] { return oracles(); });
  report(8, [&] { return determinism(load_scenario(preset, "channel")); });
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
