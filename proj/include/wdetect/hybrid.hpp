#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "detectors.hpp"
#include "graph.hpp"

namespace wdetect {

// 0 = not attacked, 1 = attacked, 2 = pending
struct FlagPair {
  std::uint8_t phi1 = 2;  // channel verdict
  std::uint8_t phi2 = 2;  // agent verdict
  friend bool operator==(const FlagPair&, const FlagPair&) = default;
};

using EdgeKey = std::pair<Agent, Agent>;  // (observer i, subject j)

struct FlagBoard {
  std::size_t k = 0;
  std::map<EdgeKey, FlagPair> flags;

  // Every directed edge j -> i starts pending.
  static FlagBoard initial(const Topology& t, std::size_t k) {
    FlagBoard b{k, {}};
    for (const auto& e : t.edges()) b.flags[{e.to, e.from}] = FlagPair{2, 2};
    return b;
  }
  const FlagPair& at(Agent i, Agent j) const { return flags.at({i, j}); }
};

enum class Classification { normal, channel_only, byzantine_only, hybrid, undecidable };

inline const char* to_string(Classification c) {
  switch (c) {
    case Classification::normal: return "normal";
    case Classification::channel_only: return "channel_only";
    case Classification::byzantine_only: return "byzantine_only";
    case Classification::hybrid: return "hybrid";
    case Classification::undecidable: return "undecidable";
  }
  return "?";
}

// Channel attacked -> (1,2): the agent verdict waits for arbitration.
inline FlagPair local_detect(const EdgeVerdict& channel, const EdgeVerdict& env1, const EdgeVerdict& env2) {
  if (channel.attacked) return {1, 2};
  if (env1.attacked || env2.attacked) return {0, 1};
  return {0, 0};
}

struct FlagDelivery {
  Agent observer;  // i, who produced the flag
  Agent subject;   // j, the in-neighbor it is about
  FlagPair flag;
};

// Each agent's flags about its in-neighbors go to all of its out-neighbors.
// The flag channel is modeled as reliable and untampered.
inline std::map<Agent, std::vector<FlagDelivery>> broadcast_flags(const FlagBoard& board, const Topology& t) {
  std::map<Agent, std::vector<FlagDelivery>> inbox;
  for (const auto& [key, flag] : board.flags)
    for (Agent r : t.out_neighbors(key.first)) inbox[r].push_back({key.first, key.second, flag});
  return inbox;
}

// Lowest-index jh in N_i^+ that also hears j, whose link to i is clean and
// whose own channel verdict about j is clean.
inline std::optional<Agent> select_trusted(Agent i, Agent j, const FlagBoard& board, const Topology& t) {
  for (Agent jh : t.in_neighbors(i)) {
    if (jh == j || !t.has_edge(j, jh)) continue;
    if (!(board.at(i, jh) == FlagPair{0, 0})) continue;
    if (board.at(jh, j).phi1 != 0) continue;
    return jh;
  }
  return std::nullopt;
}

// Total over all flag combinations; anything still pending is undecidable.
inline Classification classify(const FlagPair& own, const std::optional<FlagPair>& trusted) {
  if (own.phi1 == 0) {
    if (own.phi2 == 0) return Classification::normal;
    if (own.phi2 == 1) return Classification::byzantine_only;
    return Classification::undecidable;
  }
  if (own.phi1 == 1) {
    if (!trusted || trusted->phi1 != 0) return Classification::undecidable;
    if (trusted->phi2 == 0) return Classification::channel_only;
    if (trusted->phi2 == 1) return Classification::hybrid;
  }
  return Classification::undecidable;
}

// Detector outputs for one edge at one step.
struct EdgeVerdicts {
  EdgeVerdict channel, env1, env2;
};

struct ProtocolStep {
  FlagBoard board;
  std::map<EdgeKey, Classification> classes;
  std::map<EdgeKey, std::optional<Agent>> trusted;
};

// local_detect -> broadcast -> select_trusted -> classify, for every edge.
inline ProtocolStep run_protocol_step(std::size_t k, const std::map<EdgeKey, EdgeVerdicts>& verdicts,
                                      const Topology& t) {
  ProtocolStep out{FlagBoard::initial(t, k), {}, {}};
  for (const auto& e : t.edges()) {
    const auto& v = verdicts.at({e.to, e.from});
    out.board.flags[{e.to, e.from}] = local_detect(v.channel, v.env1, v.env2);
  }
  for (const auto& e : t.edges()) {
    const EdgeKey key{e.to, e.from};
    const auto jh = select_trusted(e.to, e.from, out.board, t);
    std::optional<FlagPair> tf;
    if (jh) tf = out.board.at(*jh, e.from);
    out.trusted[key] = jh;
    out.classes[key] = classify(out.board.at(e.to, e.from), tf);
  }
  return out;
}

}  // namespace wdetect
