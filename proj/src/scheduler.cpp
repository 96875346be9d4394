#include "gcx/scheduler.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <queue>
#include <stdexcept>

#include <json.hpp>

namespace gcx {

namespace {

constexpr std::uint32_t kNone = 0xffffffffu;

// Producer gate of a folded wire, or kNone for circuit inputs.
std::uint32_t producer(const FoldedNetlist& f, WireId w) {
  return w < f.input_count() ? kNone : w - f.input_count();
}

// Local position of every gate of a set (kNone outside the set).
std::vector<std::uint32_t> positions(const FoldedNetlist& f, std::span<const std::uint32_t> gates) {
  std::vector<std::uint32_t> pos(f.gates.size(), kNone);
  for (std::uint32_t i = 0; i < gates.size(); ++i) {
    if (gates[i] >= f.gates.size()) throw std::invalid_argument("gate index out of range");
    if (pos[gates[i]] != kNone) throw std::invalid_argument("gate listed twice");
    pos[gates[i]] = i;
  }
  return pos;
}

struct UnionFind {
  std::vector<std::uint32_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0u); }
  std::uint32_t find(std::uint32_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

// ASAP level inside the set; producers outside count as level 0.
std::vector<std::uint32_t> levels(const SubDag& d) {
  std::vector<std::uint32_t> lv(d.gates.size(), 0);
  // Gate indices ascend along any dependency, so sorting by index is topological.
  std::vector<std::uint32_t> idx(d.gates.size());
  std::iota(idx.begin(), idx.end(), 0u);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return d.gates[a] < d.gates[b]; });
  for (auto i : idx)
    for (auto p : d.pred[i]) lv[i] = std::max(lv[i], lv[p] + 1);
  return lv;
}

std::vector<std::uint32_t> level_order(const FoldedNetlist& f, std::span<const std::uint32_t> gates) {
  const SubDag d = sub_dag(f, gates, LatencyMap::evaluation());
  const auto lv = levels(d);
  std::vector<std::uint32_t> idx(gates.size());
  std::iota(idx.begin(), idx.end(), 0u);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) {
    return lv[a] != lv[b] ? lv[a] < lv[b] : d.gates[a] < d.gates[b];
  });
  std::vector<std::uint32_t> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(d.gates[i]);
  return out;
}

// Earliest Execute cycle of a node issued right after `last`.
struct ReadyRule {
  const SubDag& d;
  const std::vector<std::uint64_t>& exec;
  const IssueTiming& t;
  std::uint64_t operator()(std::uint32_t n, std::uint32_t last) const {
    std::uint64_t r = 0;
    for (auto p : d.pred[n]) {
      const std::uint64_t done = exec[p] + d.weight[p];
      r = std::max(r, p == last ? done : done + t.memory_path());
    }
    return r;
  }
};

std::uint64_t stalls_of(const SubDag& d, std::span<const std::uint32_t> local_order, const IssueTiming& t) {
  std::vector<std::uint64_t> exec(d.gates.size(), 0);
  const ReadyRule ready{d, exec, t};
  std::uint64_t stalls = 0, prev = 0;
  std::uint32_t last = kNone;
  for (std::size_t k = 0; k < local_order.size(); ++k) {
    const std::uint32_t n = local_order[k];
    const std::uint64_t seq = k == 0 ? 0 : prev + 1;
    const std::uint64_t e = std::max(seq, ready(n, last));
    stalls += e - seq;
    exec[n] = prev = e;
    last = n;
  }
  return stalls;
}

}  // namespace

std::string_view to_string(ScheduleMode m) {
  switch (m) {
    case ScheduleMode::DepthFirst: return "df";
    case ScheduleMode::FullReorder: return "fr";
    case ScheduleMode::SegmentReorder: return "sr";
    case ScheduleMode::Cpfe: return "cpfe";
  }
  return "?";
}

ScheduleMode parse_schedule_mode(std::string_view s) {
  if (s == "df") return ScheduleMode::DepthFirst;
  if (s == "fr") return ScheduleMode::FullReorder;
  if (s == "sr") return ScheduleMode::SegmentReorder;
  if (s == "cpfe") return ScheduleMode::Cpfe;
  throw std::invalid_argument("unknown schedule mode '" + std::string(s) + "'");
}

SubDag sub_dag(const FoldedNetlist& f, std::span<const std::uint32_t> gates, const LatencyMap& latency) {
  const auto pos = positions(f, gates);
  SubDag d;
  d.gates.assign(gates.begin(), gates.end());
  d.weight.resize(gates.size());
  d.pred.resize(gates.size());
  d.succ.resize(gates.size());
  for (std::uint32_t i = 0; i < gates.size(); ++i) {
    const Gate& g = f.gates[gates[i]];
    d.weight[i] = latency.of(g.kind);
    for (WireId w : {g.in0, g.in1}) {
      const std::uint32_t p = producer(f, w);
      if (p == kNone || pos[p] == kNone) continue;
      if (std::find(d.pred[i].begin(), d.pred[i].end(), pos[p]) != d.pred[i].end()) continue;
      d.pred[i].push_back(pos[p]);
      d.succ[pos[p]].push_back(i);
    }
  }
  return d;
}

std::vector<std::uint32_t> all_gates(const FoldedNetlist& f) {
  std::vector<std::uint32_t> g(f.gates.size());
  std::iota(g.begin(), g.end(), 0u);
  return g;
}

std::vector<std::vector<std::uint32_t>> find_units(const FoldedNetlist& f) {
  UnionFind uf(f.wire_count());
  for (const Gate& g : f.gates) {
    uf.unite(g.out, g.in0);
    uf.unite(g.out, g.in1);
  }
  std::vector<std::uint32_t> unit_of_root(f.wire_count(), kNone);
  std::vector<std::vector<std::uint32_t>> units;
  for (std::uint32_t gi = 0; gi < f.gates.size(); ++gi) {
    const std::uint32_t r = uf.find(f.gates[gi].out);
    if (unit_of_root[r] == kNone) {
      unit_of_root[r] = static_cast<std::uint32_t>(units.size());
      units.emplace_back();
    }
    units[unit_of_root[r]].push_back(gi);
  }
  return units;
}

std::vector<std::vector<std::uint32_t>> partition_coarse(std::span<const std::size_t> unit_sizes, unsigned n_cores) {
  if (n_cores == 0) throw std::invalid_argument("need at least one core");
  if (unit_sizes.empty()) throw std::invalid_argument("nothing to partition");
  std::vector<std::uint32_t> idx(unit_sizes.size());
  std::iota(idx.begin(), idx.end(), 0u);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return unit_sizes[a] > unit_sizes[b]; });
  std::vector<std::size_t> load(n_cores, 0);
  std::vector<std::vector<std::uint32_t>> out(n_cores);
  for (auto u : idx) {
    const auto c = static_cast<std::size_t>(std::min_element(load.begin(), load.end()) - load.begin());
    load[c] += unit_sizes[u];
    out[c].push_back(u);
  }
  for (auto& v : out) std::sort(v.begin(), v.end());
  return out;
}

std::vector<std::uint32_t> order_depth_first(const FoldedNetlist& f, std::span<const std::uint32_t> gates) {
  const SubDag d = sub_dag(f, gates, LatencyMap::evaluation());
  const std::size_t n = gates.size();
  // Sinks in gate-index order; predecessors visited input 0 first.
  std::vector<std::uint32_t> roots;
  for (std::uint32_t i = 0; i < n; ++i)
    if (d.succ[i].empty()) roots.push_back(i);
  std::sort(roots.begin(), roots.end(), [&](auto a, auto b) { return d.gates[a] < d.gates[b]; });

  std::vector<std::uint8_t> state(n, 0);  // 0 new, 1 open, 2 done
  std::vector<std::uint32_t> out;
  out.reserve(n);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> stack;  // node, next pred slot
  for (auto r : roots) {
    if (state[r]) continue;
    stack.push_back({r, 0});
    state[r] = 1;
    while (!stack.empty()) {
      auto& [node, slot] = stack.back();
      const Gate& g = f.gates[d.gates[node]];
      if (slot < 2) {
        const WireId w = slot == 0 ? g.in0 : g.in1;
        ++slot;
        const std::uint32_t p = producer(f, w);
        if (p == kNone) continue;
        auto it = std::find_if(d.pred[node].begin(), d.pred[node].end(), [&](auto q) { return d.gates[q] == p; });
        if (it == d.pred[node].end() || state[*it]) continue;
        state[*it] = 1;
        stack.push_back({*it, 0});
        continue;
      }
      state[node] = 2;
      out.push_back(d.gates[node]);
      stack.pop_back();
    }
  }
  return out;
}

std::vector<std::uint32_t> order_fr(const FoldedNetlist& f, std::span<const std::uint32_t> gates) {
  return level_order(f, gates);
}

std::vector<std::vector<std::uint32_t>> segment(std::span<const std::uint32_t> order, std::uint32_t wire_mem_entries) {
  const std::size_t size = std::max<std::uint32_t>(1, wire_mem_entries / 2);
  std::vector<std::vector<std::uint32_t>> out;
  for (std::size_t i = 0; i < order.size(); i += size)
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + size)));
  return out;
}

std::vector<std::uint32_t> schedule_sr(const FoldedNetlist& f, std::span<const std::uint32_t> gates,
                                       std::uint32_t wire_mem_entries) {
  std::vector<std::uint32_t> out;
  for (auto& seg : segment(order_depth_first(f, gates), wire_mem_entries)) {
    std::sort(seg.begin(), seg.end());
    for (auto g : level_order(f, seg)) out.push_back(g);
  }
  return out;
}

PrioritySchedule schedule_cpfe(const FoldedNetlist& f, std::span<const std::uint32_t> seg, const IssueTiming& timing) {
  const SubDag d = sub_dag(f, seg, timing.latency);
  const std::size_t n = seg.size();
  PrioritySchedule ps;
  ps.priority.assign(n, 0);
  if (n == 0) return ps;

  // Longest weighted path from each node to the segment sink.
  std::vector<std::uint64_t> tail(n, 0);
  std::vector<std::uint32_t> topo(n);
  std::iota(topo.begin(), topo.end(), 0u);
  std::sort(topo.begin(), topo.end(), [&](auto a, auto b) { return d.gates[a] < d.gates[b]; });
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    std::uint64_t best = 0;
    for (auto s : d.succ[*it]) best = std::max(best, tail[s]);
    tail[*it] = d.weight[*it] + best;
  }
  auto heavier = [&](std::uint32_t a, std::uint32_t b) {
    return tail[a] != tail[b] ? tail[a] > tail[b] : d.gates[a] < d.gates[b];
  };
  auto succ = d.succ;
  for (auto& s : succ) std::sort(s.begin(), s.end(), heavier);

  // Follow the critical path from each start, then recurse into the
  // unprioritized descendants of the path, first path node first.
  std::vector<std::uint8_t> done(n, 0);
  std::uint32_t counter = static_cast<std::uint32_t>(n);
  std::vector<std::uint32_t> stack, path, children;
  std::vector<std::uint32_t> starts(n);
  std::iota(starts.begin(), starts.end(), 0u);
  std::sort(starts.begin(), starts.end(), heavier);
  for (auto s0 : starts) {
    if (done[s0]) continue;
    stack.push_back(s0);
    while (!stack.empty()) {
      std::uint32_t cur = stack.back();
      stack.pop_back();
      if (done[cur]) continue;
      path.clear();
      while (cur != kNone) {
        done[cur] = 1;
        ps.priority[cur] = counter--;
        path.push_back(cur);
        std::uint32_t next = kNone;
        for (auto s : succ[cur])
          if (!done[s]) {
            next = s;
            break;
          }
        cur = next;
      }
      children.clear();
      for (auto p : path)
        for (auto s : succ[p])
          if (!done[s]) children.push_back(s);
      for (auto it = children.rbegin(); it != children.rend(); ++it) stack.push_back(*it);
    }
  }

  // Finalization: each cycle issue the operable node with the highest priority.
  std::vector<std::uint64_t> exec(n, 0);
  std::vector<std::uint32_t> missing(n);
  for (std::size_t i = 0; i < n; ++i) missing[i] = static_cast<std::uint32_t>(d.pred[i].size());
  const ReadyRule ready{d, exec, timing};
  using Entry = std::pair<std::uint64_t, std::uint32_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> waiting;  // memory-path ready time
  std::priority_queue<std::pair<std::uint32_t, std::uint32_t>> avail;       // priority, node
  for (std::uint32_t i = 0; i < n; ++i)
    if (!missing[i]) avail.push({ps.priority[i], i});
  std::vector<std::uint8_t> issued(n, 0);
  std::uint64_t t = 0;
  std::uint32_t last = kNone;
  while (ps.order.size() < n) {
    while (!waiting.empty() && waiting.top().first <= t) {
      avail.push({ps.priority[waiting.top().second], waiting.top().second});
      waiting.pop();
    }
    while (!avail.empty() && issued[avail.top().second]) avail.pop();
    // A successor of the last node that is already operable through the
    // forwarding path competes with the memory-ready set.
    std::uint32_t pick = avail.empty() ? kNone : avail.top().second;
    std::uint64_t pick_t = t;
    std::uint64_t next_t = waiting.empty() ? UINT64_MAX : waiting.top().first;
    if (last != kNone) {
      for (auto s : d.succ[last]) {
        if (issued[s] || missing[s]) continue;
        const std::uint64_t r = ready(s, last);
        if (r > t) {
          next_t = std::min(next_t, r);
          continue;
        }
        if (pick == kNone || ps.priority[s] > ps.priority[pick]) {
          pick = s;
          pick_t = std::max(t, r);
        }
      }
    }
    if (pick == kNone) {
      t = next_t;
      continue;
    }
    t = pick_t;
    issued[pick] = 1;
    exec[pick] = t;
    ps.order.push_back(d.gates[pick]);
    for (auto s : d.succ[pick])
      if (--missing[s] == 0) waiting.push({ready(s, kNone), s});
    last = pick;
    ++t;
  }
  return ps;
}

std::vector<std::uint32_t> order_cpfe(const FoldedNetlist& f, std::span<const std::uint32_t> gates,
                                      std::uint32_t wire_mem_entries, const IssueTiming& timing) {
  std::vector<std::uint32_t> out;
  for (const auto& seg : segment(order_depth_first(f, gates), wire_mem_entries))
    for (auto g : schedule_cpfe(f, seg, timing).order) out.push_back(g);
  return out;
}

std::uint64_t issue_stalls(const FoldedNetlist& f, std::span<const std::uint32_t> order, const IssueTiming& timing) {
  const SubDag d = sub_dag(f, order, timing.latency);
  std::vector<std::uint32_t> local(order.size());
  std::iota(local.begin(), local.end(), 0u);
  return stalls_of(d, local, timing);
}

std::uint64_t optimal_issue_stalls(const FoldedNetlist& f, std::span<const std::uint32_t> gates,
                                   const IssueTiming& timing) {
  if (gates.size() > 10) throw std::invalid_argument("exhaustive search limited to 10 gates");
  const SubDag d = sub_dag(f, gates, timing.latency);
  const std::size_t n = gates.size();
  std::vector<std::uint32_t> order, missing(n);
  for (std::size_t i = 0; i < n; ++i) missing[i] = static_cast<std::uint32_t>(d.pred[i].size());
  std::vector<std::uint8_t> used(n, 0);
  std::uint64_t best = UINT64_MAX;
  std::function<void()> rec = [&] {
    if (order.size() == n) {
      best = std::min(best, stalls_of(d, order, timing));
      return;
    }
    for (std::uint32_t i = 0; i < n; ++i) {
      if (used[i] || missing[i]) continue;
      used[i] = 1;
      order.push_back(i);
      for (auto s : d.succ[i]) --missing[s];
      rec();
      for (auto s : d.succ[i]) ++missing[s];
      order.pop_back();
      used[i] = 0;
    }
  };
  rec();
  return n == 0 ? 0 : best;
}

std::string Schedule::to_json() const {
  nlohmann::ordered_json j;
  j["mode"] = std::string(to_string(mode));
  j["per_core"] = per_core;
  return j.dump() + "\n";
}

Schedule Schedule::from_json(std::string_view text) {
  const auto j = nlohmann::json::parse(text);
  Schedule s;
  s.mode = parse_schedule_mode(j.at("mode").get<std::string>());
  s.per_core = j.at("per_core").get<std::vector<std::vector<std::uint32_t>>>();
  return s;
}

Schedule make_schedule(const FoldedNetlist& f, const ScheduleOptions& opt) {
  if (opt.cores == 0) throw std::invalid_argument("need at least one core");
  Schedule s;
  s.mode = opt.mode;
  s.per_core.assign(opt.cores, {});
  if (f.gates.empty()) return s;
  const auto units = find_units(f);
  std::vector<std::size_t> sizes;
  for (const auto& u : units) sizes.push_back(u.size());
  const auto assign = partition_coarse(sizes, opt.cores);
  for (unsigned c = 0; c < opt.cores; ++c) {
    std::vector<std::uint32_t> gates;
    for (auto u : assign[c]) gates.insert(gates.end(), units[u].begin(), units[u].end());
    std::sort(gates.begin(), gates.end());
    switch (opt.mode) {
      case ScheduleMode::DepthFirst: s.per_core[c] = order_depth_first(f, gates); break;
      case ScheduleMode::FullReorder: s.per_core[c] = order_fr(f, gates); break;
      case ScheduleMode::SegmentReorder: s.per_core[c] = schedule_sr(f, gates, opt.wire_mem_entries); break;
      case ScheduleMode::Cpfe: s.per_core[c] = order_cpfe(f, gates, opt.wire_mem_entries, opt.timing); break;
    }
  }
  return s;
}

std::string check_schedule(const FoldedNetlist& f, const Schedule& s) {
  std::vector<std::uint32_t> core_of(f.gates.size(), kNone);
  for (std::uint32_t c = 0; c < s.per_core.size(); ++c) {
    for (auto g : s.per_core[c]) {
      if (g >= f.gates.size()) return "gate " + std::to_string(g) + " out of range";
      if (core_of[g] != kNone) return "gate " + std::to_string(g) + " scheduled twice";
      core_of[g] = c;
    }
  }
  for (std::uint32_t g = 0; g < f.gates.size(); ++g)
    if (core_of[g] == kNone) return "gate " + std::to_string(g) + " missing";
  for (std::uint32_t c = 0; c < s.per_core.size(); ++c) {
    std::vector<std::uint8_t> seen(f.gates.size(), 0);
    for (auto g : s.per_core[c]) {
      for (WireId w : {f.gates[g].in0, f.gates[g].in1}) {
        const std::uint32_t p = producer(f, w);
        if (p == kNone) continue;
        if (core_of[p] != c) return "gate " + std::to_string(g) + " depends on another core";
        if (!seen[p]) return "gate " + std::to_string(g) + " scheduled before its producer";
      }
      seen[g] = 1;
    }
  }
  return {};
}

}  // namespace gcx
