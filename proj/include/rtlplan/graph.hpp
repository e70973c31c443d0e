#pragma once

// Small directed-graph helpers shared by the automaton, planner and monitor.

#include <algorithm>
#include <vector>

namespace rtlplan {

using Adjacency = std::vector<std::vector<int>>;

struct SccResult {
  std::vector<int> component;   // component id per vertex, -1 if not visited
  std::vector<char> cyclic;     // per component: has a cycle (size > 1 or self-loop)
  int count = 0;
};

/// Tarjan's algorithm restricted to the vertices reachable from `roots`.
/// Iterative, so deep graphs do not exhaust the stack.
inline SccResult strongly_connected(const Adjacency& adj, const std::vector<int>& roots) {
  const int n = static_cast<int>(adj.size());
  SccResult r;
  r.component.assign(static_cast<std::size_t>(n), -1);
  std::vector<int> index(static_cast<std::size_t>(n), -1), low(static_cast<std::size_t>(n), 0);
  std::vector<char> on_stack(static_cast<std::size_t>(n), 0);
  std::vector<int> stack;
  std::vector<std::pair<int, std::size_t>> call;
  int counter = 0;

  for (int root : roots) {
    if (index[static_cast<std::size_t>(root)] != -1) continue;
    call.push_back({root, 0});
    index[static_cast<std::size_t>(root)] = low[static_cast<std::size_t>(root)] = counter++;
    stack.push_back(root);
    on_stack[static_cast<std::size_t>(root)] = 1;
    while (!call.empty()) {
      auto& [v, next] = call.back();
      const auto& out = adj[static_cast<std::size_t>(v)];
      if (next < out.size()) {
        int w = out[next++];
        auto wi = static_cast<std::size_t>(w);
        if (index[wi] == -1) {
          index[wi] = low[wi] = counter++;
          stack.push_back(w);
          on_stack[wi] = 1;
          call.push_back({w, 0});
        } else if (on_stack[wi]) {
          low[static_cast<std::size_t>(v)] = std::min(low[static_cast<std::size_t>(v)], index[wi]);
        }
        continue;
      }
      int done = v;
      call.pop_back();
      if (!call.empty()) {
        int parent = call.back().first;
        low[static_cast<std::size_t>(parent)] =
            std::min(low[static_cast<std::size_t>(parent)], low[static_cast<std::size_t>(done)]);
      }
      if (low[static_cast<std::size_t>(done)] == index[static_cast<std::size_t>(done)]) {
        int id = r.count++;
        int size = 0;
        bool self_loop = false;
        int w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[static_cast<std::size_t>(w)] = 0;
          r.component[static_cast<std::size_t>(w)] = id;
          ++size;
          for (int x : adj[static_cast<std::size_t>(w)])
            if (x == w) self_loop = true;
        } while (w != done);
        r.cyclic.push_back(size > 1 || self_loop);
      }
    }
  }
  return r;
}

/// Vertices that lie on some cycle.
inline std::vector<char> on_cycle(const Adjacency& adj) {
  std::vector<int> all(adj.size());
  for (std::size_t i = 0; i < adj.size(); ++i) all[i] = static_cast<int>(i);
  auto scc = strongly_connected(adj, all);
  std::vector<char> out(adj.size(), 0);
  for (std::size_t v = 0; v < adj.size(); ++v) out[v] = scc.cyclic[static_cast<std::size_t>(scc.component[v])];
  return out;
}

/// Vertices from which some vertex in `target` is reachable (including targets).
inline std::vector<char> can_reach(const Adjacency& adj, const std::vector<char>& target) {
  const std::size_t n = adj.size();
  Adjacency rev(n);
  for (std::size_t v = 0; v < n; ++v)
    for (int w : adj[v]) rev[static_cast<std::size_t>(w)].push_back(static_cast<int>(v));
  std::vector<char> seen(n, 0);
  std::vector<int> work;
  for (std::size_t v = 0; v < n; ++v)
    if (target[v]) {
      seen[v] = 1;
      work.push_back(static_cast<int>(v));
    }
  while (!work.empty()) {
    int v = work.back();
    work.pop_back();
    for (int u : rev[static_cast<std::size_t>(v)])
      if (!seen[static_cast<std::size_t>(u)]) {
        seen[static_cast<std::size_t>(u)] = 1;
        work.push_back(u);
      }
  }
  return seen;
}

}  // namespace rtlplan
