#pragma once

#include "area/logspace.hpp"

namespace area::detail {

template <class HumanNode, class HumanOff, class MachineNode, class MachineOff>
Occupancy forward_pass(const ProcessSpec& spec, PrefixTree tree, HumanNode human_node, HumanOff human_off,
                       MachineNode machine_node, MachineOff machine_off) {
  const int T = spec.horizon, H = spec.human_actions, M = spec.machine_actions;
  Occupancy occ;
  occ.spec = spec;
  occ.pair_mass.assign(step_table_size(spec), 0.0);
  occ.node_mass.assign(tree.size(), 0.0);
  occ.node_mass[PrefixTree::root] = 1.0;

  // Off-tree mass after the machine move, indexed h_prev*M + m, and after
  // the human move, indexed h*M + m.
  std::vector<double> before(static_cast<std::size_t>(H) * M), after(static_cast<std::size_t>(H) * M, 0.0);
  for (int k = 0; k < T; ++k) {
    std::fill(before.begin(), before.end(), 0.0);
    if (k > 0) {
      for (int hp = 0; hp < H; ++hp)
        for (int mp = 0; mp < M; ++mp) {
          const double w = after[hp * M + mp];
          if (w == 0.0) continue;
          const auto q = machine_off(k, hp, mp);
          occ.machine_entropy += w * entropy(q);
          for (int m = 0; m < M; ++m) before[hp * M + m] += w * q[m];
        }
    }
    for (int v : tree.at_depth(2 * k)) {
      const double w = occ.node_mass[v];
      const auto q = machine_node(v);
      occ.machine_entropy += w * entropy(q);
      const int hp = k == 0 ? 0 : tree.symbol(v);
      for (int m = 0; m < M; ++m) {
        const int u = tree.child(v, m);
        if (u >= 0)
          occ.node_mass[u] = w * q[m];
        else
          before[hp * M + m] += w * q[m];
      }
    }
    std::fill(after.begin(), after.end(), 0.0);
    for (int u : tree.at_depth(2 * k + 1)) {
      const double w = occ.node_mass[u];
      const int m = tree.symbol(u);
      const auto p = human_node(u);
      occ.human_entropy += w * entropy(p);
      for (int h = 0; h < H; ++h) {
        const double x = w * p[h];
        occ.pair_mass[step_index(spec, k, h, m)] += x;
        const int c = tree.child(u, h);
        if (c >= 0)
          occ.node_mass[c] = x;
        else
          after[h * M + m] += x;
      }
    }
    for (int hp = 0; hp < H; ++hp)
      for (int m = 0; m < M; ++m) {
        const double w = before[hp * M + m];
        if (w == 0.0) continue;
        const auto p = human_off(k, hp, m);
        occ.human_entropy += w * entropy(p);
        for (int h = 0; h < H; ++h) {
          occ.pair_mass[step_index(spec, k, h, m)] += w * p[h];
          after[h * M + m] += w * p[h];
        }
      }
  }
  occ.tree = std::move(tree);
  return occ;
}

}  // namespace area::detail
