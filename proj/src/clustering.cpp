#include "bevmotion/clustering.hpp"

#include <deque>
#include <unordered_map>

namespace bevmotion {

namespace {

std::int64_t key(int row, int col) {
  return (static_cast<std::int64_t>(row) << 32) ^ static_cast<std::uint32_t>(col);
}

}  // namespace

ClusterSet bfs_cluster(const CellSet& cells, int d_c) {
  if (d_c < 1) throw Error("bfs_cluster: d_c must be >= 1");
  ClusterSet out;
  const std::size_t n = cells.size();
  out.assignment.assign(n, -1);

  std::unordered_map<std::int64_t, std::size_t> lookup;
  lookup.reserve(n * 2);
  for (std::size_t i = 0; i < n; ++i) lookup.emplace(key(cells.indices[i].row, cells.indices[i].col), i);

  std::vector<CellIndex> offsets;
  for (int dr = -d_c; dr <= d_c; ++dr) {
    for (int dc = -d_c; dc <= d_c; ++dc) {
      if ((dr != 0 || dc != 0) && dr * dr + dc * dc <= d_c * d_c) offsets.push_back({dr, dc});
    }
  }

  std::deque<std::size_t> queue;
  for (std::size_t seed = 0; seed < n; ++seed) {
    if (out.assignment[seed] >= 0) continue;
    const int id = static_cast<int>(out.clusters.size());
    out.clusters.emplace_back();
    out.assignment[seed] = id;
    queue.push_back(seed);
    while (!queue.empty()) {
      const std::size_t cur = queue.front();
      queue.pop_front();
      out.clusters[id].push_back(cur);
      const CellIndex c = cells.indices[cur];
      for (const auto& o : offsets) {
        auto it = lookup.find(key(c.row + o.row, c.col + o.col));
        if (it == lookup.end() || out.assignment[it->second] >= 0) continue;
        out.assignment[it->second] = id;
        queue.push_back(it->second);
      }
    }
  }
  return out;
}

}  // namespace bevmotion
