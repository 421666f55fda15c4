#include "doctest.h"
#include "helpers.hpp"

#include "bevmotion/clustering.hpp"

#include <map>
#include <numeric>
#include <set>

using namespace bevmotion;

namespace {

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  }
  void unite(std::size_t a, std::size_t b) { parent[find(a)] = find(b); }
};

using Partition = std::set<std::set<std::size_t>>;

Partition oracle(const CellSet& cs, int d_c) {
  UnionFind uf(cs.size());
  for (std::size_t i = 0; i < cs.size(); ++i) {
    for (std::size_t j = i + 1; j < cs.size(); ++j) {
      const int dr = cs.indices[i].row - cs.indices[j].row, dc = cs.indices[i].col - cs.indices[j].col;
      if (dr * dr + dc * dc <= d_c * d_c) uf.unite(i, j);
    }
  }
  std::map<std::size_t, std::set<std::size_t>> groups;
  for (std::size_t i = 0; i < cs.size(); ++i) groups[uf.find(i)].insert(i);
  Partition p;
  for (auto& [root, g] : groups) p.insert(g);
  return p;
}

Partition partition(const ClusterSet& c) {
  Partition p;
  for (const auto& members : c.clusters) p.insert({members.begin(), members.end()});
  return p;
}

}  // namespace

TEST_CASE("radius boundary") {
  const GridSpec g = test::small_config().grid();
  CHECK(bfs_cluster(test::cells_from(g, {{10, 10}, {10, 12}}), 3).count() == 1);
  CHECK(bfs_cluster(test::cells_from(g, {{10, 10}, {10, 15}}), 3).count() == 2);
  CHECK(bfs_cluster(test::cells_from(g, {{10, 10}, {13, 10}}), 3).count() == 1);
  // (2, 3) is sqrt(13) > 3 apart.
  CHECK(bfs_cluster(test::cells_from(g, {{10, 10}, {12, 13}}), 3).count() == 2);
  CHECK(bfs_cluster(CellSet{}, 3).count() == 0);
}

TEST_CASE("chain is one cluster by transitivity") {
  const GridSpec g = test::small_config().grid();
  std::vector<CellIndex> idx;
  for (int c = 0; c <= 30; c += 3) idx.push_back({20, c});
  const CellSet cs = test::cells_from(g, idx);
  const ClusterSet cl = bfs_cluster(cs, 3);
  CHECK(cl.count() == 1);
  CHECK(partition(cl) == oracle(cs, 3));
}

TEST_CASE("ids follow input order") {
  const GridSpec g = test::small_config().grid();
  const CellSet cs = test::cells_from(g, {{1, 1}, {30, 30}, {1, 2}, {30, 31}, {50, 5}});
  const ClusterSet cl = bfs_cluster(cs, 2);
  CHECK(cl.assignment == std::vector<int>{0, 1, 0, 1, 2});
  CHECK(cl.clusters[0] == std::vector<std::size_t>{0, 2});
}

TEST_CASE("bfs matches union-find on random instances") {
  const GridSpec g = Config{}.grid();
  std::mt19937_64 rng(99);
  for (int d_c : {2, 3, 4}) {
    for (int trial = 0; trial < 100; ++trial) {
      std::uniform_int_distribution<int> n(0, 500), span(8, 80);
      const int s = span(rng);
      std::uniform_int_distribution<int> coord(0, s - 1);
      std::set<CellIndex> unique;
      const int count = n(rng);
      for (int i = 0; i < count; ++i) unique.insert({coord(rng), coord(rng)});
      std::vector<CellIndex> idx(unique.begin(), unique.end());
      std::shuffle(idx.begin(), idx.end(), rng);
      const CellSet cs = test::cells_from(g, idx);
      const ClusterSet cl = bfs_cluster(cs, d_c);
      REQUIRE(cl.assignment.size() == cs.size());
      CHECK(partition(cl) == oracle(cs, d_c));
      for (std::size_t k = 0; k < cl.count(); ++k) {
        for (std::size_t i : cl.clusters[k]) CHECK(cl.assignment[i] == static_cast<int>(k));
      }
    }
  }
}
