#pragma once

#include "bevmotion/preprocess.hpp"

#include <vector>

namespace bevmotion {

/// Partition of a CellSet. `clusters[k]` lists positions into the CellSet,
/// `assignment[i]` is the cluster id of CellSet entry i.
struct ClusterSet {
  std::vector<int> assignment;
  std::vector<std::vector<std::size_t>> clusters;

  std::size_t count() const { return clusters.size(); }
};

/// Connected components of the relation "Euclidean index distance <= d_c".
/// Breadth-first expansion seeds from the lowest unvisited CellSet position,
/// so ids follow the input order.
ClusterSet bfs_cluster(const CellSet& cells, int d_c);

}  // namespace bevmotion
