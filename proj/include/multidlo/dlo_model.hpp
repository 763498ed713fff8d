#pragma once

#include <vector>

#include "multidlo/types.hpp"

namespace multidlo {

/// One deformable linear object: an ordered chain of 3-D nodes.
struct NodeChain {
  int object_id = 0;
  Points nodes;  // at least 2 rows; consecutive nodes must not coincide
};

/// Several node chains stacked vertically into one M x 3 node matrix.
///
/// Row ranges of distinct objects are contiguous and disjoint, and the
/// per-object layout never changes once built; with_nodes() replaces the
/// coordinates while keeping the layout.
class MultiDLOState {
 public:
  MultiDLOState() = default;

  const Points& nodes() const { return nodes_; }
  Eigen::Index node_count() const { return nodes_.rows(); }
  int object_count() const { return static_cast<int>(ids_.size()); }
  int object_id(int k) const { return ids_.at(static_cast<size_t>(k)); }
  Eigen::Index offset(int k) const { return offsets_.at(static_cast<size_t>(k)); }
  Eigen::Index object_size(int k) const { return sizes_.at(static_cast<size_t>(k)); }

  /// Index of the object owning stacked row m.
  int object_of(Eigen::Index m) const { return row_object_.at(static_cast<size_t>(m)); }

  /// Extracts chain k; round-trips exactly with build_state().
  NodeChain chain(int k) const;

  /// Same layout, new node coordinates (rows must match node_count()).
  MultiDLOState with_nodes(Points new_nodes) const;

 private:
  friend MultiDLOState build_state(const std::vector<NodeChain>& chains);

  Points nodes_;
  std::vector<int> ids_;
  std::vector<Eigen::Index> offsets_;
  std::vector<Eigen::Index> sizes_;
  std::vector<int> row_object_;
};

/// M x M node-to-node distance table under the selected metric.
///
/// In geodesic mode, same-object entries are arc lengths along the chain and
/// cross-object entries are +infinity. Arc lengths are rounded up to integer
/// multiples of 2^-30 m so that every sum and difference of same-object
/// entries is exact in double precision (chain additivity holds bitwise).
struct GeodesicTable {
  MetricMode mode = MetricMode::Euclidean;
  Eigen::MatrixXd dist;
};

/// Gaussian kernel over a distance table; cross-object entries are exactly 0
/// in geodesic mode because exp(-inf) evaluates to 0.
struct KernelMatrix {
  Eigen::MatrixXd G;
  double beta = 0.0;
};

/// Stacks the given chains into one state.
/// Throws std::invalid_argument on an empty list, duplicate object ids,
/// chains with fewer than 2 nodes, or zero-length segments.
MultiDLOState build_state(const std::vector<NodeChain>& chains);

/// Node-to-node distances under the selected metric. Geodesic mode applies
/// the cross-object infinity rule. Nodes that coincide (as can happen for
/// intermediate states during registration) yield zero-length segments and
/// are accepted here; only build_state() enforces the chain invariants.
GeodesicTable geodesic_table(const MultiDLOState& state, MetricMode mode);

/// Node-to-point distances for one observed point x under the geodesic
/// metric. The two nodes nearest to x in Euclidean distance (ties broken by
/// lower stacked index) act as anchors; every other node pays the Euclidean
/// leg to its geodesically closer anchor plus the arc length from that
/// anchor. Nodes on an object containing neither anchor get +infinity.
/// Requires a geodesic-mode table and at least 2 nodes.
Eigen::VectorXd node_to_point_distances(const MultiDLOState& state,
                                        const GeodesicTable& table,
                                        const Vector3& x);

/// G(i,m) = exp(-dist(i,m)^2 / (2 beta^2)), with exp(-inf) = 0. beta > 0.
KernelMatrix kernel_matrix(const GeodesicTable& table, double beta);

}  // namespace multidlo
