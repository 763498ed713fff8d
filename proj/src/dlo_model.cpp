#include "multidlo/dlo_model.hpp"

#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>
#include <string>

namespace multidlo {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Arc-length quantum. Rounding segment lengths up to multiples of a power of
// two keeps all same-object table entries on a shared grid where addition and
// subtraction are exact for total lengths below 2^23 m.
constexpr double kArcQuantum = 0x1p-30;

double quantize_up(double len) {
  return std::ceil(len / kArcQuantum) * kArcQuantum;
}

}  // namespace

std::string to_string(MetricMode mode) {
  return mode == MetricMode::Euclidean ? "euclidean" : "geodesic";
}

MetricMode metric_mode_from_string(const std::string& name) {
  if (name == "euclidean") return MetricMode::Euclidean;
  if (name == "geodesic") return MetricMode::Geodesic;
  throw std::invalid_argument("unknown metric mode '" + name +
                              "' (expected euclidean or geodesic)");
}

NodeChain MultiDLOState::chain(int k) const {
  NodeChain out;
  out.object_id = object_id(k);
  out.nodes = nodes_.middleRows(offset(k), object_size(k));
  return out;
}

MultiDLOState MultiDLOState::with_nodes(Points new_nodes) const {
  if (new_nodes.rows() != nodes_.rows()) {
    throw std::invalid_argument("with_nodes: row count mismatch");
  }
  MultiDLOState out = *this;
  out.nodes_ = std::move(new_nodes);
  return out;
}

MultiDLOState build_state(const std::vector<NodeChain>& chains) {
  if (chains.empty()) {
    throw std::invalid_argument("build_state: empty chain list");
  }
  std::set<int> seen_ids;
  Eigen::Index total = 0;
  for (const NodeChain& c : chains) {
    if (c.nodes.rows() < 2) {
      throw std::invalid_argument("build_state: chain for object " +
                                  std::to_string(c.object_id) +
                                  " has fewer than 2 nodes");
    }
    if (!seen_ids.insert(c.object_id).second) {
      throw std::invalid_argument("build_state: duplicate object_id " +
                                  std::to_string(c.object_id));
    }
    for (Eigen::Index j = 0; j + 1 < c.nodes.rows(); ++j) {
      if ((c.nodes.row(j + 1) - c.nodes.row(j)).norm() <= 0.0) {
        throw std::invalid_argument(
            "build_state: zero-length segment in object " +
            std::to_string(c.object_id) + " at node " + std::to_string(j));
      }
    }
    total += c.nodes.rows();
  }

  MultiDLOState state;
  state.nodes_.resize(total, 3);
  state.row_object_.reserve(static_cast<size_t>(total));
  Eigen::Index row = 0;
  int k = 0;
  for (const NodeChain& c : chains) {
    state.ids_.push_back(c.object_id);
    state.offsets_.push_back(row);
    state.sizes_.push_back(c.nodes.rows());
    state.nodes_.middleRows(row, c.nodes.rows()) = c.nodes;
    for (Eigen::Index j = 0; j < c.nodes.rows(); ++j) {
      state.row_object_.push_back(k);
    }
    row += c.nodes.rows();
    ++k;
  }
  return state;
}

GeodesicTable geodesic_table(const MultiDLOState& state, MetricMode mode) {
  const Eigen::Index m_total = state.node_count();
  GeodesicTable table;
  table.mode = mode;

  if (mode == MetricMode::Euclidean) {
    table.dist.resize(m_total, m_total);
    for (Eigen::Index i = 0; i < m_total; ++i) {
      table.dist(i, i) = 0.0;
      for (Eigen::Index j = i + 1; j < m_total; ++j) {
        const double d = (state.nodes().row(j) - state.nodes().row(i)).norm();
        table.dist(i, j) = d;
        table.dist(j, i) = d;
      }
    }
    return table;
  }

  table.dist.setConstant(m_total, m_total, kInf);
  for (int k = 0; k < state.object_count(); ++k) {
    const Eigen::Index off = state.offset(k);
    const Eigen::Index mk = state.object_size(k);
    // Quantized cumulative arc length along the chain.
    Eigen::VectorXd cum(mk);
    cum[0] = 0.0;
    for (Eigen::Index j = 1; j < mk; ++j) {
      const double seg =
          (state.nodes().row(off + j) - state.nodes().row(off + j - 1)).norm();
      cum[j] = cum[j - 1] + quantize_up(seg);
    }
    for (Eigen::Index i = 0; i < mk; ++i) {
      for (Eigen::Index j = i; j < mk; ++j) {
        const double d = cum[j] - cum[i];
        table.dist(off + i, off + j) = d;
        table.dist(off + j, off + i) = d;
      }
    }
  }
  return table;
}

Eigen::VectorXd node_to_point_distances(const MultiDLOState& state,
                                        const GeodesicTable& table,
                                        const Vector3& x) {
  if (table.mode != MetricMode::Geodesic) {
    throw std::invalid_argument("node_to_point_distances: geodesic table required");
  }
  const Eigen::Index m_total = state.node_count();
  if (m_total < 2) {
    throw std::invalid_argument("node_to_point_distances: at least 2 nodes required");
  }
  if (table.dist.rows() != m_total) {
    throw std::invalid_argument("node_to_point_distances: table does not match state");
  }

  Eigen::VectorXd euclid =
      (state.nodes().rowwise() - x.transpose()).rowwise().norm();

  // Two globally nearest anchors; minCoeff picks the lowest index on ties.
  Eigen::Index c1 = 0;
  euclid.minCoeff(&c1);
  Eigen::VectorXd masked = euclid;
  masked[c1] = kInf;
  Eigen::Index c2 = 0;
  masked.minCoeff(&c2);

  Eigen::VectorXd out(m_total);
  for (Eigen::Index m = 0; m < m_total; ++m) {
    if (m == c1 || m == c2) {
      out[m] = euclid[m];
      continue;
    }
    const double rho1 = table.dist(m, c1);
    const double rho2 = table.dist(m, c2);
    if (rho1 <= rho2) {
      out[m] = euclid[c1] + rho1;
    } else {
      out[m] = euclid[c2] + rho2;
    }
  }
  return out;
}

KernelMatrix kernel_matrix(const GeodesicTable& table, double beta) {
  if (!(beta > 0.0)) {
    throw std::invalid_argument("kernel_matrix: beta must be positive");
  }
  KernelMatrix kernel;
  kernel.beta = beta;
  kernel.G = (-table.dist.array().square() / (2.0 * beta * beta)).exp();
  return kernel;
}

}  // namespace multidlo
