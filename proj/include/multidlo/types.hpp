#pragma once

#include <Eigen/Core>
#include <string>

namespace multidlo {

/// N x 3 matrix of 3-D positions in meters, one row per point.
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3>;
using Vector3 = Eigen::Vector3d;

/// Distance metric used for node-to-node and node-to-point proximity.
enum class MetricMode { Euclidean, Geodesic };

std::string to_string(MetricMode mode);
MetricMode metric_mode_from_string(const std::string& name);

}  // namespace multidlo
