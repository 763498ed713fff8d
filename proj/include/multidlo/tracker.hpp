#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "multidlo/registration.hpp"

namespace multidlo {

/// One time step of segmented 3-D points. Labels are per-point object ids and
/// are present only on instance-labeled frames (normally just the first).
/// Labels below zero mark background and are ignored.
struct PointCloudFrame {
  long index = 0;
  Points points;
  std::optional<Eigen::VectorXi> labels;
};

struct TrackerOptions {
  double voxel_size = 0.01;  // m
  int max_points = 8000;
  std::uint64_t seed = 0;
};

struct TrackerDiagnostics {
  int iterations = 0;
  double last_cost = 0.0;
  std::vector<double> object_displacements;  // mean per-node move per object
  bool empty_frame_warning = false;
};

/// Frame-to-frame tracking state. The LLE weights are built once at
/// initialization and held fixed so the initial local topology is preserved.
struct TrackerState {
  MultiDLOState state;
  LLEWeights lle;
  GLTPParams params;
  TrackerOptions options;
  double last_sigma2 = 0.0;
  long frame_index = 0;
  TrackerDiagnostics diagnostics;
};

/// Builds the initial node chains from an instance-labeled frame.
///
/// Per object: voxel-downsample its points, order them by greedy
/// nearest-neighbor chaining starting from the point farthest from the label
/// centroid, then resample the resulting polyline to nodes_per_object nodes
/// equally spaced by arc length. Throws std::invalid_argument when labels are
/// missing or an object has fewer points than nodes_per_object.
TrackerState initialize(const PointCloudFrame& first_frame,
                        int nodes_per_object, const GLTPParams& params,
                        const TrackerOptions& options = {});

/// Voxel-grid downsample (centroid per occupied voxel, first-seen order),
/// then uniform random subsample to max_points if still larger. Empty input
/// yields empty output.
Points preprocess(const PointCloudFrame& frame, double voxel_size,
                  int max_points, std::uint64_t seed);

/// Runs preprocess + gltp_em against the current state. Labels on the frame
/// are ignored. An empty frame returns the state unchanged with
/// diagnostics.empty_frame_warning set.
TrackerState track_frame(const TrackerState& ts, const PointCloudFrame& frame);

}  // namespace multidlo
