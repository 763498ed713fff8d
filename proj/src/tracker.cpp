#include "multidlo/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "multidlo/rng.hpp"

namespace multidlo {

namespace {

struct VoxelKey {
  std::int64_t x, y, z;
  bool operator==(const VoxelKey&) const = default;
};

struct VoxelKeyHash {
  size_t operator()(const VoxelKey& k) const {
    std::uint64_t h = mix_seed(static_cast<std::uint64_t>(k.x));
    h = mix_seed(h ^ static_cast<std::uint64_t>(k.y));
    h = mix_seed(h ^ static_cast<std::uint64_t>(k.z));
    return static_cast<size_t>(h);
  }
};

// Greedy nearest-neighbor ordering of a point set, starting from the point
// farthest from the centroid. Ties pick the lowest index.
std::vector<Eigen::Index> chain_order(const Points& pts) {
  const Eigen::Index n = pts.rows();
  const Vector3 centroid = pts.colwise().mean().transpose();
  Eigen::Index start = 0;
  double best = -1.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = (pts.row(i).transpose() - centroid).squaredNorm();
    if (d > best) {
      best = d;
      start = i;
    }
  }

  std::vector<bool> used(static_cast<size_t>(n), false);
  std::vector<Eigen::Index> order;
  order.reserve(static_cast<size_t>(n));
  Eigen::Index cur = start;
  used[static_cast<size_t>(cur)] = true;
  order.push_back(cur);
  for (Eigen::Index step = 1; step < n; ++step) {
    Eigen::Index next = -1;
    double dmin = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (used[static_cast<size_t>(i)]) continue;
      const double d = (pts.row(i) - pts.row(cur)).squaredNorm();
      if (d < dmin) {
        dmin = d;
        next = i;
      }
    }
    used[static_cast<size_t>(next)] = true;
    order.push_back(next);
    cur = next;
  }
  return order;
}

// Resamples an ordered polyline to `count` nodes equally spaced by arc
// length, keeping both end points.
Points resample_polyline(const Points& poly, int count) {
  const Eigen::Index n = poly.rows();
  Eigen::VectorXd cum(n);
  cum[0] = 0.0;
  for (Eigen::Index i = 1; i < n; ++i) {
    cum[i] = cum[i - 1] + (poly.row(i) - poly.row(i - 1)).norm();
  }
  const double total = cum[n - 1];
  if (!(total > 0.0)) {
    throw std::invalid_argument("resample: polyline has zero length");
  }

  Points out(count, 3);
  Eigen::Index seg = 0;
  for (int i = 0; i < count; ++i) {
    const double target =
        total * static_cast<double>(i) / static_cast<double>(count - 1);
    while (seg + 1 < n - 1 && cum[seg + 1] < target) ++seg;
    const double span = cum[seg + 1] - cum[seg];
    const double t = span > 0.0 ? (target - cum[seg]) / span : 0.0;
    out.row(i) = poly.row(seg) * (1.0 - t) + poly.row(seg + 1) * t;
  }
  return out;
}

}  // namespace

Points preprocess(const PointCloudFrame& frame, double voxel_size,
                  int max_points, std::uint64_t seed) {
  if (!(voxel_size > 0.0)) {
    throw std::invalid_argument("preprocess: voxel_size must be > 0");
  }
  const Eigen::Index n = frame.points.rows();
  if (n == 0) return Points(0, 3);

  std::unordered_map<VoxelKey, std::pair<Vector3, int>, VoxelKeyHash> cells;
  std::vector<VoxelKey> order;  // first-seen order keeps output deterministic
  cells.reserve(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const VoxelKey key{
        static_cast<std::int64_t>(std::floor(frame.points(i, 0) / voxel_size)),
        static_cast<std::int64_t>(std::floor(frame.points(i, 1) / voxel_size)),
        static_cast<std::int64_t>(std::floor(frame.points(i, 2) / voxel_size))};
    auto [it, inserted] = cells.try_emplace(key, Vector3::Zero(), 0);
    if (inserted) order.push_back(key);
    it->second.first += frame.points.row(i).transpose();
    it->second.second += 1;
  }

  Points down(static_cast<Eigen::Index>(order.size()), 3);
  for (size_t i = 0; i < order.size(); ++i) {
    const auto& [sum, count] = cells.at(order[i]);
    down.row(static_cast<Eigen::Index>(i)) =
        (sum / static_cast<double>(count)).transpose();
  }

  if (down.rows() <= max_points) return down;

  // Partial Fisher-Yates over the index vector, then restore input order.
  std::vector<Eigen::Index> idx(static_cast<size_t>(down.rows()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(frame.index)));
  for (int i = 0; i < max_points; ++i) {
    const auto j = static_cast<size_t>(i) +
                   static_cast<size_t>(rng.uniform_index(idx.size() - static_cast<size_t>(i)));
    std::swap(idx[static_cast<size_t>(i)], idx[j]);
  }
  idx.resize(static_cast<size_t>(max_points));
  std::sort(idx.begin(), idx.end());

  Points out(max_points, 3);
  for (int i = 0; i < max_points; ++i) {
    out.row(i) = down.row(idx[static_cast<size_t>(i)]);
  }
  return out;
}

TrackerState initialize(const PointCloudFrame& first_frame,
                        int nodes_per_object, const GLTPParams& params,
                        const TrackerOptions& options) {
  params.validate();
  if (nodes_per_object < 2) {
    throw std::invalid_argument("initialize: nodes_per_object must be >= 2");
  }
  if (!first_frame.labels.has_value()) {
    throw std::invalid_argument("initialize: first frame must carry instance labels");
  }
  const Eigen::VectorXi& labels = *first_frame.labels;
  if (labels.size() != first_frame.points.rows()) {
    throw std::invalid_argument("initialize: one label per point required");
  }

  // Points per object id, ascending; negative labels are background.
  std::map<int, std::vector<Eigen::Index>> by_object;
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels[i] >= 0) by_object[labels[i]].push_back(i);
  }
  if (by_object.empty()) {
    throw std::invalid_argument("initialize: no labeled points");
  }

  std::vector<NodeChain> chains;
  for (const auto& [object_id, rows] : by_object) {
    if (static_cast<int>(rows.size()) < nodes_per_object) {
      throw std::invalid_argument(
          "initialize: object " + std::to_string(object_id) + " has " +
          std::to_string(rows.size()) + " points, need at least " +
          std::to_string(nodes_per_object));
    }
    Points pts(static_cast<Eigen::Index>(rows.size()), 3);
    for (size_t i = 0; i < rows.size(); ++i) {
      pts.row(static_cast<Eigen::Index>(i)) = first_frame.points.row(rows[i]);
    }
    PointCloudFrame object_frame{first_frame.index, std::move(pts), std::nullopt};
    Points down = preprocess(object_frame, options.voxel_size,
                             std::numeric_limits<int>::max(), options.seed);
    if (down.rows() < nodes_per_object) {
      throw std::invalid_argument(
          "initialize: object " + std::to_string(object_id) +
          " has too few points after voxel downsampling (" +
          std::to_string(down.rows()) + " < " +
          std::to_string(nodes_per_object) + ")");
    }

    const std::vector<Eigen::Index> order = chain_order(down);
    Points ordered(down.rows(), 3);
    for (Eigen::Index i = 0; i < down.rows(); ++i) {
      ordered.row(i) = down.row(order[static_cast<size_t>(i)]);
    }
    chains.push_back({object_id, resample_polyline(ordered, nodes_per_object)});
  }

  TrackerState ts;
  ts.state = build_state(chains);
  ts.lle = lle_weights(ts.state, params.q);
  ts.params = params;
  ts.options = options;
  ts.last_sigma2 = 0.0;
  ts.frame_index = first_frame.index;
  return ts;
}

TrackerState track_frame(const TrackerState& ts, const PointCloudFrame& frame) {
  TrackerState out = ts;
  out.frame_index = frame.index;
  out.diagnostics = TrackerDiagnostics{};

  const Points x =
      preprocess(frame, ts.options.voxel_size, ts.options.max_points,
                 ts.options.seed);
  if (x.rows() == 0) {
    out.diagnostics.empty_frame_warning = true;
    out.diagnostics.object_displacements.assign(
        static_cast<size_t>(ts.state.object_count()), 0.0);
    return out;
  }

  const RegistrationResult result = gltp_em(x, ts.state, ts.params, ts.lle);

  out.diagnostics.iterations = result.iterations;
  out.diagnostics.last_cost =
      result.cost_trace.empty() ? 0.0 : result.cost_trace.back();
  for (int k = 0; k < ts.state.object_count(); ++k) {
    const auto off = ts.state.offset(k);
    const auto mk = ts.state.object_size(k);
    const double mean_move =
        (result.y_new.middleRows(off, mk) - ts.state.nodes().middleRows(off, mk))
            .rowwise()
            .norm()
            .mean();
    out.diagnostics.object_displacements.push_back(mean_move);
  }
  out.state = ts.state.with_nodes(result.y_new);
  out.last_sigma2 = result.sigma2_final;
  return out;
}

}  // namespace multidlo
