#include "multidlo/registration.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace multidlo {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Lowest relative residual accepted from the M-step linear solve.
constexpr double kSolveResidualTol = 1e-8;

}  // namespace

void GLTPParams::validate() const {
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be > 0");
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
  if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be >= 0");
  if (!(mu >= 0.0 && mu < 1.0)) throw std::invalid_argument("mu must be in [0, 1)");
  if (q < 1) throw std::invalid_argument("q must be >= 1");
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
  if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
  if (!(sigma2_floor > 0.0)) throw std::invalid_argument("sigma2_floor must be > 0");
}

LLEWeights lle_weights(const MultiDLOState& state0, int q) {
  if (q < 1) throw std::invalid_argument("lle_weights: q must be >= 1");
  const Eigen::Index m_total = state0.node_count();
  LLEWeights out;
  out.q = q;
  out.L = Eigen::MatrixXd::Zero(m_total, m_total);

  for (int k = 0; k < state0.object_count(); ++k) {
    const Eigen::Index off = state0.offset(k);
    const Eigen::Index mk = state0.object_size(k);
    if (mk < 2) {
      throw std::invalid_argument("lle_weights: object " +
                                  std::to_string(state0.object_id(k)) +
                                  " has fewer than 2 nodes");
    }
    const Eigen::Index want =
        std::min<Eigen::Index>(2 * static_cast<Eigen::Index>(q), mk - 1);
    for (Eigen::Index j = 0; j < mk; ++j) {
      // Window of chain indices around j, shifted inward at the ends so the
      // node keeps `want` neighbors.
      Eigen::Index lo = j - q;
      Eigen::Index hi = j + q;
      if (lo < 0) {
        hi += -lo;
        lo = 0;
      }
      if (hi > mk - 1) {
        lo -= hi - (mk - 1);
        hi = mk - 1;
      }
      lo = std::max<Eigen::Index>(lo, 0);

      std::vector<Eigen::Index> nbr;
      nbr.reserve(static_cast<size_t>(want));
      for (Eigen::Index i = lo; i <= hi; ++i) {
        if (i != j) nbr.push_back(i);
      }

      const auto n = static_cast<Eigen::Index>(nbr.size());
      Eigen::MatrixXd diff(n, 3);
      for (Eigen::Index a = 0; a < n; ++a) {
        diff.row(a) =
            state0.nodes().row(off + nbr[static_cast<size_t>(a)]) -
            state0.nodes().row(off + j);
      }
      Eigen::MatrixXd gram = diff * diff.transpose();
      const double tr = gram.trace();
      Eigen::VectorXd w(n);
      if (tr > 0.0) {
        gram.diagonal().array() += 1e-8 * tr;
        w = gram.ldlt().solve(Eigen::VectorXd::Ones(n));
        const double s = w.sum();
        if (s == 0.0 || !std::isfinite(s)) {
          w.setConstant(1.0 / static_cast<double>(n));
        } else {
          w /= s;
        }
      } else {
        // All neighbors coincide with the node; any convex weights are exact.
        w.setConstant(1.0 / static_cast<double>(n));
      }
      for (Eigen::Index a = 0; a < n; ++a) {
        out.L(off + j, off + nbr[static_cast<size_t>(a)]) = w[a];
      }
    }
  }

  const Eigen::MatrixXd residual =
      Eigen::MatrixXd::Identity(m_total, m_total) - out.L;
  out.H = residual.transpose() * residual;
  return out;
}

Correspondence posterior(const Points& x, const MultiDLOState& state,
                         const GeodesicTable& table, double sigma2, double mu) {
  const Eigen::Index n_points = x.rows();
  const Eigen::Index m_total = state.node_count();
  if (n_points < 1) throw std::invalid_argument("posterior: no points");
  if (!(sigma2 > 0.0)) throw std::invalid_argument("posterior: sigma2 must be > 0");
  if (!(mu >= 0.0 && mu < 1.0)) throw std::invalid_argument("posterior: mu must be in [0, 1)");

  const double outlier_term =
      std::pow(2.0 * kPi * sigma2, 1.5) * mu * static_cast<double>(m_total) /
      ((1.0 - mu) * static_cast<double>(n_points));

  Correspondence corr;
  corr.sigma2 = sigma2;
  corr.P.resize(m_total, n_points);

  Eigen::Index degenerate = 0;
  for (Eigen::Index n = 0; n < n_points; ++n) {
    const Vector3 point = x.row(n).transpose();
    Eigen::VectorXd dist;
    if (table.mode == MetricMode::Geodesic) {
      dist = node_to_point_distances(state, table, point);
    } else {
      dist = (state.nodes().rowwise() - point.transpose()).rowwise().norm();
    }
    Eigen::VectorXd num =
        (-dist.array().square() / (2.0 * sigma2)).exp().matrix();
    const double denom = num.sum() + outlier_term;
    if (denom > 0.0) {
      corr.P.col(n) = num / denom;
    } else {
      corr.P.col(n).setZero();
      ++degenerate;
    }
  }

  if (degenerate == n_points && mu == 0.0) {
    throw std::runtime_error(
        "posterior: every point has zero density under all nodes and mu = 0");
  }
  corr.np = corr.P.sum();
  return corr;
}

Eigen::MatrixXd solve_w(const Eigen::MatrixXd& p, const Eigen::MatrixXd& g,
                        const Eigen::MatrixXd& h, const Points& y0,
                        const Points& x, double sigma2, double lambda,
                        double alpha) {
  const Eigen::Index m_total = g.rows();
  const Eigen::VectorXd p1 = p.rowwise().sum();

  Eigen::MatrixXd lhs = p1.asDiagonal() * g;
  lhs.diagonal().array() += lambda * sigma2;
  if (alpha != 0.0) {
    lhs.noalias() += (alpha * sigma2) * (h * g);
  }
  Eigen::MatrixXd rhs = p * x;
  rhs.noalias() -= p1.asDiagonal() * y0;
  if (alpha != 0.0) {
    rhs.noalias() -= (alpha * sigma2) * (h * y0);
  }

  Eigen::PartialPivLU<Eigen::MatrixXd> lu(lhs);
  Eigen::MatrixXd w = lu.solve(rhs);

  const double rhs_norm = rhs.norm();
  const double residual = (lhs * w - rhs).norm();
  const double scale = std::max(rhs_norm, lhs.norm() * w.norm());
  if (scale > 0.0 && residual / scale >= kSolveResidualTol) {
    throw std::runtime_error(
        "solve_w: ill-conditioned M-step system (relative residual " +
        std::to_string(residual / scale) + ", rcond " +
        std::to_string(lu.rcond()) + ")");
  }
  (void)m_total;
  return w;
}

double update_sigma2(const Eigen::MatrixXd& p, const Eigen::MatrixXd& g,
                     const Eigen::MatrixXd& w, const Points& y0,
                     const Points& x, double floor) {
  const double np = p.sum();
  if (!(np > 0.0)) throw std::runtime_error("update_sigma2: Np is zero");

  const Points yt = y0 + g * w;
  const Eigen::VectorXd pt1 = p.colwise().sum();  // P^T 1, length N
  const Eigen::VectorXd p1 = p.rowwise().sum();   // P 1, length M

  const double term_x = (x.rowwise().squaredNorm().array() * pt1.array()).sum();
  const double term_cross = (p * x).cwiseProduct(yt).sum();
  const double term_y = (yt.rowwise().squaredNorm().array() * p1.array()).sum();

  const double sigma2 = (term_x - 2.0 * term_cross + term_y) / (3.0 * np);
  return std::max(sigma2, floor);
}

double total_cost(const Eigen::MatrixXd& p, const Eigen::MatrixXd& g,
                  const Eigen::MatrixXd& w, const Eigen::MatrixXd& h,
                  const Points& y0, const Points& x, double sigma2,
                  double lambda, double alpha) {
  if (!(sigma2 > 0.0)) throw std::invalid_argument("total_cost: sigma2 must be > 0");
  const double np = p.sum();
  const Points yt = y0 + g * w;
  const Eigen::VectorXd pt1 = p.colwise().sum();
  const Eigen::VectorXd p1 = p.rowwise().sum();

  const double quad = (x.rowwise().squaredNorm().array() * pt1.array()).sum() -
                      2.0 * (p * x).cwiseProduct(yt).sum() +
                      (yt.rowwise().squaredNorm().array() * p1.array()).sum();

  double cost = quad / (2.0 * sigma2) + 1.5 * np * std::log(sigma2);
  cost += 0.5 * lambda * w.cwiseProduct(g * w).sum();
  cost += 0.5 * alpha * yt.cwiseProduct(h * yt).sum();
  return cost;
}

RegistrationResult gltp_em(const Points& x, const MultiDLOState& state0,
                           const GLTPParams& params, const LLEWeights& lle) {
  params.validate();
  const Eigen::Index n_points = x.rows();
  const Eigen::Index m_total = state0.node_count();
  if (n_points < 1) throw std::invalid_argument("gltp_em: no points");
  if (lle.H.rows() != m_total) {
    throw std::invalid_argument("gltp_em: LLE weights do not match state");
  }

  const Points y0 = state0.nodes();

  // sigma^2_0 = mean squared Euclidean node-point distance / 3.
  double sigma2 = 0.0;
  for (Eigen::Index n = 0; n < n_points; ++n) {
    sigma2 += (y0.rowwise() - x.row(n)).rowwise().squaredNorm().sum();
  }
  sigma2 /= 3.0 * static_cast<double>(m_total) * static_cast<double>(n_points);
  sigma2 = std::max(sigma2, params.sigma2_floor);

  RegistrationResult result;
  MultiDLOState current = state0;

  for (int it = 1; it <= params.max_iters; ++it) {
    const GeodesicTable table = geodesic_table(current, params.metric);
    const KernelMatrix kernel = kernel_matrix(table, params.beta);
    const Correspondence corr = posterior(x, current, table, sigma2, params.mu);
    const Eigen::MatrixXd w = solve_w(corr.P, kernel.G, lle.H, y0, x, sigma2,
                                      params.lambda, params.alpha);
    const double sigma2_new =
        update_sigma2(corr.P, kernel.G, w, y0, x, params.sigma2_floor);

    result.y_new = y0 + kernel.G * w;
    result.w = w;
    result.g_final = kernel.G;
    result.iterations = it;
    result.cost_trace.push_back(total_cost(corr.P, kernel.G, w, lle.H, y0, x,
                                           sigma2_new, params.lambda,
                                           params.alpha));
    current = current.with_nodes(result.y_new);

    const double delta = std::abs(sigma2_new - sigma2);
    sigma2 = sigma2_new;
    if (delta < params.epsilon) break;
  }

  result.sigma2_final = sigma2;
  return result;
}

}  // namespace multidlo
