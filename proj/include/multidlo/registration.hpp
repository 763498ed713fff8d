#pragma once

#include <vector>

#include "multidlo/dlo_model.hpp"

namespace multidlo {

/// Parameters of the GLTP expectation-maximization registration.
struct GLTPParams {
  double beta = 0.8;      // kernel bandwidth (m)
  double lambda = 1.0;    // motion-coherence weight
  double alpha = 3.0;     // local-topology (LLE) weight
  double mu = 0.1;        // outlier ratio in [0, 1)
  int q = 3;              // half neighborhood size for LLE
  double epsilon = 1e-5;  // EM convergence tolerance on |delta sigma^2|
  int max_iters = 50;
  double sigma2_floor = 1e-10;  // lower clamp for the variance (m^2)
  MetricMode metric = MetricMode::Geodesic;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

/// E-step output: posterior matrix and mixture variance.
struct Correspondence {
  Eigen::MatrixXd P;   // M x N, entries in [0, 1]
  double sigma2 = 0.0;
  double np = 0.0;     // effective point count, sum of all P entries
};

/// Fixed local-reconstruction weights and the derived quadratic form.
struct LLEWeights {
  Eigen::MatrixXd L;  // row sums 1; zero across objects
  Eigen::MatrixXd H;  // (I - L)^T (I - L)
  int q = 0;
};

/// Result of one registration call.
struct RegistrationResult {
  Points y_new;             // updated M x 3 node matrix
  Eigen::MatrixXd w;        // kernel weights of the final iteration
  Eigen::MatrixXd g_final;  // kernel matrix of the final iteration
  double sigma2_final = 0.0;
  int iterations = 0;
  std::vector<double> cost_trace;  // total cost after each iteration
};

/// Local linear reconstruction weights from the initial state.
///
/// Each node is reconstructed from its same-object chain neighbors with index
/// distance <= q; end nodes extend the window inward so every node keeps
/// min(2q, M_k - 1) neighbors. Weights minimize the reconstruction residual
/// subject to row sum 1; the local Gram system is ridge-regularized by
/// 1e-8 x its trace.
LLEWeights lle_weights(const MultiDLOState& state0, int q);

/// Posterior p(m | x_n) with outlier ratio mu per the GMM model. Distances
/// are Euclidean or geodesic node-to-point depending on table.mode; infinite
/// distances contribute exactly 0. A point whose denominator vanishes (no
/// finite-distance node and mu = 0, or full underflow) gets a zero column;
/// if every column degenerates with mu = 0 this throws std::runtime_error.
Correspondence posterior(const Points& x, const MultiDLOState& state,
                         const GeodesicTable& table, double sigma2, double mu);

/// Solves (d(P1) G + lambda sigma^2 I + alpha sigma^2 H G) W =
///        P X - (d(P1) + alpha sigma^2 H) Y0 for the kernel weights.
/// Throws std::runtime_error with a condition diagnostic when the relative
/// residual of the solve exceeds 1e-8.
Eigen::MatrixXd solve_w(const Eigen::MatrixXd& p, const Eigen::MatrixXd& g,
                        const Eigen::MatrixXd& h, const Points& y0,
                        const Points& x, double sigma2, double lambda,
                        double alpha);

/// Variance update: sigma^2 = [tr(X^T d(P^T 1) X) - 2 tr((P X)^T Yt)
/// + tr(Yt^T d(P1) Yt)] / (3 Np) with Yt = Y0 + G W, clamped below at floor.
double update_sigma2(const Eigen::MatrixXd& p, const Eigen::MatrixXd& g,
                     const Eigen::MatrixXd& w, const Points& y0,
                     const Points& x, double floor = 1e-10);

/// Total cost: GMM term at the current posteriors plus
/// (lambda/2) tr(W^T G W) + (alpha/2) tr(Yt^T H Yt).
double total_cost(const Eigen::MatrixXd& p, const Eigen::MatrixXd& g,
                  const Eigen::MatrixXd& w, const Eigen::MatrixXd& h,
                  const Points& y0, const Points& x, double sigma2,
                  double lambda, double alpha);

/// Full EM loop for one frame.
///
/// Starting from sigma^2_0 = sum ||x_n - y_m||^2 / (3 M N) (always Euclidean),
/// each iteration rebuilds the distance table and kernel from the current
/// node estimate, runs the E-step, solves for W and sigma^2, and sets
/// Y = Y0 + G W with Y0 the frame-start nodes. Stops when |delta sigma^2|
/// < params.epsilon or after params.max_iters iterations.
RegistrationResult gltp_em(const Points& x, const MultiDLOState& state0,
                           const GLTPParams& params, const LLEWeights& lle);

}  // namespace multidlo
