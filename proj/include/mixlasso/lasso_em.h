#pragma once

#include <cstdint>
#include <vector>

#include "mixlasso/core_model.h"
#include "mixlasso/em_mle.h"

namespace mixlasso {

/// Result of one l1-penalized EM run at a fixed (k, lambda).
struct PenalizedFit {
    int k = 1;
    double lambda = 0.0;
    MixtureParams params;
    double objective = 0.0;
    double loglik = 0.0;
    Support J;
    int n_iter = 0;
    bool converged = false;
};

/// -(1/n) loglik + lambda * sum_r sum_{j,z} |beta_{r,j,z}| / sigma_{z,r}.
/// The weight 1/sigma_{z,r} is the diagonal of P_r with P_r^T P_r = Sigma_r^{-1}.
double penalized_objective(const MixtureParams& params, const Dataset& data, double lambda);

/// sign(v) * max(|v| - t, 0).
double soft_threshold(double v, double t);

/// M-step for the penalized objective. `current` supplies the sigma used as
/// penalty weight and the warm start for coordinate descent; sigma is then
/// re-solved in closed form given the new coefficients.
MStepResult m_step_penalized(const Matrix& resp, const Dataset& data, double lambda, const BoundsBox& bounds,
                             const MixtureParams& current);

/// Starting point of a penalized run: the given responsibilities with zero
/// coefficients and the matching zero-mean variances.
MixtureParams zero_mean_start(const Matrix& resp, const Dataset& data, const BoundsBox& bounds);

/// Responsibilities every penalized run for this k starts from.
Matrix penalized_initial_responsibilities(const Dataset& data, int k, const EMConfig& config);

PenalizedFit fit_penalized(const Dataset& data, int k, double lambda, const EMConfig& config,
                           const BoundsBox& bounds, EMTrace* trace = nullptr);

/// {(j,z) : exists r with |beta_{r,j,z}| > zero_tol}.
Support relevant_set(const MixtureParams& params, double zero_tol = 0.0);

struct LambdaGrid {
    double lambda_max = 0.0;
    /// Descending.
    std::vector<double> values;
    /// No signal: lambda_max is zero and the grid is {0}.
    bool degenerate = false;
};

/// Smallest lambda at which the penalized EM started from `resp0` keeps every
/// coefficient at exactly zero. Computed by following the zero-coefficient
/// trajectory and taking the largest weighted correlation over sigma.
double lambda_max(const Dataset& data, const Matrix& resp0, const EMConfig& config, const BoundsBox& bounds);

/// grid_size values log-spaced on [lambda_max / 1000, lambda_max], descending.
LambdaGrid lambda_grid(const Dataset& data, int k, const Matrix& resp0, int grid_size, const EMConfig& config,
                       const BoundsBox& bounds);

struct CollectionResult {
    /// Deduplicated K x J-collection, sorted.
    std::vector<ModelIndex> models;
    /// Every penalized fit along every lambda path, in (k, lambda desc) order.
    std::vector<PenalizedFit> path;
    std::vector<LambdaGrid> grids;
};

CollectionResult build_collection(const Dataset& data, const std::vector<int>& K, int grid_size,
                                  const EMConfig& config, const BoundsBox& bounds, unsigned threads = 1);

}  // namespace mixlasso
