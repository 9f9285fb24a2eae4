#pragma once

#include <cstdint>
#include <vector>

#include "mixlasso/core_model.h"

namespace mixlasso {

struct EMConfig {
    int max_iter = 500;
    /// Stop when |delta objective| / (1 + |objective|) < tol.
    double tol = 1e-6;
    int n_starts = 5;
    std::uint64_t seed = 0;
    /// Responsibilities are floored here and renormalized.
    double resp_floor = 1e-15;

    void validate() const;
};

/// Per-iteration record of an EM run. Entry t holds the objective after the
/// t-th M-step. `restarted[t]` marks values that follow a component
/// reinitialization (or the first iterate), so they are not comparable with
/// the previous entry. `clamped[t]` marks M-steps where a bound was active.
struct EMTrace {
    std::vector<double> objective;
    std::vector<bool> clamped;
    std::vector<bool> restarted;
};

struct FittedModel {
    ModelIndex index;
    MixtureParams params;
    double loglik = 0.0;
    int n_iter = 0;
    bool converged = false;
    /// Achieved likelihood slack, n * tol * |loglik|.
    double eta = 0.0;
    /// M-steps that needed ridge jitter on a singular Gram matrix.
    int jitter_events = 0;
    /// Components reinitialized by the empty-component rule.
    int reinit_events = 0;
    int best_start = 0;
};

struct MStepResult {
    MixtureParams params;
    bool jittered = false;
    bool clamped = false;
};

/// Posterior component probabilities, n x k, via log-sum-exp; floored at
/// `resp_floor` and renormalized row-wise.
Matrix e_step(const MixtureParams& params, const Dataset& data, double resp_floor = 1e-15);

/// Maximizes the expected complete-data log-likelihood over the bounded set
/// with coefficients supported on J.
MStepResult m_step_restricted(const Matrix& resp, const Dataset& data, const Support& J,
                              const BoundsBox& bounds);

/// Starting responsibilities for restart `start`. Start 0 runs k-means++
/// seeding plus Lloyd iterations on the residuals of a pooled least-squares
/// fit restricted to J; later starts are uniform random assignments.
Matrix initial_responsibilities(const Dataset& data, int k, const Support& J,
                                std::uint64_t seed, int start, double resp_floor = 1e-15);

FittedModel fit_mle(const Dataset& data, const ModelIndex& index, const EMConfig& config,
                    const BoundsBox& bounds, EMTrace* best_trace = nullptr);

/// Single EM run started from `init`.
FittedModel fit_mle_from(const Dataset& data, const ModelIndex& index, const MixtureParams& init,
                         const EMConfig& config, const BoundsBox& bounds, EMTrace* trace = nullptr);

}  // namespace mixlasso
