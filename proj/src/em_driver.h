#pragma once

// Shared EM loop used by the constrained MLE and the l1-penalized fits.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "mixlasso/core_model.h"
#include "mixlasso/em_mle.h"

namespace mixlasso::detail {

struct EStepResult {
    Matrix resp;
    double loglik = 0.0;
    /// log s(y_i|x_i) per row.
    Vector row_loglik;
};

EStepResult e_step_full(const MixtureParams& params, const Dataset& data, double resp_floor);

/// Applies the floor to every entry and renormalizes rows.
void floor_rows(Matrix& resp, double resp_floor);

struct EMRun {
    MixtureParams params;
    double objective = 0.0;
    double loglik = 0.0;
    int n_iter = 0;
    bool converged = false;
    int jitter_events = 0;
    int reinit_events = 0;
};

constexpr int kMaxReinitPerRun = 5;

/// Empty-component rule: components with pi_r < 1/(10 n) take over the
/// worst-fit observations. Returns true when `resp` was modified.
bool reinit_empty_components(const MixtureParams& params, const EStepResult& estep, Matrix& resp,
                             double resp_floor);

/// Generic EM loop. `mstep(resp, current)` returns an MStepResult and
/// `score(params, loglik)` returns the quantity being maximized.
template <class MStep, class Score>
EMRun run_em(const Dataset& data, const Matrix& init_resp, const MixtureParams& init_params,
             const EMConfig& config, MStep&& mstep, Score&& score, EMTrace* trace)
{
    EMRun run;
    Matrix resp = init_resp;
    MixtureParams current = init_params;
    double previous = 0.0;
    bool have_previous = false;
    if (trace) {
        *trace = {};
    }

    for (int it = 1; it <= config.max_iter; ++it) {
        MStepResult m = mstep(resp, current);
        run.jitter_events += m.jittered ? 1 : 0;
        EStepResult e = e_step_full(m.params, data, config.resp_floor);

        bool restarted = !have_previous;
        if (run.reinit_events < kMaxReinitPerRun) {
            Matrix patched = e.resp;
            if (reinit_empty_components(m.params, e, patched, config.resp_floor)) {
                ++run.reinit_events;
                restarted = true;
                m = mstep(patched, m.params);
                run.jitter_events += m.jittered ? 1 : 0;
                e = e_step_full(m.params, data, config.resp_floor);
            }
        }

        const double value = score(m.params, e.loglik);
        if (trace) {
            trace->objective.push_back(value);
            trace->clamped.push_back(m.clamped);
            trace->restarted.push_back(restarted);
        }
        run.n_iter = it;
        current = std::move(m.params);
        resp = std::move(e.resp);
        run.loglik = e.loglik;
        run.objective = value;

        if (!restarted && std::abs(value - previous) / (1.0 + std::abs(previous)) < config.tol) {
            run.converged = true;
            break;
        }
        previous = value;
        have_previous = true;
    }
    run.params = std::move(current);
    return run;
}

/// Minimizes 0.5 b'Gb - c'b over the box [-bound, bound]^d by cyclic
/// coordinate descent starting from the clamped point `b`.
void box_qp(const Matrix& G, const Vector& c, double bound, Vector& b);

}  // namespace mixlasso::detail
