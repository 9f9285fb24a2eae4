#include "mixlasso/lasso_em.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "em_driver.h"
#include "mixlasso/parallel.h"
#include "mixlasso/rng.h"

namespace mixlasso {

namespace {

constexpr double kCoordinateTol = 1e-7;
constexpr int kMaxSweeps = 200;
constexpr double kInfinity = std::numeric_limits<double>::infinity();
constexpr double kRidgeJitter = 1e-8;

double weighted_l1(const MixtureParams& params)
{
    double total = 0.0;
    for (int r = 0; r < params.k; ++r) {
        for (Eigen::Index z = 0; z < params.beta[r].cols(); ++z) {
            total += params.beta[r].col(z).cwiseAbs().sum() / std::sqrt(params.sigma2[r][z]);
        }
    }
    return total;
}

/// Coordinate descent on the coefficients of one (component, response) pair
/// with sigma held at its current value, then the closed-form sigma update
/// given the new coefficients. Returns true when a bound was active.
///
/// With sigma fixed the coordinate problem is
///   0.5 g_jj b^2 - c_j b + n lambda sigma |b|,
/// so b_j is zero exactly when |c_j| / (n sigma) <= lambda. `max_ratio`, when
/// given, collects that ratio over all visited coordinates.
bool update_pair(const Dataset& data, const Vector& w, double Nr, const Vector& gjj, Eigen::Index z, double lambda,
                 const BoundsBox& bounds, Eigen::Ref<Vector> b, double& sigma2, double* max_ratio)
{
    const auto& X = data.X();
    const double n = data.n();
    const double sigma = std::sqrt(sigma2);
    const Eigen::Index p = X.cols();
    bool clamped = false;

    Vector resid = data.Y().col(z) - X * b;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        double max_change = 0.0;
        for (Eigen::Index j = 0; j < p; ++j) {
            double g = gjj[j];
            if (g < kRidgeJitter) {
                g += kRidgeJitter;
            }
            const double c = (w.array() * X.col(j).array() * (resid.array() + X.col(j).array() * b[j])).sum();
            const double ratio = std::abs(c) / (n * sigma);
            if (max_ratio) {
                *max_ratio = std::max(*max_ratio, ratio);
            }
            double updated = 0.0;
            if (!(ratio <= lambda)) {
                updated = soft_threshold(c, n * lambda * sigma) / g;
                if (std::abs(updated) > bounds.A_beta) {
                    updated = std::clamp(updated, -bounds.A_beta, bounds.A_beta);
                    clamped = true;
                }
            }
            const double delta = updated - b[j];
            if (delta != 0.0) {
                resid -= delta * X.col(j);
                b[j] = updated;
                max_change = std::max(max_change, std::abs(delta));
            }
        }
        if (max_change < kCoordinateTol) {
            break;
        }
    }

    // Minimize over rho = 1/sigma:  -Nr log rho + 0.5 S rho^2 + n lambda A rho.
    const double S = (w.array() * resid.array().square()).sum();
    const double A = b.cwiseAbs().sum();
    double s2;
    if (A == 0.0 || lambda == 0.0) {
        s2 = S / Nr;
    } else {
        const double t = n * lambda * A;
        const double rho = 2.0 * Nr / (t + std::sqrt(t * t + 4.0 * S * Nr));
        s2 = 1.0 / (rho * rho);
    }
    if (!(s2 >= bounds.a_sigma2)) {
        s2 = bounds.a_sigma2;
        clamped = true;
    } else if (s2 > bounds.A_sigma2) {
        s2 = bounds.A_sigma2;
        clamped = true;
    }
    sigma2 = s2;
    return clamped;
}

MStepResult penalized_step(const Matrix& resp, const Dataset& data, double lambda, const BoundsBox& bounds,
                           const MixtureParams& current, double* max_ratio)
{
    const int k = static_cast<int>(resp.cols());
    if (resp.rows() != data.n() || current.k != k || current.p() != data.p() || current.q() != data.q()) {
        throw std::invalid_argument("m_step_penalized: shape mismatch");
    }
    MStepResult out;
    out.params = current;
    const Vector Nr = resp.colwise().sum().transpose();
    const double total = Nr.sum();
    const Matrix Xsq = data.X().array().square().matrix();
    for (int r = 0; r < k; ++r) {
        out.params.pi[r] = Nr[r] / total;
        const Vector w = resp.col(r);
        const Vector gjj = Xsq.transpose() * w;
        for (Eigen::Index z = 0; z < data.q(); ++z) {
            out.clamped |= update_pair(data, w, Nr[r], gjj, z, lambda, bounds, out.params.beta[r].col(z),
                                       out.params.sigma2[r][z], max_ratio);
        }
    }
    out.params = project_to_bounds(out.params, bounds);
    return out;
}

}  // namespace

double soft_threshold(double v, double t)
{
    if (t < 0.0) {
        throw std::invalid_argument("soft_threshold: negative threshold");
    }
    const double m = std::abs(v) - t;
    if (!(m > 0.0)) {
        return 0.0;
    }
    return std::copysign(m, v);
}

double penalized_objective(const MixtureParams& params, const Dataset& data, double lambda)
{
    if (!(lambda >= 0.0)) {
        throw std::invalid_argument("penalized_objective: lambda must be nonnegative");
    }
    const double nll = -log_likelihood(params, data) / data.n();
    const double l1 = weighted_l1(params);
    return l1 == 0.0 ? nll : nll + lambda * l1;
}

MStepResult m_step_penalized(const Matrix& resp, const Dataset& data, double lambda, const BoundsBox& bounds,
                             const MixtureParams& current)
{
    if (!(lambda >= 0.0)) {
        throw std::invalid_argument("m_step_penalized: lambda must be nonnegative");
    }
    return penalized_step(resp, data, lambda, bounds, current, nullptr);
}

MixtureParams zero_mean_start(const Matrix& resp, const Dataset& data, const BoundsBox& bounds)
{
    const int k = static_cast<int>(resp.cols());
    MixtureParams params;
    params.k = k;
    params.pi.resize(k);
    params.beta.assign(k, Matrix::Zero(data.p(), data.q()));
    params.sigma2.assign(k, Vector::Zero(data.q()));
    const Vector Nr = resp.colwise().sum().transpose();
    const Matrix Ysq = data.Y().array().square().matrix();
    for (int r = 0; r < k; ++r) {
        params.pi[r] = Nr[r] / Nr.sum();
        params.sigma2[r] = (Ysq.transpose() * resp.col(r)) / Nr[r];
    }
    return project_to_bounds(params, bounds);
}

Matrix penalized_initial_responsibilities(const Dataset& data, int k, const EMConfig& config)
{
    return initial_responsibilities(data, k, full_support(data.p(), data.q()), config.seed, 0, config.resp_floor);
}

PenalizedFit fit_penalized(const Dataset& data, int k, double lambda, const EMConfig& config,
                           const BoundsBox& bounds, EMTrace* trace)
{
    config.validate();
    bounds.validate();
    if (k < 1 || k > data.n()) {
        throw std::invalid_argument("fit_penalized: need 1 <= k <= n");
    }
    if (!(lambda >= 0.0)) {
        throw std::invalid_argument("fit_penalized: lambda must be nonnegative");
    }
    const Matrix resp0 = penalized_initial_responsibilities(data, k, config);
    const MixtureParams start = zero_mean_start(resp0, data, bounds);
    const double n = data.n();
    auto mstep = [&](const Matrix& resp, const MixtureParams& current) {
        return penalized_step(resp, data, lambda, bounds, current, nullptr);
    };
    auto score = [&](const MixtureParams& params, double loglik) {
        const double l1 = weighted_l1(params);
        return loglik / n - (l1 == 0.0 ? 0.0 : lambda * l1);
    };
    detail::EMRun run = detail::run_em(data, resp0, start, config, mstep, score, trace);

    PenalizedFit fit;
    fit.k = k;
    fit.lambda = lambda;
    fit.params = std::move(run.params);
    fit.objective = -run.objective;
    fit.loglik = run.loglik;
    fit.J = relevant_set(fit.params, 0.0);
    fit.n_iter = run.n_iter;
    fit.converged = run.converged;
    return fit;
}

Support relevant_set(const MixtureParams& params, double zero_tol)
{
    if (zero_tol < 0.0) {
        throw std::invalid_argument("relevant_set: negative tolerance");
    }
    Support J;
    for (int j = 0; j < params.p(); ++j) {
        for (int z = 0; z < params.q(); ++z) {
            for (int r = 0; r < params.k; ++r) {
                if (std::abs(params.beta[r](j, z)) > zero_tol) {
                    J.push_back({j, z});
                    break;
                }
            }
        }
    }
    return J;
}

double lambda_max(const Dataset& data, const Matrix& resp0, const EMConfig& config, const BoundsBox& bounds)
{
    config.validate();
    double max_ratio = 0.0;
    const MixtureParams start = zero_mean_start(resp0, data, bounds);
    const double n = data.n();
    auto mstep = [&](const Matrix& resp, const MixtureParams& current) {
        return penalized_step(resp, data, kInfinity, bounds, current, &max_ratio);
    };
    auto score = [&](const MixtureParams&, double loglik) { return loglik / n; };
    detail::run_em(data, resp0, start, config, mstep, score, nullptr);
    return max_ratio;
}

LambdaGrid lambda_grid(const Dataset& data, int k, const Matrix& resp0, int grid_size, const EMConfig& config,
                       const BoundsBox& bounds)
{
    if (grid_size < 2) {
        throw std::invalid_argument("lambda_grid: grid_size must be >= 2");
    }
    if (resp0.cols() != k) {
        throw std::invalid_argument("lambda_grid: responsibilities do not match k");
    }
    LambdaGrid grid;
    grid.lambda_max = lambda_max(data, resp0, config, bounds);
    if (!(grid.lambda_max > 0.0)) {
        grid.lambda_max = 0.0;
        grid.degenerate = true;
        grid.values = {0.0};
        return grid;
    }
    grid.values.resize(static_cast<size_t>(grid_size));
    for (int i = 0; i < grid_size; ++i) {
        const double frac = static_cast<double>(i) / (grid_size - 1);
        grid.values[static_cast<size_t>(i)] = grid.lambda_max * std::pow(1000.0, -frac);
    }
    grid.values.front() = grid.lambda_max;
    grid.values.back() = grid.lambda_max / 1000.0;
    return grid;
}

CollectionResult build_collection(const Dataset& data, const std::vector<int>& K, int grid_size,
                                  const EMConfig& config, const BoundsBox& bounds, unsigned threads)
{
    if (K.empty()) {
        throw std::invalid_argument("build_collection: K must be nonempty");
    }
    std::vector<int> ks(K);
    std::sort(ks.begin(), ks.end());
    ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
    for (int k : ks) {
        if (k < 1 || k > data.n()) {
            throw std::invalid_argument("build_collection: every k must satisfy 1 <= k <= n");
        }
    }

    CollectionResult out;
    out.grids.resize(ks.size());
    parallel_for(ks.size(), threads, [&](std::size_t a) {
        const Matrix resp0 = penalized_initial_responsibilities(data, ks[a], config);
        out.grids[a] = lambda_grid(data, ks[a], resp0, grid_size, config, bounds);
    });

    struct Task {
        int k;
        double lambda;
    };
    std::vector<Task> tasks;
    for (size_t a = 0; a < ks.size(); ++a) {
        for (double lambda : out.grids[a].values) {
            tasks.push_back({ks[a], lambda});
        }
    }
    out.path.resize(tasks.size());
    parallel_for(tasks.size(), threads, [&](std::size_t t) {
        out.path[t] = fit_penalized(data, tasks[t].k, tasks[t].lambda, config, bounds);
    });

    std::set<Support> supports;
    for (const auto& fit : out.path) {
        supports.insert(fit.J);
    }
    for (int k : ks) {
        for (const auto& J : supports) {
            out.models.push_back({k, J});
        }
    }
    return out;
}

}  // namespace mixlasso
