#include "mixlasso/em_mle.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "em_driver.h"
#include "mixlasso/rng.h"

namespace mixlasso {

namespace {

constexpr double kRidgeJitter = 1e-8;
constexpr double kSingularRatio = 1e-12;
constexpr int kLloydIterations = 20;

/// Predictor indices per response coordinate.
std::vector<std::vector<int>> predictors_by_response(const Support& J, int q)
{
    std::vector<std::vector<int>> S(q);
    for (const auto& c : J) {
        S[c.z].push_back(c.j);
    }
    return S;
}

struct WlsSolution {
    Vector b;
    bool jittered = false;
    bool clamped = false;
};

/// Weighted least squares of y on the columns `cols` of X, with coefficients
/// boxed to [-bound, bound].
WlsSolution weighted_ls(const Matrix& X, const Vector& w, const Vector& y, const std::vector<int>& cols,
                        double bound)
{
    WlsSolution out;
    const auto d = static_cast<Eigen::Index>(cols.size());
    out.b = Vector::Zero(d);
    if (d == 0) {
        return out;
    }
    Matrix XS(X.rows(), d);
    for (Eigen::Index a = 0; a < d; ++a) {
        XS.col(a) = X.col(cols[a]);
    }
    const Matrix XW = XS.transpose() * w.asDiagonal();
    Matrix G = XW * XS;
    const Vector c = XW * y;

    Eigen::LDLT<Matrix> ldlt(G);
    const Vector diag = ldlt.vectorD().cwiseAbs();
    const bool singular = ldlt.info() != Eigen::Success || !ldlt.isPositive()
                          || diag.minCoeff() <= kSingularRatio * std::max(diag.maxCoeff(), 1e-300);
    if (singular) {
        G.diagonal().array() += kRidgeJitter;
        ldlt.compute(G);
        out.jittered = true;
    }
    out.b = ldlt.solve(c);
    if (!out.b.allFinite()) {
        out.b.setZero();
    }
    if ((out.b.array().abs() > bound).any()) {
        out.b = out.b.cwiseMax(-bound).cwiseMin(bound);
        detail::box_qp(G, c, bound, out.b);
        out.clamped = true;
    }
    return out;
}

}  // namespace

void EMConfig::validate() const
{
    if (max_iter < 1) {
        throw std::invalid_argument("EMConfig: max_iter must be >= 1");
    }
    if (!(tol > 0.0)) {
        throw std::invalid_argument("EMConfig: tol must be positive");
    }
    if (n_starts < 1) {
        throw std::invalid_argument("EMConfig: n_starts must be >= 1");
    }
    if (!(resp_floor > 0.0) || resp_floor >= 1.0) {
        throw std::invalid_argument("EMConfig: resp_floor must lie in (0,1)");
    }
}

namespace detail {

void floor_rows(Matrix& resp, double resp_floor)
{
    resp = resp.cwiseMax(resp_floor);
    const Vector sums = resp.rowwise().sum();
    resp.array().colwise() /= sums.array();
}

EStepResult e_step_full(const MixtureParams& params, const Dataset& data, double resp_floor)
{
    const int n = data.n();
    EStepResult out;
    out.resp.resize(n, params.k);
    out.row_loglik.resize(n);
    out.loglik = 0.0;
    for (int i = 0; i < n; ++i) {
        const Vector lj = component_log_joint(params, data.X().row(i).transpose(), data.Y().row(i).transpose());
        const double lse = log_sum_exp(lj);
        out.row_loglik[i] = lse;
        out.loglik += lse;
        out.resp.row(i) = (lj.array() - lse).exp().matrix().transpose();
    }
    floor_rows(out.resp, resp_floor);
    return out;
}

bool reinit_empty_components(const MixtureParams& params, const EStepResult& estep, Matrix& resp,
                             double resp_floor)
{
    const auto n = resp.rows();
    const double threshold = 1.0 / (10.0 * static_cast<double>(n));
    std::vector<int> empty;
    for (int r = 0; r < params.k; ++r) {
        if (params.pi[r] < threshold) {
            empty.push_back(r);
        }
    }
    if (empty.empty() || params.k == 1) {
        return false;
    }
    std::vector<Eigen::Index> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        return estep.row_loglik[a] < estep.row_loglik[b];
    });
    const Eigen::Index take = std::max<Eigen::Index>(1, n / (2 * params.k));
    size_t pos = 0;
    for (int r : empty) {
        for (Eigen::Index t = 0; t < take && pos < order.size(); ++t, ++pos) {
            resp.row(order[pos]).setZero();
            resp(order[pos], r) = 1.0;
        }
    }
    floor_rows(resp, resp_floor);
    return true;
}

void box_qp(const Matrix& G, const Vector& c, double bound, Vector& b)
{
    const auto d = b.size();
    for (int sweep = 0; sweep < 10000; ++sweep) {
        double max_change = 0.0;
        for (Eigen::Index j = 0; j < d; ++j) {
            if (!(G(j, j) > 0.0)) {
                continue;
            }
            const double partial = c[j] - G.row(j).dot(b) + G(j, j) * b[j];
            const double updated = std::clamp(partial / G(j, j), -bound, bound);
            max_change = std::max(max_change, std::abs(updated - b[j]));
            b[j] = updated;
        }
        if (max_change <= 1e-13 * (1.0 + b.cwiseAbs().maxCoeff())) {
            break;
        }
    }
}

}  // namespace detail

Matrix e_step(const MixtureParams& params, const Dataset& data, double resp_floor)
{
    return detail::e_step_full(params, data, resp_floor).resp;
}

MStepResult m_step_restricted(const Matrix& resp, const Dataset& data, const Support& J,
                              const BoundsBox& bounds)
{
    const int n = data.n();
    const int p = data.p();
    const int q = data.q();
    const int k = static_cast<int>(resp.cols());
    if (resp.rows() != n || k < 1) {
        throw std::invalid_argument("m_step_restricted: responsibility shape mismatch");
    }
    const auto S = predictors_by_response(J, q);

    MStepResult out;
    auto& params = out.params;
    params.k = k;
    params.pi.resize(k);
    params.beta.assign(k, Matrix::Zero(p, q));
    params.sigma2.assign(k, Vector::Zero(q));

    const Vector Nr = resp.colwise().sum().transpose();
    const double total = Nr.sum();
    for (int r = 0; r < k; ++r) {
        params.pi[r] = Nr[r] / total;
        const Vector w = resp.col(r);
        for (int z = 0; z < q; ++z) {
            const Vector y = data.Y().col(z);
            WlsSolution sol = weighted_ls(data.X(), w, y, S[z], bounds.A_beta);
            out.jittered |= sol.jittered;
            out.clamped |= sol.clamped;
            Vector fitted = Vector::Zero(n);
            for (size_t a = 0; a < S[z].size(); ++a) {
                params.beta[r](S[z][a], z) = sol.b[static_cast<Eigen::Index>(a)];
                fitted += sol.b[static_cast<Eigen::Index>(a)] * data.X().col(S[z][a]);
            }
            const double rss = (w.array() * (y - fitted).array().square()).sum();
            double s2 = rss / Nr[r];
            if (!(s2 >= bounds.a_sigma2) || s2 > bounds.A_sigma2) {
                out.clamped = true;
            }
            params.sigma2[r][z] = std::isfinite(s2) ? s2 : bounds.a_sigma2;
        }
    }
    params = project_to_bounds(params, bounds);
    return out;
}

Matrix initial_responsibilities(const Dataset& data, int k, const Support& J, std::uint64_t seed, int start,
                                double resp_floor)
{
    const int n = data.n();
    if (k < 1 || k > n) {
        throw std::invalid_argument("initial_responsibilities: need 1 <= k <= n");
    }
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(start)));
    std::vector<int> label(static_cast<size_t>(n), 0);

    if (start == 0) {
        // Pooled least-squares residuals.
        const auto S = predictors_by_response(J, data.q());
        const Vector ones = Vector::Ones(n);
        Matrix resid = data.Y();
        for (int z = 0; z < data.q(); ++z) {
            const auto sol = weighted_ls(data.X(), ones, data.Y().col(z), S[z],
                                         std::numeric_limits<double>::infinity());
            for (size_t a = 0; a < S[z].size(); ++a) {
                resid.col(z) -= sol.b[static_cast<Eigen::Index>(a)] * data.X().col(S[z][a]);
            }
        }

        // k-means++ seeding.
        std::vector<Vector> centers;
        std::uniform_int_distribution<int> pick(0, n - 1);
        centers.push_back(resid.row(pick(rng)).transpose());
        Vector d2(n);
        while (static_cast<int>(centers.size()) < k) {
            for (int i = 0; i < n; ++i) {
                double best = std::numeric_limits<double>::infinity();
                for (const auto& c : centers) {
                    best = std::min(best, (resid.row(i).transpose() - c).squaredNorm());
                }
                d2[i] = best;
            }
            int chosen = 0;
            if (d2.sum() > 0.0) {
                std::discrete_distribution<int> dd(d2.data(), d2.data() + n);
                chosen = dd(rng);
            } else {
                chosen = pick(rng);
            }
            centers.push_back(resid.row(chosen).transpose());
        }

        // Lloyd refinement.
        for (int iter = 0; iter < kLloydIterations; ++iter) {
            bool changed = false;
            for (int i = 0; i < n; ++i) {
                int best_r = 0;
                double best = std::numeric_limits<double>::infinity();
                for (int r = 0; r < k; ++r) {
                    const double dist = (resid.row(i).transpose() - centers[r]).squaredNorm();
                    if (dist < best) {
                        best = dist;
                        best_r = r;
                    }
                }
                changed |= label[i] != best_r;
                label[i] = best_r;
            }
            for (int r = 0; r < k; ++r) {
                Vector sum = Vector::Zero(data.q());
                int count = 0;
                for (int i = 0; i < n; ++i) {
                    if (label[i] == r) {
                        sum += resid.row(i).transpose();
                        ++count;
                    }
                }
                if (count > 0) {
                    centers[r] = sum / count;
                }
            }
            if (!changed && iter > 0) {
                break;
            }
        }
    } else {
        std::uniform_int_distribution<int> pick(0, k - 1);
        for (auto& l : label) {
            l = pick(rng);
        }
    }

    // Every component gets at least one observation.
    std::vector<int> count(static_cast<size_t>(k), 0);
    for (int l : label) {
        ++count[l];
    }
    for (int r = 0; r < k; ++r) {
        if (count[r] > 0) {
            continue;
        }
        for (int i = 0; i < n; ++i) {
            if (count[label[i]] > 1) {
                --count[label[i]];
                label[i] = r;
                ++count[r];
                break;
            }
        }
    }

    Matrix resp = Matrix::Zero(n, k);
    for (int i = 0; i < n; ++i) {
        resp(i, label[i]) = 1.0;
    }
    detail::floor_rows(resp, resp_floor);
    return resp;
}

FittedModel fit_mle_from(const Dataset& data, const ModelIndex& index, const MixtureParams& init,
                         const EMConfig& config, const BoundsBox& bounds, EMTrace* trace)
{
    config.validate();
    bounds.validate();
    if (index.k > data.n()) {
        throw std::invalid_argument("fit_mle: more components than observations");
    }
    if (init.k != index.k || init.p() != data.p() || init.q() != data.q()) {
        throw std::invalid_argument("fit_mle: initial parameters do not match the model");
    }
    const Matrix resp0 = e_step(init, data, config.resp_floor);
    auto mstep = [&](const Matrix& resp, const MixtureParams&) {
        return m_step_restricted(resp, data, index.J, bounds);
    };
    auto score = [](const MixtureParams&, double loglik) { return loglik; };
    detail::EMRun run = detail::run_em(data, resp0, init, config, mstep, score, trace);

    FittedModel fit;
    fit.index = index;
    fit.params = std::move(run.params);
    fit.loglik = run.loglik;
    fit.n_iter = run.n_iter;
    fit.converged = run.converged;
    fit.eta = data.n() * config.tol * std::abs(run.loglik);
    fit.jitter_events = run.jitter_events;
    fit.reinit_events = run.reinit_events;
    return fit;
}

FittedModel fit_mle(const Dataset& data, const ModelIndex& index, const EMConfig& config,
                    const BoundsBox& bounds, EMTrace* best_trace)
{
    config.validate();
    bounds.validate();
    if (index.k < 1) {
        throw std::invalid_argument("fit_mle: k must be positive");
    }
    if (index.k > data.n()) {
        throw std::invalid_argument("fit_mle: more components than observations");
    }
    FittedModel best;
    bool have_best = false;
    EMTrace trace;
    for (int s = 0; s < config.n_starts; ++s) {
        const Matrix resp0 = initial_responsibilities(data, index.k, index.J, config.seed, s, config.resp_floor);
        auto mstep = [&](const Matrix& resp, const MixtureParams&) {
            return m_step_restricted(resp, data, index.J, bounds);
        };
        auto score = [](const MixtureParams&, double loglik) { return loglik; };
        detail::EMRun run = detail::run_em(data, resp0, MixtureParams{}, config, mstep, score,
                                           best_trace ? &trace : nullptr);
        if (!have_best || run.loglik > best.loglik) {
            have_best = true;
            best.index = index;
            best.params = std::move(run.params);
            best.loglik = run.loglik;
            best.n_iter = run.n_iter;
            best.converged = run.converged;
            best.eta = data.n() * config.tol * std::abs(run.loglik);
            best.jitter_events = run.jitter_events;
            best.reinit_events = run.reinit_events;
            best.best_start = s;
            if (best_trace) {
                *best_trace = trace;
            }
        }
    }
    return best;
}

}  // namespace mixlasso
