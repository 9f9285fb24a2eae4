#include "mixlasso/core_model.h"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mixlasso {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454835606594728112;  // log(2 pi)

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace

Dataset::Dataset(Matrix X, Matrix Y) : X_(std::move(X)), Y_(std::move(Y))
{
    if (X_.rows() < 1 || X_.cols() < 1 || Y_.cols() < 1) {
        throw std::invalid_argument("Dataset: n, p and q must be positive");
    }
    if (X_.rows() != Y_.rows()) {
        throw std::invalid_argument("Dataset: X and Y row counts differ");
    }
    if (!all_finite(X_) || !all_finite(Y_)) {
        throw std::invalid_argument("Dataset: non-finite entry");
    }
}

std::optional<std::string> covariate_range_warning(const Dataset& data)
{
    const double lo = data.X().minCoeff();
    const double hi = data.X().maxCoeff();
    if (lo >= 0.0 && hi <= 1.0) {
        return std::nullopt;
    }
    std::ostringstream os;
    os << "covariates outside [0,1] (min " << lo << ", max " << hi << "); not rescaled";
    return os.str();
}

Support make_support(std::vector<Coord> coords, int p, int q)
{
    for (const auto& c : coords) {
        if (c.j < 0 || c.j >= p || c.z < 0 || c.z >= q) {
            throw std::invalid_argument("support coordinate out of range");
        }
    }
    std::sort(coords.begin(), coords.end());
    if (std::adjacent_find(coords.begin(), coords.end()) != coords.end()) {
        throw std::invalid_argument("support has duplicate coordinates");
    }
    return coords;
}

Support full_support(int p, int q)
{
    Support J;
    J.reserve(static_cast<size_t>(p) * q);
    for (int j = 0; j < p; ++j) {
        for (int z = 0; z < q; ++z) {
            J.push_back({j, z});
        }
    }
    return J;
}

void MixtureParams::validate() const
{
    if (k < 1) {
        throw std::invalid_argument("MixtureParams: k must be positive");
    }
    if (pi.size() != k || static_cast<int>(beta.size()) != k || static_cast<int>(sigma2.size()) != k) {
        throw std::invalid_argument("MixtureParams: component count mismatch");
    }
    const auto pp = beta.front().rows();
    const auto qq = beta.front().cols();
    if (pp < 1 || qq < 1) {
        throw std::invalid_argument("MixtureParams: empty regression matrix");
    }
    double total = 0.0;
    for (int r = 0; r < k; ++r) {
        if (!(pi[r] > 0.0) || !std::isfinite(pi[r])) {
            throw std::invalid_argument("MixtureParams: proportions must be positive");
        }
        total += pi[r];
        if (beta[r].rows() != pp || beta[r].cols() != qq || sigma2[r].size() != qq) {
            throw std::invalid_argument("MixtureParams: inconsistent component shapes");
        }
        if (!beta[r].allFinite()) {
            throw std::invalid_argument("MixtureParams: non-finite coefficient");
        }
        if (!sigma2[r].allFinite() || (sigma2[r].array() <= 0.0).any()) {
            throw std::invalid_argument("MixtureParams: variances must be positive");
        }
    }
    if (std::abs(total - 1.0) > 1e-12) {
        throw std::invalid_argument("MixtureParams: proportions must sum to one");
    }
}

MixtureParams make_params(Vector pi, std::vector<Matrix> beta, std::vector<Vector> sigma2)
{
    MixtureParams params;
    params.k = static_cast<int>(pi.size());
    params.pi = std::move(pi);
    params.beta = std::move(beta);
    params.sigma2 = std::move(sigma2);
    params.validate();
    return params;
}

void BoundsBox::validate() const
{
    if (!(A_beta > 0.0)) {
        throw std::invalid_argument("BoundsBox: A_beta must be positive");
    }
    if (!(a_sigma2 > 0.0) || !(a_sigma2 < A_sigma2) || !std::isfinite(A_sigma2)) {
        throw std::invalid_argument("BoundsBox: need 0 < a_sigma2 < A_sigma2");
    }
    if (!(rho > 0.0 && rho < 1.0)) {
        throw std::invalid_argument("BoundsBox: rho must lie in (0,1)");
    }
    if (!(tau > 0.0)) {
        throw std::invalid_argument("BoundsBox: tau must be positive");
    }
}

double log_sum_exp(const Vector& v)
{
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) {
        return m;
    }
    return m + std::log((v.array() - m).exp().sum());
}

Vector component_log_joint(const MixtureParams& params, VectorRef x, VectorRef y)
{
    if (x.size() != params.p() || y.size() != params.q()) {
        throw std::invalid_argument("log_density: dimension mismatch");
    }
    const int q = params.q();
    Vector out(params.k);
    for (int r = 0; r < params.k; ++r) {
        const Vector resid = y - params.beta[r].transpose() * x;
        const auto& s2 = params.sigma2[r];
        double quad = 0.0;
        double logdet = 0.0;
        for (int z = 0; z < q; ++z) {
            quad += resid[z] * resid[z] / s2[z];
            logdet += std::log(s2[z]);
        }
        out[r] = std::log(params.pi[r]) - 0.5 * (q * kLogTwoPi + logdet + quad);
    }
    return out;
}

double log_density(const MixtureParams& params, VectorRef x, VectorRef y)
{
    return log_sum_exp(component_log_joint(params, x, y));
}

double log_likelihood(const MixtureParams& params, const Dataset& data)
{
    if (data.p() != params.p() || data.q() != params.q()) {
        throw std::invalid_argument("log_likelihood: dimension mismatch");
    }
    double total = 0.0;
    for (int i = 0; i < data.n(); ++i) {
        total += log_density(params, data.X().row(i).transpose(), data.Y().row(i).transpose());
    }
    return total;
}

MixtureParams restrict_to_J(const MixtureParams& params, const Support& J)
{
    MixtureParams out = params;
    for (auto& b : out.beta) {
        b.setZero();
    }
    for (int r = 0; r < params.k; ++r) {
        for (const auto& c : J) {
            out.beta[r](c.j, c.z) = params.beta[r](c.j, c.z);
        }
    }
    return out;
}

MixtureParams project_to_bounds(const MixtureParams& params, const BoundsBox& bounds)
{
    MixtureParams out = params;
    for (int r = 0; r < out.k; ++r) {
        out.beta[r] = out.beta[r].cwiseMax(-bounds.A_beta).cwiseMin(bounds.A_beta);
        out.sigma2[r] = out.sigma2[r].cwiseMax(bounds.a_sigma2).cwiseMin(bounds.A_sigma2);
    }
    return out;
}

long dimension(int k, long J_size, int q, DimensionFormula formula)
{
    switch (formula) {
    case DimensionFormula::theorem:
        return static_cast<long>(k) * (J_size + q + 1) - 1;
    case DimensionFormula::entropy:
        return static_cast<long>(k) * (1 + J_size);
    case DimensionFormula::weight_lemma:
        return static_cast<long>(k) - 1 + J_size * k + static_cast<long>(k) * q * q;
    }
    throw std::invalid_argument("dimension: unknown formula");
}

}  // namespace mixlasso
