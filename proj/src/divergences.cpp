#include "mixlasso/divergences.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

namespace mixlasso {

Vector sample_mixture(const MixtureParams& params, VectorRef x, Rng& rng)
{
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double u = unif(rng);
    int r = 0;
    double acc = params.pi[0];
    while (r + 1 < params.k && u >= acc) {
        ++r;
        acc += params.pi[r];
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector y = params.beta[r].transpose() * x;
    for (Eigen::Index z = 0; z < y.size(); ++z) {
        y[z] += std::sqrt(params.sigma2[r][z]) * normal(rng);
    }
    return y;
}

CondDensity mixture_density(MixtureParams params, std::string tag)
{
    params.validate();
    auto shared = std::make_shared<const MixtureParams>(std::move(params));
    CondDensity d;
    d.log_density = [shared](VectorRef x, VectorRef y) { return log_density(*shared, x, y); };
    d.sample = [shared](VectorRef x, Rng& rng) { return sample_mixture(*shared, x, rng); };
    d.tag = std::move(tag);
    return d;
}

void MCConfig::validate() const
{
    if (n_samples < 1) {
        throw std::invalid_argument("MCConfig: n_samples must be >= 1");
    }
}

std::vector<double> draw_log_ratios(const CondDensity& s, const CondDensity& t, const Matrix& design,
                                    const MCConfig& mc)
{
    mc.validate();
    if (!s.samplable()) {
        throw std::invalid_argument("divergence: first density must be samplable");
    }
    std::vector<double> out;
    out.reserve(static_cast<size_t>(design.rows()) * static_cast<size_t>(mc.n_samples));
    for (Eigen::Index i = 0; i < design.rows(); ++i) {
        Rng rng(derive_seed(mc.seed, static_cast<std::uint64_t>(i)));
        const Vector x = design.row(i).transpose();
        for (int m = 0; m < mc.n_samples; ++m) {
            const Vector y = s.sample(x, rng);
            const double ls = s.log_density(x, y);
            const double lt = t.log_density(x, y);
            out.push_back(lt - ls);
        }
    }
    return out;
}

double kl_integrand(double d) { return -d; }

double jkl_ceiling(double rho) { return -std::log1p(-rho) / rho; }

double jkl_integrand(double d, double rho)
{
    // log((1 - rho) + rho e^d), never below log(1 - rho).
    const double a = std::log1p(-rho);
    const double b = std::log(rho) + d;
    const double hi = std::max(a, b);
    const double lo = std::min(a, b);
    const double mixed = hi + std::log1p(std::exp(lo - hi));
    const double value = -mixed / rho;
    // Jensen gives value <= -d; rounding near d = 0 can overshoot by an ulp.
    return std::min(value, kl_integrand(d));
}

double hellinger_integrand(double d) { return 1.0 - std::exp(0.5 * d); }

Estimate summarize(const std::vector<double>& values)
{
    Estimate e;
    e.n_samples = static_cast<long>(values.size());
    if (values.empty()) {
        return e;
    }
    for (double v : values) {
        if (std::isinf(v) && v > 0) {
            e.infinite = true;
        }
    }
    if (e.infinite) {
        e.value = std::numeric_limits<double>::infinity();
        e.standard_error = std::numeric_limits<double>::infinity();
        return e;
    }
    double mean = 0.0;
    for (double v : values) {
        mean += v;
    }
    mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) {
        ss += (v - mean) * (v - mean);
    }
    const double N = static_cast<double>(values.size());
    e.value = mean;
    e.standard_error = values.size() > 1 ? std::sqrt(ss / (N - 1.0) / N) : 0.0;
    return e;
}

namespace {

template <class F>
Estimate estimate_with(const CondDensity& s, const CondDensity& t, const Matrix& design, const MCConfig& mc,
                       F&& integrand)
{
    std::vector<double> d = draw_log_ratios(s, t, design, mc);
    for (auto& v : d) {
        v = integrand(v);
    }
    return summarize(d);
}

}  // namespace

Estimate kl_tensorized(const CondDensity& s, const CondDensity& t, const Matrix& design, const MCConfig& mc)
{
    return estimate_with(s, t, design, mc, kl_integrand);
}

Estimate jkl_tensorized(const CondDensity& s, const CondDensity& t, double rho, const Matrix& design,
                        const MCConfig& mc)
{
    if (!(rho > 0.0 && rho < 1.0)) {
        throw std::invalid_argument("jkl_tensorized: rho must lie in (0,1)");
    }
    return estimate_with(s, t, design, mc, [rho](double d) { return jkl_integrand(d, rho); });
}

Estimate hellinger_sq_tensorized(const CondDensity& s, const CondDensity& t, const Matrix& design,
                                 const MCConfig& mc)
{
    return estimate_with(s, t, design, mc, hellinger_integrand);
}

double kl_gaussian_closed_form(double mu1, double s1sq, double mu2, double s2sq)
{
    if (!(s1sq > 0.0) || !(s2sq > 0.0)) {
        throw std::invalid_argument("kl_gaussian_closed_form: variances must be positive");
    }
    const double diff = mu1 - mu2;
    return 0.5 * std::log(s2sq / s1sq) + (s1sq + diff * diff) / (2.0 * s2sq) - 0.5;
}

}  // namespace mixlasso
