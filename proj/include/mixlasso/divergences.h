#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mixlasso/core_model.h"
#include "mixlasso/rng.h"

namespace mixlasso {

/// A conditional density y | x. `sample` may be empty for densities that are
/// only evaluated (never the first argument of a divergence).
struct CondDensity {
    std::function<double(VectorRef x, VectorRef y)> log_density;
    std::function<Vector(VectorRef x, Rng& rng)> sample;
    std::string tag;

    bool samplable() const { return static_cast<bool>(sample); }
};

CondDensity mixture_density(MixtureParams params, std::string tag);

/// Draws y ~ s_xi(.|x).
Vector sample_mixture(const MixtureParams& params, VectorRef x, Rng& rng);

struct MCConfig {
    /// Draws per design point.
    int n_samples = 1;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Monte-Carlo estimate with its standard error. `infinite` flags a +inf
/// value (zero density under the second argument at a sampled point).
struct Estimate {
    double value = 0.0;
    double standard_error = 0.0;
    long n_samples = 0;
    bool infinite = false;
};

/// log t(y|x) - log s(y|x) for y drawn from s(.|x_i), M draws per design row,
/// row-major (all draws of row 0 first). Design row i uses an RNG stream
/// derived from (seed, i).
std::vector<double> draw_log_ratios(const CondDensity& s, const CondDensity& t, const Matrix& design,
                                    const MCConfig& mc);

/// Per-sample integrands as functions of d = log t - log s.
double kl_integrand(double d);
double jkl_integrand(double d, double rho);
double hellinger_integrand(double d);

/// -log(1 - rho) / rho, the ceiling of the JKL integrand.
double jkl_ceiling(double rho);

/// Mean of the integrand over the draws, with the pooled standard error.
Estimate summarize(const std::vector<double>& values);

/// Tensorized Kullback-Leibler divergence KL(s, t) averaged over the design.
Estimate kl_tensorized(const CondDensity& s, const CondDensity& t, const Matrix& design, const MCConfig& mc);

/// (1/rho) KL(s, (1 - rho) s + rho t), averaged over the design.
Estimate jkl_tensorized(const CondDensity& s, const CondDensity& t, double rho, const Matrix& design,
                        const MCConfig& mc);

/// Squared Hellinger distance 0.5 * int (sqrt s - sqrt t)^2, in [0,1].
Estimate hellinger_sq_tensorized(const CondDensity& s, const CondDensity& t, const Matrix& design,
                                 const MCConfig& mc);

/// KL(N(mu1, s1sq) || N(mu2, s2sq)) for univariate normals.
double kl_gaussian_closed_form(double mu1, double s1sq, double mu2, double s2sq);

}  // namespace mixlasso
