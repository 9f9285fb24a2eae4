#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mixlasso {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using VectorRef = Eigen::Ref<const Eigen::VectorXd>;

/// Fixed design X (n x p) and responses Y (n x q).
class Dataset {
public:
    Dataset() = default;
    /// Throws std::invalid_argument unless rows match, all dims are positive
    /// and every entry is finite.
    Dataset(Matrix X, Matrix Y);

    const Matrix& X() const { return X_; }
    const Matrix& Y() const { return Y_; }
    int n() const { return static_cast<int>(X_.rows()); }
    int p() const { return static_cast<int>(X_.cols()); }
    int q() const { return static_cast<int>(Y_.cols()); }

private:
    Matrix X_;
    Matrix Y_;
};

/// Covariates are expected in [0,1]^p. Returns a message when some entry is
/// outside; this is advisory only.
std::optional<std::string> covariate_range_warning(const Dataset& data);

/// One (predictor, response) coordinate, zero-based.
struct Coord {
    int j = 0;
    int z = 0;
    auto operator<=>(const Coord&) const = default;
};

/// Sorted, duplicate-free set of coordinates.
using Support = std::vector<Coord>;

/// Sorts `coords` and rejects duplicates or coordinates outside p x q.
Support make_support(std::vector<Coord> coords, int p, int q);
Support full_support(int p, int q);

/// A model S_(k,J): k components, mean coefficients supported on J.
struct ModelIndex {
    int k = 1;
    Support J;

    auto operator<=>(const ModelIndex&) const = default;
};

/// Parameters of a k-component Gaussian mixture regression with diagonal
/// covariances. beta[r] is p x q so the component mean is beta[r]^T x.
struct MixtureParams {
    int k = 0;
    Vector pi;
    std::vector<Matrix> beta;
    std::vector<Vector> sigma2;

    int p() const { return beta.empty() ? 0 : static_cast<int>(beta.front().rows()); }
    int q() const { return beta.empty() ? 0 : static_cast<int>(beta.front().cols()); }

    /// Throws std::invalid_argument when an invariant is violated.
    void validate() const;
};

MixtureParams make_params(Vector pi, std::vector<Matrix> beta, std::vector<Vector> sigma2);

/// Box constraints on the parameter space and the constants tau, rho.
struct BoundsBox {
    double A_beta = 50.0;
    double a_sigma2 = 1e-4;
    double A_sigma2 = 25.0;
    double tau = 1.0;
    double rho = 0.5;

    void validate() const;
};

/// Per-component log(pi_r) + log N(y | beta_r^T x, Sigma_r).
Vector component_log_joint(const MixtureParams& params, VectorRef x, VectorRef y);

/// log s_xi(y|x), evaluated with log-sum-exp over components.
double log_density(const MixtureParams& params, VectorRef x, VectorRef y);

/// Sum over rows, in row order, of log_density.
double log_likelihood(const MixtureParams& params, const Dataset& data);

MixtureParams restrict_to_J(const MixtureParams& params, const Support& J);

MixtureParams project_to_bounds(const MixtureParams& params, const BoundsBox& bounds);

enum class DimensionFormula {
    /// k(|J| + q + 1) - 1, the canonical count used by the penalty.
    theorem,
    /// k(1 + |J|), appearing in the bracketing-entropy bound.
    entropy,
    /// k - 1 + |J| k + k q^2, used when counting models per dimension.
    weight_lemma,
};

long dimension(int k, long J_size, int q, DimensionFormula formula = DimensionFormula::theorem);

/// Numerically stable log(sum(exp(v))).
double log_sum_exp(const Vector& v);

}  // namespace mixlasso
