#include <doctest.h>

#include <cmath>

#include <Eigen/LU>

#include "mixlasso/benchmark.h"
#include "mixlasso/em_mle.h"
#include "test_support.h"

using namespace mixlasso;
using mixlasso::testing::random_params;
using mixlasso::testing::sample_dataset;

namespace {

/// Solves the weighted normal equations restricted to `cols` by full-pivot LU.
Vector normal_equations(const Matrix& X, const Vector& w, const Vector& y, const std::vector<int>& cols)
{
    const auto d = static_cast<Eigen::Index>(cols.size());
    Matrix G = Matrix::Zero(d, d);
    Vector c = Vector::Zero(d);
    for (Eigen::Index a = 0; a < d; ++a) {
        for (Eigen::Index b = 0; b < d; ++b) {
            for (Eigen::Index i = 0; i < X.rows(); ++i) {
                G(a, b) += w[i] * X(i, cols[a]) * X(i, cols[b]);
            }
        }
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            c[a] += w[i] * X(i, cols[a]) * y[i];
        }
    }
    return G.fullPivLu().solve(c);
}

}  // namespace

TEST_CASE("e_step responsibilities")
{
    Rng rng(1);
    const auto one = random_params(rng, 1, 2, 2);
    const Dataset data = sample_dataset(rng, one, 8);
    const Matrix r1 = e_step(one, data);
    CHECK((r1.array() == 1.0).all());

    MixtureParams twin = one;
    twin.k = 2;
    twin.pi = Vector::Constant(2, 0.5);
    twin.beta.push_back(one.beta[0]);
    twin.sigma2.push_back(one.sigma2[0]);
    const Matrix r2 = e_step(twin, data);
    CHECK(r2.isApproxToConstant(0.5, 1e-15));

    // Means 0 and 10 at y = 0 with unit variance.
    const auto sep = make_params(Vector::Constant(2, 0.5), {Matrix::Zero(1, 1), Matrix::Constant(1, 1, 10.0)},
                                 {Vector::Ones(1), Vector::Ones(1)});
    const Dataset point(Matrix::Ones(1, 1), Matrix::Zero(1, 1));
    const Matrix r3 = e_step(sep, point);
    CHECK(r3(0, 0) == doctest::Approx(1.0 / (1.0 + std::exp(-50.0))).epsilon(1e-15));
    CHECK(r3(0, 1) == doctest::Approx(std::exp(-50.0)).epsilon(1e-6));
    CHECK(r3.row(0).sum() == doctest::Approx(1.0).epsilon(1e-12));

    const auto far = make_params(Vector::Constant(2, 0.5), {Matrix::Zero(1, 1), Matrix::Constant(1, 1, 1e3)},
                                 {Vector::Ones(1), Vector::Ones(1)});
    const Matrix r4 = e_step(far, point, 1e-10);
    CHECK(r4(0, 1) >= 1e-10 / (1.0 + 1e-10));
    CHECK(r4.row(0).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("m_step_restricted with hard labels is per-cluster least squares")
{
    Rng rng(4);
    const auto truth = random_params(rng, 2, 3, 1);
    const Dataset data = sample_dataset(rng, truth, 12);
    Matrix resp = Matrix::Zero(12, 2);
    for (int i = 0; i < 12; ++i) {
        resp(i, i % 2) = 1.0;
    }
    BoundsBox bounds;
    bounds.A_beta = 1e6;
    bounds.a_sigma2 = 1e-12;
    bounds.A_sigma2 = 1e6;
    const auto m = m_step_restricted(resp, data, full_support(3, 1), bounds);
    for (int r = 0; r < 2; ++r) {
        Matrix Xr(6, 3);
        Vector yr(6);
        for (int t = 0; t < 6; ++t) {
            Xr.row(t) = data.X().row(2 * t + r);
            yr[t] = data.Y()(2 * t + r, 0);
        }
        const Vector ols = Xr.colPivHouseholderQr().solve(yr);
        CHECK((m.params.beta[r].col(0) - ols).cwiseAbs().maxCoeff() < 1e-9);
        const double mse = (yr - Xr * ols).squaredNorm() / 6.0;
        CHECK(m.params.sigma2[r][0] == doctest::Approx(mse).epsilon(1e-9));
        CHECK(m.params.pi[r] == doctest::Approx(0.5));
    }
}

TEST_CASE("m_step_restricted with empty support")
{
    Rng rng(8);
    const auto truth = random_params(rng, 2, 2, 2);
    const Dataset data = sample_dataset(rng, truth, 10);
    const Matrix resp = initial_responsibilities(data, 2, {}, 3, 1);
    const auto m = m_step_restricted(resp, data, {}, BoundsBox{});
    for (int r = 0; r < 2; ++r) {
        CHECK(m.params.beta[r].isZero(0.0));
        for (int z = 0; z < 2; ++z) {
            const double expected = (resp.col(r).array() * data.Y().col(z).array().square()).sum() / resp.col(r).sum();
            CHECK(m.params.sigma2[r][z] == doctest::Approx(std::clamp(expected, 1e-4, 25.0)).epsilon(1e-12));
        }
    }
}

TEST_CASE("m_step_restricted matches the weighted normal equations")
{
    Rng rng(21);
    const auto truth = random_params(rng, 2, 3, 2);
    const Dataset data = sample_dataset(rng, truth, 6);
    Matrix resp(6, 2);
    std::uniform_real_distribution<double> unif(0.05, 0.95);
    for (int i = 0; i < 6; ++i) {
        resp(i, 0) = unif(rng);
        resp(i, 1) = 1.0 - resp(i, 0);
    }
    const Support J = make_support({{0, 0}, {2, 0}, {1, 1}}, 3, 2);
    BoundsBox bounds;
    bounds.A_beta = 1e6;
    const auto m = m_step_restricted(resp, data, J, bounds);
    const std::vector<std::vector<int>> cols{{0, 2}, {1}};
    for (int r = 0; r < 2; ++r) {
        for (int z = 0; z < 2; ++z) {
            const Vector b = normal_equations(data.X(), resp.col(r), data.Y().col(z), cols[z]);
            for (size_t a = 0; a < cols[z].size(); ++a) {
                CHECK(m.params.beta[r](cols[z][a], z) == doctest::Approx(b[static_cast<Eigen::Index>(a)]).epsilon(1e-9));
            }
        }
        CHECK(m.params.beta[r](1, 0) == 0.0);
        CHECK(m.params.beta[r](0, 1) == 0.0);
        CHECK(m.params.beta[r](2, 1) == 0.0);
    }
}

TEST_CASE("m_step_restricted jitters a singular Gram matrix")
{
    Matrix X(5, 2);
    X.col(0) << 0.1, 0.2, 0.3, 0.4, 0.5;
    X.col(1) = X.col(0);
    Matrix Y(5, 1);
    Y.col(0) << 1.0, 2.0, 2.9, 4.1, 5.0;
    const Dataset data(X, Y);
    const auto m = m_step_restricted(Matrix::Ones(5, 1), data, full_support(2, 1), BoundsBox{});
    CHECK(m.jittered);
    CHECK(m.params.beta[0].allFinite());
    // The two copies share the through-origin least-squares slope.
    const double slope = X.col(0).dot(Y.col(0)) / X.col(0).squaredNorm();
    CHECK(m.params.beta[0](0, 0) + m.params.beta[0](1, 0) == doctest::Approx(slope).epsilon(1e-6));
    CHECK(m.params.beta[0](0, 0) == doctest::Approx(m.params.beta[0](1, 0)).epsilon(1e-9));
}

TEST_CASE("m_step_restricted respects the coefficient box exactly")
{
    Matrix X(4, 1);
    X.col(0) << 0.1, 0.2, 0.3, 0.4;
    Matrix Y = 100.0 * X;
    const Dataset data(X, Y);
    BoundsBox bounds;
    bounds.A_beta = 50.0;
    bounds.A_sigma2 = 1000.0;
    const auto m = m_step_restricted(Matrix::Ones(4, 1), data, full_support(1, 1), bounds);
    CHECK(m.clamped);
    CHECK(m.params.beta[0](0, 0) == 50.0);
    const double rss = (Y.col(0) - 50.0 * X.col(0)).squaredNorm();
    CHECK(m.params.sigma2[0][0] == doctest::Approx(rss / 4.0));
}

TEST_CASE("initial responsibilities cover every component")
{
    Rng rng(31);
    const auto truth = random_params(rng, 3, 2, 2);
    const Dataset data = sample_dataset(rng, truth, 9);
    for (int start = 0; start < 6; ++start) {
        const Matrix resp = initial_responsibilities(data, 3, full_support(2, 2), 77, start);
        for (int r = 0; r < 3; ++r) {
            CHECK(resp.col(r).maxCoeff() > 0.5);
        }
        CHECK((resp.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    }
    CHECK_THROWS_AS(initial_responsibilities(data, 10, {}, 1, 0), std::invalid_argument);
}

TEST_CASE("fit_mle on noiseless linear data")
{
    Matrix X(10, 2);
    Matrix Y(10, 1);
    for (int i = 0; i < 10; ++i) {
        X(i, 0) = 0.1 * i;
        X(i, 1) = std::sin(1.0 + i);
        Y(i, 0) = 2.0 * X(i, 0) - 0.5 * X(i, 1);
    }
    const Dataset data(X, Y);
    BoundsBox bounds;
    const auto fit = fit_mle(data, {1, full_support(2, 1)}, EMConfig{}, bounds);
    CHECK(fit.params.beta[0](0, 0) == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(fit.params.beta[0](1, 0) == doctest::Approx(-0.5).epsilon(1e-6));
    CHECK(fit.params.sigma2[0][0] == bounds.a_sigma2);
    CHECK(fit.converged);
}

TEST_CASE("fit_mle rejects more components than observations")
{
    const Dataset data(Matrix::Ones(3, 1), Matrix::Ones(3, 1));
    CHECK_THROWS_AS(fit_mle(data, {4, {}}, EMConfig{}, BoundsBox{}), std::invalid_argument);
}

TEST_CASE("fit_mle reaches at least the likelihood of the generating parameters")
{
    BenchConfig bc;
    for (int rep = 0; rep < 3; ++rep) {
        const auto gen = generate(bc, replication_seed(99, rep));
        Support J;
        for (int j = 0; j < 2; ++j) {
            for (int z = 0; z < bc.q; ++z) {
                J.push_back({j, z});
            }
        }
        EMConfig config;
        config.seed = 5;
        const auto fit = fit_mle(gen.data, {2, J}, config, bc.bounds);
        CHECK(fit.loglik >= log_likelihood(gen.truth, gen.data));
    }
}

TEST_CASE("fit_mle invariants")
{
    Rng rng(17);
    const auto truth = random_params(rng, 2, 4, 2, 4.0);
    const Dataset data = sample_dataset(rng, truth, 40);
    const Support J = make_support({{0, 0}, {1, 0}, {2, 1}, {3, 1}, {0, 1}}, 4, 2);
    BoundsBox bounds;
    bounds.A_beta = 3.0;
    EMConfig config;
    config.seed = 12;
    const auto fit = fit_mle(data, {2, J}, config, bounds);

    for (int r = 0; r < 2; ++r) {
        for (int j = 0; j < 4; ++j) {
            for (int z = 0; z < 2; ++z) {
                const bool in_J = std::find(J.begin(), J.end(), Coord{j, z}) != J.end();
                if (!in_J) {
                    CHECK(fit.params.beta[r](j, z) == 0.0);
                }
                CHECK(std::abs(fit.params.beta[r](j, z)) <= bounds.A_beta);
            }
            CHECK(fit.params.sigma2[r].minCoeff() >= bounds.a_sigma2);
            CHECK(fit.params.sigma2[r].maxCoeff() <= bounds.A_sigma2);
        }
    }
    CHECK(fit.eta == doctest::Approx(data.n() * config.tol * std::abs(fit.loglik)));

    SUBCASE("deterministic")
    {
        const auto again = fit_mle(data, {2, J}, config, bounds);
        CHECK(again.loglik == fit.loglik);
        CHECK(again.params.beta[1] == fit.params.beta[1]);
        CHECK(again.params.sigma2[0] == fit.params.sigma2[0]);
    }
    SUBCASE("fixed point")
    {
        const auto restart = fit_mle_from(data, {2, J}, fit.params, config, bounds);
        CHECK(std::abs(restart.loglik - fit.loglik) / (1.0 + std::abs(fit.loglik)) < config.tol);
    }
    SUBCASE("label permutation of the start")
    {
        const Matrix resp = initial_responsibilities(data, 2, J, 3, 0);
        const auto init = m_step_restricted(resp, data, J, bounds).params;
        MixtureParams swapped = init;
        std::swap(swapped.beta[0], swapped.beta[1]);
        std::swap(swapped.sigma2[0], swapped.sigma2[1]);
        std::swap(swapped.pi[0], swapped.pi[1]);
        const auto a = fit_mle_from(data, {2, J}, init, config, bounds);
        const auto b = fit_mle_from(data, {2, J}, swapped, config, bounds);
        CHECK(a.loglik == doctest::Approx(b.loglik).epsilon(1e-9));
    }
}

TEST_CASE("EM trace is monotone on a small instance")
{
    Rng rng(44);
    const auto truth = random_params(rng, 3, 3, 2);
    const Dataset data = sample_dataset(rng, truth, 30);
    EMConfig config;
    config.seed = 2;
    EMTrace trace;
    fit_mle(data, {3, full_support(3, 2)}, config, BoundsBox{}, &trace);
    REQUIRE(trace.objective.size() >= 2);
    CHECK(trace.restarted.front());
    for (size_t t = 1; t < trace.objective.size(); ++t) {
        if (!trace.restarted[t]) {
            CHECK(trace.objective[t] >= trace.objective[t - 1] - 1e-8);
        }
    }
}

TEST_CASE("EMConfig validation")
{
    EMConfig c;
    c.max_iter = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = EMConfig{};
    c.tol = 0.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = EMConfig{};
    c.n_starts = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}
