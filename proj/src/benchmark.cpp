#include "mixlasso/benchmark.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "mixlasso/parallel.h"
#include "mixlasso/rng.h"

namespace mixlasso {

void BenchConfig::validate() const
{
    if (n < 4 || p < 4 || q < 1 || k_true < 1) {
        throw std::invalid_argument("BenchConfig: need n >= 4, p >= 4, q >= 1, k_true >= 1");
    }
    if (p > n) {
        throw std::invalid_argument("BenchConfig: p must not exceed n");
    }
    if (!(beta_magnitude > 0.0) || !(noise_var > 0.0)) {
        throw std::invalid_argument("BenchConfig: beta_magnitude and noise_var must be positive");
    }
    if (n_replications < 1 || n_eval < 1 || grid_size < 2) {
        throw std::invalid_argument("BenchConfig: need n_replications >= 1, n_eval >= 1, grid_size >= 2");
    }
    if (K.empty()) {
        throw std::invalid_argument("BenchConfig: K must be nonempty");
    }
    for (int k : K) {
        if (k < 1 || k > n) {
            throw std::invalid_argument("BenchConfig: every k in K must satisfy 1 <= k <= n");
        }
    }
    em.validate();
    bounds.validate();
}

std::uint64_t replication_seed(std::uint64_t master, int rep)
{
    if (rep < 0) {
        throw std::invalid_argument("replication_seed: negative replication index");
    }
    return derive_seed(master, static_cast<std::uint64_t>(rep));
}

Matrix giraud_design(int n, int p)
{
    if (n < 4 || p < 4) {
        throw std::invalid_argument("giraud_design: need n >= 4 and p >= 4");
    }
    if (p > n) {
        throw std::invalid_argument("giraud_design: p > n leaves no canonical columns");
    }
    Matrix X = Matrix::Zero(n, p);
    X(0, 0) = 1.0;
    X(1, 0) = -1.0;
    X(0, 1) = -1.0;
    X(1, 1) = 1.001;
    X(0, 2) = 1.0 / std::sqrt(2.0);
    X(1, 2) = 1.0 / std::sqrt(2.0);
    for (int i = 2; i < n; ++i) {
        X(i, 2) = 1.0 / n;
    }
    for (int c = 0; c < 3; ++c) {
        X.col(c) /= X.col(c).norm();
    }
    for (int j = 3; j < p; ++j) {
        X(j, j) = 1.0;
    }
    return X;
}

MixtureParams true_params(const BenchConfig& config)
{
    const int k = config.k_true;
    Vector pi = Vector::Constant(k, 1.0 / k);
    std::vector<Matrix> beta;
    std::vector<Vector> sigma2;
    for (int r = 0; r < k; ++r) {
        const double sign = k == 1 ? 1.0 : 1.0 - 2.0 * r / (k - 1);
        Matrix b = Matrix::Zero(config.p, config.q);
        b.row(0).setConstant(sign * config.beta_magnitude);
        b.row(1).setConstant(sign * config.beta_magnitude);
        beta.push_back(std::move(b));
        sigma2.push_back(Vector::Constant(config.q, config.noise_var));
    }
    return make_params(std::move(pi), std::move(beta), std::move(sigma2));
}

GeneratedData generate(const BenchConfig& config, std::uint64_t rep_seed)
{
    config.validate();
    Matrix X = giraud_design(config.n, config.p);
    MixtureParams truth = true_params(config);
    Rng rng(derive_seed(rep_seed, seed_offset::data));
    std::uniform_int_distribution<int> pick(0, config.k_true - 1);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double sd = std::sqrt(config.noise_var);

    Matrix Y(config.n, config.q);
    std::vector<int> labels(static_cast<size_t>(config.n));
    for (int i = 0; i < config.n; ++i) {
        const int c = pick(rng);
        labels[static_cast<size_t>(i)] = c;
        Vector mean = truth.beta[c].transpose() * X.row(i).transpose();
        for (int z = 0; z < config.q; ++z) {
            Y(i, z) = mean[z] + sd * normal(rng);
        }
    }
    return {Dataset(std::move(X), std::move(Y)), std::move(truth), std::move(labels)};
}

Matrix evaluation_design(const BenchConfig& config, std::uint64_t rep_seed)
{
    const Matrix base = giraud_design(config.n, config.p);
    Rng rng(derive_seed(rep_seed, seed_offset::eval_design));
    std::uniform_int_distribution<int> pick(0, config.n - 1);
    Matrix out(config.n_eval, config.p);
    for (int i = 0; i < config.n_eval; ++i) {
        out.row(i) = base.row(pick(rng));
    }
    return out;
}

EvalSetup make_eval_setup(const BenchConfig& config, const MixtureParams& truth, std::uint64_t rep_seed)
{
    EvalSetup eval;
    eval.truth = truth;
    eval.design = evaluation_design(config, rep_seed);
    eval.mc.n_samples = 1;
    eval.mc.seed = derive_seed(rep_seed, seed_offset::eval_mc);
    return eval;
}

namespace {

Estimate kl_to_truth(const EvalSetup& eval, const MixtureParams& fitted)
{
    return kl_tensorized(mixture_density(eval.truth, "truth"), mixture_density(fitted, "fitted"), eval.design,
                         eval.mc);
}

}  // namespace

LassoMleResult run_lasso_mle(const Dataset& data, const BenchConfig& config, const EMConfig& em,
                             const EvalSetup& eval, unsigned threads)
{
    LassoMleResult out;
    out.collection = build_collection(data, config.K, config.grid_size, em, config.bounds, threads);
    const auto& models = out.collection.models;
    out.fits.resize(models.size());
    parallel_for(models.size(), threads,
                 [&](std::size_t m) { out.fits[m] = fit_mle(data, models[m], em, config.bounds); });
    out.report = slope_heuristic(candidates_from(out.fits), data.n());
    out.chosen = out.fits[out.report.chosen];
    out.kl = kl_to_truth(eval, out.chosen.params);
    return out;
}

LassoOnlyResult select_lasso_only(std::vector<PenalizedFit> path, const Dataset& data, const EvalSetup& eval)
{
    if (path.empty()) {
        throw std::invalid_argument("select_lasso_only: empty path");
    }
    LassoOnlyResult out;
    out.path = std::move(path);
    std::vector<Candidate> candidates;
    candidates.reserve(out.path.size());
    for (const auto& fit : out.path) {
        candidates.push_back(make_candidate({fit.k, fit.J}, fit.loglik, data.q()));
    }
    out.report = slope_heuristic(candidates, data.n());
    out.chosen = out.path[out.report.chosen];
    out.kl = kl_to_truth(eval, out.chosen.params);
    return out;
}

LassoOnlyResult run_lasso_only(const Dataset& data, const BenchConfig& config, const EMConfig& em,
                               const EvalSetup& eval, unsigned threads)
{
    CollectionResult collection = build_collection(data, config.K, config.grid_size, em, config.bounds, threads);
    return select_lasso_only(std::move(collection.path), data, eval);
}

double quantile(std::vector<double> values, double prob)
{
    if (values.empty()) {
        throw std::invalid_argument("quantile: empty input");
    }
    if (!(prob >= 0.0 && prob <= 1.0)) {
        throw std::invalid_argument("quantile: probability outside [0,1]");
    }
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * prob;
    const auto lo = static_cast<size_t>(std::floor(h));
    const size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = h - static_cast<double>(lo);
    if (frac == 0.0 || values[lo] == values[hi]) {
        return values[lo];
    }
    return values[lo] + frac * (values[hi] - values[lo]);
}

FiveNumber five_number(const std::vector<double>& values)
{
    return {quantile(values, 0.0), quantile(values, 0.25), quantile(values, 0.5), quantile(values, 0.75),
            quantile(values, 1.0)};
}

BenchRecord run_replication(const BenchConfig& config, int rep)
{
    const std::uint64_t seed = replication_seed(config.seed, rep);
    BenchRecord rec;
    rec.replication = rep;
    rec.seed = seed;

    GeneratedData gen = generate(config, seed);
    EvalSetup eval = make_eval_setup(config, gen.truth, seed);
    EMConfig em = config.em;
    em.seed = derive_seed(seed, seed_offset::em);

    LassoMleResult mle = run_lasso_mle(gen.data, config, em, eval);
    LassoOnlyResult lasso = select_lasso_only(mle.collection.path, gen.data, eval);

    rec.kl_lasso_mle = mle.kl;
    rec.kl_lasso_only = lasso.kl;
    rec.chosen_mle = mle.chosen.index;
    rec.chosen_lasso = {lasso.chosen.k, lasso.chosen.J};
    rec.mle_fallback = mle.report.fallback;
    rec.lasso_fallback = lasso.report.fallback;
    for (const auto& f : mle.fits) {
        rec.all_converged = rec.all_converged && f.converged;
    }
    for (const auto& f : mle.collection.path) {
        rec.all_converged = rec.all_converged && f.converged;
    }
    return rec;
}

BenchResult run_benchmark(const BenchConfig& config)
{
    config.validate();
    BenchResult result;
    result.config = config;
    result.records.resize(static_cast<size_t>(config.n_replications));
    parallel_for(result.records.size(), config.threads, [&](std::size_t rep) {
        try {
            result.records[rep] = run_replication(config, static_cast<int>(rep));
        } catch (const std::exception& e) {
            throw std::runtime_error("replication " + std::to_string(rep) + " (seed "
                                     + std::to_string(replication_seed(config.seed, static_cast<int>(rep)))
                                     + ") failed: " + e.what());
        }
    });
    std::vector<double> mle, lasso;
    for (const auto& r : result.records) {
        mle.push_back(r.kl_lasso_mle.value);
        lasso.push_back(r.kl_lasso_only.value);
    }
    result.summary_lasso_mle = five_number(mle);
    result.summary_lasso_only = five_number(lasso);
    return result;
}

}  // namespace mixlasso
