#pragma once

#include <cstdint>
#include <vector>

#include "mixlasso/core_model.h"
#include "mixlasso/divergences.h"
#include "mixlasso/em_mle.h"
#include "mixlasso/lasso_em.h"
#include "mixlasso/selection.h"

namespace mixlasso {

struct BenchConfig {
    int n = 20;
    int p = 10;
    int q = 10;
    int k_true = 2;
    double beta_magnitude = 10.0;
    double noise_var = 0.01;
    int n_replications = 20;
    int n_eval = 5000;
    std::vector<int> K{1, 2, 3};
    int grid_size = 10;
    std::uint64_t seed = 0;
    /// Worker threads across replications (0 = hardware concurrency).
    unsigned threads = 1;
    EMConfig em;
    BoundsBox bounds;

    void validate() const;
};

/// Seed offsets below a replication seed.
namespace seed_offset {
inline constexpr std::uint64_t data = 0;
inline constexpr std::uint64_t em = 1;
inline constexpr std::uint64_t eval_design = 2;
inline constexpr std::uint64_t eval_mc = 3;
}  // namespace seed_offset

/// Replication seed for replication `rep` under `master`.
std::uint64_t replication_seed(std::uint64_t master, int rep);

/// n x p design whose first two columns are nearly collinear unit vectors,
/// third column a unit vector mixing both with a small uniform tail, and the
/// remaining columns canonical basis vectors e_4 .. e_p of R^n.
Matrix giraud_design(int n, int p);

struct GeneratedData {
    Dataset data;
    MixtureParams truth;
    /// 0-based component of each row.
    std::vector<int> labels;
};

/// True parameters: equal proportions, noise_var on every diagonal entry,
/// and coefficient magnitude * (1 - 2r/(k_true - 1)) on predictors 1 and 2
/// for every response in component r (so +magnitude / -magnitude when
/// k_true = 2). All other coefficients are zero.
MixtureParams true_params(const BenchConfig& config);

GeneratedData generate(const BenchConfig& config, std::uint64_t rep_seed);

/// Evaluation points: n_eval rows drawn with replacement from giraud_design.
Matrix evaluation_design(const BenchConfig& config, std::uint64_t rep_seed);

struct EvalSetup {
    MixtureParams truth;
    Matrix design;
    MCConfig mc;
};

EvalSetup make_eval_setup(const BenchConfig& config, const MixtureParams& truth, std::uint64_t rep_seed);

struct LassoMleResult {
    CollectionResult collection;
    std::vector<FittedModel> fits;
    SelectionReport report;
    FittedModel chosen;
    Estimate kl;
};

struct LassoOnlyResult {
    std::vector<PenalizedFit> path;
    SelectionReport report;
    PenalizedFit chosen;
    Estimate kl;
};

/// Penalized-EM collection, MLE refit per model, slope-heuristic selection,
/// then KL(truth, selected) over the evaluation points.
LassoMleResult run_lasso_mle(const Dataset& data, const BenchConfig& config, const EMConfig& em,
                             const EvalSetup& eval, unsigned threads = 1);

/// Same collection, but the penalized fits themselves are the candidates.
LassoOnlyResult run_lasso_only(const Dataset& data, const BenchConfig& config, const EMConfig& em,
                               const EvalSetup& eval, unsigned threads = 1);

/// Selection over an already-computed path.
LassoOnlyResult select_lasso_only(std::vector<PenalizedFit> path, const Dataset& data, const EvalSetup& eval);

struct BenchRecord {
    int replication = 0;
    std::uint64_t seed = 0;
    Estimate kl_lasso_mle;
    Estimate kl_lasso_only;
    ModelIndex chosen_mle;
    ModelIndex chosen_lasso;
    bool mle_fallback = false;
    bool lasso_fallback = false;
    bool all_converged = true;
};

/// min, lower quartile, median, upper quartile, max (linear interpolation
/// between order statistics).
struct FiveNumber {
    double min = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double max = 0.0;
};

double quantile(std::vector<double> values, double prob);
FiveNumber five_number(const std::vector<double>& values);

struct BenchResult {
    BenchConfig config;
    std::vector<BenchRecord> records;
    FiveNumber summary_lasso_mle;
    FiveNumber summary_lasso_only;
};

/// One replication end to end.
BenchRecord run_replication(const BenchConfig& config, int rep);

BenchResult run_benchmark(const BenchConfig& config);

}  // namespace mixlasso
