#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mixlasso/core_model.h"
#include "mixlasso/em_mle.h"

namespace mixlasso {

/// c = 5 (1 - 2^{-1/4}) / 8, from the bracket construction for the means.
double constant_c();

/// a = sqrt(pi) + sqrt(log(sqrt(pi e) 2^{5/4} 8 e / sqrt(c))).
double constant_a();

/// B(A_beta, A_Sigma, a_Sigma, q) = sqrt(log q)
///   + sqrt(log((A_beta / A_Sigma) (A_Sigma / a_Sigma + 1/2))) + a,
/// with A_Sigma and a_Sigma the standard-deviation bounds (square roots of
/// the variance bounds stored in BoundsBox). Throws when the inner log
/// argument does not exceed 1 or q < 1.
double constant_B(const BoundsBox& bounds, int q);

/// (D/n) [2 B^2 + log(1 / ((D/n) B^2 ^ 1))], upper bound on the squared
/// root sigma_(k,J)^2 of the entropy integral.
double complexity_bound(long D, long n, double B);

/// Denominator (D - q^2) ^ pq of the weight formula, clamped below at 1.
/// The formula leaves D <= q^2 undefined; see `weight_clamped`.
double weight_denominator(long D, int p, int q);
bool weight_clamped(long D, int q);

/// x_(k,J) = D log(4 e p q / ((D - q^2) ^ pq)).
double kraft_weight(long D, int p, int q);

/// Upper bound on the number of models of dimension D: 2^{pq} when
/// pq <= D - q^2, (e p q / (D - q^2))^{D - q^2} otherwise. Counting is done
/// under the D = k - 1 + |J| k + k q^2 convention, for which no model has
/// D < q^2 (returns 0) and only (1, empty) has D = q^2 (returns 1).
double count_models_upper(long D, int p, int q);

/// Number of (k, J) pairs of dimension D, by enumeration.
double count_models_exact(long D, int p, int q, DimensionFormula formula);

/// Sum over D = 1..D_max of count_models_upper(D) * exp(-kraft_weight(D)).
double kraft_sum_check(int p, int q, long D_max);

struct PenaltySpec {
    double kappa = 1.0;
    BoundsBox bounds;
    long n = 1;
    int p = 1;
    int q = 1;

    void validate() const;
};

/// kappa D [B^2 - log((D/n) B^2 ^ 1) + (1 v tau) log(4 e p q / ((D - q^2) ^ pq))].
double theoretical_penalty(const ModelIndex& index, const PenaltySpec& spec);

/// One fitted model as seen by the selection step. D is its dimension
/// (see core_model `dimension`).
struct Candidate {
    ModelIndex index;
    double loglik = 0.0;
    long D = 0;
};

Candidate make_candidate(const ModelIndex& index, double loglik, int q);

std::vector<Candidate> candidates_from(const std::vector<FittedModel>& fits);

struct SelectionRecord {
    ModelIndex index;
    long D = 0;
    double loglik = 0.0;
    double penalty = 0.0;
    double criterion = 0.0;
};

struct SelectionReport {
    std::vector<SelectionRecord> records;
    std::size_t chosen = 0;
    /// "theoretical", "slope", "bic-fallback" or "custom".
    std::string method = "custom";
    /// Slope-heuristic details.
    std::optional<double> kappa_hat;
    std::string slope_variant;
    bool fallback = false;
    std::string note;

    const SelectionRecord& chosen_record() const { return records.at(chosen); }
};

/// Strict ordering used to break exact criterion ties: smaller D, then
/// smaller k, then lexicographically smaller J.
bool tie_break_less(const SelectionRecord& a, const SelectionRecord& b);

/// Minimizes -loglik/n + penalty(index).
SelectionReport select_penalized(const std::vector<Candidate>& fits,
                                 const std::function<double(const ModelIndex&)>& penalty, long n);

/// Data-driven penalty 2 s D / n, where s is the least-squares slope of
/// -loglik/n against -D/n over the largest-dimension half of the models
/// (ties at the cut included). Falls back to (D / 2n) log n when fewer
/// than 5 distinct dimensions exist or the slope is not positive.
SelectionReport slope_heuristic(const std::vector<Candidate>& fits, long n);

}  // namespace mixlasso
