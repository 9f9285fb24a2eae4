#include "mixlasso/selection.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <stdexcept>

namespace mixlasso {

namespace {

constexpr int kMinSlopeDimensions = 5;

double log_binomial(int N, int s)
{
    return std::lgamma(N + 1.0) - std::lgamma(s + 1.0) - std::lgamma(N - s + 1.0);
}

}  // namespace

double constant_c() { return 5.0 * (1.0 - std::pow(2.0, -0.25)) / 8.0; }

double constant_a()
{
    const double pi = std::numbers::pi;
    const double e = std::numbers::e;
    const double inner = std::sqrt(pi * e) * std::pow(2.0, 1.25) * 8.0 * e / std::sqrt(constant_c());
    return std::sqrt(pi) + std::sqrt(std::log(inner));
}

double constant_B(const BoundsBox& bounds, int q)
{
    if (q < 1) {
        throw std::invalid_argument("constant_B: q must be >= 1");
    }
    if (!(bounds.A_beta > 0.0) || !(bounds.a_sigma2 > 0.0) || !(bounds.a_sigma2 < bounds.A_sigma2)) {
        throw std::invalid_argument("constant_B: invalid bounds");
    }
    const double A_sigma = std::sqrt(bounds.A_sigma2);
    const double a_sigma = std::sqrt(bounds.a_sigma2);
    const double arg = (bounds.A_beta / A_sigma) * (A_sigma / a_sigma + 0.5);
    if (!(arg > 1.0)) {
        throw std::invalid_argument("constant_B: (A_beta/A_Sigma)(A_Sigma/a_Sigma + 1/2) must exceed 1");
    }
    return std::sqrt(std::log(static_cast<double>(q))) + std::sqrt(std::log(arg)) + constant_a();
}

double complexity_bound(long D, long n, double B)
{
    const double ratio = static_cast<double>(D) / static_cast<double>(n);
    const double B2 = B * B;
    return ratio * (2.0 * B2 + std::log(1.0 / std::min(ratio * B2, 1.0)));
}

bool weight_clamped(long D, int q) { return D <= static_cast<long>(q) * q; }

double weight_denominator(long D, int p, int q)
{
    const long m = D - static_cast<long>(q) * q;
    const long pq = static_cast<long>(p) * q;
    return static_cast<double>(std::max(1L, std::min(m, pq)));
}

double kraft_weight(long D, int p, int q)
{
    const double pq = static_cast<double>(p) * q;
    return static_cast<double>(D) * std::log(4.0 * std::numbers::e * pq / weight_denominator(D, p, q));
}

double count_models_upper(long D, int p, int q)
{
    const long m = D - static_cast<long>(q) * q;
    const long pq = static_cast<long>(p) * q;
    if (m < 0) {
        return 0.0;
    }
    if (m == 0) {
        return 1.0;
    }
    if (pq <= m) {
        return std::pow(2.0, static_cast<double>(pq));
    }
    const double md = static_cast<double>(m);
    return std::pow(std::numbers::e * static_cast<double>(pq) / md, md);
}

double count_models_exact(long D, int p, int q, DimensionFormula formula)
{
    const int pq = p * q;
    double count = 0.0;
    for (int k = 1; k <= D + 1; ++k) {
        for (int s = 0; s <= pq; ++s) {
            if (dimension(k, s, q, formula) == D) {
                count += std::round(std::exp(log_binomial(pq, s)));
            }
        }
    }
    return count;
}

double kraft_sum_check(int p, int q, long D_max)
{
    double total = 0.0;
    for (long D = 1; D <= D_max; ++D) {
        const double C = count_models_upper(D, p, q);
        if (C > 0.0) {
            total += std::exp(std::log(C) - kraft_weight(D, p, q));
        }
    }
    return total;
}

void PenaltySpec::validate() const
{
    if (!(kappa > 0.0)) {
        throw std::invalid_argument("PenaltySpec: kappa must be positive");
    }
    if (n < 1 || p < 1 || q < 1) {
        throw std::invalid_argument("PenaltySpec: n, p, q must be positive");
    }
    bounds.validate();
}

double theoretical_penalty(const ModelIndex& index, const PenaltySpec& spec)
{
    spec.validate();
    const long D = dimension(index.k, static_cast<long>(index.J.size()), spec.q);
    const double B = constant_B(spec.bounds, spec.q);
    const double B2 = B * B;
    const double ratio = static_cast<double>(D) / static_cast<double>(spec.n);
    const double pq = static_cast<double>(spec.p) * spec.q;
    const double bracket = B2 - std::log(std::min(ratio * B2, 1.0))
                           + std::max(1.0, spec.bounds.tau)
                                 * std::log(4.0 * std::numbers::e * pq / weight_denominator(D, spec.p, spec.q));
    return spec.kappa * static_cast<double>(D) * bracket;
}

Candidate make_candidate(const ModelIndex& index, double loglik, int q)
{
    return {index, loglik, dimension(index.k, static_cast<long>(index.J.size()), q)};
}

std::vector<Candidate> candidates_from(const std::vector<FittedModel>& fits)
{
    std::vector<Candidate> out;
    out.reserve(fits.size());
    for (const auto& f : fits) {
        out.push_back(make_candidate(f.index, f.loglik, f.params.q()));
    }
    return out;
}

bool tie_break_less(const SelectionRecord& a, const SelectionRecord& b)
{
    if (a.D != b.D) {
        return a.D < b.D;
    }
    if (a.index.k != b.index.k) {
        return a.index.k < b.index.k;
    }
    return a.index.J < b.index.J;
}

namespace {

SelectionReport score_records(const std::vector<Candidate>& fits, long n,
                              const std::function<double(const Candidate&)>& penalty)
{
    if (fits.empty()) {
        throw std::invalid_argument("selection: empty collection");
    }
    if (n < 1) {
        throw std::invalid_argument("selection: n must be positive");
    }
    const double nd = static_cast<double>(n);
    SelectionReport report;
    report.records.reserve(fits.size());
    for (const auto& f : fits) {
        SelectionRecord rec;
        rec.index = f.index;
        rec.D = f.D;
        rec.loglik = f.loglik;
        rec.penalty = penalty(f);
        rec.criterion = -f.loglik / nd + rec.penalty;
        report.records.push_back(std::move(rec));
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < report.records.size(); ++i) {
        const auto& cand = report.records[i];
        const auto& cur = report.records[best];
        if (cand.criterion < cur.criterion || (cand.criterion == cur.criterion && tie_break_less(cand, cur))) {
            best = i;
        }
    }
    report.chosen = best;
    return report;
}

}  // namespace

SelectionReport select_penalized(const std::vector<Candidate>& fits,
                                 const std::function<double(const ModelIndex&)>& penalty, long n)
{
    return score_records(fits, n, [&](const Candidate& c) { return penalty(c.index); });
}

SelectionReport slope_heuristic(const std::vector<Candidate>& fits, long n)
{
    if (fits.empty()) {
        throw std::invalid_argument("slope_heuristic: empty collection");
    }
    const double nd = static_cast<double>(n);
    std::set<long> dims;
    for (const auto& f : fits) {
        dims.insert(f.D);
    }

    auto bic_fallback = [&](std::string note) {
        const double log_n = std::log(nd);
        SelectionReport report = score_records(
            fits, n, [&](const Candidate& c) { return static_cast<double>(c.D) / (2.0 * nd) * log_n; });
        report.method = "bic-fallback";
        report.fallback = true;
        report.note = std::move(note);
        return report;
    };

    if (static_cast<int>(dims.size()) < kMinSlopeDimensions) {
        return bic_fallback("fewer than 5 distinct dimensions");
    }

    // Largest-dimension half of the collection, extended to keep ties at the cut.
    std::vector<long> sorted_dims;
    sorted_dims.reserve(fits.size());
    for (const auto& f : fits) {
        sorted_dims.push_back(f.D);
    }
    std::sort(sorted_dims.begin(), sorted_dims.end());
    const long threshold = sorted_dims[sorted_dims.size() / 2];
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    int m = 0;
    for (const auto& f : fits) {
        if (f.D < threshold) {
            continue;
        }
        const double x = static_cast<double>(f.D) / nd;
        const double y = -f.loglik / nd;
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++m;
    }
    const double md = m;
    const double denom = md * sxx - sx * sx;
    const double slope = denom > 0.0 ? (md * sxy - sx * sy) / denom : 0.0;
    const double s_hat = -slope;
    if (!(s_hat > 0.0) || !std::isfinite(s_hat)) {
        return bic_fallback("nonpositive slope estimate");
    }
    const double kappa_hat = 2.0 * s_hat;

    SelectionReport report =
        score_records(fits, n, [&](const Candidate& c) { return kappa_hat * static_cast<double>(c.D) / nd; });
    report.method = "slope";
    report.kappa_hat = kappa_hat;
    report.slope_variant = "least-squares slope over the largest-dimension half of the collection";
    return report;
}

}  // namespace mixlasso
