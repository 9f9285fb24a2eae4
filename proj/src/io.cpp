#include "mixlasso/io.h"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <system_error>

namespace mixlasso::io {

namespace {

std::vector<std::string> split_commas(const std::string& line)
{
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        out.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') {
        out.emplace_back();
    }
    return out;
}

std::string trim(const std::string& s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

double parse_real(const std::string& text, const std::string& where)
{
    const std::string t = trim(text);
    double v = 0.0;
    const auto* begin = t.data();
    const auto* end = t.data() + t.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (t.empty() || ec != std::errc() || ptr != end) {
        throw InputError(where + ": cannot parse number '" + t + "'");
    }
    if (!std::isfinite(v)) {
        throw InputError(where + ": non-finite value");
    }
    return v;
}

std::string line_tag(const std::string& source, long line) { return source + ":" + std::to_string(line); }

Json matrix_json(const Matrix& m)
{
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            row.push_back(real_json(m(i, j)));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const Json& j)
{
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(j.at(0).size());
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        if (static_cast<Eigen::Index>(j.at(r).size()) != cols) {
            throw InputError("ragged matrix in JSON");
        }
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = real_from_json(j.at(r).at(c));
        }
    }
    return m;
}

Json vector_json(const Vector& v)
{
    Json out = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        out.push_back(real_json(v[i]));
    }
    return out;
}

Vector vector_from_json(const Json& j)
{
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        v[i] = real_from_json(j.at(i));
    }
    return v;
}

Json support_json(const Support& J)
{
    Json out = Json::array();
    for (const auto& c : J) {
        out.push_back(Json::array({c.j + 1, c.z + 1}));
    }
    return out;
}

std::string join_row(const std::vector<std::string>& cells)
{
    std::string line;
    for (size_t i = 0; i < cells.size(); ++i) {
        if (i > 0) {
            line += ',';
        }
        line += cells[i];
    }
    line += '\n';
    return line;
}

}  // namespace

std::string format_real(double v)
{
    if (std::isnan(v)) {
        return "nan";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) {
        throw std::runtime_error("format_real: conversion failed");
    }
    return std::string(buf, ptr);
}

Dataset parse_dataset_csv(std::istream& in, const std::string& source)
{
    std::string line;
    long line_no = 0;
    if (!std::getline(in, line)) {
        throw InputError(source + ": empty file");
    }
    ++line_no;
    const auto header = split_commas(line);
    int p = 0;
    int q = 0;
    for (const auto& raw : header) {
        const std::string h = trim(raw);
        const bool is_x = h.size() > 1 && h[0] == 'x';
        const bool is_y = h.size() > 1 && h[0] == 'y';
        const std::string expected = is_x ? "x" + std::to_string(p + 1) : "y" + std::to_string(q + 1);
        if ((!is_x && !is_y) || h != expected || (is_x && q > 0)) {
            throw InputError(line_tag(source, line_no) + ": header must be x1..xp,y1..yq (got '" + h + "')");
        }
        (is_x ? p : q) += 1;
    }
    if (p == 0 || q == 0) {
        throw InputError(line_tag(source, line_no) + ": header needs at least one x and one y column");
    }

    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        const auto cells = split_commas(line);
        if (static_cast<int>(cells.size()) != p + q) {
            throw InputError(line_tag(source, line_no) + ": expected " + std::to_string(p + q) + " fields, got "
                             + std::to_string(cells.size()));
        }
        std::vector<double> row;
        row.reserve(cells.size());
        for (size_t c = 0; c < cells.size(); ++c) {
            row.push_back(parse_real(cells[c], line_tag(source, line_no) + " column " + std::to_string(c + 1)));
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) {
        throw InputError(source + ": no data rows");
    }
    const auto n = static_cast<Eigen::Index>(rows.size());
    Matrix X(n, p);
    Matrix Y(n, q);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int j = 0; j < p; ++j) {
            X(i, j) = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
        }
        for (int z = 0; z < q; ++z) {
            Y(i, z) = rows[static_cast<size_t>(i)][static_cast<size_t>(p + z)];
        }
    }
    return Dataset(std::move(X), std::move(Y));
}

Dataset read_dataset_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw InputError(path.string() + ": cannot open");
    }
    return parse_dataset_csv(in, path.string());
}

std::string dataset_csv(const Dataset& data)
{
    std::vector<std::string> header;
    for (int j = 0; j < data.p(); ++j) {
        header.push_back("x" + std::to_string(j + 1));
    }
    for (int z = 0; z < data.q(); ++z) {
        header.push_back("y" + std::to_string(z + 1));
    }
    std::string out = join_row(header);
    for (int i = 0; i < data.n(); ++i) {
        std::vector<std::string> cells;
        for (int j = 0; j < data.p(); ++j) {
            cells.push_back(format_real(data.X()(i, j)));
        }
        for (int z = 0; z < data.q(); ++z) {
            cells.push_back(format_real(data.Y()(i, z)));
        }
        out += join_row(cells);
    }
    return out;
}

std::string read_text(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InputError(path.string() + ": cannot open");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_atomic(const std::filesystem::path& path, const std::string& content)
{
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error(tmp.string() + ": cannot open for writing");
        }
        out << content;
        out.flush();
        if (!out) {
            throw std::runtime_error(tmp.string() + ": write failed");
        }
    }
    std::filesystem::rename(tmp, path);
}

Json real_json(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

double real_from_json(const Json& j)
{
    if (j.is_null()) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    if (!j.is_number()) {
        throw InputError("expected a number in JSON");
    }
    return j.get<double>();
}

Json to_json(const ModelIndex& index)
{
    Json j;
    j["k"] = index.k;
    j["J"] = support_json(index.J);
    return j;
}

ModelIndex model_index_from_json(const Json& j, int p, int q)
{
    ModelIndex index;
    index.k = j.at("k").get<int>();
    if (index.k < 1) {
        throw InputError("model index: k must be >= 1");
    }
    std::vector<Coord> coords;
    for (const auto& c : j.at("J")) {
        if (!c.is_array() || c.size() != 2) {
            throw InputError("model index: each J entry must be a [j, z] pair");
        }
        coords.push_back({c.at(0).get<int>() - 1, c.at(1).get<int>() - 1});
    }
    try {
        index.J = make_support(std::move(coords), p, q);
    } catch (const std::invalid_argument& e) {
        throw InputError(std::string("model index: ") + e.what());
    }
    return index;
}

Json to_json(const MixtureParams& params)
{
    Json j;
    j["k"] = params.k;
    j["pi"] = vector_json(params.pi);
    Json beta = Json::array();
    Json sigma2 = Json::array();
    for (int r = 0; r < params.k; ++r) {
        beta.push_back(matrix_json(params.beta[r]));
        sigma2.push_back(vector_json(params.sigma2[r]));
    }
    j["beta"] = std::move(beta);
    j["sigma2"] = std::move(sigma2);
    return j;
}

MixtureParams params_from_json(const Json& j)
{
    std::vector<Matrix> beta;
    std::vector<Vector> sigma2;
    for (const auto& b : j.at("beta")) {
        beta.push_back(matrix_from_json(b));
    }
    for (const auto& s : j.at("sigma2")) {
        sigma2.push_back(vector_from_json(s));
    }
    try {
        return make_params(vector_from_json(j.at("pi")), std::move(beta), std::move(sigma2));
    } catch (const std::invalid_argument& e) {
        throw InputError(std::string("parameters: ") + e.what());
    }
}

Json to_json(const BoundsBox& bounds)
{
    Json j;
    j["A_beta"] = bounds.A_beta;
    j["a_sigma2"] = bounds.a_sigma2;
    j["A_sigma2"] = bounds.A_sigma2;
    j["tau"] = bounds.tau;
    j["rho"] = bounds.rho;
    return j;
}

BoundsBox bounds_from_json(const Json& j)
{
    BoundsBox b;
    b.A_beta = j.value("A_beta", b.A_beta);
    b.a_sigma2 = j.value("a_sigma2", b.a_sigma2);
    b.A_sigma2 = j.value("A_sigma2", b.A_sigma2);
    b.tau = j.value("tau", b.tau);
    b.rho = j.value("rho", b.rho);
    return b;
}

Json to_json(const EMConfig& config)
{
    Json j;
    j["max_iter"] = config.max_iter;
    j["tol"] = config.tol;
    j["n_starts"] = config.n_starts;
    j["seed"] = config.seed;
    j["resp_floor"] = config.resp_floor;
    return j;
}

Json to_json(const FittedModel& fit)
{
    Json j;
    j["index"] = to_json(fit.index);
    j["D"] = dimension(fit.index.k, static_cast<long>(fit.index.J.size()), fit.params.q());
    j["loglik"] = real_json(fit.loglik);
    j["n_iter"] = fit.n_iter;
    j["converged"] = fit.converged;
    j["eta"] = real_json(fit.eta);
    j["jitter_events"] = fit.jitter_events;
    j["reinit_events"] = fit.reinit_events;
    j["best_start"] = fit.best_start;
    j["params"] = to_json(fit.params);
    return j;
}

FittedModel fitted_model_from_json(const Json& j)
{
    FittedModel fit;
    fit.params = params_from_json(j.at("params"));
    fit.index = model_index_from_json(j.at("index"), fit.params.p(), fit.params.q());
    if (fit.index.k != fit.params.k) {
        throw InputError("fitted model: index k does not match parameters");
    }
    fit.loglik = real_from_json(j.at("loglik"));
    fit.n_iter = j.value("n_iter", 0);
    fit.converged = j.value("converged", false);
    fit.eta = j.contains("eta") ? real_from_json(j.at("eta")) : 0.0;
    fit.jitter_events = j.value("jitter_events", 0);
    fit.reinit_events = j.value("reinit_events", 0);
    fit.best_start = j.value("best_start", 0);
    return fit;
}

Json to_json(const PenalizedFit& fit)
{
    Json j;
    j["k"] = fit.k;
    j["lambda"] = real_json(fit.lambda);
    j["objective"] = real_json(fit.objective);
    j["loglik"] = real_json(fit.loglik);
    j["J"] = support_json(fit.J);
    j["n_iter"] = fit.n_iter;
    j["converged"] = fit.converged;
    return j;
}

Json to_json(const LambdaGrid& grid)
{
    Json j;
    j["lambda_max"] = real_json(grid.lambda_max);
    j["degenerate"] = grid.degenerate;
    Json values = Json::array();
    for (double v : grid.values) {
        values.push_back(real_json(v));
    }
    j["values"] = std::move(values);
    return j;
}

Json to_json(const Estimate& e)
{
    Json j;
    j["value"] = real_json(e.value);
    j["standard_error"] = real_json(e.standard_error);
    j["n_samples"] = e.n_samples;
    j["infinite"] = e.infinite;
    return j;
}

Json to_json(const SelectionReport& report)
{
    Json j;
    j["method"] = report.method;
    if (report.kappa_hat) {
        j["kappa_hat"] = real_json(*report.kappa_hat);
    }
    if (!report.slope_variant.empty()) {
        j["slope_variant"] = report.slope_variant;
    }
    j["fallback"] = report.fallback;
    if (!report.note.empty()) {
        j["note"] = report.note;
    }
    j["chosen"] = report.chosen;
    j["chosen_index"] = to_json(report.chosen_record().index);
    Json records = Json::array();
    for (const auto& r : report.records) {
        Json rec;
        rec["index"] = to_json(r.index);
        rec["D"] = r.D;
        rec["loglik"] = real_json(r.loglik);
        rec["penalty"] = real_json(r.penalty);
        rec["criterion"] = real_json(r.criterion);
        records.push_back(std::move(rec));
    }
    j["records"] = std::move(records);
    return j;
}

Json to_json(const FiveNumber& f)
{
    Json j;
    j["min"] = real_json(f.min);
    j["q1"] = real_json(f.q1);
    j["median"] = real_json(f.median);
    j["q3"] = real_json(f.q3);
    j["max"] = real_json(f.max);
    return j;
}

Json bench_summary_json(const BenchResult& result)
{
    const auto& c = result.config;
    Json config;
    config["n"] = c.n;
    config["p"] = c.p;
    config["q"] = c.q;
    config["k_true"] = c.k_true;
    config["beta_magnitude"] = c.beta_magnitude;
    config["noise_var"] = c.noise_var;
    config["n_replications"] = c.n_replications;
    config["n_eval"] = c.n_eval;
    config["K"] = c.K;
    config["grid_size"] = c.grid_size;
    config["seed"] = c.seed;
    config["em"] = to_json(c.em);
    config["bounds"] = to_json(c.bounds);

    Json j;
    j["config"] = std::move(config);
    j["median_kl_lasso_mle"] = real_json(result.summary_lasso_mle.median);
    j["median_kl_lasso_only"] = real_json(result.summary_lasso_only.median);
    j["lasso_mle"] = to_json(result.summary_lasso_mle);
    j["lasso_only"] = to_json(result.summary_lasso_only);
    int infinite = 0;
    int nonconverged = 0;
    for (const auto& r : result.records) {
        infinite += r.kl_lasso_mle.infinite + r.kl_lasso_only.infinite;
        nonconverged += !r.all_converged;
    }
    j["infinite_estimates"] = infinite;
    j["replications_with_nonconverged_fits"] = nonconverged;
    return j;
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

std::string lambda_path_csv(const std::vector<PenalizedFit>& path)
{
    std::string out = join_row({"k", "lambda", "objective", "loglik", "J_size", "n_iter", "converged"});
    for (const auto& f : path) {
        out += join_row({std::to_string(f.k), format_real(f.lambda), format_real(f.objective), format_real(f.loglik),
                         std::to_string(f.J.size()), std::to_string(f.n_iter), f.converged ? "1" : "0"});
    }
    return out;
}

std::string selection_csv(const SelectionReport& report)
{
    std::string out = join_row({"k", "J_size", "D", "loglik", "penalty", "criterion", "chosen"});
    for (size_t i = 0; i < report.records.size(); ++i) {
        const auto& r = report.records[i];
        out += join_row({std::to_string(r.index.k), std::to_string(r.index.J.size()), std::to_string(r.D),
                         format_real(r.loglik), format_real(r.penalty), format_real(r.criterion),
                         i == report.chosen ? "1" : "0"});
    }
    return out;
}

std::string bench_csv(const BenchResult& result)
{
    std::string out = join_row(
        {"seed", "kl_lasso_mle", "kl_lasso_only", "k_hat_mle", "J_size_mle", "k_hat_lasso", "J_size_lasso"});
    for (const auto& r : result.records) {
        out += join_row({std::to_string(r.seed), format_real(r.kl_lasso_mle.value), format_real(r.kl_lasso_only.value),
                         std::to_string(r.chosen_mle.k), std::to_string(r.chosen_mle.J.size()),
                         std::to_string(r.chosen_lasso.k), std::to_string(r.chosen_lasso.J.size())});
    }
    return out;
}

std::string boxplot_csv(const BenchResult& result)
{
    std::string out = join_row({"method", "min", "q1", "median", "q3", "max"});
    auto row = [](const std::string& name, const FiveNumber& f) {
        return join_row({name, format_real(f.min), format_real(f.q1), format_real(f.median), format_real(f.q3),
                         format_real(f.max)});
    };
    out += row("lasso_mle", result.summary_lasso_mle);
    out += row("lasso_only", result.summary_lasso_only);
    return out;
}

}  // namespace mixlasso::io
