#include "mixlasso/cli.h"

#include <algorithm>
#include <filesystem>
#include <functional>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "mixlasso/benchmark.h"
#include "mixlasso/io.h"
#include "mixlasso/parallel.h"
#include "mixlasso/rng.h"
#include "mixlasso/selection.h"

namespace mixlasso::cli {

namespace fs = std::filesystem;

namespace {

struct CommonOptions {
    std::string config_path;
    std::uint64_t seed = 0;
    std::string out_dir = ".";
    unsigned threads = 1;
};

struct EMOptions {
    EMConfig em;
    BoundsBox bounds;
};

void add_common(CLI::App* sub, CommonOptions& common)
{
    sub->add_option("--config", common.config_path, "Flat key = value file; command-line flags win");
    sub->add_option("--seed", common.seed, "Master seed");
    sub->add_option("--out", common.out_dir, "Output directory");
    sub->add_option("--threads", common.threads, "Worker threads (0 = all cores)");
}

void add_em(CLI::App* sub, EMOptions& o)
{
    sub->add_option("--max-iter", o.em.max_iter, "EM iteration cap");
    sub->add_option("--tol", o.em.tol, "Relative objective tolerance");
    sub->add_option("--starts", o.em.n_starts, "EM restarts per model");
    sub->add_option("--A-beta", o.bounds.A_beta, "Coefficient bound");
    sub->add_option("--a-sigma2", o.bounds.a_sigma2, "Variance floor");
    sub->add_option("--A-sigma2", o.bounds.A_sigma2, "Variance cap");
}

std::string strip(const std::string& s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    std::string t = s.substr(first, last - first + 1);
    if (t.size() >= 2 && (t.front() == '"' || t.front() == '\'') && t.back() == t.front()) {
        t = t.substr(1, t.size() - 2);
    }
    return t;
}

/// Applies `key = value` lines to options of `sub` not given on the command
/// line. Blank lines, `#`/`;` comments and `[section]` headers are skipped.
void apply_config(CLI::App* sub, const std::string& path)
{
    std::istringstream in(io::read_text(path));
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = strip(line);
        if (t.empty() || t[0] == '#' || t[0] == ';' || t[0] == '[') {
            continue;
        }
        const auto eq = t.find('=');
        const std::string where = path + ":" + std::to_string(line_no);
        if (eq == std::string::npos) {
            throw io::InputError(where + ": expected key = value");
        }
        const std::string key = strip(t.substr(0, eq));
        const std::string value = strip(t.substr(eq + 1));
        if (key == "config") {
            throw io::InputError(where + ": nested config is not supported");
        }
        CLI::Option* opt = sub->get_option_no_throw("--" + key);
        if (opt == nullptr) {
            throw io::InputError(where + ": unknown key '" + key + "' for command " + sub->get_name());
        }
        if (opt->count() > 0) {
            continue;
        }
        try {
            opt->add_result(value);
            opt->run_callback();
        } catch (const CLI::Error& e) {
            throw io::InputError(where + ": " + e.what());
        }
    }
}

fs::path out_path(const CommonOptions& c, const std::string& name) { return fs::path(c.out_dir) / name; }

void report_warning(const Dataset& data, std::ostream& err)
{
    if (auto w = covariate_range_warning(data)) {
        err << "note: " << *w << "\n";
    }
}

int cmd_fit(const CommonOptions& c, EMOptions o, const std::string& data_path, const std::string& model_path,
            std::ostream& out, std::ostream& err)
{
    const Dataset data = io::read_dataset_csv(data_path);
    report_warning(data, err);
    const ModelIndex index = io::model_index_from_json(io::Json::parse(io::read_text(model_path)), data.p(), data.q());
    o.em.seed = derive_seed(c.seed, seed_offset::em);
    const FittedModel fit = fit_mle(data, index, o.em, o.bounds);
    const fs::path target = out_path(c, "fitted_model.json");
    io::write_atomic(target, io::dump(io::to_json(fit)));
    out << "wrote " << target.string() << " (loglik " << io::format_real(fit.loglik) << ")\n";
    if (!fit.converged) {
        err << "warning: EM did not converge within " << o.em.max_iter << " iterations\n";
        return kExitWarning;
    }
    return kExitOk;
}

int cmd_collection(const CommonOptions& c, EMOptions o, const std::string& data_path, const std::vector<int>& K,
                   int grid_size, std::ostream& out, std::ostream& err)
{
    const Dataset data = io::read_dataset_csv(data_path);
    report_warning(data, err);
    o.em.seed = derive_seed(c.seed, seed_offset::em);
    const CollectionResult collection = build_collection(data, K, grid_size, o.em, o.bounds, c.threads);
    std::vector<FittedModel> fits(collection.models.size());
    parallel_for(fits.size(), c.threads,
                 [&](std::size_t m) { fits[m] = fit_mle(data, collection.models[m], o.em, o.bounds); });

    io::Json j;
    j["n"] = data.n();
    j["p"] = data.p();
    j["q"] = data.q();
    j["em"] = io::to_json(o.em);
    j["bounds"] = io::to_json(o.bounds);
    io::Json grids = io::Json::array();
    for (const auto& g : collection.grids) {
        grids.push_back(io::to_json(g));
    }
    j["grids"] = std::move(grids);
    io::Json models = io::Json::array();
    bool all_converged = true;
    for (const auto& f : fits) {
        models.push_back(io::to_json(f));
        all_converged = all_converged && f.converged;
    }
    for (const auto& f : collection.path) {
        all_converged = all_converged && f.converged;
    }
    j["fits"] = std::move(models);

    io::write_atomic(out_path(c, "collection.json"), io::dump(j));
    io::write_atomic(out_path(c, "lambda_path.csv"), io::lambda_path_csv(collection.path));
    out << "collection of " << fits.size() << " models written to " << c.out_dir << "\n";
    if (!all_converged) {
        err << "warning: some EM runs did not converge\n";
        return kExitWarning;
    }
    return kExitOk;
}

int cmd_select(const CommonOptions& c, const std::string& collection_path, const std::string& method, double kappa,
               std::optional<double> tau, std::ostream& out, std::ostream&)
{
    const io::Json j = io::Json::parse(io::read_text(collection_path));
    std::vector<FittedModel> fits;
    for (const auto& f : j.at("fits")) {
        fits.push_back(io::fitted_model_from_json(f));
    }
    if (fits.empty()) {
        throw io::InputError(collection_path + ": empty collection");
    }
    const long n = j.at("n").get<long>();
    const auto candidates = candidates_from(fits);

    SelectionReport report;
    if (method == "slope") {
        report = slope_heuristic(candidates, n);
    } else {
        PenaltySpec spec;
        spec.kappa = kappa;
        spec.bounds = j.contains("bounds") ? io::bounds_from_json(j.at("bounds")) : BoundsBox{};
        if (tau) {
            spec.bounds.tau = *tau;
        }
        spec.n = n;
        spec.p = j.at("p").get<int>();
        spec.q = j.at("q").get<int>();
        spec.validate();
        report = select_penalized(candidates, [&](const ModelIndex& m) { return theoretical_penalty(m, spec); }, n);
        report.method = "theoretical";
    }
    io::write_atomic(out_path(c, "selection.json"), io::dump(io::to_json(report)));
    io::write_atomic(out_path(c, "selection.csv"), io::selection_csv(report));
    const auto& chosen = report.chosen_record();
    out << "selected k=" << chosen.index.k << " |J|=" << chosen.index.J.size() << " D=" << chosen.D << " ("
        << report.method << ")\n";
    return kExitOk;
}

int cmd_bench(BenchConfig config, const CommonOptions& c, bool boxplot, std::ostream& out, std::ostream& err)
{
    config.seed = c.seed;
    config.threads = c.threads;
    const BenchResult result = run_benchmark(config);
    io::write_atomic(out_path(c, "bench.csv"), io::bench_csv(result));
    io::write_atomic(out_path(c, "bench_summary.json"), io::dump(io::bench_summary_json(result)));
    if (boxplot) {
        io::write_atomic(out_path(c, "boxplot.csv"), io::boxplot_csv(result));
    }
    out << "median KL: lasso-mle " << io::format_real(result.summary_lasso_mle.median) << ", lasso-only "
        << io::format_real(result.summary_lasso_only.median) << "\n";
    const bool all_converged = std::all_of(result.records.begin(), result.records.end(),
                                           [](const BenchRecord& r) { return r.all_converged; });
    if (!all_converged) {
        err << "warning: some EM runs did not converge\n";
        return kExitWarning;
    }
    return kExitOk;
}

int cmd_penalty_table(const CommonOptions& c, const PenaltySpec& spec, int k_max, std::ostream& out)
{
    spec.validate();
    if (k_max < 1) {
        throw std::invalid_argument("penalty-table: --k-max must be >= 1");
    }
    const double B = constant_B(spec.bounds, spec.q);
    struct Row {
        int k;
        long J;
        long D;
    };
    std::vector<Row> rows;
    const long pq = static_cast<long>(spec.p) * spec.q;
    for (int k = 1; k <= k_max; ++k) {
        for (long s = 0; s <= pq; ++s) {
            rows.push_back({k, s, dimension(k, s, spec.q)});
        }
    }
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        return a.D != b.D ? a.D < b.D : (a.k != b.k ? a.k < b.k : a.J < b.J);
    });
    std::string csv = "k,J_size,D,B2,x_weight,sigma2_bound,pen,weight_clamped\n";
    for (const auto& r : rows) {
        ModelIndex m;
        m.k = r.k;
        m.J.resize(static_cast<size_t>(r.J));
        const double pen = theoretical_penalty(m, spec);
        csv += std::to_string(r.k) + "," + std::to_string(r.J) + "," + std::to_string(r.D) + ","
               + io::format_real(B * B) + "," + io::format_real(kraft_weight(r.D, spec.p, spec.q)) + ","
               + io::format_real(complexity_bound(r.D, spec.n, B)) + "," + io::format_real(pen) + ","
               + (weight_clamped(r.D, spec.q) ? "1" : "0") + "\n";
    }
    const fs::path target = out_path(c, "penalty_table.csv");
    io::write_atomic(target, csv);
    out << "wrote " << rows.size() << " rows to " << target.string() << "\n";
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Lasso-MLE for mixtures of Gaussian regressions"};
    app.require_subcommand(1);

    CommonOptions common;
    EMOptions em_opts;

    std::string data_path;
    std::string model_path;
    auto* fit = app.add_subcommand("fit", "Constrained MLE for one model");
    add_common(fit, common);
    add_em(fit, em_opts);
    fit->add_option("--data", data_path, "Dataset CSV")->required();
    fit->add_option("--model", model_path, "Model index JSON: {\"k\": 2, \"J\": [[1, 1], ...]}")->required();

    std::vector<int> K{1, 2, 3};
    int grid_size = 10;
    auto* collection = app.add_subcommand("collection", "Penalized-EM collection with MLE refits");
    add_common(collection, common);
    add_em(collection, em_opts);
    collection->add_option("--data", data_path, "Dataset CSV")->required();
    collection->add_option("--K", K, "Candidate numbers of components")->delimiter(',');
    collection->add_option("--grid-size", grid_size, "Lambda values per k");

    std::string collection_path;
    std::string method = "slope";
    double kappa = 1.0;
    double tau_value = 1.0;
    auto* select = app.add_subcommand("select", "Model selection over a collection");
    add_common(select, common);
    select->add_option("--collection", collection_path, "collection.json")->required();
    select->add_option("--method", method, "slope or theoretical")->check(CLI::IsMember({"slope", "theoretical"}));
    select->add_option("--kappa", kappa, "Penalty constant (theoretical)");
    auto* tau_opt = select->add_option("--tau", tau_value, "Kraft-weight multiplier (theoretical)");

    BenchConfig bench_cfg;
    bool boxplot = false;
    auto* bench = app.add_subcommand("bench", "Lasso-MLE versus Lasso-only simulation");
    add_common(bench, common);
    add_em(bench, em_opts);
    bench->add_option("--replications", bench_cfg.n_replications, "Replications");
    bench->add_option("--n-eval", bench_cfg.n_eval, "Evaluation points for KL");
    bench->add_option("--grid-size", bench_cfg.grid_size, "Lambda values per k");
    bench->add_option("--K", bench_cfg.K, "Candidate numbers of components")->delimiter(',');
    bench->add_option("--n", bench_cfg.n, "Sample size");
    bench->add_option("--p", bench_cfg.p, "Predictors");
    bench->add_option("--q", bench_cfg.q, "Responses");
    bench->add_option("--k-true", bench_cfg.k_true, "True number of components");
    bench->add_option("--beta", bench_cfg.beta_magnitude, "Coefficient magnitude");
    bench->add_option("--noise-var", bench_cfg.noise_var, "Noise variance");
    bench->add_flag("--boxplot-data", boxplot, "Also write five-number summaries");

    PenaltySpec spec;
    spec.n = 20;
    spec.p = 10;
    spec.q = 10;
    int k_max = 3;
    auto* table = app.add_subcommand("penalty-table", "Theoretical penalty over (k, |J|)");
    add_common(table, common);
    table->add_option("--n", spec.n, "Sample size");
    table->add_option("--p", spec.p, "Predictors");
    table->add_option("--q", spec.q, "Responses");
    table->add_option("--k-max", k_max, "Largest k");
    table->add_option("--kappa", spec.kappa, "Penalty constant");
    table->add_option("--tau", spec.bounds.tau, "Kraft-weight multiplier");
    table->add_option("--A-beta", spec.bounds.A_beta, "Coefficient bound");
    table->add_option("--a-sigma2", spec.bounds.a_sigma2, "Variance floor");
    table->add_option("--A-sigma2", spec.bounds.A_sigma2, "Variance cap");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitError;
    }

    try {
        if (!common.config_path.empty()) {
            for (CLI::App* sub : app.get_subcommands()) {
                apply_config(sub, common.config_path);
            }
        }
        em_opts.em.validate();
        em_opts.bounds.validate();
        if (*fit) {
            return cmd_fit(common, em_opts, data_path, model_path, out, err);
        }
        if (*collection) {
            return cmd_collection(common, em_opts, data_path, K, grid_size, out, err);
        }
        if (*select) {
            std::optional<double> tau;
            if (tau_opt->count() > 0) {
                tau = tau_value;
            }
            return cmd_select(common, collection_path, method, kappa, tau, out, err);
        }
        if (*bench) {
            bench_cfg.em = em_opts.em;
            bench_cfg.bounds = em_opts.bounds;
            return cmd_bench(bench_cfg, common, boxplot, out, err);
        }
        return cmd_penalty_table(common, spec, k_max, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitError;
    }
}

}  // namespace mixlasso::cli
