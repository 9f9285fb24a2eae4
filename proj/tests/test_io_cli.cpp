#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mixlasso/cli.h"
#include "mixlasso/io.h"
#include "test_support.h"

using namespace mixlasso;
namespace fs = std::filesystem;

namespace {

/// Fresh directory under the system temp dir, removed on destruction.
class ScratchDir {
public:
    explicit ScratchDir(const std::string& name)
        : path_(fs::temp_directory_path() / ("mixlasso_test_" + name))
    {
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~ScratchDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }
    std::string operator/(const std::string& leaf) const { return (path_ / leaf).string(); }

private:
    fs::path path_;
};

int run_cli(const std::vector<std::string>& args, std::string* out_text = nullptr)
{
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    if (out_text) {
        *out_text = out.str() + err.str();
    }
    return code;
}

std::vector<std::string> read_lines(const std::string& path)
{
    std::istringstream in(io::read_text(path));
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        lines.push_back(line);
    }
    return lines;
}

std::vector<std::string> split(const std::string& line)
{
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        cells.push_back(cell);
    }
    return cells;
}

Dataset small_dataset(std::uint64_t seed, int n = 40)
{
    Rng rng(seed);
    const auto truth = testing::random_params(rng, 2, 2, 1, 3.0);
    return testing::sample_dataset(rng, truth, n);
}

/// collection.json with synthetic fits whose log-likelihood is linear in D.
void write_linear_collection(const std::string& path, long n, int p, int q)
{
    io::Json j;
    j["n"] = n;
    j["p"] = p;
    j["q"] = q;
    j["bounds"] = io::to_json(BoundsBox{});
    io::Json fits = io::Json::array();
    for (int size = 0; size < 8; ++size) {
        FittedModel f;
        Support J;
        for (int c = 0; c < size; ++c) {
            J.push_back({c / q, c % q});
        }
        f.index = {1, J};
        f.params = make_params(Vector::Ones(1), {Matrix::Zero(p, q)}, {Vector::Ones(q)});
        const long D = dimension(1, size, q);
        f.loglik = -n * (2.0 - 0.5 * static_cast<double>(D) / n);
        f.converged = true;
        fits.push_back(io::to_json(f));
    }
    j["fits"] = fits;
    io::write_atomic(path, io::dump(j));
}

}  // namespace

TEST_CASE("dataset CSV round trip")
{
    const Dataset data = small_dataset(1, 12);
    std::istringstream in(io::dataset_csv(data));
    const Dataset back = io::parse_dataset_csv(in);
    CHECK(back.X() == data.X());
    CHECK(back.Y() == data.Y());

    CHECK(io::format_real(0.1) == "0.1");
    for (double v : {1.0 / 3.0, -2.5e-300, 123456789.123456789}) {
        CHECK(std::stod(io::format_real(v)) == v);
    }
}

TEST_CASE("dataset CSV errors name the line")
{
    std::istringstream bad_value("x1,y1\n0.5,1\n0.2,abc\n");
    try {
        io::parse_dataset_csv(bad_value, "in.csv");
        FAIL("expected an InputError");
    } catch (const io::InputError& e) {
        CHECK(std::string(e.what()).find("in.csv:3") != std::string::npos);
    }
    std::istringstream ragged("x1,x2,y1\n0.5,0.5,1\n0.2,1\n");
    CHECK_THROWS_AS(io::parse_dataset_csv(ragged), io::InputError);
    std::istringstream header("a,b\n1,2\n");
    CHECK_THROWS_AS(io::parse_dataset_csv(header), io::InputError);
    std::istringstream empty("x1,y1\n");
    CHECK_THROWS_AS(io::parse_dataset_csv(empty), io::InputError);
    CHECK_THROWS_AS(io::read_dataset_csv("/nonexistent/dir/data.csv"), io::InputError);
}

TEST_CASE("fitted model JSON round trip")
{
    const Dataset data = small_dataset(2);
    const auto fit = fit_mle(data, {2, full_support(2, 1)}, EMConfig{}, BoundsBox{});
    const auto back = io::fitted_model_from_json(io::Json::parse(io::dump(io::to_json(fit))));
    CHECK(back.index == fit.index);
    CHECK(back.loglik == fit.loglik);
    CHECK(back.n_iter == fit.n_iter);
    for (int r = 0; r < 2; ++r) {
        CHECK(back.params.beta[r] == fit.params.beta[r]);
        CHECK(back.params.sigma2[r] == fit.params.sigma2[r]);
    }
    CHECK(back.params.pi == fit.params.pi);

    const auto j = io::to_json(ModelIndex{1, {{0, 0}, {1, 2}}});
    CHECK(j.at("J").dump() == "[[1,1],[2,3]]");
    CHECK(io::model_index_from_json(j, 2, 3).J == Support{{0, 0}, {1, 2}});
    CHECK_THROWS(io::model_index_from_json(j, 1, 3));
    CHECK(io::real_json(std::numeric_limits<double>::infinity()).is_null());
    CHECK(std::isnan(io::real_from_json(io::Json())));
}

TEST_CASE("cli fit")
{
    ScratchDir dir("fit");
    io::write_atomic(dir / "data.csv", io::dataset_csv(small_dataset(3)));
    io::write_atomic(dir / "model.json", R"({"k": 2, "J": [[1, 1], [2, 1]]})");
    CHECK(run_cli({"fit", "--data", dir / "data.csv", "--model", dir / "model.json", "--out", dir / "o"}) ==
          cli::kExitOk);
    const auto j = io::Json::parse(io::read_text(dir / "o/fitted_model.json"));
    CHECK(j.at("index").at("k") == 2);
    CHECK(j.contains("loglik"));

    CHECK(run_cli({"fit", "--data", dir / "data.csv", "--model", dir / "model.json", "--out", dir / "o", "--max-iter",
                   "1"}) == cli::kExitWarning);
    CHECK(run_cli({"fit", "--data", dir / "missing.csv", "--model", dir / "model.json", "--out", dir / "o"}) ==
          cli::kExitError);
    io::write_atomic(dir / "bad_model.json", R"({"k": 2, "J": [[9, 1]]})");
    CHECK(run_cli({"fit", "--data", dir / "data.csv", "--model", dir / "bad_model.json", "--out", dir / "o"}) ==
          cli::kExitError);
}

TEST_CASE("cli collection and select")
{
    ScratchDir dir("collection");
    io::write_atomic(dir / "data.csv", io::dataset_csv(small_dataset(4)));
    const int code = run_cli({"collection", "--data", dir / "data.csv", "--K", "1", "--grid-size", "4", "--out",
                              dir / "c", "--seed", "5"});
    CHECK(code != cli::kExitError);
    const auto j = io::Json::parse(io::read_text(dir / "c/collection.json"));
    CHECK(j.at("n") == 40);
    CHECK(!j.at("fits").empty());
    for (const auto& f : j.at("fits")) {
        CHECK(f.at("index").at("k") == 1);
    }
    const auto path_lines = read_lines(dir / "c/lambda_path.csv");
    CHECK(path_lines.front() == "k,lambda,objective,loglik,J_size,n_iter,converged");
    CHECK(path_lines.size() == 5);

    CHECK(run_cli({"select", "--collection", dir / "c/collection.json", "--method", "theoretical", "--out",
                   dir / "s1"}) == cli::kExitOk);
    CHECK(run_cli({"select", "--collection", dir / "c/collection.json", "--method", "theoretical", "--kappa", "2",
                   "--out", dir / "s2"}) == cli::kExitOk);
    const auto r1 = io::Json::parse(io::read_text(dir / "s1/selection.json"));
    const auto r2 = io::Json::parse(io::read_text(dir / "s2/selection.json"));
    REQUIRE(r1.at("records").size() == r2.at("records").size());
    for (size_t i = 0; i < r1.at("records").size(); ++i) {
        CHECK(r2["records"][i]["penalty"].get<double>() == 2.0 * r1["records"][i]["penalty"].get<double>());
    }
    CHECK(r1.at("method") == "theoretical");
    const auto csv = read_lines(dir / "s1/selection.csv");
    CHECK(csv.front() == "k,J_size,D,loglik,penalty,criterion,chosen");
    CHECK(csv.size() == r1.at("records").size() + 1);
}

TEST_CASE("cli select with the slope heuristic")
{
    ScratchDir dir("slope");
    write_linear_collection(dir / "collection.json", 30, 4, 2);
    CHECK(run_cli({"select", "--collection", dir / "collection.json", "--out", dir / "s"}) == cli::kExitOk);
    const auto r = io::Json::parse(io::read_text(dir / "s/selection.json"));
    CHECK(r.at("method") == "slope");
    REQUIRE(r.contains("kappa_hat"));
    CHECK(r.at("kappa_hat").get<double>() == doctest::Approx(1.0).epsilon(1e-9));

    io::write_atomic(dir / "empty.json", R"({"n": 10, "p": 1, "q": 1, "fits": []})");
    CHECK(run_cli({"select", "--collection", dir / "empty.json", "--out", dir / "s"}) == cli::kExitError);
    CHECK(run_cli({"select", "--collection", dir / "collection.json", "--method", "bogus", "--out", dir / "s"}) ==
          cli::kExitError);
}

TEST_CASE("cli bench")
{
    ScratchDir dir("bench");
    const int code = run_cli({"bench", "--replications", "1", "--n-eval", "100", "--grid-size", "3", "--K", "1,2",
                              "--seed", "9", "--boxplot-data", "--out", dir / "b"});
    CHECK(code != cli::kExitError);
    const auto rows = read_lines(dir / "b/bench.csv");
    REQUIRE(rows.size() == 2);
    CHECK(rows[0] == "seed,kl_lasso_mle,kl_lasso_only,k_hat_mle,J_size_mle,k_hat_lasso,J_size_lasso");
    CHECK(split(rows[1])[0] == std::to_string(replication_seed(9, 0)));
    const auto summary = io::Json::parse(io::read_text(dir / "b/bench_summary.json"));
    CHECK(summary.contains("median_kl_lasso_mle"));
    CHECK(summary.contains("median_kl_lasso_only"));
    CHECK(read_lines(dir / "b/boxplot.csv").size() == 3);
}

TEST_CASE("cli penalty table")
{
    ScratchDir dir("table");
    CHECK(run_cli({"penalty-table", "--out", dir / "t1"}) == cli::kExitOk);
    CHECK(run_cli({"penalty-table", "--kappa", "3", "--out", dir / "t3"}) == cli::kExitOk);
    const auto one = read_lines(dir / "t1/penalty_table.csv");
    const auto three = read_lines(dir / "t3/penalty_table.csv");
    CHECK(one.front() == "k,J_size,D,B2,x_weight,sigma2_bound,pen,weight_clamped");
    REQUIRE(one.size() == 3 * 101 + 1);
    REQUIRE(three.size() == one.size());

    PenaltySpec spec;
    spec.n = 20;
    spec.p = 10;
    spec.q = 10;
    long previous_D = -1;
    bool found = false;
    for (size_t i = 1; i < one.size(); ++i) {
        const auto cells = split(one[i]);
        const auto cells3 = split(three[i]);
        const long D = std::stol(cells[2]);
        CHECK(D >= previous_D);
        previous_D = D;
        CHECK(std::stod(cells3[6]) == doctest::Approx(3.0 * std::stod(cells[6])).epsilon(1e-14));
        if (cells[0] == "2" && cells[1] == "20") {
            ModelIndex m{2, Support(20)};
            CHECK(std::stod(cells[6]) == theoretical_penalty(m, spec));
            found = true;
        }
    }
    CHECK(found);
}

TEST_CASE("cli config files and usage errors")
{
    ScratchDir dir("config");
    io::write_atomic(dir / "bench.cfg", "# small run\nreplications = 1\nn-eval = 50\ngrid-size = 3\nK = 1\n");
    const int code = run_cli({"bench", "--config", dir / "bench.cfg", "--seed", "3", "--out", dir / "b"});
    CHECK(code != cli::kExitError);
    CHECK(read_lines(dir / "b/bench.csv").size() == 2);

    io::write_atomic(dir / "typo.cfg", "replicatons = 1\n");
    std::string text;
    CHECK(run_cli({"bench", "--config", dir / "typo.cfg", "--out", dir / "b"}, &text) == cli::kExitError);
    CHECK(text.find("replicatons") != std::string::npos);

    io::write_atomic(dir / "table.cfg", "kappa = 2\n");
    CHECK(run_cli({"penalty-table", "--config", dir / "table.cfg", "--kappa", "1", "--out", dir / "t"}) ==
          cli::kExitOk);
    const auto cells = split(read_lines(dir / "t/penalty_table.csv")[1]);
    CHECK(std::stod(cells[6]) == theoretical_penalty({1, {}}, PenaltySpec{1.0, BoundsBox{}, 20, 10, 10}));

    CHECK(run_cli({}) == cli::kExitError);
    CHECK(run_cli({"nonsense"}) == cli::kExitError);
    CHECK(run_cli({"bench", "--config", dir / "missing.cfg"}) == cli::kExitError);
    CHECK(run_cli({"bench", "--replications", "0", "--out", dir / "b"}) == cli::kExitError);
}
