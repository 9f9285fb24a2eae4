#pragma once

#include <filesystem>
#include <istream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mixlasso/benchmark.h"
#include "mixlasso/core_model.h"
#include "mixlasso/divergences.h"
#include "mixlasso/em_mle.h"
#include "mixlasso/lasso_em.h"
#include "mixlasso/selection.h"

namespace mixlasso::io {

using Json = nlohmann::ordered_json;

/// Malformed or unreadable input; the message names the source and line.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shortest decimal text that reads back to the same double.
std::string format_real(double v);

/// CSV with header x1..xp,y1..yq followed by one row per observation.
Dataset parse_dataset_csv(std::istream& in, const std::string& source = "<input>");
Dataset read_dataset_csv(const std::filesystem::path& path);
std::string dataset_csv(const Dataset& data);

std::string read_text(const std::filesystem::path& path);

/// Writes to a sibling temporary file, then renames it over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& content);

// JSON. Coordinates (j, z) are written 1-based. Non-finite reals become null.
Json real_json(double v);
double real_from_json(const Json& j);

Json to_json(const ModelIndex& index);
ModelIndex model_index_from_json(const Json& j, int p, int q);
Json to_json(const MixtureParams& params);
MixtureParams params_from_json(const Json& j);
Json to_json(const BoundsBox& bounds);
BoundsBox bounds_from_json(const Json& j);
Json to_json(const EMConfig& config);
Json to_json(const FittedModel& fit);
FittedModel fitted_model_from_json(const Json& j);
Json to_json(const PenalizedFit& fit);
Json to_json(const LambdaGrid& grid);
Json to_json(const Estimate& e);
Json to_json(const SelectionReport& report);
Json to_json(const FiveNumber& f);
Json bench_summary_json(const BenchResult& result);

/// Serialized JSON text: two-space indent, trailing newline.
std::string dump(const Json& j);

// CSV tables.
std::string lambda_path_csv(const std::vector<PenalizedFit>& path);
std::string selection_csv(const SelectionReport& report);
std::string bench_csv(const BenchResult& result);
std::string boxplot_csv(const BenchResult& result);

}  // namespace mixlasso::io
