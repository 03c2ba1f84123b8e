#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <variant>

#include "bnpipe/decomposition.hpp"
#include "bnpipe/neat.hpp"

namespace bnpipe {

using AnyModel = std::variant<CpModel, CoupledCpModel, NeatModel, CoupledNeatModel>;

inline constexpr std::string_view kModelFormat = "bnpipe-model";
inline constexpr int kModelVersion = 1;

/// "cpd", "coupled-cpd", "neat" or "coupled-neat".
std::string_view model_kind(const AnyModel& model);

/// JSON text. Every double is written with enough digits to round-trip, so
/// a reloaded model predicts bit-identically to the one that was saved.
///
///     {"format": "bnpipe-model", "version": 1, "kind": "coupled-cpd",
///      "nonneg": "softplus", "rank": 3, "x_shape": [...], "y_shape": [...],
///      "parameters": {...}}
///
/// Matrices are `{"rows": r, "cols": c, "data": [row-major values]}`.
void write_model(std::ostream& out, const AnyModel& model);
void write_model_file(const std::string& path, const AnyModel& model);

/// ParseError on malformed input, unknown kind, or unsupported version;
/// ShapeMismatch if the stored layout is inconsistent.
AnyModel read_model(std::istream& in);
AnyModel read_model_file(const std::string& path);

/// Test RMSE of the X path (and the Y path for coupled models).
struct EvalResult {
  double rmse_x;
  std::optional<double> rmse_y;
};

EvalResult evaluate_model(const AnyModel& model, const SparseTensor& x, const SparseTensor* y = nullptr);

/// One JSON object holding the report fields and the full history.
void write_fit_report(std::ostream& out, const FitReport& report);

}  // namespace bnpipe
