#pragma once

#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "collapse_lab/collapse.hpp"
#include "collapse_lab/verify.hpp"

namespace collapse_lab {

using Json = nlohmann::ordered_json;

inline constexpr const char* kSchema = "collapse-lab/v1";

/// Finite values as numbers, infinities as "inf" / "-inf", NaN as null.
Json number(double v);
Json to_json(const Vector& v);
/// Row-major nested arrays.
Json to_json(const Matrix& m);
Json to_json(const std::vector<bool>& flags);
Json to_json(const BetaInterval& b);

Json to_json(const DataSpectrum& sp);
Json to_json(const Hyperparams& hp);
Json to_json(const GlobalMinimum& gm, bool with_matrices);
Json to_json(const DecVarSolution& sol);
Json to_json(const CollapseReport& rep);
Json to_json(const TrainResult& tr);
Json to_json(const VerifyRow& row);
Json to_json(const VerifyReport& rep);

/// Number formatting shared by every CSV writer (shortest round-trip form).
std::string format_number(double v);

struct TrainedColumns {
  std::vector<double> loss;
  std::vector<Vector> sigma;  // sorted descending
};

/// Columns beta, loss, rank, regime, sigma_1..sigma_d1 and, when trained is
/// non-null, train_loss and train_sigma_1..train_sigma_d1.
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows, int latent_dim,
                     const TrainedColumns* trained = nullptr);
void write_trace_csv(std::ostream& out, const std::vector<TracePoint>& trace);

}  // namespace collapse_lab
