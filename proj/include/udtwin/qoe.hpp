#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "udtwin/udtof.hpp"

namespace udtwin {

// Cubic QoE model y = c0 + c1 x̂ + c2 x̂² + c3 x̂³ on the normalized
// frequency x̂ = (x - x_min) / (x_max - x_min). An absent user_id marks the
// user-agnostic model fitted on pooled samples.
struct QoEModel {
    std::array<double, 4> coeffs{0, 0, 0, 0};
    double x_min = 0.0;
    double x_max = 1.0;
    std::optional<std::string> user_id;
    double fit_rmse = 0.0;

    bool agnostic() const { return !user_id.has_value(); }
};

struct FitReport {
    double rmse = 0.0;
    std::size_t n_samples = 0;
    std::vector<double> residuals;  // prediction - observation, per row
};

// Least-squares cubic via Householder QR on the normalized design matrix
// (raw Hz³ columns would square the condition number for nothing). Needs at
// least 4 rows with 4 distinct x values.
QoEModel fit_qoe(const Dataset& ds, std::optional<std::string> user_id);

// Pooled multi-user fit, the network-slicing-style baseline.
QoEModel fit_agnostic(const Dataset& pooled);

// Polynomial evaluation; `clamped` limits the result to [0, 1] for
// decision-making callers. Error math stays unclamped.
double predict_qoe(const QoEModel& model, double x, bool clamped = false);

// RMSE of unclamped predictions over the dataset.
FitReport modeling_error(const QoEModel& model, const Dataset& ds);

std::string models_to_csv(std::span<const QoEModel> models);
std::vector<QoEModel> models_from_csv(std::string_view text);

}  // namespace udtwin
