#include "udtwin/qoe.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <set>

#include "udtwin/csv.hpp"
#include "udtwin/errors.hpp"

namespace udtwin {

namespace {

double normalized(const QoEModel& model, double x) {
    return (x - model.x_min) / (model.x_max - model.x_min);
}

double row_y(const DataRow& row) {
    if (!row.y) throw ValidationError("dataset row for user " + row.user_id + " lacks a QoE value");
    return *row.y;
}

}  // namespace

QoEModel fit_qoe(const Dataset& ds, std::optional<std::string> user_id) {
    if (ds.size() < 4)
        throw RankError("cubic fit needs at least 4 samples, got " + std::to_string(ds.size()));
    std::set<double> distinct;
    double x_min = ds.rows.front().x, x_max = ds.rows.front().x;
    for (const auto& row : ds.rows) {
        distinct.insert(row.x);
        x_min = std::min(x_min, row.x);
        x_max = std::max(x_max, row.x);
    }
    if (distinct.size() < 4)
        throw RankError("cubic fit needs 4 distinct frequencies, got " +
                        std::to_string(distinct.size()));
    if (!(x_max > x_min)) throw RankError("degenerate frequency normalization (all x equal)");

    const auto n = static_cast<Eigen::Index>(ds.size());
    Eigen::MatrixXd design(n, 4);
    Eigen::VectorXd target(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& row = ds.rows[static_cast<std::size_t>(i)];
        const double xn = (row.x - x_min) / (x_max - x_min);
        design(i, 0) = 1.0;
        design(i, 1) = xn;
        design(i, 2) = xn * xn;
        design(i, 3) = xn * xn * xn;
        target(i) = row_y(row);
    }
    const Eigen::VectorXd solution = design.householderQr().solve(target);

    QoEModel model;
    model.coeffs = {solution(0), solution(1), solution(2), solution(3)};
    model.x_min = x_min;
    model.x_max = x_max;
    model.user_id = std::move(user_id);
    for (const double c : model.coeffs)
        if (!std::isfinite(c)) throw RankError("cubic fit produced non-finite coefficients");
    model.fit_rmse = modeling_error(model, ds).rmse;
    return model;
}

QoEModel fit_agnostic(const Dataset& pooled) { return fit_qoe(pooled, std::nullopt); }

double predict_qoe(const QoEModel& model, double x, bool clamped) {
    const double xn = normalized(model, x);
    const auto& c = model.coeffs;
    const double y = c[0] + xn * (c[1] + xn * (c[2] + xn * c[3]));
    if (!clamped) return y;
    return std::min(1.0, std::max(0.0, y));
}

FitReport modeling_error(const QoEModel& model, const Dataset& ds) {
    if (ds.empty()) throw ParameterError("modeling error needs a non-empty dataset");
    FitReport report;
    report.n_samples = ds.size();
    report.residuals.reserve(ds.size());
    double sum_sq = 0.0;
    for (const auto& row : ds.rows) {
        const double r = predict_qoe(model, row.x) - row_y(row);
        report.residuals.push_back(r);
        sum_sq += r * r;
    }
    report.rmse = std::sqrt(sum_sq / static_cast<double>(ds.size()));
    return report;
}

std::string models_to_csv(std::span<const QoEModel> models) {
    csv::Writer w("scope,user_id,c0,c1,c2,c3,x_min,x_max,fit_rmse");
    for (const auto& m : models) {
        w.row({m.agnostic() ? "agnostic" : "per_user", m.user_id.value_or(""),
               csv::format_double(m.coeffs[0]), csv::format_double(m.coeffs[1]),
               csv::format_double(m.coeffs[2]), csv::format_double(m.coeffs[3]),
               csv::format_double(m.x_min), csv::format_double(m.x_max),
               csv::format_double(m.fit_rmse)});
    }
    return w.take();
}

std::vector<QoEModel> models_from_csv(std::string_view text) {
    const auto lines = csv::split_lines(text);
    if (lines.empty() || lines[0] != "scope,user_id,c0,c1,c2,c3,x_min,x_max,fit_rmse")
        throw ParseError("bad model table header");
    std::vector<QoEModel> models;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const auto f = csv::split_fields(lines[li]);
        if (f.size() != 9) throw ParseError("expected 9 columns", li + 1);
        QoEModel m;
        if (f[0] == "agnostic") {
            m.user_id.reset();
        } else if (f[0] == "per_user") {
            m.user_id = std::string(f[1]);
        } else {
            throw ParseError("unknown model scope '" + std::string(f[0]) + "'", li + 1);
        }
        for (int c = 0; c < 4; ++c)
            m.coeffs[static_cast<std::size_t>(c)] =
                csv::parse_double(f[static_cast<std::size_t>(2 + c)], li + 1);
        m.x_min = csv::parse_double(f[6], li + 1);
        m.x_max = csv::parse_double(f[7], li + 1);
        m.fit_rmse = csv::parse_double(f[8], li + 1);
        if (!(m.x_max > m.x_min)) throw ValidationError("model normalization needs x_max > x_min");
        models.push_back(std::move(m));
    }
    return models;
}

}  // namespace udtwin
