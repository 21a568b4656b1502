#include "udtwin/udtof.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <set>
#include <tuple>

#include "udtwin/csv.hpp"
#include "udtwin/errors.hpp"
#include "udtwin/qoe.hpp"
#include "udtwin/rng.hpp"

namespace udtwin {

OpCost CostLedger::total() const {
    OpCost sum;
    for (const auto& [op, cost] : entries) {
        sum.rows_read += cost.rows_read;
        sum.rows_written += cost.rows_written;
    }
    return sum;
}

namespace {

void account(CostLedger* ledger, const char* op, std::uint64_t read, std::uint64_t written) {
    if (ledger) ledger->add(op, OpCost{read, written});
}

std::size_t distinct_x(const Dataset& ds) {
    std::set<double> xs;
    for (const auto& row : ds.rows) xs.insert(row.x);
    return xs.size();
}

}  // namespace

Dataset prepare(const TwoTierStore& store, const std::string& decision_attr,
                const std::string& qoe_attr, CostLedger* ledger) {
    const auto records = store.query(std::nullopt, {decision_attr, qoe_attr});
    Dataset ds;
    ds.provenance = Provenance::raw;
    for (const auto& record : records) {
        const auto xit = record.values.find(decision_attr);
        const auto yit = record.values.find(qoe_attr);
        if (xit == record.values.end() || yit == record.values.end()) continue;
        const auto* x = std::get_if<double>(&xit->second);
        const auto* y = std::get_if<double>(&yit->second);
        if (!x || !y) continue;
        ds.rows.push_back({record.user_id, *x, *y});
    }
    account(ledger, "prepare", records.size(), ds.size());
    return ds;
}

Dataset clean(const Dataset& ds, const CleanRules& rules, CostLedger* ledger) {
    Dataset out;
    out.provenance = Provenance::cleaned;
    out.rows = ds.rows;
    if (rules.drop_nonfinite) {
        std::erase_if(out.rows, [](const DataRow& row) {
            // x must be a usable frequency; rows without a finite y carry no
            // modeling signal.
            if (!std::isfinite(row.x) || row.x <= 0.0) return true;
            return !row.y || !std::isfinite(*row.y);
        });
    }
    if (rules.clamp_y_to_unit) {
        for (auto& row : out.rows)
            if (row.y) *row.y = std::min(1.0, std::max(0.0, *row.y));
    }
    if (rules.dedupe_exact) {
        std::set<std::tuple<std::string, std::uint64_t, bool, std::uint64_t>> seen;
        std::erase_if(out.rows, [&seen](const DataRow& row) {
            const auto key = std::make_tuple(
                row.user_id, std::bit_cast<std::uint64_t>(row.x), row.y.has_value(),
                row.y ? std::bit_cast<std::uint64_t>(*row.y) : 0ull);
            return !seen.insert(key).second;
        });
    }
    account(ledger, "clean", ds.size(), out.size());
    return out;
}

Dataset reduce(const Dataset& ds, std::size_t target_rows, ReduceStrategy strategy,
               std::uint64_t seed, CostLedger* ledger) {
    Dataset out;
    out.provenance = Provenance::reduced;
    if (strategy == ReduceStrategy::uniform_subsample) {
        if (target_rows == 0) throw ParameterError("uniform subsample needs target_rows >= 1");
        if (target_rows >= ds.size()) {
            out.rows = ds.rows;
        } else {
            // Partial Fisher-Yates over the index array, then restore input
            // order so reduction is stable.
            std::vector<std::size_t> idx(ds.size());
            for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
            Rng rng(seed);
            for (std::size_t i = 0; i < target_rows; ++i) {
                const std::size_t j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
                std::swap(idx[i], idx[j]);
            }
            idx.resize(target_rows);
            std::sort(idx.begin(), idx.end());
            for (const std::size_t i : idx) out.rows.push_back(ds.rows[i]);
        }
    } else {
        // Collapse rows sharing (user, x) to their mean y, first-occurrence order.
        std::vector<std::tuple<std::string, double>> order;
        std::map<std::pair<std::string, double>, std::pair<double, std::size_t>> acc;
        for (const auto& row : ds.rows) {
            const auto key = std::make_pair(row.user_id, row.x);
            auto it = acc.find(key);
            if (it == acc.end()) {
                order.emplace_back(row.user_id, row.x);
                it = acc.emplace(key, std::make_pair(0.0, std::size_t{0})).first;
            }
            if (row.y) {
                it->second.first += *row.y;
                it->second.second += 1;
            }
        }
        for (const auto& [user, x] : order) {
            const auto& [sum, count] = acc[{user, x}];
            DataRow row{user, x, std::nullopt};
            if (count > 0) row.y = sum / static_cast<double>(count);
            out.rows.push_back(std::move(row));
        }
    }
    account(ledger, "reduce", ds.size(), out.size());
    return out;
}

Dataset augment(const Dataset& ds, const AugmentPolicy& policy, std::uint64_t seed,
                CostLedger* ledger) {
    if (policy.jitter_y_sigma < 0.0) throw ParameterError("jitter sigma must be non-negative");
    if (policy.replicate_k < 1) throw ParameterError("replicate_k must be >= 1");
    Dataset out;
    out.provenance = Provenance::augmented;
    out.rows.reserve(ds.size() * (policy.replicate_k + 1));
    Rng rng(seed);
    for (const auto& row : ds.rows) {
        out.rows.push_back(row);
        for (std::size_t r = 0; r < policy.replicate_k; ++r) {
            DataRow replica = row;
            if (replica.y) {
                const double jittered = *replica.y + rng.normal(0.0, policy.jitter_y_sigma);
                replica.y = std::min(1.0, std::max(0.0, jittered));
            }
            out.rows.push_back(std::move(replica));
        }
    }
    account(ledger, "augment", ds.size(), out.size());
    return out;
}

std::map<std::string, Dataset> slice_by_user(const Dataset& ds, CostLedger* ledger) {
    std::map<std::string, Dataset> slices;
    for (const auto& row : ds.rows) {
        auto& slice = slices[row.user_id];
        slice.provenance = ds.provenance;
        slice.rows.push_back(row);
    }
    account(ledger, "slice_by_user", ds.size(), ds.size());
    return slices;
}

Dataset generate_eval(const Dataset& ds, EvalMode mode, const EvalParams& params,
                      std::uint64_t seed, const QoeProbe* probe, CostLedger* ledger) {
    if (ds.empty()) throw ParameterError("generate_eval needs a non-empty dataset");
    const std::size_t n = params.n_rows == 0 ? ds.size() : params.n_rows;
    Dataset out;
    out.provenance = Provenance::generated;
    out.rows.reserve(n);
    Rng rng(seed);
    if (mode == EvalMode::in_distribution) {
        for (std::size_t i = 0; i < n; ++i)
            out.rows.push_back(ds.rows[static_cast<std::size_t>(rng.below(ds.size()))]);
    } else {
        double max_x = ds.rows.front().x;
        for (const auto& row : ds.rows) max_x = std::max(max_x, row.x);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& src = ds.rows[static_cast<std::size_t>(rng.below(ds.size()))];
            DataRow row{src.user_id, rng.uniform(max_x, 2.0 * max_x), std::nullopt};
            if (probe && *probe) row.y = (*probe)(row.user_id, row.x);
            out.rows.push_back(std::move(row));
        }
    }
    account(ledger, "generate_eval", ds.size(), out.size());
    return out;
}

namespace {

Dataset subset_of(const Dataset& ds, std::uint32_t mask) {
    Dataset out;
    out.provenance = ds.provenance;
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (mask & (1u << i)) out.rows.push_back(ds.rows[i]);
    return out;
}

}  // namespace

ValuationReport value_data(const Dataset& ds, const UtilityFn& utility, ValuationMethod method,
                           CostLedger* ledger) {
    if (!utility) throw ParameterError("value_data needs a utility function");
    const std::size_t n = ds.size();
    Dataset empty;
    empty.provenance = ds.provenance;

    ValuationReport report;
    report.method = method;
    report.utility_empty = utility(empty);
    report.utility_full = utility(ds);
    report.values.resize(n, 0.0);

    if (method == ValuationMethod::loo) {
        for (std::size_t i = 0; i < n; ++i) {
            Dataset without;
            without.provenance = ds.provenance;
            for (std::size_t j = 0; j < n; ++j)
                if (j != i) without.rows.push_back(ds.rows[j]);
            report.values[i] = report.utility_full - utility(without);
        }
        account(ledger, "value_data", n * n, n);
        return report;
    }

    if (n > 12)
        throw CapacityError("exact Shapley valuation is capped at 12 rows, got " +
                            std::to_string(n));
    // Cache the utility of every subset, then apply the weighted marginal sum.
    const std::uint32_t full = n == 0 ? 0u : (1u << n) - 1u;
    std::vector<double> cache(static_cast<std::size_t>(full) + 1);
    for (std::uint32_t mask = 0; mask <= full; ++mask) {
        if (mask == 0)
            cache[mask] = report.utility_empty;
        else if (mask == full)
            cache[mask] = report.utility_full;
        else
            cache[mask] = utility(subset_of(ds, mask));
        if (full == 0) break;
    }
    std::vector<double> factorial(n + 1, 1.0);
    for (std::size_t i = 1; i <= n; ++i) factorial[i] = factorial[i - 1] * static_cast<double>(i);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t bit = 1u << i;
        double value = 0.0;
        for (std::uint32_t mask = 0; mask <= full; ++mask) {
            if (mask & bit) continue;
            const auto s = static_cast<std::size_t>(std::popcount(mask));
            const double weight = factorial[s] * factorial[n - s - 1] / factorial[n];
            value += weight * (cache[mask | bit] - cache[mask]);
        }
        report.values[i] = value;
    }
    account(ledger, "value_data", (static_cast<std::uint64_t>(full) + 1) * n, n);
    return report;
}

UtilityFn default_valuation_utility(const Dataset& full) {
    double mean = 0.0;
    std::size_t n_y = 0;
    for (const auto& row : full.rows)
        if (row.y) {
            mean += *row.y;
            ++n_y;
        }
    if (n_y == 0) throw ParameterError("valuation utility needs labeled rows");
    mean /= static_cast<double>(n_y);
    double floor_sq = 0.0;
    for (const auto& row : full.rows)
        if (row.y) floor_sq += (*row.y - mean) * (*row.y - mean);
    const double utility_floor = -std::sqrt(floor_sq / static_cast<double>(n_y));

    return [full, utility_floor](const Dataset& subset) {
        if (subset.size() < 4 || distinct_x(subset) < 4) return utility_floor;
        try {
            const QoEModel model = fit_qoe(subset, std::nullopt);
            return -modeling_error(model, full).rmse;
        } catch (const RankError&) {
            return utility_floor;
        }
    };
}

DriftReport detect_drift(const std::vector<double>& reference, const std::vector<double>& recent,
                         double alpha) {
    if (reference.size() < 20 || recent.size() < 20)
        throw ParameterError("drift detection needs at least 20 samples per side");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("alpha must lie in (0, 1)");

    std::vector<double> a(reference);
    std::vector<double> b(recent);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());

    const double n = static_cast<double>(a.size());
    const double m = static_cast<double>(b.size());
    double d = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        const double v = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= v) ++i;
        while (j < b.size() && b[j] <= v) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
    }

    DriftReport report;
    report.statistic = d;
    report.threshold = std::sqrt(-0.5 * std::log(alpha / 2.0)) * std::sqrt((n + m) / (n * m));
    report.drifted = report.statistic > report.threshold;
    report.n_ref = a.size();
    report.n_recent = b.size();
    return report;
}

std::string DriftReport::to_text() const {
    std::string out;
    out += "statistic=" + csv::format_double(statistic);
    out += " threshold=" + csv::format_double(threshold);
    out += std::string(" drifted=") + (drifted ? "true" : "false");
    out += " n_ref=" + std::to_string(n_ref);
    out += " n_recent=" + std::to_string(n_recent);
    out += '\n';
    return out;
}

std::string provenance_name(Provenance p) {
    switch (p) {
        case Provenance::raw: return "raw";
        case Provenance::cleaned: return "cleaned";
        case Provenance::reduced: return "reduced";
        case Provenance::augmented: return "augmented";
        case Provenance::generated: return "generated";
    }
    return "raw";
}

namespace {

Provenance provenance_from(std::string_view name, std::size_t line) {
    if (name == "raw") return Provenance::raw;
    if (name == "cleaned") return Provenance::cleaned;
    if (name == "reduced") return Provenance::reduced;
    if (name == "augmented") return Provenance::augmented;
    if (name == "generated") return Provenance::generated;
    throw ParseError("unknown provenance '" + std::string(name) + "'", line);
}

}  // namespace

std::string dataset_to_csv(const Dataset& ds) {
    csv::Writer w("user_id,frequency_hz,vchr,provenance");
    const std::string prov = provenance_name(ds.provenance);
    for (const auto& row : ds.rows)
        w.row({row.user_id, csv::format_double(row.x), row.y ? csv::format_double(*row.y) : "",
               prov});
    return w.take();
}

Dataset dataset_from_csv(std::string_view text) {
    const auto lines = csv::split_lines(text);
    if (lines.empty() || lines[0] != "user_id,frequency_hz,vchr,provenance")
        throw ParseError("bad dataset header");
    Dataset ds;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const auto f = csv::split_fields(lines[li]);
        if (f.size() != 4) throw ParseError("expected 4 columns", li + 1);
        DataRow row{std::string(f[0]), csv::parse_double(f[1], li + 1), std::nullopt};
        if (!csv::trim(f[2]).empty()) row.y = csv::parse_double(f[2], li + 1);
        const Provenance prov = provenance_from(csv::trim(f[3]), li + 1);
        if (li == 1)
            ds.provenance = prov;
        else if (prov != ds.provenance)
            throw ParseError("mixed provenance tags in one dataset", li + 1);
        ds.rows.push_back(std::move(row));
    }
    return ds;
}

std::string valuation_to_csv(const ValuationReport& report) {
    csv::Writer w("row_index,value");
    for (std::size_t i = 0; i < report.values.size(); ++i)
        w.row({std::to_string(i), csv::format_double(report.values[i])});
    return w.take();
}

}  // namespace udtwin
