#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "udtwin/udt_store.hpp"

namespace udtwin {

enum class Provenance { raw, cleaned, reduced, augmented, generated };

struct DataRow {
    std::string user_id;
    double x = 0.0;                 // decision attribute (collection frequency, Hz)
    std::optional<double> y;        // QoE attribute (VCHR); absent for
                                    // model-prediction-only evaluation rows
};

struct Dataset {
    std::vector<DataRow> rows;
    Provenance provenance = Provenance::raw;

    std::size_t size() const { return rows.size(); }
    bool empty() const { return rows.empty(); }
};

// Abstract data-operation cost: rows touched. Resource optimization over
// these units is the decision layer's business; operations only account.
struct OpCost {
    std::uint64_t rows_read = 0;
    std::uint64_t rows_written = 0;
    std::uint64_t units() const { return rows_read + rows_written; }
};

struct CostLedger {
    std::vector<std::pair<std::string, OpCost>> entries;

    void add(std::string op, OpCost cost) { entries.emplace_back(std::move(op), cost); }
    OpCost total() const;
};

// Projects the store's records into a raw (x, y) dataset, rows in ingestion
// order. Records missing either attribute are skipped.
Dataset prepare(const TwoTierStore& store, const std::string& decision_attr,
                const std::string& qoe_attr, CostLedger* ledger = nullptr);

struct CleanRules {
    bool drop_nonfinite = true;
    bool clamp_y_to_unit = true;
    bool dedupe_exact = true;
};

// Applies the rules in declaration order; never fails, only removes or fixes.
Dataset clean(const Dataset& ds, const CleanRules& rules, CostLedger* ledger = nullptr);

enum class ReduceStrategy { uniform_subsample, per_frequency_mean };

Dataset reduce(const Dataset& ds, std::size_t target_rows, ReduceStrategy strategy,
               std::uint64_t seed = 0, CostLedger* ledger = nullptr);

struct AugmentPolicy {
    double jitter_y_sigma = 0.0;
    std::size_t replicate_k = 1;
};

Dataset augment(const Dataset& ds, const AugmentPolicy& policy, std::uint64_t seed,
                CostLedger* ledger = nullptr);

// Partition into per-user datasets; multiset union equals the input and
// per-user row order is preserved.
std::map<std::string, Dataset> slice_by_user(const Dataset& ds, CostLedger* ledger = nullptr);

enum class EvalMode { in_distribution, out_of_distribution };

struct EvalParams {
    std::size_t n_rows = 0;  // 0 -> |ds|
};

// Measures the QoE a user would see at frequency x; lets out-of-distribution
// rows be labeled by re-running the delivery simulation.
using QoeProbe = std::function<double(const std::string& user_id, double x)>;

Dataset generate_eval(const Dataset& ds, EvalMode mode, const EvalParams& params,
                      std::uint64_t seed, const QoeProbe* probe = nullptr,
                      CostLedger* ledger = nullptr);

enum class ValuationMethod { loo, shapley };

struct ValuationReport {
    std::vector<double> values;  // one per input row
    ValuationMethod method = ValuationMethod::loo;
    double utility_full = 0.0;
    double utility_empty = 0.0;
};

using UtilityFn = std::function<double(const Dataset&)>;

// Exact per-row attribution of a deterministic utility. Shapley enumerates
// all subsets and is capped at 12 rows.
ValuationReport value_data(const Dataset& ds, const UtilityFn& utility, ValuationMethod method,
                           CostLedger* ledger = nullptr);

// Default utility: negative RMSE, on the full dataset, of a cubic fitted on
// the subset; subsets that cannot support a cubic fit score utility_empty,
// the negative RMSE of the full dataset's mean-value predictor.
UtilityFn default_valuation_utility(const Dataset& full);

struct DriftReport {
    double statistic = 0.0;
    double threshold = 0.0;
    bool drifted = false;
    std::size_t n_ref = 0;
    std::size_t n_recent = 0;

    std::string to_text() const;  // single line, key=value pairs
};

// Two-sample Kolmogorov-Smirnov distribution-shift test. The threshold is
// the large-sample critical value c(alpha) * sqrt((n + m) / (n m)) with
// c(alpha) = sqrt(-ln(alpha / 2) / 2); c(0.05) = 1.358...
DriftReport detect_drift(const std::vector<double>& reference, const std::vector<double>& recent,
                         double alpha = 0.05);

std::string dataset_to_csv(const Dataset& ds);
Dataset dataset_from_csv(std::string_view text);
std::string valuation_to_csv(const ValuationReport& report);
std::string provenance_name(Provenance p);

}  // namespace udtwin
