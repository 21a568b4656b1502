#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "udtwin/qoe.hpp"

namespace udtwin {

enum class SelectionStrategy { random, min_modeling_error };

struct SelectionResult {
    SelectionStrategy strategy = SelectionStrategy::random;
    std::size_t k = 0;
    std::vector<std::string> selected;  // ascending user ids
    std::vector<std::string> cohort;    // ascending user ids
    std::optional<std::uint64_t> seed;
    bool k_clamped = false;  // requested k exceeded the cohort
};

// Which model serves each user: a per-user fit for selected users, the
// agnostic baseline for everyone else.
struct ModelAssignment {
    std::map<std::string, QoEModel> by_user;
};

struct Allocation {
    std::vector<std::pair<std::string, double>> frequency_by_user;  // ascending user ids
    double total_cost = 0.0;  // summed Hz, one uplink collection = one unit/s
};

// Picks the UDT-establishment set. min_modeling_error takes the k users
// whose agnostic-model RMSE is largest (ties by ascending user id); random
// samples k users without replacement from the seeded generator.
SelectionResult select_users(const std::map<std::string, double>& agnostic_errors, std::size_t k,
                             SelectionStrategy strategy,
                             std::optional<std::uint64_t> seed = std::nullopt);

ModelAssignment assign_models(const SelectionResult& selection,
                              const std::map<std::string, QoEModel>& per_user_models,
                              const QoEModel& agnostic_model);

// Mean over users of the assigned model's RMSE on that user's samples.
double average_error(const ModelAssignment& assignment,
                     const std::map<std::string, Dataset>& slices);

// Greedy marginal-gain frequency allocation: everyone starts at the grid
// minimum, then the single-step upgrade with the best predicted clamped-QoE
// gain per unit cost is granted while the budget allows and the gain is
// positive. Ties break by ascending user id.
Allocation allocate_frequencies(const ModelAssignment& assignment,
                                const std::vector<double>& grid, double budget);

struct SelectionScoreRow {
    std::size_t k = 0;
    SelectionStrategy strategy = SelectionStrategy::random;
    std::optional<std::uint64_t> seed;
    double avg_rmse = 0.0;
};

std::string selection_scores_to_csv(const std::vector<SelectionScoreRow>& rows);
std::string allocation_to_csv(const Allocation& allocation);
std::string strategy_name(SelectionStrategy s);

}  // namespace udtwin
