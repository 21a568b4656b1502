#include "udtwin/manage.hpp"

#include <algorithm>
#include <cmath>

#include "udtwin/csv.hpp"
#include "udtwin/errors.hpp"
#include "udtwin/rng.hpp"

namespace udtwin {

SelectionResult select_users(const std::map<std::string, double>& agnostic_errors, std::size_t k,
                             SelectionStrategy strategy, std::optional<std::uint64_t> seed) {
    if (agnostic_errors.empty()) throw ParameterError("selection needs a non-empty cohort");

    SelectionResult result;
    result.strategy = strategy;
    for (const auto& [user, rmse] : agnostic_errors) result.cohort.push_back(user);

    if (k > result.cohort.size()) {
        result.k_clamped = true;
        k = result.cohort.size();
    }
    result.k = k;

    if (strategy == SelectionStrategy::min_modeling_error) {
        // Largest agnostic error first; equal errors resolve by user id so
        // reports are byte-reproducible.
        std::vector<std::pair<std::string, double>> ranked(agnostic_errors.begin(),
                                                           agnostic_errors.end());
        std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        for (std::size_t i = 0; i < k; ++i) result.selected.push_back(ranked[i].first);
    } else {
        if (!seed) throw ParameterError("random selection needs a seed");
        result.seed = seed;
        std::vector<std::string> pool = result.cohort;
        Rng rng(*seed);
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
            std::swap(pool[i], pool[j]);
        }
        pool.resize(k);
        result.selected = std::move(pool);
    }
    std::sort(result.selected.begin(), result.selected.end());
    return result;
}

ModelAssignment assign_models(const SelectionResult& selection,
                              const std::map<std::string, QoEModel>& per_user_models,
                              const QoEModel& agnostic_model) {
    ModelAssignment assignment;
    for (const auto& user : selection.cohort) assignment.by_user.emplace(user, agnostic_model);
    for (const auto& user : selection.selected) {
        const auto it = per_user_models.find(user);
        if (it == per_user_models.end())
            throw StateError("no per-user model available for selected user " + user);
        assignment.by_user.insert_or_assign(user, it->second);
    }
    return assignment;
}

double average_error(const ModelAssignment& assignment,
                     const std::map<std::string, Dataset>& slices) {
    if (assignment.by_user.empty()) throw ParameterError("assignment covers no users");
    double sum = 0.0;
    for (const auto& [user, model] : assignment.by_user) {
        const auto it = slices.find(user);
        if (it == slices.end() || it->second.empty())
            throw ParameterError("no samples for user " + user);
        sum += modeling_error(model, it->second).rmse;
    }
    return sum / static_cast<double>(assignment.by_user.size());
}

Allocation allocate_frequencies(const ModelAssignment& assignment,
                                const std::vector<double>& grid, double budget) {
    if (grid.empty()) throw ParameterError("allocation needs a non-empty frequency grid");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1]))
            throw ParameterError("allocation grid must be strictly ascending");
    if (assignment.by_user.empty()) throw ParameterError("assignment covers no users");

    const auto n = assignment.by_user.size();
    const double min_cost = static_cast<double>(n) * grid.front();
    if (min_cost > budget)
        throw CapacityError("budget " + csv::format_double(budget) +
                            " cannot cover the grid minimum for " + std::to_string(n) + " users");

    std::vector<const std::string*> users;
    std::vector<const QoEModel*> models;
    users.reserve(n);
    for (const auto& [user, model] : assignment.by_user) {
        users.push_back(&user);
        models.push_back(&model);
    }

    std::vector<std::size_t> level(n, 0);
    double total = min_cost;
    while (true) {
        double best_score = 0.0;
        std::size_t best_user = n;
        for (std::size_t u = 0; u < n; ++u) {
            if (level[u] + 1 >= grid.size()) continue;
            const double step_cost = grid[level[u] + 1] - grid[level[u]];
            if (total + step_cost > budget) continue;
            const double gain = predict_qoe(*models[u], grid[level[u] + 1], true) -
                                predict_qoe(*models[u], grid[level[u]], true);
            if (gain <= 0.0) continue;
            const double score = gain / step_cost;
            // Strictly-better wins; the first user in ascending id order
            // keeps ties deterministic.
            if (best_user == n || score > best_score) {
                best_score = score;
                best_user = u;
            }
        }
        if (best_user == n) break;
        total += grid[level[best_user] + 1] - grid[level[best_user]];
        ++level[best_user];
    }

    Allocation allocation;
    allocation.total_cost = total;
    for (std::size_t u = 0; u < n; ++u)
        allocation.frequency_by_user.emplace_back(*users[u], grid[level[u]]);
    return allocation;
}

std::string strategy_name(SelectionStrategy s) {
    return s == SelectionStrategy::random ? "random" : "min_modeling_error";
}

std::string selection_scores_to_csv(const std::vector<SelectionScoreRow>& rows) {
    csv::Writer w("k,strategy,seed,avg_rmse");
    for (const auto& row : rows)
        w.row({std::to_string(row.k), strategy_name(row.strategy),
               row.seed ? std::to_string(*row.seed) : "", csv::format_double(row.avg_rmse)});
    return w.take();
}

std::string allocation_to_csv(const Allocation& allocation) {
    csv::Writer w("user_id,frequency_hz");
    for (const auto& [user, f] : allocation.frequency_by_user)
        w.row({user, csv::format_double(f)});
    return w.take();
}

}  // namespace udtwin
