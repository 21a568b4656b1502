#include <doctest.h>

#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "udtwin/errors.hpp"
#include "udtwin/rng.hpp"
#include "udtwin/udtof.hpp"

using namespace udtwin;

TEST_SUITE_BEGIN("udtof");

namespace {

Dataset make_dataset(std::initializer_list<DataRow> rows, Provenance prov = Provenance::cleaned) {
    Dataset ds;
    ds.rows = rows;
    ds.provenance = prov;
    return ds;
}

UdtRecord sweep_record(const std::string& user, double t, double f, double vchr) {
    UdtRecord r;
    r.user_id = user;
    r.timestamp = t;
    r.values.emplace("device_category", std::string("mar_headset"));
    r.values.emplace("user_id", user);
    r.values.emplace("collection_frequency", f);
    r.values.emplace("mean_vchr", vchr);
    r.values.emplace("timestamp", t);
    return r;
}

}  // namespace

TEST_CASE("prepare projects the store in ingestion order") {
    TwoTierStore store{UdtSchema::default_mar()};
    CHECK(prepare(store, "collection_frequency", "mean_vchr").empty());

    int t = 0;
    for (int u = 0; u < 40; ++u)
        for (int f = 1; f <= 10; ++f)
            store.ingest(sweep_record("u" + std::to_string(u), t++, f, 0.1 * (f % 10)));
    CostLedger ledger;
    const auto ds = prepare(store, "collection_frequency", "mean_vchr", &ledger);
    CHECK(ds.size() == 400);
    CHECK(ds.provenance == Provenance::raw);
    CHECK(ds.rows[0].user_id == "u0");
    CHECK(ds.rows[0].x == 1.0);
    CHECK(ledger.total().rows_read == 400);

    CHECK_THROWS_AS(prepare(store, "collection_frequency", "happiness"), ValidationError);
}

TEST_CASE("clean applies the rules in order and is idempotent") {
    const double inf = std::numeric_limits<double>::infinity();
    const auto raw = make_dataset({{"u0", 1.0, 0.5},
                                   {"u0", 2.0, 1.2},
                                   {"u0", inf, 0.5},
                                   {"u0", -3.0, 0.5},
                                   {"u0", 4.0, std::nullopt},
                                   {"u0", 1.0, 0.5}},
                                  Provenance::raw);
    const auto cleaned = clean(raw, CleanRules{});
    REQUIRE(cleaned.size() == 2);  // nonfinite/absent/negative dropped, dup removed
    CHECK(cleaned.provenance == Provenance::cleaned);
    CHECK(cleaned.rows[0].y == 0.5);
    CHECK(cleaned.rows[1].y == 1.0);  // clamped from 1.2

    const auto twice = clean(cleaned, CleanRules{});
    REQUIRE(twice.size() == cleaned.size());
    for (std::size_t i = 0; i < twice.size(); ++i) {
        CHECK(twice.rows[i].x == cleaned.rows[i].x);
        CHECK(twice.rows[i].y == cleaned.rows[i].y);
    }
}

TEST_CASE("clean rules can be disabled selectively") {
    const auto raw = make_dataset({{"u0", 1.0, 1.5}, {"u0", 1.0, 1.5}}, Provenance::raw);
    CleanRules keep_dups{true, true, false};
    CHECK(clean(raw, keep_dups).size() == 2);
    CleanRules no_clamp{true, false, true};
    CHECK(clean(raw, no_clamp).rows[0].y == 1.5);
}

TEST_CASE("reduce keeps small datasets unchanged") {
    const auto ds = make_dataset({{"u0", 1.0, 0.1}, {"u0", 2.0, 0.2}});
    const auto out = reduce(ds, 5, ReduceStrategy::uniform_subsample, 1);
    REQUIRE(out.size() == 2);
    CHECK(out.provenance == Provenance::reduced);
    CHECK_THROWS_AS(reduce(ds, 0, ReduceStrategy::uniform_subsample, 1), ParameterError);
}

TEST_CASE("uniform subsample is seeded, stable, and exact in size") {
    Dataset ds;
    for (int i = 0; i < 50; ++i) ds.rows.push_back({"u0", 1.0 + i, 0.5});
    const auto a = reduce(ds, 7, ReduceStrategy::uniform_subsample, 99);
    const auto b = reduce(ds, 7, ReduceStrategy::uniform_subsample, 99);
    REQUIRE(a.size() == 7);
    for (std::size_t i = 0; i < 7; ++i) CHECK(a.rows[i].x == b.rows[i].x);
    // Input order preserved.
    for (std::size_t i = 1; i < 7; ++i) CHECK(a.rows[i].x > a.rows[i - 1].x);
}

TEST_CASE("per-frequency mean collapses duplicate cells and is idempotent") {
    const auto ds = make_dataset({{"u1", 5.0, 0.4}, {"u1", 5.0, 0.6}, {"u1", 7.0, 0.9}});
    const auto out = reduce(ds, 1, ReduceStrategy::per_frequency_mean);
    REQUIRE(out.size() == 2);
    CHECK(out.rows[0].x == 5.0);
    CHECK(*out.rows[0].y == 0.5);
    CHECK(*out.rows[1].y == 0.9);

    const auto again = reduce(out, 1, ReduceStrategy::per_frequency_mean);
    REQUIRE(again.size() == 2);
    CHECK(*again.rows[0].y == 0.5);
}

TEST_CASE("augment replicates with clamped jitter") {
    const auto ds = make_dataset({{"u0", 1.0, 0.25}, {"u0", 2.0, 0.75}});
    const auto dup = augment(ds, {0.0, 1}, 3);
    REQUIRE(dup.size() == 4);
    CHECK(dup.provenance == Provenance::augmented);
    CHECK(*dup.rows[0].y == *dup.rows[1].y);  // zero-noise replica

    Dataset ten;
    for (int i = 0; i < 10; ++i) ten.rows.push_back({"u0", 1.0 + i, 0.5});
    CHECK(augment(ten, {0.1, 2}, 4).size() == 30);

    const auto j1 = augment(ten, {0.2, 3}, 11);
    const auto j2 = augment(ten, {0.2, 3}, 11);
    CHECK(dataset_to_csv(j1) == dataset_to_csv(j2));
    for (const auto& row : j1.rows) {
        CHECK(*row.y >= 0.0);
        CHECK(*row.y <= 1.0);
    }
}

TEST_CASE("slice_by_user partitions the dataset") {
    const auto single = make_dataset({{"only", 1.0, 0.5}, {"only", 2.0, 0.6}});
    const auto one = slice_by_user(single);
    REQUIRE(one.size() == 1);
    CHECK(one.at("only").size() == 2);

    Dataset ds;
    for (int u = 0; u < 40; ++u)
        for (int f = 1; f <= 10; ++f)
            ds.rows.push_back({"u" + std::to_string(u), static_cast<double>(f), 0.05 * f});
    const auto slices = slice_by_user(ds);
    REQUIRE(slices.size() == 40);
    std::size_t total = 0;
    for (const auto& [user, slice] : slices) {
        CHECK(slice.size() == 10);
        total += slice.size();
        for (const auto& row : slice.rows) CHECK(row.user_id == user);
        // per-user order preserved
        for (std::size_t i = 1; i < slice.size(); ++i)
            CHECK(slice.rows[i].x > slice.rows[i - 1].x);
    }
    CHECK(total == ds.size());

    // Slicing a slice is the identity.
    const auto& u3 = slices.at("u3");
    const auto resliced = slice_by_user(u3);
    REQUIRE(resliced.size() == 1);
    CHECK(dataset_to_csv(resliced.at("u3")) == dataset_to_csv(u3));
}

TEST_CASE("generate_eval bootstraps and extrapolates") {
    Dataset ds;
    for (int i = 1; i <= 8; ++i) ds.rows.push_back({"u0", static_cast<double>(i), 0.1 * i});

    const auto in_a = generate_eval(ds, EvalMode::in_distribution, {}, 5);
    const auto in_b = generate_eval(ds, EvalMode::in_distribution, {}, 5);
    CHECK(in_a.size() == ds.size());
    CHECK(in_a.provenance == Provenance::generated);
    CHECK(dataset_to_csv(in_a) == dataset_to_csv(in_b));

    // Bootstrap rows are copies of input rows.
    for (const auto& row : in_a.rows) {
        bool found = false;
        for (const auto& src : ds.rows)
            found = found || (src.user_id == row.user_id && src.x == row.x && src.y == row.y);
        CHECK(found);
    }

    const auto ood = generate_eval(ds, EvalMode::out_of_distribution, {}, 6);
    CHECK(ood.size() == ds.size());
    for (const auto& row : ood.rows) {
        CHECK(row.x > 8.0);
        CHECK(row.x <= 16.0);
        CHECK(!row.y.has_value());  // no simulation context supplied
    }

    const QoeProbe probe = [](const std::string&, double x) { return x / 100.0; };
    const auto labeled = generate_eval(ds, EvalMode::out_of_distribution, {4}, 6, &probe);
    REQUIRE(labeled.size() == 4);
    for (const auto& row : labeled.rows) CHECK(*row.y == row.x / 100.0);

    CHECK_THROWS_AS(generate_eval(Dataset{}, EvalMode::in_distribution, {}, 1), ParameterError);
}

TEST_CASE("leave-one-out valuation against the definition") {
    Dataset ds;
    for (int i = 0; i < 5; ++i) ds.rows.push_back({"u0", 1.0 + i, 0.2});
    const UtilityFn count = [](const Dataset& s) { return static_cast<double>(s.size()); };
    const auto report = value_data(ds, count, ValuationMethod::loo);
    CHECK(report.utility_full == 5.0);
    CHECK(report.utility_empty == 0.0);
    for (const double v : report.values) CHECK(v == 1.0);
}

TEST_CASE("shapley symmetry and efficiency on identical rows") {
    Dataset ds;
    for (int i = 0; i < 6; ++i) ds.rows.push_back({"u0", 3.0, 0.4});
    const auto utility = [](const Dataset& s) {
        return std::sqrt(static_cast<double>(s.size()));  // concave, symmetric
    };
    const auto report = value_data(ds, utility, ValuationMethod::shapley);
    const double sum = [&] {
        double s = 0;
        for (const double v : report.values) s += v;
        return s;
    }();
    CHECK(std::abs(sum - (report.utility_full - report.utility_empty)) < 1e-9);
    for (const double v : report.values) CHECK(std::abs(v - report.values[0]) < 1e-9);
}

TEST_CASE("shapley matches the permutation oracle on a 5-row dataset") {
    const auto ds = make_dataset({{"u0", 1.0, 0.05},
                                  {"u0", 2.0, 0.2},
                                  {"u0", 3.0, 0.45},
                                  {"u0", 4.0, 0.7},
                                  {"u1", 5.0, 0.9}});
    const UtilityFn utility = default_valuation_utility(ds);
    const auto report = value_data(ds, utility, ValuationMethod::shapley);

    const auto want = oracle::shapley_by_permutations(5, [&](std::uint32_t mask) {
        Dataset subset;
        subset.provenance = ds.provenance;
        for (std::size_t i = 0; i < 5; ++i)
            if (mask & (1u << i)) subset.rows.push_back(ds.rows[i]);
        return utility(subset);
    });
    REQUIRE(report.values.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(report.values[i] - want[i]) < 1e-9);

    double sum = 0;
    for (const double v : report.values) sum += v;
    CHECK(std::abs(sum - (report.utility_full - report.utility_empty)) < 1e-9);
}

TEST_CASE("loo and shapley agree in sign for a monotone additive utility") {
    Dataset ds;
    for (int i = 0; i < 8; ++i) ds.rows.push_back({"u0", 1.0 + i, 0.1 * i});
    const UtilityFn count = [](const Dataset& s) { return static_cast<double>(s.size()); };
    const auto loo = value_data(ds, count, ValuationMethod::loo);
    const auto shap = value_data(ds, count, ValuationMethod::shapley);
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(loo.values[i] > 0.0);
        CHECK(shap.values[i] > 0.0);
    }
}

TEST_CASE("shapley capacity cap") {
    Dataset ds;
    for (int i = 0; i < 13; ++i) ds.rows.push_back({"u0", 1.0 + i, 0.5});
    const UtilityFn count = [](const Dataset& s) { return static_cast<double>(s.size()); };
    CHECK_THROWS_AS(value_data(ds, count, ValuationMethod::shapley), CapacityError);
    CHECK_NOTHROW(value_data(ds, count, ValuationMethod::loo));
}

TEST_CASE("drift: identical samples do not drift") {
    std::vector<double> ref;
    for (int i = 0; i < 50; ++i) ref.push_back(0.1 * i);
    const auto report = detect_drift(ref, ref, 0.05);
    CHECK(report.statistic == 0.0);
    CHECK(!report.drifted);
    CHECK(report.n_ref == 50);
}

TEST_CASE("drift: disjoint supports give D = 1") {
    std::vector<double> ref, recent;
    for (int i = 0; i < 30; ++i) {
        ref.push_back(static_cast<double>(i));
        recent.push_back(100.0 + i);
    }
    const auto report = detect_drift(ref, recent, 0.05);
    CHECK(report.statistic == 1.0);
    CHECK(report.drifted);
}

TEST_CASE("drift: shifted normals match the ECDF oracle and the critical value") {
    Rng rng(31337);
    std::vector<double> ref, recent;
    for (int i = 0; i < 200; ++i) {
        ref.push_back(rng.normal());
        recent.push_back(rng.normal() + 2.0);
    }
    const auto report = detect_drift(ref, recent, 0.05);
    CHECK(report.drifted);
    CHECK(std::abs(report.statistic - oracle::ks_statistic(ref, recent)) < 1e-9);
    // c(0.05) = 1.358...; n = m = 200 -> threshold = c * 0.1
    CHECK(std::abs(report.threshold - 1.3581015157406195 * 0.1) < 1e-9);
    CHECK(report.drifted == (report.statistic > report.threshold));

    // The statistic is symmetric in its arguments.
    CHECK(detect_drift(recent, ref, 0.05).statistic == report.statistic);
}

TEST_CASE("drift parameter errors") {
    std::vector<double> small(10, 0.0);
    std::vector<double> ok(20, 0.0);
    CHECK_THROWS_AS(detect_drift(small, ok, 0.05), ParameterError);
    CHECK_THROWS_AS(detect_drift(ok, small, 0.05), ParameterError);
    CHECK_THROWS_AS(detect_drift(ok, ok, 0.0), ParameterError);
}

TEST_CASE("serialization: dataset CSV, valuation CSV, drift text") {
    const auto ds = make_dataset({{"u0", 1.5, 0.25}, {"u1", 2.0, std::nullopt}},
                                 Provenance::generated);
    const auto text = dataset_to_csv(ds);
    CHECK(text ==
          "user_id,frequency_hz,vchr,provenance\n"
          "u0,1.5,0.25,generated\n"
          "u1,2,,generated\n");
    const auto parsed = dataset_from_csv(text);
    CHECK(dataset_to_csv(parsed) == text);
    CHECK(parsed.provenance == Provenance::generated);
    CHECK(!parsed.rows[1].y.has_value());

    ValuationReport report;
    report.values = {0.5, -0.25};
    CHECK(valuation_to_csv(report) == "row_index,value\n0,0.5\n1,-0.25\n");

    DriftReport drift{0.5, 0.25, true, 30, 40};
    CHECK(drift.to_text() == "statistic=0.5 threshold=0.25 drifted=true n_ref=30 n_recent=40\n");
}

TEST_SUITE_END();
