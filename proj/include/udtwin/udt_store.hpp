#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <variant>
#include <vector>

namespace udtwin {

enum class ValueKind { scalar, text, timestamp };
enum class UpdateMechanism { fixed, per_run, per_frame };

struct AttributeSpec {
    std::string name;
    ValueKind kind = ValueKind::scalar;
    UpdateMechanism update = UpdateMechanism::per_run;
    std::optional<std::string> parent;  // hierarchy edge; absent for the root
};

// Validated attribute tree for a user profile: unique names, resolvable
// parents, acyclic, one root.
class UdtSchema {
public:
    static UdtSchema define(std::vector<AttributeSpec> specs);

    // device_category -> user_id -> {collection_frequency, mean_vchr, timestamp}.
    static UdtSchema default_mar();

    const AttributeSpec* find(const std::string& name) const;
    bool has(const std::string& name) const { return find(name) != nullptr; }
    const std::string& root() const { return root_; }
    std::size_t size() const { return specs_.size(); }
    int depth() const;
    const std::vector<AttributeSpec>& attributes() const { return specs_; }

    // Indented outline, one attribute per line, two spaces per level.
    std::string to_outline() const;

private:
    std::vector<AttributeSpec> specs_;
    std::string root_;
};

using AttrValue = std::variant<double, std::string>;

struct UdtRecord {
    std::string user_id;
    double timestamp = 0.0;  // seconds
    std::map<std::string, AttrValue> values;
};

struct IngestAck {
    std::uint64_t global_seq = 0;
    bool dual_written = false;
};

// Per-user digital twin: a schema plus the user's records, materialized as a
// view over the global tier.
struct Udt {
    UdtSchema schema;
    std::vector<UdtRecord> records;
};

// Two-tier database: an append-only network-wide record log plus ephemeral
// per-user UDT views. Single writer, concurrent readers.
class TwoTierStore {
public:
    explicit TwoTierStore(UdtSchema global_schema);

    // Validates against the global schema and appends; when the user has an
    // established UDT the record is dual-written. Rejection is atomic.
    IngestAck ingest(const UdtRecord& record);

    // Creates the user's UDT, backfills it with the user's existing
    // global-tier records, and returns a snapshot of the new view. A second
    // establishment is a StateError.
    Udt establish_udt(const std::string& user_id, UdtSchema schema);

    // UDTs are ephemeral; dropping one never touches the global tier.
    void drop_udt(const std::string& user_id);

    // Records in ingestion order. An absent user filter means "all users";
    // an empty set matches nothing. An empty attribute list keeps every
    // attribute, otherwise the projection keeps only the requested ones.
    std::vector<UdtRecord> query(const std::optional<std::set<std::string>>& user_filter,
                                 const std::vector<std::string>& attribute_filter) const;

    bool has_udt(const std::string& user_id) const;
    // Snapshot copy; readers never hold references into the mutable tier.
    Udt udt(const std::string& user_id) const;
    std::size_t global_size() const;
    std::size_t udt_count() const;
    const UdtSchema& schema() const { return global_schema_; }

    // Snapshot CSVs, long format `user_id,timestamp,attr,value`.
    std::string global_tier_csv() const;
    std::string udt_tier_csv() const;

    // update_mechanism is advisory, not gating: this reports records that
    // contradict it, e.g. a `fixed` attribute whose value changed for a user
    // or a per_run attribute re-ingested at an implausible rate.
    std::vector<std::string> mechanism_warnings() const;

private:
    void validate_record(const UdtRecord& record) const;

    UdtSchema global_schema_;
    std::vector<UdtRecord> global_tier_;
    std::map<std::string, Udt> udt_tier_;
    mutable std::shared_mutex mutex_;
};

std::string attr_value_to_string(const AttrValue& v);

// Optional snapshot-to-file: writes global.csv, udt.csv, and schema.txt
// under `dir`.
void snapshot_store(const TwoTierStore& store, const std::string& dir);

}  // namespace udtwin
