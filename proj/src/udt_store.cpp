#include "udtwin/udt_store.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>

#include "udtwin/csv.hpp"
#include "udtwin/errors.hpp"

namespace udtwin {

UdtSchema UdtSchema::define(std::vector<AttributeSpec> specs) {
    if (specs.empty()) throw SchemaError("schema needs at least one attribute");

    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (!index.emplace(specs[i].name, i).second)
            throw SchemaError("duplicate attribute name '" + specs[i].name + "'");
    }

    std::string root;
    for (const auto& spec : specs) {
        if (!spec.parent) {
            if (!root.empty())
                throw SchemaError("multiple roots: '" + root + "' and '" + spec.name + "'");
            root = spec.name;
            continue;
        }
        if (!index.count(*spec.parent))
            throw SchemaError("attribute '" + spec.name + "' references dangling parent '" +
                              *spec.parent + "'");
    }
    if (root.empty()) throw SchemaError("schema has no root attribute (parent cycle)");

    // Walk each parent chain; revisiting a node inside one walk is a cycle.
    for (const auto& spec : specs) {
        std::set<std::string> seen{spec.name};
        const AttributeSpec* cur = &spec;
        while (cur->parent) {
            const auto& parent = specs[index[*cur->parent]];
            if (!seen.insert(parent.name).second)
                throw SchemaError("cycle through attribute '" + parent.name + "'");
            cur = &parent;
        }
    }

    UdtSchema schema;
    schema.specs_ = std::move(specs);
    schema.root_ = std::move(root);
    return schema;
}

UdtSchema UdtSchema::default_mar() {
    return define({
        {"device_category", ValueKind::text, UpdateMechanism::fixed, std::nullopt},
        {"user_id", ValueKind::text, UpdateMechanism::fixed, "device_category"},
        {"collection_frequency", ValueKind::scalar, UpdateMechanism::per_run, "user_id"},
        {"mean_vchr", ValueKind::scalar, UpdateMechanism::per_run, "user_id"},
        {"timestamp", ValueKind::timestamp, UpdateMechanism::per_run, "user_id"},
    });
}

const AttributeSpec* UdtSchema::find(const std::string& name) const {
    for (const auto& spec : specs_)
        if (spec.name == name) return &spec;
    return nullptr;
}

int UdtSchema::depth() const {
    int depth = 0;
    for (const auto& spec : specs_) {
        int d = 1;
        const AttributeSpec* cur = &spec;
        while (cur->parent) {
            cur = find(*cur->parent);
            ++d;
        }
        depth = std::max(depth, d);
    }
    return depth;
}

std::string UdtSchema::to_outline() const {
    std::string out;
    // DFS from the root, children in declaration order.
    auto emit = [&](auto&& self, const std::string& name, int level) -> void {
        out.append(static_cast<std::size_t>(level) * 2, ' ');
        out += name;
        out += '\n';
        for (const auto& spec : specs_)
            if (spec.parent && *spec.parent == name) self(self, spec.name, level + 1);
    };
    emit(emit, root_, 0);
    return out;
}

TwoTierStore::TwoTierStore(UdtSchema global_schema) : global_schema_(std::move(global_schema)) {}

void TwoTierStore::validate_record(const UdtRecord& record) const {
    for (const auto& [name, value] : record.values) {
        const AttributeSpec* spec = global_schema_.find(name);
        if (!spec) throw ValidationError("record carries unknown attribute '" + name + "'");
        const bool is_text = std::holds_alternative<std::string>(value);
        if (spec->kind == ValueKind::text) {
            if (!is_text)
                throw ValidationError("attribute '" + name + "' expects text");
        } else {
            if (is_text)
                throw ValidationError("attribute '" + name + "' expects a numeric value");
            if (!std::isfinite(std::get<double>(value)))
                throw ValidationError("attribute '" + name + "' must be finite");
        }
    }
}

IngestAck TwoTierStore::ingest(const UdtRecord& record) {
    std::unique_lock lock(mutex_);
    validate_record(record);
    global_tier_.push_back(record);
    IngestAck ack;
    ack.global_seq = global_tier_.size() - 1;
    auto it = udt_tier_.find(record.user_id);
    if (it != udt_tier_.end()) {
        it->second.records.push_back(record);
        ack.dual_written = true;
    }
    return ack;
}

Udt TwoTierStore::establish_udt(const std::string& user_id, UdtSchema schema) {
    std::unique_lock lock(mutex_);
    if (udt_tier_.count(user_id))
        throw StateError("UDT already established for user " + user_id);
    Udt udt;
    udt.schema = std::move(schema);
    for (const auto& record : global_tier_)
        if (record.user_id == user_id) udt.records.push_back(record);
    return udt_tier_.emplace(user_id, std::move(udt)).first->second;
}

void TwoTierStore::drop_udt(const std::string& user_id) {
    std::unique_lock lock(mutex_);
    if (!udt_tier_.erase(user_id)) throw StateError("no UDT established for user " + user_id);
}

std::vector<UdtRecord> TwoTierStore::query(
    const std::optional<std::set<std::string>>& user_filter,
    const std::vector<std::string>& attribute_filter) const {
    std::shared_lock lock(mutex_);
    for (const auto& attr : attribute_filter)
        if (!global_schema_.has(attr))
            throw ValidationError("query requests unknown attribute '" + attr + "'");
    std::vector<UdtRecord> out;
    for (const auto& record : global_tier_) {
        if (user_filter && !user_filter->count(record.user_id)) continue;
        if (attribute_filter.empty()) {
            out.push_back(record);
            continue;
        }
        UdtRecord projected;
        projected.user_id = record.user_id;
        projected.timestamp = record.timestamp;
        for (const auto& attr : attribute_filter) {
            auto it = record.values.find(attr);
            if (it != record.values.end()) projected.values.insert(*it);
        }
        out.push_back(std::move(projected));
    }
    return out;
}

bool TwoTierStore::has_udt(const std::string& user_id) const {
    std::shared_lock lock(mutex_);
    return udt_tier_.count(user_id) != 0;
}

Udt TwoTierStore::udt(const std::string& user_id) const {
    std::shared_lock lock(mutex_);
    auto it = udt_tier_.find(user_id);
    if (it == udt_tier_.end()) throw StateError("no UDT established for user " + user_id);
    return it->second;
}

std::size_t TwoTierStore::global_size() const {
    std::shared_lock lock(mutex_);
    return global_tier_.size();
}

std::size_t TwoTierStore::udt_count() const {
    std::shared_lock lock(mutex_);
    return udt_tier_.size();
}

std::string attr_value_to_string(const AttrValue& v) {
    if (const auto* s = std::get_if<std::string>(&v)) return *s;
    return csv::format_double(std::get<double>(v));
}

void snapshot_store(const TwoTierStore& store, const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create snapshot directory " + dir);
    const auto write = [&](const char* name, const std::string& content) {
        const auto path = std::filesystem::path(dir) / name;
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot write " + path.string());
        out << content;
        if (!out) throw IoError("failed writing " + path.string());
    };
    write("global.csv", store.global_tier_csv());
    write("udt.csv", store.udt_tier_csv());
    write("schema.txt", store.schema().to_outline());
}

namespace {

void append_long_rows(csv::Writer& w, const UdtRecord& record) {
    for (const auto& [name, value] : record.values)
        w.row({record.user_id, csv::format_double(record.timestamp), name,
               attr_value_to_string(value)});
}

}  // namespace

std::string TwoTierStore::global_tier_csv() const {
    std::shared_lock lock(mutex_);
    csv::Writer w("user_id,timestamp,attr,value");
    for (const auto& record : global_tier_) append_long_rows(w, record);
    return w.take();
}

std::string TwoTierStore::udt_tier_csv() const {
    std::shared_lock lock(mutex_);
    csv::Writer w("user_id,timestamp,attr,value");
    for (const auto& [user, udt] : udt_tier_)
        for (const auto& record : udt.records) append_long_rows(w, record);
    return w.take();
}

std::vector<std::string> TwoTierStore::mechanism_warnings() const {
    std::shared_lock lock(mutex_);
    std::vector<std::string> warnings;
    // fixed attributes must not change value within one user's records
    std::map<std::pair<std::string, std::string>, AttrValue> first_seen;
    for (const auto& record : global_tier_) {
        for (const auto& [name, value] : record.values) {
            const AttributeSpec* spec = global_schema_.find(name);
            if (!spec || spec->update != UpdateMechanism::fixed) continue;
            const auto key = std::make_pair(record.user_id, name);
            const auto it = first_seen.find(key);
            if (it == first_seen.end()) {
                first_seen.emplace(key, value);
            } else if (it->second != value) {
                warnings.push_back("fixed attribute '" + name + "' changed value for user " +
                                   record.user_id);
                it->second = value;
            }
        }
    }
    return warnings;
}

}  // namespace udtwin
