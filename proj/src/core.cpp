#include "memmgr/core.hpp"

#include "memmgr/text.hpp"

#include <algorithm>
#include <unordered_set>

namespace memmgr {

std::string_view to_string(Speaker s) {
    return s == Speaker::user ? "user" : "bot";
}

std::string_view to_string(EntrySource s) {
    switch (s) {
        case EntrySource::user: return "user";
        case EntrySource::bot:  return "bot";
        case EntrySource::seed: return "seed";
    }
    return "user";
}

std::optional<Speaker> parse_speaker(std::string_view s) {
    if (s == "user") return Speaker::user;
    if (s == "bot") return Speaker::bot;
    return std::nullopt;
}

std::optional<EntrySource> parse_entry_source(std::string_view s) {
    if (s == "user") return EntrySource::user;
    if (s == "bot") return EntrySource::bot;
    if (s == "seed") return EntrySource::seed;
    return std::nullopt;
}

std::string_view to_string(OpKind k) {
    switch (k) {
        case OpKind::append:  return "append";
        case OpKind::pass:    return "pass";
        case OpKind::replace: return "replace";
    }
    return "append";
}

std::optional<OpKind> parse_op_kind(std::string_view s) {
    if (s == "append") return OpKind::append;
    if (s == "pass") return OpKind::pass;
    if (s == "replace") return OpKind::replace;
    return std::nullopt;
}

Operation Operation::of(OpKind kind, std::size_t target_if_replace) {
    switch (kind) {
        case OpKind::append:  return append();
        case OpKind::pass:    return pass();
        case OpKind::replace: return replace(target_if_replace);
    }
    return append();
}

std::string describe(const Operation& op) {
    switch (op.kind()) {
        case OpKind::append:  return "APPEND";
        case OpKind::pass:    return "PASS";
        case OpKind::replace: return "REPLACE " + std::to_string(*op.target_index());
    }
    return "APPEND";
}

ReplaceOutOfRange::ReplaceOutOfRange(std::size_t target_index, std::size_t size)
    : Error("REPLACE target " + std::to_string(target_index) + " out of range for memory of size " +
            std::to_string(size)),
      target_index_(target_index),
      size_(size) {}

Memory Memory::from_texts(std::span<const std::string> texts) {
    Memory memory;
    for (const auto& text : texts) {
        UserInfo info{text, std::nullopt, Speaker::user};
        memory = apply(std::move(memory), Operation::append(), info, 0).memory;
        memory.entries_.back().source = EntrySource::seed;
    }
    return memory;
}

std::vector<std::string> Memory::texts() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.text);
    return out;
}

void validate(const Operation& op, const Memory& memory) {
    if (op.kind() == OpKind::replace && *op.target_index() >= memory.size()) {
        throw ReplaceOutOfRange(*op.target_index(), memory.size());
    }
}

ApplyResult apply(Memory memory, const Operation& op, const UserInfo& info, TurnIndex turn,
                  const CoreConfig& config) {
    const auto text = trim(info.text);
    if (text.empty()) throw EmptyInfo();
    validate(op, memory);

    const EntrySource source = info.speaker == Speaker::user ? EntrySource::user : EntrySource::bot;
    switch (op.kind()) {
        case OpKind::pass:
            return {std::move(memory), false};
        case OpKind::append: {
            if (config.dedup_on_append) {
                const auto key = canonical_form(text);
                const bool exists = std::any_of(memory.entries_.begin(), memory.entries_.end(),
                                                [&](const MemoryEntry& e) { return canonical_form(e.text) == key; });
                if (exists) return {std::move(memory), true};
            }
            memory.entries_.push_back(MemoryEntry{memory.next_id_++, std::string(text), source, turn, std::nullopt});
            return {std::move(memory), false};
        }
        case OpKind::replace: {
            auto& slot = memory.entries_[*op.target_index()];
            const EntryId old_id = slot.id;
            slot = MemoryEntry{memory.next_id_++, std::string(text), source, turn, old_id};
            return {std::move(memory), false};
        }
    }
    return {std::move(memory), false};
}

Json snapshot(const Memory& memory) {
    Json entries = Json::array();
    for (const auto& e : memory.entries()) {
        Json entry;
        entry["id"] = e.id;
        entry["text"] = e.text;
        entry["source"] = to_string(e.source);
        entry["created_turn"] = e.created_turn;
        entry["replaced_from"] = e.replaced_from ? Json(*e.replaced_from) : Json(nullptr);
        entries.push_back(std::move(entry));
    }
    Json record;
    record["entries"] = std::move(entries);
    record["next_id"] = memory.next_id();
    return record;
}

std::string snapshot_string(const Memory& memory) { return snapshot(memory).dump(); }

namespace {

std::uint64_t require_uint(const Json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end()) throw MalformedSnapshot(std::string("missing \"") + key + "\"");
    if (!it->is_number_unsigned()) throw MalformedSnapshot(std::string("\"") + key + "\" must be a non-negative integer");
    return it->get<std::uint64_t>();
}

}  // namespace

Memory restore(const Json& record) {
    if (!record.is_object()) throw MalformedSnapshot("record is not an object");
    auto entries_it = record.find("entries");
    if (entries_it == record.end() || !entries_it->is_array()) throw MalformedSnapshot("missing \"entries\" array");

    Memory memory;
    memory.next_id_ = require_uint(record, "next_id");
    std::unordered_set<EntryId> seen;
    for (const auto& item : *entries_it) {
        if (!item.is_object()) throw MalformedSnapshot("entry is not an object");
        MemoryEntry e;
        e.id = require_uint(item, "id");
        if (e.id >= memory.next_id_) throw MalformedSnapshot("entry id not below next_id");
        if (!seen.insert(e.id).second) throw MalformedSnapshot("duplicate entry id " + std::to_string(e.id));

        auto text = item.find("text");
        if (text == item.end() || !text->is_string()) throw MalformedSnapshot("entry text must be a string");
        e.text = text->get<std::string>();
        if (is_blank(e.text)) throw MalformedSnapshot("entry text is empty");

        auto source = item.find("source");
        if (source == item.end() || !source->is_string()) throw MalformedSnapshot("entry source must be a string");
        auto parsed = parse_entry_source(source->get<std::string>());
        if (!parsed) throw MalformedSnapshot("unknown entry source \"" + source->get<std::string>() + "\"");
        e.source = *parsed;

        e.created_turn = require_uint(item, "created_turn");

        auto from = item.find("replaced_from");
        if (from == item.end()) throw MalformedSnapshot("missing \"replaced_from\"");
        if (!from->is_null()) {
            if (!from->is_number_unsigned()) throw MalformedSnapshot("\"replaced_from\" must be null or an id");
            e.replaced_from = from->get<EntryId>();
            if (*e.replaced_from >= e.id) throw MalformedSnapshot("entry replaced a newer id");
        }
        memory.entries_.push_back(std::move(e));
    }
    return memory;
}

Memory restore_string(std::string_view text) {
    Json record;
    try {
        record = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw MalformedSnapshot(e.what());
    }
    return restore(record);
}

}  // namespace memmgr
