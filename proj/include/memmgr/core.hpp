#pragma once

#include "memmgr/error.hpp"
#include "memmgr/json.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace memmgr {

using EntryId = std::uint64_t;
using TurnIndex = std::uint64_t;

enum class Speaker { user, bot };
enum class EntrySource { user, bot, seed };

std::string_view to_string(Speaker s);
std::string_view to_string(EntrySource s);
std::optional<Speaker> parse_speaker(std::string_view s);
std::optional<EntrySource> parse_entry_source(std::string_view s);

struct MemoryEntry {
    EntryId id = 0;
    std::string text;
    EntrySource source = EntrySource::user;
    TurnIndex created_turn = 0;
    std::optional<EntryId> replaced_from;

    bool operator==(const MemoryEntry&) const = default;
};

// A candidate memory sentence extracted from one utterance.
struct UserInfo {
    std::string text;
    std::optional<TurnIndex> source_turn;
    Speaker speaker = Speaker::user;
};

enum class OpKind { append, pass, replace };

inline constexpr OpKind kAllOpKinds[] = {OpKind::append, OpKind::pass, OpKind::replace};

// Wire names: "append", "pass", "replace".
std::string_view to_string(OpKind k);
std::optional<OpKind> parse_op_kind(std::string_view s);
constexpr std::size_t index_of(OpKind k) { return static_cast<std::size_t>(k); }

// One memory-management decision. A target index exists iff the kind is
// REPLACE; it is a 0-based position into the memory the op is applied to.
class Operation {
public:
    static Operation append() { return Operation(OpKind::append, std::nullopt); }
    static Operation pass() { return Operation(OpKind::pass, std::nullopt); }
    static Operation replace(std::size_t target) { return Operation(OpKind::replace, target); }
    static Operation of(OpKind kind, std::size_t target_if_replace = 0);

    OpKind kind() const { return kind_; }
    std::optional<std::size_t> target_index() const { return target_; }

    bool operator==(const Operation&) const = default;

private:
    Operation(OpKind kind, std::optional<std::size_t> target) : kind_(kind), target_(target) {}

    OpKind kind_;
    std::optional<std::size_t> target_;
};

// "APPEND", "PASS", "REPLACE 3" (0-based).
std::string describe(const Operation& op);

class Memory;

struct CoreConfig {
    // When on, an APPEND whose text is normalized-equal to an existing entry
    // is applied as PASS.
    bool dedup_on_append = false;
};

struct ApplyResult;

class Memory {
public:
    Memory() = default;

    // Memory seeded with the given sentences, in order, as EntrySource::seed.
    static Memory from_texts(std::span<const std::string> texts);

    const std::vector<MemoryEntry>& entries() const { return entries_; }
    const MemoryEntry& operator[](std::size_t i) const { return entries_[i]; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    EntryId next_id() const { return next_id_; }
    std::vector<std::string> texts() const;

    bool operator==(const Memory&) const = default;

private:
    friend ApplyResult apply(Memory memory, const Operation& op, const UserInfo& info, TurnIndex turn,
                             const CoreConfig& config);
    friend Memory restore(const Json& record);

    std::vector<MemoryEntry> entries_;
    EntryId next_id_ = 0;
};

struct ApplyResult {
    Memory memory;
    // APPEND was downgraded to PASS by dedup_on_append.
    bool deduplicated = false;
};

class EmptyInfo : public Error {
public:
    EmptyInfo() : Error("user information is empty after trimming") {}
};

class ReplaceOutOfRange : public Error {
public:
    ReplaceOutOfRange(std::size_t target_index, std::size_t size);
    std::size_t target_index() const { return target_index_; }
    std::size_t size() const { return size_; }

private:
    std::size_t target_index_;
    std::size_t size_;
};

class MalformedSnapshot : public Error {
public:
    explicit MalformedSnapshot(const std::string& why) : Error("malformed memory snapshot: " + why) {}
};

inline Memory new_memory() { return Memory{}; }
inline std::size_t size(const Memory& memory) { return memory.size(); }

// Throws ReplaceOutOfRange when op cannot be applied to memory.
void validate(const Operation& op, const Memory& memory);

// Applies op with info as the new sentence. The memory is taken by value:
// move it in to update in place.
ApplyResult apply(Memory memory, const Operation& op, const UserInfo& info, TurnIndex turn,
                  const CoreConfig& config = {});

// {"entries":[{"id","text","source","created_turn","replaced_from"}],"next_id"}
Json snapshot(const Memory& memory);
std::string snapshot_string(const Memory& memory);
Memory restore(const Json& record);
Memory restore_string(std::string_view text);

}  // namespace memmgr
