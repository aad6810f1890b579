#include "memmgr/core.hpp"
#include "memmgr/rng.hpp"

#include <gtest/gtest.h>

using namespace memmgr;

namespace {

UserInfo info(const std::string& text) { return UserInfo{text, std::nullopt, Speaker::user}; }

Memory with(std::initializer_list<std::string> texts) {
    Memory m;
    TurnIndex turn = 0;
    for (const auto& t : texts) m = apply(std::move(m), Operation::append(), info(t), turn++).memory;
    return m;
}

}  // namespace

TEST(Core, NewMemoryIsEmpty) {
    const Memory m = new_memory();
    EXPECT_TRUE(m.entries().empty());
    EXPECT_EQ(m.next_id(), 0u);
    EXPECT_EQ(size(m), 0u);
}

TEST(Core, AppendGrowsByOne) {
    const auto r = apply(new_memory(), Operation::append(), info("i like dogs"), 0);
    ASSERT_EQ(size(r.memory), 1u);
    EXPECT_EQ(r.memory[0].text, "i like dogs");
    EXPECT_EQ(r.memory[0].id, 0u);
    EXPECT_EQ(r.memory.next_id(), 1u);
    EXPECT_FALSE(r.deduplicated);
}

TEST(Core, AppendStoresTrimmedTextAndProvenance) {
    UserInfo bot{"  i am a robot \n", 4, Speaker::bot};
    const auto r = apply(new_memory(), Operation::append(), bot, 4);
    EXPECT_EQ(r.memory[0].text, "i am a robot");
    EXPECT_EQ(r.memory[0].source, EntrySource::bot);
    EXPECT_EQ(r.memory[0].created_turn, 4u);
    EXPECT_FALSE(r.memory[0].replaced_from.has_value());
}

TEST(Core, PassIsIdentity) {
    const Memory m = with({"a", "b"});
    const auto r = apply(m, Operation::pass(), info("p"), 9);
    EXPECT_EQ(r.memory, m);
    EXPECT_EQ(snapshot_string(r.memory), snapshot_string(m));
}

TEST(Core, ReplaceSubstitutesInPlace) {
    const Memory m = with({"a", "b"});
    const auto r = apply(m, Operation::replace(0), info("p"), 2);
    ASSERT_EQ(size(r.memory), 2u);
    EXPECT_EQ(r.memory[0].text, "p");
    EXPECT_EQ(r.memory[0].replaced_from, m[0].id);
    EXPECT_EQ(r.memory[0].id, 2u);
    EXPECT_EQ(r.memory[1], m[1]);
}

TEST(Core, ReplaceOutOfRange) {
    const Memory m = with({"a", "b"});
    try {
        apply(m, Operation::replace(5), info("p"), 2);
        FAIL() << "expected ReplaceOutOfRange";
    } catch (const ReplaceOutOfRange& e) {
        EXPECT_EQ(e.target_index(), 5u);
        EXPECT_EQ(e.size(), 2u);
    }
    EXPECT_THROW(apply(new_memory(), Operation::replace(0), info("p"), 0), ReplaceOutOfRange);
}

TEST(Core, EmptyInfoRejectedForEveryKind) {
    const Memory m = with({"a"});
    for (const auto& op : {Operation::append(), Operation::pass(), Operation::replace(0)}) {
        EXPECT_THROW(apply(m, op, info("   \t"), 1), EmptyInfo);
    }
}

TEST(Core, SizeCountsOnlyAppends) {
    Memory m = with({"a", "b", "c"});
    EXPECT_EQ(size(m), 3u);
    m = apply(std::move(m), Operation::replace(1), info("d"), 3).memory;
    m = apply(std::move(m), Operation::pass(), info("e"), 4).memory;
    m = apply(std::move(m), Operation::pass(), info("f"), 5).memory;
    EXPECT_EQ(size(m), 3u);
}

TEST(Core, ReplaceMayTargetEntryAddedThisTurn) {
    Memory m = apply(new_memory(), Operation::append(), info("a"), 3).memory;
    m = apply(std::move(m), Operation::replace(0), info("b"), 3).memory;
    EXPECT_EQ(m[0].text, "b");
    EXPECT_EQ(m[0].replaced_from, 0u);
}

TEST(Core, DedupOnAppendActsAsPass) {
    const Memory m = with({"I like tea."});
    const CoreConfig dedup{true};
    const auto r = apply(m, Operation::append(), info("i like   TEA"), 1, dedup);
    EXPECT_TRUE(r.deduplicated);
    EXPECT_EQ(r.memory, m);

    const auto off = apply(m, Operation::append(), info("i like   TEA"), 1);
    EXPECT_FALSE(off.deduplicated);
    EXPECT_EQ(size(off.memory), 2u);
}

TEST(Core, DescribeAndParseOps) {
    EXPECT_EQ(describe(Operation::append()), "APPEND");
    EXPECT_EQ(describe(Operation::pass()), "PASS");
    EXPECT_EQ(describe(Operation::replace(3)), "REPLACE 3");
    EXPECT_EQ(parse_op_kind("replace"), OpKind::replace);
    EXPECT_FALSE(parse_op_kind("REPLACE").has_value());
    EXPECT_FALSE(Operation::append().target_index().has_value());
    EXPECT_EQ(Operation::replace(2).target_index(), 2u);
}

TEST(Snapshot, EmptyRoundTrip) {
    EXPECT_EQ(restore(snapshot(new_memory())), new_memory());
    EXPECT_EQ(snapshot_string(new_memory()), R"({"entries":[],"next_id":0})");
}

TEST(Snapshot, FiveEntryRoundTrip) {
    Memory m = with({"a", "b", "c", "d", "e"});
    m = apply(std::move(m), Operation::replace(2), UserInfo{"z", 5, Speaker::bot}, 5).memory;
    const Memory back = restore_string(snapshot_string(m));
    EXPECT_EQ(back, m);
    EXPECT_EQ(back[2].replaced_from, 2u);
}

TEST(Snapshot, Schema) {
    const Memory m = apply(new_memory(), Operation::append(), info("hello"), 0).memory;
    EXPECT_EQ(snapshot_string(m),
              R"({"entries":[{"id":0,"text":"hello","source":"user","created_turn":0,"replaced_from":null}],"next_id":1})");
}

TEST(Snapshot, MalformedRecords) {
    EXPECT_THROW(restore_string("{}"), MalformedSnapshot);
    EXPECT_THROW(restore_string("not json"), MalformedSnapshot);
    EXPECT_THROW(restore_string("[]"), MalformedSnapshot);
    EXPECT_THROW(restore_string(R"({"entries":[],"next_id":-1})"), MalformedSnapshot);
    const char* base = R"({"entries":[{"id":0,"text":"a","source":"user","created_turn":0,"replaced_from":null}],"next_id":1})";
    EXPECT_NO_THROW(restore_string(base));
    EXPECT_THROW(restore_string(R"({"entries":[{"id":0,"text":"a","source":"user","created_turn":0,"replaced_from":null}],"next_id":0})"),
                 MalformedSnapshot);
    EXPECT_THROW(restore_string(R"({"entries":[{"id":0,"text":" ","source":"user","created_turn":0,"replaced_from":null}],"next_id":1})"),
                 MalformedSnapshot);
    EXPECT_THROW(restore_string(R"({"entries":[{"id":0,"text":"a","source":"alien","created_turn":0,"replaced_from":null}],"next_id":1})"),
                 MalformedSnapshot);
    EXPECT_THROW(restore_string(R"({"entries":[{"id":0,"text":"a","source":"user","created_turn":0}],"next_id":1})"),
                 MalformedSnapshot);
    EXPECT_THROW(restore_string(R"({"entries":[{"id":1,"text":"a","source":"user","created_turn":0,"replaced_from":null},{"id":1,"text":"b","source":"user","created_turn":0,"replaced_from":null}],"next_id":2})"),
                 MalformedSnapshot);
}

// Random op sequences: size-delta law, REPLACE locality, PASS identity, id
// monotonicity, snapshot round-trip.
TEST(CoreProperty, RandomOperationSequences) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(seed);
        Memory m;
        EntryId last_created = 0;
        bool created_any = false;
        for (TurnIndex turn = 0; turn < 500; ++turn) {
            const auto choice = rng.below(3);
            const Operation op = choice == 0 || m.empty() ? Operation::append()
                                 : choice == 1          ? Operation::pass()
                                                        : Operation::replace(rng.below(m.size()));
            const UserInfo p{"fact " + std::to_string(rng.below(50)), turn, rng.bernoulli(0.5) ? Speaker::user : Speaker::bot};
            const Memory before = m;
            m = apply(std::move(m), op, p, turn).memory;

            switch (op.kind()) {
                case OpKind::append:
                    ASSERT_EQ(m.size(), before.size() + 1);
                    for (std::size_t i = 0; i < before.size(); ++i) ASSERT_EQ(m[i], before[i]);
                    break;
                case OpKind::pass:
                    ASSERT_EQ(m, before);
                    break;
                case OpKind::replace: {
                    const auto t = *op.target_index();
                    ASSERT_EQ(m.size(), before.size());
                    for (std::size_t i = 0; i < m.size(); ++i) {
                        if (i != t) ASSERT_EQ(m[i], before[i]);
                    }
                    ASSERT_EQ(m[t].replaced_from, before[t].id);
                    break;
                }
            }
            if (op.kind() != OpKind::pass) {
                const EntryId created = m.next_id() - 1;
                ASSERT_EQ(m.next_id(), before.next_id() + 1);
                if (created_any) ASSERT_GT(created, last_created);
                last_created = created;
                created_any = true;
            }
            ASSERT_EQ(restore(snapshot(m)), m);
        }
    }
}
