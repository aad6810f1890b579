#include "memmgr/service.hpp"

#include "stub_predictor_server.hpp"

#include <gtest/gtest.h>
#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <unistd.h>
#include <set>
#include <thread>

using namespace memmgr;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() /
               ("memmgr_" + name + "_" + std::to_string(::getpid()) + "_" + random_session_id().substr(0, 8));
    std::filesystem::remove_all(dir);
    return dir;
}

// Runs a MemoryService on an ephemeral port for the lifetime of the object.
class RunningService {
public:
    explicit RunningService(SessionStore& store) : service_(store) {
        port_ = service_.bind("127.0.0.1", 0);
        thread_ = std::thread([this] { service_.listen(); });
        service_.wait_until_ready();
    }
    ~RunningService() {
        service_.stop();
        thread_.join();
    }
    httplib::Client client() const {
        httplib::Client c("127.0.0.1", port_);
        c.set_read_timeout(10, 0);
        return c;
    }
    int port() const { return port_; }

private:
    MemoryService service_;
    int port_ = 0;
    std::thread thread_;
};

std::string create_over_http(httplib::Client& c, const std::string& predictor) {
    auto res = c.Post("/sessions", Json{{"predictor", predictor}}.dump(), "application/json");
    EXPECT_TRUE(res);
    EXPECT_EQ(res->status, 201);
    return Json::parse(res->body).at("session_id").get<std::string>();
}

}  // namespace

TEST(SessionId, HexAndUnique) {
    std::set<std::string> ids;
    for (int i = 0; i < 1000; ++i) {
        const auto id = random_session_id();
        ASSERT_EQ(id.size(), 32u);
        ASSERT_TRUE(std::all_of(id.begin(), id.end(), [](char c) { return std::isxdigit(c) && !std::isupper(c); }));
        ids.insert(id);
    }
    EXPECT_EQ(ids.size(), 1000u);
}

TEST(SessionStore, Lifecycle) {
    SessionStore store;
    const auto id = store.create_session(PredictorKind::append_only);
    EXPECT_EQ(store.size(), 1u);
    EXPECT_EQ(store.get_memory(id).size(), 0u);

    auto r = store.observe(id, "i like tea");
    EXPECT_EQ(r.op, Operation::append());
    EXPECT_EQ(r.memory_size, 1u);
    r = store.observe(id, "i like coffee");
    EXPECT_EQ(r.memory_size, 2u);

    const auto session = store.get_session(id);
    EXPECT_EQ(session.turn_counter, 2u);
    EXPECT_EQ(session.predictor, PredictorKind::append_only);
    EXPECT_LE(session.created_at_ms, session.updated_at_ms);
    EXPECT_EQ(session.memory.texts(), (std::vector<std::string>{"i like tea", "i like coffee"}));
    EXPECT_EQ(session.memory[1].created_turn, 1u);

    store.delete_session(id);
    EXPECT_EQ(store.size(), 0u);
    EXPECT_THROW(store.get_memory(id), SessionNotFound);
    EXPECT_THROW(store.observe(id, "x"), SessionNotFound);
    EXPECT_THROW(store.delete_session(id), SessionNotFound);
}

TEST(SessionStore, HeuristicSessionReplacesContradiction) {
    SessionStore store;
    const auto id = store.create_session(PredictorKind::heuristic);
    store.observe(id, "i like tea");
    const auto r = store.observe(id, "i do not like tea");
    EXPECT_EQ(r.op, Operation::replace(0));
    EXPECT_EQ(store.get_memory(id).texts(), std::vector<std::string>{"i do not like tea"});
}

TEST(SessionStore, Errors) {
    SessionStore store;
    const auto id = store.create_session(PredictorKind::heuristic);
    EXPECT_THROW(store.observe(id, "   "), EmptyInfo);
    EXPECT_EQ(store.get_session(id).turn_counter, 0u);
    EXPECT_THROW(store.create_session(PredictorKind::remote), UnknownPredictor);
    EXPECT_THROW(store.create_session(PredictorKind::oracle), UnknownPredictor);
    EXPECT_THROW(store.observe("missing", "x"), SessionNotFound);
}

TEST(SessionStore, DedupOption) {
    SessionStoreOptions options;
    options.core.dedup_on_append = true;
    SessionStore store(options);
    const auto id = store.create_session(PredictorKind::append_only);
    store.observe(id, "I like tea.");
    const auto r = store.observe(id, "i like tea");
    EXPECT_EQ(r.op, Operation::pass());
    EXPECT_EQ(r.memory_size, 1u);
}

TEST(SessionStore, PersistsAcrossRestart) {
    const auto dir = fresh_dir("persist");
    std::string a, b;
    Session before;
    {
        SessionStoreOptions options;
        options.persist_dir = dir;
        SessionStore store(options);
        a = store.create_session(PredictorKind::heuristic);
        b = store.create_session(PredictorKind::append_only);
        store.observe(a, "i like tea");
        store.observe(a, "i do not like tea");
        store.observe(a, "i own a dog");
        store.observe(b, "i like tea");
        before = store.get_session(a);
        const auto doomed = store.create_session(PredictorKind::heuristic);
        store.delete_session(doomed);
        EXPECT_FALSE(std::filesystem::exists(dir / (doomed + ".json")));
    }
    for (const auto& f : std::filesystem::directory_iterator(dir)) EXPECT_NE(f.path().extension(), ".tmp");

    SessionStoreOptions options;
    options.persist_dir = dir;
    SessionStore store(options);
    EXPECT_EQ(store.size(), 2u);
    EXPECT_EQ(store.get_session(a), before);
    EXPECT_EQ(store.get_memory(b).size(), 1u);

    // Entry ids keep increasing after restart.
    store.observe(a, "i play chess");
    const auto mem = store.get_memory(a);
    EXPECT_GT(mem[mem.size() - 1].id, before.memory[before.memory.size() - 1].id);
    EXPECT_EQ(store.get_session(a).turn_counter, 4u);
    std::filesystem::remove_all(dir);
}

TEST(SessionStore, CorruptFileIsReported) {
    const auto dir = fresh_dir("corrupt");
    std::filesystem::create_directories(dir);
    {
        std::ofstream(dir / "bad.json") << "{not json";
    }
    SessionStoreOptions options;
    options.persist_dir = dir;
    EXPECT_THROW(SessionStore{options}, Error);
    std::filesystem::remove_all(dir);
}

TEST(SessionJson, RoundTrip) {
    Session s;
    s.session_id = "abc";
    s.memory = Memory::from_texts(std::vector<std::string>{"x", "y"});
    s.predictor = PredictorKind::append_only;
    s.created_at_ms = 5;
    s.updated_at_ms = 9;
    s.turn_counter = 2;
    const auto j = to_json(s);
    for (const char* key : {"session_id", "memory", "predictor", "created_at_ms", "updated_at_ms", "turn_counter"})
        EXPECT_TRUE(j.contains(key)) << key;
    EXPECT_EQ(session_from_json(j), s);
}

TEST(SessionStore, ConcurrentObservesAreSerializedPerSession) {
    SessionStore store;
    constexpr int kSessions = 10, kPerSession = 20;
    std::vector<std::string> ids;
    for (int i = 0; i < kSessions; ++i) ids.push_back(store.create_session(PredictorKind::append_only));

    std::vector<std::thread> threads;
    std::vector<std::size_t> reported(kSessions * kPerSession);
    for (int t = 0; t < kSessions * kPerSession; ++t) {
        threads.emplace_back([&, t] {
            const int s = t % kSessions;
            reported[t] = store.observe(ids[s], "fact " + std::to_string(t)).memory_size;
        });
    }
    for (auto& th : threads) th.join();

    for (int s = 0; s < kSessions; ++s) {
        const auto session = store.get_session(ids[s]);
        EXPECT_EQ(session.turn_counter, static_cast<std::uint64_t>(kPerSession));
        EXPECT_EQ(session.memory.size(), static_cast<std::size_t>(kPerSession));
        // Each observe saw a distinct size, so none overlapped.
        std::set<std::size_t> seen;
        for (int t = s; t < kSessions * kPerSession; t += kSessions) seen.insert(reported[t]);
        EXPECT_EQ(seen.size(), static_cast<std::size_t>(kPerSession));
        EXPECT_EQ(*seen.rbegin(), static_cast<std::size_t>(kPerSession));
        // Turn numbers follow the serialization order.
        std::set<std::uint64_t> turns;
        for (const auto& e : session.memory.entries()) turns.insert(e.created_turn);
        EXPECT_EQ(turns.size(), static_cast<std::size_t>(kPerSession));
        EXPECT_EQ(*turns.rbegin(), static_cast<std::uint64_t>(kPerSession - 1));
    }
}

TEST(MemoryServiceHttp, EndpointsAndStatusCodes) {
    SessionStore store;
    RunningService running(store);
    auto c = running.client();

    const auto id = create_over_http(c, "heuristic");
    EXPECT_EQ(id.size(), 32u);

    auto res = c.Post("/sessions/" + id + "/observe", R"({"info":"i like tea"})", "application/json");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    auto body = Json::parse(res->body);
    EXPECT_EQ(body.at("op"), "append");
    EXPECT_TRUE(body.at("target_index").is_null());
    EXPECT_EQ(body.at("memory_size"), 1);

    res = c.Post("/sessions/" + id + "/observe", R"({"info":"i do not like tea"})", "application/json");
    body = Json::parse(res->body);
    EXPECT_EQ(body.at("op"), "replace");
    EXPECT_EQ(body.at("target_index"), 0);

    res = c.Get("/sessions/" + id + "/memory");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    const auto mem = restore(Json::parse(res->body));
    EXPECT_EQ(mem.texts(), std::vector<std::string>{"i do not like tea"});

    res = c.Post("/sessions/" + id + "/observe", R"({"info":"  "})", "application/json");
    EXPECT_EQ(res->status, 400);
    res = c.Post("/sessions/" + id + "/observe", R"({"nope":1})", "application/json");
    EXPECT_EQ(res->status, 400);
    res = c.Post("/sessions/" + id + "/observe", "garbage", "application/json");
    EXPECT_EQ(res->status, 400);
    res = c.Post("/sessions", R"({"predictor":"telepathy"})", "application/json");
    EXPECT_EQ(res->status, 400);
    res = c.Post("/sessions", R"({"predictor":"remote"})", "application/json");
    EXPECT_EQ(res->status, 400);
    res = c.Post("/sessions/deadbeef/observe", R"({"info":"x"})", "application/json");
    EXPECT_EQ(res->status, 404);
    res = c.Get("/sessions/deadbeef/memory");
    EXPECT_EQ(res->status, 404);

    res = c.Delete("/sessions/" + id);
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 204);
    res = c.Delete("/sessions/" + id);
    EXPECT_EQ(res->status, 404);
}

TEST(MemoryServiceHttp, RemoteFailuresBecome502) {
    memmgr::testing::StubPredictorServer stub([](const Json&) { return std::string(R"({"op":"replace","target_index":7})"); });
    SessionStoreOptions options;
    options.remote = RemoteEndpoint{stub.url(), std::chrono::milliseconds(2000), 0};
    SessionStore store(options);
    RunningService running(store);
    auto c = running.client();

    const auto id = create_over_http(c, "remote");
    auto res = c.Post("/sessions/" + id + "/observe", R"({"info":"i like tea"})", "application/json");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 502);
    EXPECT_EQ(store.get_memory(id).size(), 0u);
}

TEST(MemoryServiceHttp, RemoteSuccess) {
    memmgr::testing::StubPredictorServer stub([](const Json&) { return std::string(R"({"op":"append","target_index":null})"); });
    SessionStoreOptions options;
    options.remote = RemoteEndpoint{stub.url(), std::chrono::milliseconds(2000), 0};
    SessionStore store(options);
    const auto id = store.create_session(PredictorKind::remote);
    EXPECT_EQ(store.observe(id, "i like tea").memory_size, 1u);
    EXPECT_EQ(stub.requests().size(), 1u);
}

TEST(MemoryServiceHttp, ConcurrentClients) {
    SessionStore store;
    RunningService running(store);
    std::vector<std::string> ids;
    {
        auto c = running.client();
        for (int i = 0; i < 10; ++i) ids.push_back(create_over_http(c, "append_only"));
    }
    std::atomic<int> ok{0};
    std::vector<std::thread> threads;
    for (int t = 0; t < 100; ++t) {
        threads.emplace_back([&, t] {
            auto c = running.client();
            const Json body{{"info", "fact " + std::to_string(t)}};
            auto res = c.Post("/sessions/" + ids[t % 10] + "/observe", body.dump(), "application/json");
            if (res && res->status == 200) ++ok;
        });
    }
    for (auto& th : threads) th.join();
    EXPECT_EQ(ok.load(), 100);
    for (const auto& id : ids) EXPECT_EQ(store.get_memory(id).size(), 10u);
}
