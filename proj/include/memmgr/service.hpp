#pragma once

#include "memmgr/core.hpp"
#include "memmgr/predictor.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace httplib {
class Server;
}

namespace memmgr {

struct Session {
    std::string session_id;
    Memory memory;
    PredictorKind predictor = PredictorKind::heuristic;
    std::int64_t created_at_ms = 0;  // Unix epoch milliseconds
    std::int64_t updated_at_ms = 0;
    std::uint64_t turn_counter = 0;

    bool operator==(const Session&) const = default;
};

Json to_json(const Session& session);
Session session_from_json(const Json& record);

class SessionNotFound : public Error {
public:
    explicit SessionNotFound(const std::string& id) : Error("session not found: " + id) {}
};

struct ObserveResult {
    Operation op;
    std::size_t memory_size = 0;
    // Position of this observation in the session's serialized history.
    std::uint64_t turn = 0;
};

struct SessionStoreOptions {
    // One <session_id>.json snapshot per session when set.
    std::optional<std::filesystem::path> persist_dir;
    std::optional<RemoteEndpoint> remote;
    HeuristicConfig heuristic;
    CoreConfig core;
};

// Live sessions keyed by id. Mutations of one session are serialized by that
// session's lock; different sessions proceed in parallel.
class SessionStore {
public:
    // Loads every persisted session found in persist_dir.
    explicit SessionStore(SessionStoreOptions options = {});
    ~SessionStore();

    SessionStore(const SessionStore&) = delete;
    SessionStore& operator=(const SessionStore&) = delete;

    // Throws UnknownPredictor for kinds a session cannot use.
    std::string create_session(PredictorKind kind);
    // Throws SessionNotFound, EmptyInfo, or the predictor's errors.
    ObserveResult observe(const std::string& session_id, std::string_view info);
    Memory get_memory(const std::string& session_id) const;
    Session get_session(const std::string& session_id) const;
    void delete_session(const std::string& session_id);

    std::vector<std::string> session_ids() const;
    std::size_t size() const;

private:
    struct Slot {
        mutable std::shared_mutex mutex;
        Session session;
        bool deleted = false;
    };

    std::shared_ptr<Slot> find(const std::string& session_id) const;
    Predictor& predictor_for(PredictorKind kind);
    void persist(const Session& session) const;
    std::filesystem::path session_path(const std::string& session_id) const;

    SessionStoreOptions options_;
    mutable std::shared_mutex map_mutex_;
    std::unordered_map<std::string, std::shared_ptr<Slot>> sessions_;
    HeuristicPredictor heuristic_;
    AppendOnlyPredictor append_only_;
    std::unique_ptr<RemotePredictor> remote_;
};

// 128 random bits, lowercase hex.
std::string random_session_id();

// HTTP/JSON front end for a SessionStore:
//   POST   /sessions                {"predictor":...} -> 201 {"session_id"}
//   POST   /sessions/{id}/observe   {"info":...}      -> 200 {"op","target_index","memory_size","turn"}
//   GET    /sessions/{id}/memory                      -> 200 snapshot
//   DELETE /sessions/{id}                             -> 204
class MemoryService {
public:
    explicit MemoryService(SessionStore& store);
    ~MemoryService();

    MemoryService(const MemoryService&) = delete;
    MemoryService& operator=(const MemoryService&) = delete;

    // Port 0 binds an ephemeral port. Returns the bound port or -1.
    int bind(const std::string& host, int port);
    // Serves until stop(). Call after bind().
    bool listen();
    void stop();
    bool is_running() const;
    void wait_until_ready() const;

private:
    SessionStore& store_;
    std::unique_ptr<httplib::Server> server_;
};

}  // namespace memmgr
