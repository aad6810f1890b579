#include "memmgr/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <mutex>
#include <random>

namespace memmgr {

namespace {

std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

}  // namespace

Json to_json(const Session& session) {
    Json out;
    out["session_id"] = session.session_id;
    out["predictor"] = to_string(session.predictor);
    out["created_at_ms"] = session.created_at_ms;
    out["updated_at_ms"] = session.updated_at_ms;
    out["turn_counter"] = session.turn_counter;
    out["memory"] = snapshot(session.memory);
    return out;
}

Session session_from_json(const Json& record) {
    if (!record.is_object()) throw Error("session record is not an object");
    Session s;
    s.session_id = record.at("session_id").get<std::string>();
    auto kind = parse_predictor_kind(record.at("predictor").get<std::string>());
    if (!kind) throw Error("session record has unknown predictor");
    s.predictor = *kind;
    s.created_at_ms = record.at("created_at_ms").get<std::int64_t>();
    s.updated_at_ms = record.at("updated_at_ms").get<std::int64_t>();
    s.turn_counter = record.at("turn_counter").get<std::uint64_t>();
    s.memory = restore(record.at("memory"));
    return s;
}

std::string random_session_id() {
    static thread_local std::random_device device;
    std::string id;
    id.reserve(32);
    for (int i = 0; i < 4; ++i) {
        char buf[9];
        std::snprintf(buf, sizeof buf, "%08x", static_cast<unsigned>(device()));
        id += buf;
    }
    return id;
}

SessionStore::SessionStore(SessionStoreOptions options)
    : options_(std::move(options)), heuristic_(options_.heuristic) {
    if (options_.remote && !options_.remote->url.empty()) remote_ = std::make_unique<RemotePredictor>(*options_.remote);
    if (!options_.persist_dir) return;

    std::filesystem::create_directories(*options_.persist_dir);
    for (const auto& file : std::filesystem::directory_iterator(*options_.persist_dir)) {
        if (!file.is_regular_file() || file.path().extension() != ".json") continue;
        std::ifstream in(file.path());
        std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
        Session session;
        try {
            session = session_from_json(Json::parse(text));
        } catch (const std::exception& e) {
            throw Error("cannot load session file " + file.path().string() + ": " + e.what());
        }
        auto slot = std::make_shared<Slot>();
        slot->session = std::move(session);
        sessions_.emplace(slot->session.session_id, std::move(slot));
    }
}

SessionStore::~SessionStore() = default;

std::filesystem::path SessionStore::session_path(const std::string& session_id) const {
    return *options_.persist_dir / (session_id + ".json");
}

void SessionStore::persist(const Session& session) const {
    if (!options_.persist_dir) return;
    const auto target = session_path(session.session_id);
    auto temp = target;
    temp += ".tmp";
    {
        std::ofstream out(temp, std::ios::trunc);
        out << to_json(session).dump() << '\n';
        out.flush();
        if (!out) throw Error("cannot write session file " + temp.string());
    }
    std::filesystem::rename(temp, target);
}

Predictor& SessionStore::predictor_for(PredictorKind kind) {
    switch (kind) {
        case PredictorKind::heuristic:   return heuristic_;
        case PredictorKind::append_only: return append_only_;
        case PredictorKind::remote:
            if (remote_) return *remote_;
            throw UnknownPredictor("remote predictor requested but no endpoint is configured");
        case PredictorKind::oracle: break;
    }
    throw UnknownPredictor("predictor \"" + std::string(to_string(kind)) + "\" cannot back a session");
}

std::shared_ptr<SessionStore::Slot> SessionStore::find(const std::string& session_id) const {
    std::shared_lock lock(map_mutex_);
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) throw SessionNotFound(session_id);
    return it->second;
}

std::string SessionStore::create_session(PredictorKind kind) {
    predictor_for(kind);
    auto slot = std::make_shared<Slot>();
    slot->session.predictor = kind;
    slot->session.created_at_ms = slot->session.updated_at_ms = now_ms();

    std::unique_lock lock(map_mutex_);
    std::string id;
    do {
        id = random_session_id();
    } while (sessions_.count(id));
    slot->session.session_id = id;
    persist(slot->session);
    sessions_.emplace(id, std::move(slot));
    return id;
}

ObserveResult SessionStore::observe(const std::string& session_id, std::string_view info_text) {
    auto slot = find(session_id);
    std::unique_lock lock(slot->mutex);
    if (slot->deleted) throw SessionNotFound(session_id);
    auto& session = slot->session;

    const UserInfo info{std::string(info_text), session.turn_counter, Speaker::user};
    if (is_blank(info.text)) throw EmptyInfo();
    const Operation op = predictor_for(session.predictor).predict(session.memory, info);
    validate(op, session.memory);

    Session next = session;
    auto applied = apply(std::move(next.memory), op, info, session.turn_counter, options_.core);
    next.memory = std::move(applied.memory);
    ++next.turn_counter;
    next.updated_at_ms = now_ms();
    persist(next);
    session = std::move(next);
    return ObserveResult{applied.deduplicated ? Operation::pass() : op, session.memory.size(), session.turn_counter - 1};
}

Session SessionStore::get_session(const std::string& session_id) const {
    auto slot = find(session_id);
    std::shared_lock lock(slot->mutex);
    if (slot->deleted) throw SessionNotFound(session_id);
    return slot->session;
}

Memory SessionStore::get_memory(const std::string& session_id) const { return get_session(session_id).memory; }

void SessionStore::delete_session(const std::string& session_id) {
    auto slot = find(session_id);
    std::unique_lock lock(slot->mutex);
    if (slot->deleted) throw SessionNotFound(session_id);
    slot->deleted = true;
    {
        std::unique_lock map_lock(map_mutex_);
        sessions_.erase(session_id);
    }
    if (options_.persist_dir) std::filesystem::remove(session_path(session_id));
}

std::vector<std::string> SessionStore::session_ids() const {
    std::shared_lock lock(map_mutex_);
    std::vector<std::string> ids;
    ids.reserve(sessions_.size());
    for (const auto& [id, slot] : sessions_) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::size_t SessionStore::size() const {
    std::shared_lock lock(map_mutex_);
    return sessions_.size();
}

namespace {

class BadRequest : public Error {
public:
    using Error::Error;
};

void reply(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& message) {
    reply(res, status, Json{{"error", message}});
}

// Maps library errors onto the documented status codes.
template <typename Handler>
void guarded(httplib::Response& res, Handler&& handler) {
    try {
        handler();
    } catch (const SessionNotFound& e) {
        reply_error(res, 404, e.what());
    } catch (const TransportError& e) {
        reply_error(res, 502, e.what());
    } catch (const BadResponse& e) {
        reply_error(res, 502, e.what());
    } catch (const InvalidTarget& e) {
        reply_error(res, 502, e.what());
    } catch (const EmptyInfo& e) {
        reply_error(res, 400, e.what());
    } catch (const UnknownPredictor& e) {
        reply_error(res, 400, e.what());
    } catch (const BadRequest& e) {
        reply_error(res, 400, e.what());
    } catch (const Json::exception& e) {
        reply_error(res, 400, std::string("malformed body: ") + e.what());
    } catch (const std::exception& e) {
        reply_error(res, 500, e.what());
    }
}

Json parse_body(const httplib::Request& req) {
    Json body = Json::parse(req.body);
    if (!body.is_object()) throw BadRequest("malformed body: expected a JSON object");
    return body;
}

}  // namespace

MemoryService::MemoryService(SessionStore& store) : store_(store), server_(std::make_unique<httplib::Server>()) {
    auto& srv = *server_;

    srv.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const Json body = parse_body(req);
            const auto name = body.at("predictor").get<std::string>();
            auto kind = parse_predictor_kind(name);
            if (!kind) throw UnknownPredictor("unknown predictor \"" + name + "\"");
            reply(res, 201, Json{{"session_id", store_.create_session(*kind)}});
        });
    });

    srv.Post(R"(/sessions/([^/]+)/observe)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const std::string id = req.matches[1];
            const Json body = parse_body(req);
            const auto info = body.at("info").get<std::string>();
            const auto result = store_.observe(id, info);
            Json out;
            out["op"] = to_string(result.op.kind());
            out["target_index"] = result.op.target_index() ? Json(*result.op.target_index()) : Json(nullptr);
            out["memory_size"] = result.memory_size;
            out["turn"] = result.turn;
            reply(res, 200, out);
        });
    });

    srv.Get(R"(/sessions/([^/]+)/memory)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { reply(res, 200, snapshot(store_.get_memory(req.matches[1]))); });
    });

    srv.Delete(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            store_.delete_session(req.matches[1]);
            res.status = 204;
        });
    });
}

MemoryService::~MemoryService() { stop(); }

int MemoryService::bind(const std::string& host, int port) {
    if (port == 0) return server_->bind_to_any_port(host);
    return server_->bind_to_port(host, port) ? port : -1;
}

bool MemoryService::listen() { return server_->listen_after_bind(); }

void MemoryService::stop() {
    if (server_->is_running()) server_->stop();
}

bool MemoryService::is_running() const { return server_->is_running(); }

void MemoryService::wait_until_ready() const { server_->wait_until_ready(); }

}  // namespace memmgr
