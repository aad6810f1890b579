#include "memmgr/predictor.hpp"

#include <httplib.h>

#include <algorithm>
#include <array>

namespace memmgr {

std::string_view to_string(PredictorKind k) {
    switch (k) {
        case PredictorKind::oracle:      return "oracle";
        case PredictorKind::heuristic:   return "heuristic";
        case PredictorKind::append_only: return "append_only";
        case PredictorKind::remote:      return "remote";
    }
    return "heuristic";
}

std::optional<PredictorKind> parse_predictor_kind(std::string_view s) {
    if (s == "oracle") return PredictorKind::oracle;
    if (s == "heuristic") return PredictorKind::heuristic;
    if (s == "append_only") return PredictorKind::append_only;
    if (s == "remote") return PredictorKind::remote;
    return std::nullopt;
}

Operation Predictor::predict_example(const MmExample& example) {
    const Memory memory = Memory::from_texts(example.memory);
    return predict(memory, UserInfo{example.info, std::nullopt, Speaker::user});
}

Operation OraclePredictor::predict(const Memory&, const UserInfo&) {
    throw Error("oracle predictor has no gold label outside dataset evaluation");
}

bool is_negation_token(std::string_view token) {
    static constexpr std::array<std::string_view, 26> kNegations = {
        "not",   "no",     "never", "nt",     "dont",   "doesnt", "didnt",   "cant",     "cannot",
        "wont",  "isnt",   "arent", "wasnt",  "werent", "havent", "hasnt",   "hadnt",    "shouldnt",
        "wouldnt", "couldnt", "nor", "neither", "nobody", "nothing", "none", "nowhere"};
    return std::find(kNegations.begin(), kNegations.end(), token) != kNegations.end();
}

HeuristicPredictor::HeuristicPredictor(HeuristicConfig config) : config_(std::move(config)) {}

HeuristicPredictor::Analysis HeuristicPredictor::analyze(std::string_view text) {
    std::string key(text);
    {
        std::lock_guard lock(cache_mutex_);
        if (auto it = cache_.find(key); it != cache_.end()) return *it->second;
    }
    Analysis a;
    for (auto& token : tokenize(text)) {
        if (is_negation_token(token)) {
            a.negated = true;
        } else if (!config_.stopwords.contains(token)) {
            a.content.insert(std::move(token));
        }
    }
    auto shared = std::make_shared<const Analysis>(a);
    std::lock_guard lock(cache_mutex_);
    if (cache_.size() >= 65536) cache_.clear();
    cache_.emplace(std::move(key), std::move(shared));
    return a;
}

Operation HeuristicPredictor::predict(const Memory& memory, const UserInfo& info) {
    return predict_texts(memory.texts(), info.text);
}

Operation HeuristicPredictor::predict_texts(std::span<const std::string> memory, std::string_view info) {
    if (memory.empty()) return Operation::append();

    const Analysis incoming = analyze(info);
    const std::size_t n = memory.size();
    std::vector<double> overlap(n);
    std::vector<std::optional<PositiveSubtype>> relation(n);

    std::optional<std::size_t> contradicted;
    for (std::size_t i = 0; i < n; ++i) {
        const Analysis entry = analyze(memory[i]);
        overlap[i] = jaccard(entry.content, incoming.content);
        if (overlap[i] >= config_.contradiction_overlap && entry.negated != incoming.negated) {
            if (!contradicted || overlap[i] > overlap[*contradicted]) contradicted = i;
        }
        const bool related = overlap[i] >= config_.contradiction_overlap ||
                             is_subset(entry.content, incoming.content) ||
                             is_subset(incoming.content, entry.content);
        if (related) relation[i] = classify_positive_tokens(entry.content, incoming.content, config_.identity_jaccard);
    }
    if (contradicted) return Operation::replace(*contradicted);

    for (std::size_t i = 0; i < n; ++i) {
        if (relation[i] == PositiveSubtype::s1_entails_s2 || relation[i] == PositiveSubtype::almost_identical) {
            return Operation::pass();
        }
    }

    std::optional<std::size_t> entailed;
    for (std::size_t i = 0; i < n; ++i) {
        if (relation[i] != PositiveSubtype::s2_entails_s1) continue;
        if (!entailed || overlap[i] > overlap[*entailed]) entailed = i;
    }
    if (entailed) return Operation::replace(*entailed);
    return Operation::append();
}

InvalidTarget::InvalidTarget(long long target, std::size_t size)
    : Error("remote predictor returned REPLACE target " + std::to_string(target) + " for memory of size " +
            std::to_string(size)) {}

Json remote_request(std::span<const std::string> memory, std::string_view info) {
    Json body;
    body["memory"] = Json::array();
    for (const auto& m : memory) body["memory"].push_back(m);
    body["info"] = info;
    return body;
}

Operation parse_remote_response(std::string_view body, std::size_t memory_size) {
    Json doc;
    try {
        doc = Json::parse(body);
    } catch (const Json::parse_error& e) {
        throw BadResponse(std::string("response is not JSON: ") + e.what());
    }
    if (!doc.is_object()) throw BadResponse("response is not a JSON object");
    auto op = doc.find("op");
    if (op == doc.end() || !op->is_string()) throw BadResponse("response lacks string \"op\"");
    auto kind = parse_op_kind(op->get<std::string>());
    if (!kind) throw BadResponse("unknown op \"" + op->get<std::string>() + "\"");

    auto target = doc.find("target_index");
    const bool has_target = target != doc.end() && !target->is_null();
    if (*kind != OpKind::replace) {
        if (has_target) throw BadResponse("target_index given for non-replace op");
        return Operation::of(*kind);
    }
    if (!has_target) throw BadResponse("replace op without target_index");
    if (!target->is_number_integer()) throw BadResponse("target_index is not an integer");
    const auto index = target->get<long long>();
    if (index < 0 || static_cast<unsigned long long>(index) >= memory_size) throw InvalidTarget(index, memory_size);
    return Operation::replace(static_cast<std::size_t>(index));
}

namespace {

// Splits "http://host:port/base" into ("http://host:port", "/base").
std::pair<std::string, std::string> split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    const auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    const auto path_start = url.find('/', host_start);
    if (path_start == std::string::npos) return {url, ""};
    std::string path = url.substr(path_start);
    while (!path.empty() && path.back() == '/') path.pop_back();
    return {url.substr(0, path_start), path};
}

}  // namespace

RemotePredictor::RemotePredictor(RemoteEndpoint endpoint) : endpoint_(std::move(endpoint)) {
    auto [base, prefix] = split_url(endpoint_.url);
    path_prefix_ = std::move(prefix);
    client_ = std::make_unique<httplib::Client>(base);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(endpoint_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(endpoint_.timeout - secs);
    client_->set_connection_timeout(secs.count(), usecs.count());
    client_->set_read_timeout(secs.count(), usecs.count());
    client_->set_write_timeout(secs.count(), usecs.count());
    client_->set_keep_alive(true);
}

RemotePredictor::~RemotePredictor() = default;

Operation RemotePredictor::predict(const Memory& memory, const UserInfo& info) {
    return predict_texts(memory.texts(), info.text);
}

Operation RemotePredictor::predict_texts(std::span<const std::string> memory, std::string_view info) {
    const std::string body = remote_request(memory, info).dump();
    const std::string path = path_prefix_ + "/predict";
    std::string failure;
    for (int attempt = 0; attempt <= std::max(0, endpoint_.retries); ++attempt) {
        httplib::Result res;
        {
            std::lock_guard lock(mutex_);
            res = client_->Post(path, body, "application/json");
        }
        if (!res) {
            failure = httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) throw BadResponse("remote predictor answered HTTP " + std::to_string(res->status));
        return parse_remote_response(res->body, memory.size());
    }
    throw TransportError("remote predictor at " + endpoint_.url + " unreachable: " + failure);
}

std::unique_ptr<Predictor> make_predictor(PredictorKind kind, const std::optional<RemoteEndpoint>& endpoint,
                                          const HeuristicConfig& heuristic) {
    switch (kind) {
        case PredictorKind::oracle:      return std::make_unique<OraclePredictor>();
        case PredictorKind::heuristic:   return std::make_unique<HeuristicPredictor>(heuristic);
        case PredictorKind::append_only: return std::make_unique<AppendOnlyPredictor>();
        case PredictorKind::remote:
            if (!endpoint || endpoint->url.empty()) throw UnknownPredictor("remote predictor needs an endpoint");
            return std::make_unique<RemotePredictor>(*endpoint);
    }
    throw UnknownPredictor("unknown predictor kind");
}

}  // namespace memmgr
