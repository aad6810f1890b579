#pragma once

#include "memmgr/core.hpp"
#include "memmgr/curation.hpp"
#include "memmgr/text.hpp"

#include <chrono>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>

namespace httplib {
class Client;
}

namespace memmgr {

enum class PredictorKind { oracle, heuristic, append_only, remote };

std::string_view to_string(PredictorKind k);
std::optional<PredictorKind> parse_predictor_kind(std::string_view s);

// Model(M_t, p_t) -> op. Implementations must return an op that is valid for
// the memory they were given.
class Predictor {
public:
    virtual ~Predictor() = default;

    virtual std::string_view name() const = 0;
    virtual Operation predict(const Memory& memory, const UserInfo& info) = 0;

    // Prediction for a curated example. Defaults to predict() on the example's
    // memory; the oracle overrides it to read the gold label.
    virtual Operation predict_example(const MmExample& example);
};

// Returns the gold operation. Only usable where gold labels exist.
class OraclePredictor final : public Predictor {
public:
    std::string_view name() const override { return "oracle"; }
    Operation predict(const Memory& memory, const UserInfo& info) override;
    Operation predict_example(const MmExample& example) override { return example.op; }
};

// The unmanaged baseline: memory only ever grows.
class AppendOnlyPredictor final : public Predictor {
public:
    std::string_view name() const override { return "append_only"; }
    Operation predict(const Memory&, const UserInfo&) override { return Operation::append(); }
};

struct HeuristicConfig {
    // Minimum overlap of non-negated content tokens for two sentences to be
    // about the same thing.
    double contradiction_overlap = 0.5;
    double identity_jaccard = 0.9;
    StopwordList stopwords = StopwordList::english_v1();
};

// Tokens that mark a sentence as negated, in canonical form ("don't" -> "dont",
// "do n't" -> "nt").
bool is_negation_token(std::string_view token);

// Rule cascade over token overlap:
//   1. empty memory                               -> APPEND
//   2. some entry contradicts info (shared content,
//      negation on exactly one side)              -> REPLACE best-overlap entry
//   3. some related entry entails info            -> PASS
//   4. info entails some related entry            -> REPLACE best-overlap entry
//   5. otherwise                                  -> APPEND
// Ties go to the lowest index.
class HeuristicPredictor final : public Predictor {
public:
    explicit HeuristicPredictor(HeuristicConfig config = {});

    std::string_view name() const override { return "heuristic"; }
    Operation predict(const Memory& memory, const UserInfo& info) override;
    Operation predict_texts(std::span<const std::string> memory, std::string_view info);

    const HeuristicConfig& config() const { return config_; }

private:
    struct Analysis {
        TokenSet content;  // normalized tokens minus negation tokens
        bool negated = false;
    };

    Analysis analyze(std::string_view text);

    HeuristicConfig config_;
    std::mutex cache_mutex_;
    std::unordered_map<std::string, std::shared_ptr<const Analysis>> cache_;
};

struct RemoteEndpoint {
    // Base URL, e.g. "http://127.0.0.1:9000". Requests go to <url>/predict.
    std::string url;
    std::chrono::milliseconds timeout{10000};
    int retries = 0;
};

class TransportError : public Error {
public:
    using Error::Error;
};

class BadResponse : public Error {
public:
    using Error::Error;
};

class InvalidTarget : public Error {
public:
    InvalidTarget(long long target, std::size_t size);
};

// Request body for the remote wire protocol: {"memory":[str],"info":str}.
Json remote_request(std::span<const std::string> memory, std::string_view info);
// Validates a response body against the wire schema and the memory size.
// Throws BadResponse or InvalidTarget.
Operation parse_remote_response(std::string_view body, std::size_t memory_size);

// Delegates to an external model over HTTP. Out-of-range targets are
// rejected, never clamped.
class RemotePredictor final : public Predictor {
public:
    explicit RemotePredictor(RemoteEndpoint endpoint);
    ~RemotePredictor() override;

    std::string_view name() const override { return "remote"; }
    Operation predict(const Memory& memory, const UserInfo& info) override;
    Operation predict_texts(std::span<const std::string> memory, std::string_view info);

    const RemoteEndpoint& endpoint() const { return endpoint_; }

private:
    RemoteEndpoint endpoint_;
    std::string path_prefix_;
    std::mutex mutex_;
    std::unique_ptr<httplib::Client> client_;
};

class UnknownPredictor : public Error {
public:
    using Error::Error;
};

// Builds a predictor by kind; remote requires an endpoint. The oracle only
// works through predict_example.
std::unique_ptr<Predictor> make_predictor(PredictorKind kind, const std::optional<RemoteEndpoint>& endpoint = {},
                                          const HeuristicConfig& heuristic = {});

}  // namespace memmgr
