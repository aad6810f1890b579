#pragma once

#include "memmgr/core.hpp"
#include "memmgr/curation.hpp"
#include "memmgr/json.hpp"
#include "memmgr/predictor.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace memmgr {

// Settings shared by every subcommand. Resolution order: built-in defaults,
// then the JSON config file (--config), then command-line flags.
struct CliConfig {
    std::uint64_t seed = 0;
    bool verbose = false;

    CurationConfig curation;
    std::string stopwords_path;  // empty: built-in list
    HeuristicConfig heuristic;
    CoreConfig core;

    std::vector<std::string> predictors{"heuristic", "append_only"};
    double contradiction_rate = 0.5;
    std::size_t synth_turns = 1000;
    std::size_t synth_traces = 1;

    std::string host = "127.0.0.1";
    int port = 8080;
    std::string data_dir;

    std::optional<RemoteEndpoint> remote;

    Json to_json() const;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Overlays a config document onto base. Recognized layout:
// {"seed", "verbose",
//  "curation": {"target_size", "max_distractors", "identity_jaccard", "strict", "stopwords",
//               "mapping": {"positive_s1_entails_s2", "positive_s2_entails_s1",
//                           "positive_almost_identical", "negative", "neutral"}},
//  "heuristic": {"contradiction_overlap", "identity_jaccard"},
//  "core": {"dedup_on_append"},
//  "simulate": {"predictors", "contradiction_rate", "synth_turns", "synth_traces"},
//  "service": {"host", "port", "data_dir"},
//  "remote": {"url", "timeout_ms", "retries"}}
CliConfig apply_config_document(const Json& doc, CliConfig base = {});

// Interactive loop: one info sentence per line; ":mem", ":reset", ":quit".
void run_repl(std::istream& in, std::ostream& out, Predictor& predictor, const CoreConfig& core = {});

// Exit codes: 0 success, 1 runtime error, 2 usage error.
int run_cli(int argc, char** argv, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace memmgr
