#include "memmgr/cli.hpp"

#include "memmgr/harness.hpp"
#include "memmgr/rng.hpp"
#include "memmgr/service.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <set>
#include <sstream>
#include <thread>

#include <pthread.h>

namespace memmgr {

namespace {

OpKind op_kind_or_throw(const std::string& name) {
    auto kind = parse_op_kind(name);
    if (!kind) throw ConfigError("unknown operation \"" + name + "\" in label mapping");
    return *kind;
}

template <typename T>
void read_if(const Json& obj, const char* key, T& target) {
    if (!obj.contains(key)) return;
    try {
        target = obj.at(key).get<T>();
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("config key \"") + key + "\": " + e.what());
    }
}

// Typos in a config file should fail loudly rather than silently fall back
// to defaults, so every section lists the keys it understands.
const Json& section(const Json& doc, const char* key, std::initializer_list<std::string_view> allowed) {
    static const Json empty = Json::object();
    auto it = doc.find(key);
    if (it == doc.end()) return empty;
    if (!it->is_object()) throw ConfigError(std::string("config section \"") + key + "\" must be an object");
    for (const auto& [name, value] : it->items()) {
        if (std::find(allowed.begin(), allowed.end(), name) == allowed.end())
            throw ConfigError(std::string("unknown config key \"") + key + "." + name + "\"");
    }
    return *it;
}

}  // namespace

Json CliConfig::to_json() const {
    Json out;
    out["seed"] = seed;
    out["verbose"] = verbose;
    const auto& m = curation.mapping;
    out["curation"] = {{"target_size", curation.target_size},
                       {"max_distractors", curation.max_distractors},
                       {"identity_jaccard", curation.identity_jaccard},
                       {"strict", curation.strict},
                       {"stopwords", stopwords_path.empty() ? "builtin:stopwords_en_v1" : stopwords_path},
                       {"mapping",
                        {{"positive_s1_entails_s2", to_string(m.positive_s1_entails_s2)},
                         {"positive_s2_entails_s1", to_string(m.positive_s2_entails_s1)},
                         {"positive_almost_identical", to_string(m.positive_almost_identical)},
                         {"negative", to_string(m.negative)},
                         {"neutral", to_string(m.neutral)}}}};
    out["heuristic"] = {{"contradiction_overlap", heuristic.contradiction_overlap},
                        {"identity_jaccard", heuristic.identity_jaccard}};
    out["core"] = {{"dedup_on_append", core.dedup_on_append}};
    out["simulate"] = {{"predictors", predictors},
                       {"contradiction_rate", contradiction_rate},
                       {"synth_turns", synth_turns},
                       {"synth_traces", synth_traces}};
    out["service"] = {{"host", host}, {"port", port}, {"data_dir", data_dir}};
    if (remote) {
        out["remote"] = {{"url", remote->url}, {"timeout_ms", remote->timeout.count()}, {"retries", remote->retries}};
    } else {
        out["remote"] = nullptr;
    }
    return out;
}

CliConfig apply_config_document(const Json& doc, CliConfig base) {
    if (!doc.is_object()) throw ConfigError("config document must be a JSON object");
    static const std::set<std::string> kKnown = {"seed", "verbose", "curation", "heuristic", "core",
                                                 "simulate", "service", "remote"};
    for (const auto& [key, value] : doc.items()) {
        if (!kKnown.count(key)) throw ConfigError("unknown config key \"" + key + "\"");
    }
    CliConfig c = std::move(base);
    read_if(doc, "seed", c.seed);
    read_if(doc, "verbose", c.verbose);

    const auto& cur = section(doc, "curation", {"target_size", "max_distractors", "identity_jaccard", "strict",
                                                "stopwords", "mapping"});
    read_if(cur, "target_size", c.curation.target_size);
    read_if(cur, "max_distractors", c.curation.max_distractors);
    read_if(cur, "identity_jaccard", c.curation.identity_jaccard);
    read_if(cur, "strict", c.curation.strict);
    read_if(cur, "stopwords", c.stopwords_path);
    const auto& mapping = section(cur, "mapping", {"positive_s1_entails_s2", "positive_s2_entails_s1",
                                                  "positive_almost_identical", "negative", "neutral"});
    auto map_field = [&](const char* key, OpKind& target) {
        std::string name;
        read_if(mapping, key, name);
        if (!name.empty()) target = op_kind_or_throw(name);
    };
    map_field("positive_s1_entails_s2", c.curation.mapping.positive_s1_entails_s2);
    map_field("positive_s2_entails_s1", c.curation.mapping.positive_s2_entails_s1);
    map_field("positive_almost_identical", c.curation.mapping.positive_almost_identical);
    map_field("negative", c.curation.mapping.negative);
    map_field("neutral", c.curation.mapping.neutral);

    const auto& heu = section(doc, "heuristic", {"contradiction_overlap", "identity_jaccard"});
    read_if(heu, "contradiction_overlap", c.heuristic.contradiction_overlap);
    read_if(heu, "identity_jaccard", c.heuristic.identity_jaccard);

    read_if(section(doc, "core", {"dedup_on_append"}), "dedup_on_append", c.core.dedup_on_append);

    const auto& sim = section(doc, "simulate", {"predictors", "contradiction_rate", "synth_turns", "synth_traces"});
    read_if(sim, "predictors", c.predictors);
    read_if(sim, "contradiction_rate", c.contradiction_rate);
    read_if(sim, "synth_turns", c.synth_turns);
    read_if(sim, "synth_traces", c.synth_traces);

    const auto& svc = section(doc, "service", {"host", "port", "data_dir"});
    read_if(svc, "host", c.host);
    read_if(svc, "port", c.port);
    read_if(svc, "data_dir", c.data_dir);

    if (doc.contains("remote") && !doc.at("remote").is_null()) {
        const auto& rem = section(doc, "remote", {"url", "timeout_ms", "retries"});
        RemoteEndpoint ep = c.remote.value_or(RemoteEndpoint{});
        read_if(rem, "url", ep.url);
        std::int64_t timeout_ms = ep.timeout.count();
        read_if(rem, "timeout_ms", timeout_ms);
        ep.timeout = std::chrono::milliseconds(timeout_ms);
        read_if(rem, "retries", ep.retries);
        c.remote = ep;
    }
    return c;
}

namespace {

// Memory listing shown by the REPL, numbered from 1.
void print_memory(std::ostream& out, const Memory& memory) {
    if (memory.empty()) {
        out << "  (memory empty)\n";
        return;
    }
    for (std::size_t i = 0; i < memory.size(); ++i) out << "  " << i + 1 << ". " << memory[i].text << '\n';
}

std::string display_op(const Operation& op) {
    if (op.kind() == OpKind::replace) return "REPLACE " + std::to_string(*op.target_index() + 1);
    return describe(op);
}

}  // namespace

void run_repl(std::istream& in, std::ostream& out, Predictor& predictor, const CoreConfig& core) {
    Memory memory;
    TurnIndex turn = 0;
    std::string line;
    while (std::getline(in, line)) {
        const auto text = trim(line);
        if (text.empty()) continue;
        if (text == ":quit") break;
        if (text == ":mem") {
            print_memory(out, memory);
            continue;
        }
        if (text == ":reset") {
            memory = Memory{};
            turn = 0;
            out << "memory cleared\n";
            continue;
        }
        const UserInfo info{std::string(text), turn, Speaker::user};
        try {
            const Operation op = predictor.predict(memory, info);
            auto applied = apply(std::move(memory), op, info, turn, core);
            memory = std::move(applied.memory);
            out << (applied.deduplicated ? "PASS (duplicate)" : display_op(op)) << '\n';
        } catch (const std::exception& e) {
            out << "error: " << e.what() << '\n';
        }
        ++turn;
        print_memory(out, memory);
    }
}

namespace {

struct Streams {
    std::istream& in;
    std::ostream& out;
    std::ostream& err;
};

class RuntimeFailure : public Error {
public:
    using Error::Error;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw RuntimeFailure("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeFailure("cannot write " + path);
    return out;
}

void log_config(const CliConfig& config, std::ostream& err) {
    err << "memmgr: resolved config " << config.to_json().dump() << '\n';
}

int cmd_build_dataset(const CliConfig& config, const std::string& input, const std::string& output,
                      const std::string& format_name, std::string stats_path, Streams io) {
    auto format = parse_export_format(format_name);
    if (!format) throw ConfigError("unknown format \"" + format_name + "\"");
    if (!std::filesystem::exists(input)) throw RuntimeFailure("input file not found: " + input);
    std::ifstream in(input, std::ios::binary);
    if (!in) throw RuntimeFailure("cannot open " + input);

    const auto result = build_dataset(in, config.curation);
    for (const auto& w : result.stats.warnings) io.err << "memmgr: warning: " << w << '\n';

    {
        auto out = open_output(output);
        export_examples(result.examples, *format, out);
        if (!out) throw RuntimeFailure("write failed: " + output);
    }
    if (stats_path.empty()) stats_path = output + ".stats.json";
    {
        auto out = open_output(stats_path);
        out << result.stats.to_json().dump(2) << '\n';
    }
    const auto& counts = result.stats.output_counts;
    io.out << "wrote " << result.examples.size() << " examples to " << output << " (append "
           << counts[index_of(OpKind::append)] << ", pass " << counts[index_of(OpKind::pass)] << ", replace "
           << counts[index_of(OpKind::replace)] << "); stats in " << stats_path << '\n';
    return 0;
}

std::vector<PredictorKind> resolve_predictors(const std::vector<std::string>& names) {
    std::vector<PredictorKind> kinds;
    for (const auto& n : names) {
        auto kind = parse_predictor_kind(n);
        if (!kind) throw ConfigError("unknown predictor \"" + n + "\"");
        kinds.push_back(*kind);
    }
    return kinds;
}

std::vector<std::string> load_pool(const std::string& path) {
    if (path.empty()) return default_sentence_pool();
    std::istringstream in(read_file(path));
    std::vector<std::string> pool;
    for (std::string line; std::getline(in, line);) {
        if (!is_blank(line)) pool.emplace_back(trim(line));
    }
    return pool;
}

int cmd_simulate(const CliConfig& config, const std::string& traces_path, bool synth, const std::string& pool_path,
                 const std::string& output, const std::string& save_traces, Streams io) {
    std::vector<ConversationTrace> traces;
    if (!traces_path.empty()) {
        if (!std::filesystem::exists(traces_path)) throw RuntimeFailure("trace file not found: " + traces_path);
        std::istringstream in(read_file(traces_path));
        traces = load_traces(in);
    } else if (synth) {
        const auto pool = load_pool(pool_path);
        for (std::size_t i = 0; i < config.synth_traces; ++i) {
            SynthOptions opts;
            opts.seed = derive_seed(config.seed, i);
            opts.n_turns = config.synth_turns;
            opts.contradiction_rate = config.contradiction_rate;
            opts.trace_id = "synth-" + std::to_string(i);
            traces.push_back(synth_trace(opts, pool));
        }
    } else {
        throw ConfigError("simulate needs --traces or --synth");
    }
    if (!save_traces.empty()) {
        auto out = open_output(save_traces);
        write_traces(traces, out);
    }

    std::vector<SimulationReport> reports;
    for (PredictorKind kind : resolve_predictors(config.predictors)) {
        if (kind == PredictorKind::oracle) throw ConfigError("the oracle predictor has no gold labels on traces");
        auto predictor = make_predictor(kind, config.remote, config.heuristic);
        for (const auto& trace : traces) reports.push_back(run_trace(trace, *predictor, config.core));
    }
    const auto table = compare(reports);

    if (!output.empty()) {
        Json doc;
        doc["config"] = config.to_json();
        doc["reports"] = Json::array();
        for (const auto& r : reports) doc["reports"].push_back(r.to_json());
        doc["comparison"] = table.to_json();
        auto out = open_output(output);
        out << doc.dump() << '\n';
    }
    io.out << table.to_text();
    return 0;
}

int cmd_eval_ops(const CliConfig& config, const std::string& dataset_path, const std::string& predictor_name,
                 const std::string& output, Streams io) {
    if (!std::filesystem::exists(dataset_path)) throw RuntimeFailure("dataset file not found: " + dataset_path);
    std::istringstream in(read_file(dataset_path));
    const auto dataset = read_analysis_jsonl(in);
    const auto kinds = resolve_predictors({predictor_name});
    auto predictor = make_predictor(kinds.front(), config.remote, config.heuristic);
    const auto metrics = evaluate_ops(dataset, *predictor);

    Json doc = metrics.to_json();
    doc["predictor"] = predictor_name;
    if (!output.empty()) {
        auto out = open_output(output);
        out << doc.dump(2) << '\n';
    }
    io.out << doc.dump() << '\n' << "predictor " << predictor_name << '\n' << metrics.to_table();
    return 0;
}

int cmd_serve(const CliConfig& config, Streams io) {
    SessionStoreOptions options;
    if (!config.data_dir.empty()) options.persist_dir = config.data_dir;
    options.remote = config.remote;
    options.heuristic = config.heuristic;
    options.core = config.core;
    SessionStore store(std::move(options));
    MemoryService service(store);

    // Signals are taken synchronously by this thread; the server threads
    // inherit the blocked mask.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    const int port = service.bind(config.host, config.port);
    if (port < 0) throw RuntimeFailure("cannot bind " + config.host + ":" + std::to_string(config.port));
    std::thread server([&] { service.listen(); });
    service.wait_until_ready();
    io.out << "memmgr: serving on " << config.host << ":" << port << " (" << store.size() << " sessions loaded)"
           << std::endl;

    int received = 0;
    sigwait(&signals, &received);
    io.err << "memmgr: signal " << received << ", shutting down\n";
    service.stop();
    server.join();
    return 0;
}

}  // namespace

int run_cli(int argc, char** argv, std::istream& in, std::ostream& out, std::ostream& err) {
    CLI::App app{"Memory management for long-term dialogue agents", "memmgr"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::uint64_t seed = 0;
    bool verbose = false;
    auto* seed_opt = app.add_option("--seed", seed, "Seed for every random choice");
    app.add_option("--config", config_path, "JSON config file");
    app.add_flag("--verbose", verbose, "Extra diagnostics on stderr");

    // Flags that override config values only when given.
    std::string endpoint;
    std::int64_t timeout_ms = 10000;
    int retries = 0;
    bool dedup = false;

    auto* build = app.add_subcommand("build-dataset", "Curate memory-operation examples from DNLI");
    std::string input, output, format = "analysis_jsonl", stats_path;
    std::size_t target_size = 0, max_distractors = 0;
    double identity_jaccard = 0.0;
    bool strict = false;
    std::string stopwords;
    build->add_option("--input", input, "DNLI line-delimited JSON")->required();
    build->add_option("--output", output, "Output file")->required();
    build->add_option("--format", format, "analysis_jsonl or seq2seq_text");
    auto* target_opt = build->add_option("--target-size", target_size, "Total examples (truncated to a multiple of 3)");
    auto* distractor_opt = build->add_option("--max-distractors", max_distractors, "Largest number of padding sentences");
    auto* jaccard_opt = build->add_option("--identity-jaccard", identity_jaccard, "Overlap for almost-identical pairs");
    auto* strict_opt = build->add_flag("--strict", strict, "Abort on malformed input lines");
    auto* stopwords_opt = build->add_option("--stopwords", stopwords, "Stopword list file");
    build->add_option("--stats", stats_path, "Stats file (default <output>.stats.json)");

    auto* simulate = app.add_subcommand("simulate", "Replay conversations and measure memory growth");
    std::string traces_path, pool_path, sim_output, save_traces, predictors_csv;
    std::size_t synth_turns = 0, synth_traces = 0;
    double contradiction_rate = 0.0;
    simulate->add_option("--traces", traces_path, "Trace file (line-delimited JSON)");
    auto* synth_opt = simulate->add_option("--synth", synth_turns, "Generate synthetic traces with this many turns");
    auto* synth_count_opt = simulate->add_option("--synth-traces", synth_traces, "Number of synthetic traces");
    auto* rate_opt = simulate->add_option("--contradiction-rate", contradiction_rate, "Share of restated facts")
                         ->check(CLI::Range(0.0, 1.0));
    simulate->add_option("--pool", pool_path, "Sentence pool for synthetic traces, one per line");
    auto* predictors_opt = simulate->add_option("--predictors", predictors_csv, "Comma-separated predictor kinds");
    simulate->add_option("--output", sim_output, "Report JSON file");
    simulate->add_option("--save-traces", save_traces, "Write the replayed traces here");
    auto* sim_endpoint = simulate->add_option("--endpoint", endpoint, "Remote predictor base URL");
    auto* sim_dedup = simulate->add_flag("--dedup", dedup, "Treat duplicate APPENDs as PASS");

    auto* eval = app.add_subcommand("eval-ops", "Score a predictor on a curated dataset");
    std::string dataset_path, predictor_name = "heuristic", eval_output;
    eval->add_option("--dataset", dataset_path, "analysis_jsonl dataset")->required();
    eval->add_option("--predictor", predictor_name, "oracle, heuristic, append_only, or remote");
    eval->add_option("--output", eval_output, "Metrics JSON file");
    auto* eval_endpoint = eval->add_option("--endpoint", endpoint, "Remote predictor base URL");

    auto* serve = app.add_subcommand("serve", "Run the session memory HTTP service");
    std::string host, data_dir;
    int port = 0;
    auto* host_opt = serve->add_option("--host", host, "Bind address");
    auto* port_opt = serve->add_option("--port", port, "Bind port (0 picks a free port)");
    auto* dir_opt = serve->add_option("--data-dir", data_dir, "Directory for session snapshots");
    auto* serve_endpoint = serve->add_option("--endpoint", endpoint, "Remote predictor base URL");
    auto* timeout_opt = serve->add_option("--timeout-ms", timeout_ms, "Remote predictor timeout");
    auto* retries_opt = serve->add_option("--retries", retries, "Remote predictor retries");
    auto* serve_dedup = serve->add_flag("--dedup", dedup, "Treat duplicate APPENDs as PASS");

    auto* repl = app.add_subcommand("repl", "Type information sentences and watch the memory");
    std::string repl_predictor = "heuristic";
    repl->add_option("--predictor", repl_predictor, "heuristic, append_only, or remote");
    auto* repl_endpoint = repl->add_option("--endpoint", endpoint, "Remote predictor base URL");
    auto* repl_dedup = repl->add_flag("--dedup", dedup, "Treat duplicate APPENDs as PASS");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return 2;
    }

    const Streams io{in, out, err};
    CliConfig config;
    try {
        if (!config_path.empty()) {
            Json doc;
            try {
                doc = Json::parse(read_file(config_path));
            } catch (const Json::parse_error& e) {
                throw ConfigError("config file " + config_path + " is not valid JSON: " + e.what());
            }
            config = apply_config_document(doc, config);
        }
        if (seed_opt->count()) config.seed = seed;
        if (verbose) config.verbose = true;
        config.curation.seed = config.seed;
        if (target_opt->count()) config.curation.target_size = target_size;
        if (distractor_opt->count()) config.curation.max_distractors = max_distractors;
        if (jaccard_opt->count()) config.curation.identity_jaccard = identity_jaccard;
        if (strict_opt->count()) config.curation.strict = strict;
        if (stopwords_opt->count()) config.stopwords_path = stopwords;
        if (synth_opt->count()) config.synth_turns = synth_turns;
        if (synth_count_opt->count()) config.synth_traces = synth_traces;
        if (rate_opt->count()) config.contradiction_rate = contradiction_rate;
        if (predictors_opt->count()) {
            config.predictors.clear();
            std::istringstream csv(predictors_csv);
            for (std::string name; std::getline(csv, name, ',');) {
                if (!is_blank(name)) config.predictors.emplace_back(trim(name));
            }
        }
        if (host_opt->count()) config.host = host;
        if (port_opt->count()) config.port = port;
        if (dir_opt->count()) config.data_dir = data_dir;
        for (auto* opt : {sim_endpoint, eval_endpoint, serve_endpoint, repl_endpoint}) {
            if (opt->count()) {
                if (!config.remote) config.remote = RemoteEndpoint{};
                config.remote->url = endpoint;
            }
        }
        if (config.remote && timeout_opt->count()) config.remote->timeout = std::chrono::milliseconds(timeout_ms);
        if (config.remote && retries_opt->count()) config.remote->retries = retries;
        if (sim_dedup->count() || serve_dedup->count() || repl_dedup->count()) config.core.dedup_on_append = true;
        if (!config.stopwords_path.empty()) {
            config.curation.stopwords = StopwordList::load(config.stopwords_path);
            config.heuristic.stopwords = config.curation.stopwords;
        }
    } catch (const ConfigError& e) {
        err << "memmgr: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "memmgr: " << e.what() << '\n';
        return 1;
    }

    log_config(config, err);
    try {
        if (*build) return cmd_build_dataset(config, input, output, format, stats_path, io);
        if (*simulate) {
            return cmd_simulate(config, traces_path, synth_opt->count() > 0 || synth_count_opt->count() > 0, pool_path,
                                sim_output, save_traces, io);
        }
        if (*eval) return cmd_eval_ops(config, dataset_path, predictor_name, eval_output, io);
        if (*serve) return cmd_serve(config, io);
        if (*repl) {
            const auto kinds = resolve_predictors({repl_predictor});
            auto predictor = make_predictor(kinds.front(), config.remote, config.heuristic);
            out << "memmgr repl: one sentence per line; :mem, :reset, :quit\n";
            run_repl(in, out, *predictor, config.core);
            return 0;
        }
    } catch (const ConfigError& e) {
        err << "memmgr: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "memmgr: error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace memmgr
