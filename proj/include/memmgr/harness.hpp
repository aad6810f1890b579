#pragma once

#include "memmgr/core.hpp"
#include "memmgr/curation.hpp"
#include "memmgr/json.hpp"
#include "memmgr/predictor.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace memmgr {

struct Turn {
    Speaker speaker = Speaker::user;
    std::string utterance;
    // Pre-extracted user information for this utterance, if any.
    std::optional<std::string> info;

    bool operator==(const Turn&) const = default;
};

struct ConversationTrace {
    std::string trace_id;
    std::vector<Turn> turns;

    bool operator==(const ConversationTrace&) const = default;
};

class MalformedTrace : public Error {
public:
    MalformedTrace(std::size_t line_no, const std::string& why);
    std::size_t line_no() const { return line_no_; }

private:
    std::size_t line_no_;
};

// Raised by run_trace when the predictor or apply fails mid-trace.
class TraceError : public Error {
public:
    TraceError(std::string trace_id, std::size_t turn_index, const std::string& why);
    std::size_t turn_index() const { return turn_index_; }

private:
    std::size_t turn_index_;
};

class EmptyDataset : public Error {
public:
    EmptyDataset() : Error("cannot evaluate an empty dataset") {}
};

class MismatchedTraces : public Error {
public:
    using Error::Error;
};

// A managed predictor ended with more entries than append_only on the same
// trace, which the operation semantics rule out.
class HarnessInvariantViolation : public Error {
public:
    using Error::Error;
};

// {"trace_id":str,"turns":[{"speaker":"user"|"bot","utterance":str,"info":str|null}]}
Json to_json(const ConversationTrace& trace);
ConversationTrace trace_from_json(const Json& record);
std::vector<ConversationTrace> load_traces(std::istream& in);
void write_traces(std::span<const ConversationTrace> traces, std::ostream& out);

struct SimulationReport {
    std::string trace_id;
    std::string predictor;
    std::size_t total_turns = 0;
    // Memory size after each info-bearing turn.
    std::vector<std::size_t> per_turn_sizes;
    std::array<std::size_t, 3> op_counts{};  // by OpKind
    std::size_t dedup_count = 0;
    Memory final_memory;
    // 100 * final size / total turns (all speakers' turns counted).
    double entries_per_100_turns = 0.0;
    // Memory size after turn 100, 200, ...
    std::vector<std::size_t> checkpoint_sizes;

    std::size_t final_size() const { return final_memory.size(); }
    Json to_json() const;
};

SimulationReport run_trace(const ConversationTrace& trace, Predictor& predictor, const CoreConfig& config = {});

struct OpMetrics {
    std::size_t total = 0;
    double accuracy = 0.0;  // kind-level: trace(confusion) / total
    std::array<double, 3> precision{};
    std::array<double, 3> recall{};
    std::array<double, 3> f1{};
    double macro_f1 = 0.0;
    // confusion[gold][predicted], indexed by OpKind.
    std::array<std::array<std::size_t, 3>, 3> confusion{};
    // Kind and, for REPLACE, target index both correct.
    double strict_accuracy = 0.0;
    // Over gold REPLACE examples: kind and target correct / kind correct.
    double strict_replace_accuracy = 0.0;
    double lenient_replace_accuracy = 0.0;

    Json to_json() const;
    std::string to_table() const;
};

OpMetrics evaluate_ops(std::span<const MmExample> dataset, Predictor& predictor);

struct PredictorSummary {
    std::string predictor;
    std::size_t traces = 0;
    std::size_t total_turns = 0;
    std::size_t total_final_entries = 0;
    double mean_final_size = 0.0;
    double entries_per_100_turns = 0.0;
    // 1 - rate / append_only rate; absent without an append_only run.
    std::optional<double> reduction_vs_append_only;
};

struct ComparisonTable {
    std::vector<PredictorSummary> rows;

    Json to_json() const;
    std::string to_text() const;
};

// Groups reports by predictor. Every predictor must cover the same traces.
ComparisonTable compare(std::span<const SimulationReport> reports);

// Sentences used when no pool file is given: single-slot templates whose
// fillers do not overlap, so fresh sentences rarely relate to each other.
std::vector<std::string> default_sentence_pool();

// Negated form used for synthetic contradictions.
std::string negate_sentence(std::string_view sentence);

struct SynthOptions {
    std::uint64_t seed = 0;
    std::size_t n_turns = 100;
    double contradiction_rate = 0.0;
    std::string trace_id;
};

// Every turn carries info. With probability 1 - contradiction_rate the info is
// a fresh pool sentence; otherwise an earlier fact is restated, either
// verbatim or with its polarity flipped.
ConversationTrace synth_trace(const SynthOptions& options, std::span<const std::string> pool);

}  // namespace memmgr
