#pragma once

#include "memmgr/core.hpp"
#include "memmgr/json.hpp"
#include "memmgr/text.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace memmgr {

enum class DnliLabel { positive, negative, neutral };

std::string_view to_string(DnliLabel l);
std::optional<DnliLabel> parse_dnli_label(std::string_view s);

struct DnliTriple {
    std::string s1;
    std::string s2;
    DnliLabel label = DnliLabel::neutral;
    // 0-based line number in the source file.
    std::size_t origin_index = 0;
};

enum class PositiveSubtype { s1_entails_s2, s2_entails_s1, almost_identical };

std::string_view to_string(PositiveSubtype s);
std::optional<PositiveSubtype> parse_positive_subtype(std::string_view s);

// Label (and positive subtype) to operation. Defaults reproduce the DNLI
// reinterpretation: positive splits into PASS / REPLACE s1 / APPEND,
// negative is REPLACE s1, neutral is APPEND.
struct LabelMapping {
    OpKind positive_s1_entails_s2 = OpKind::pass;
    OpKind positive_s2_entails_s1 = OpKind::replace;
    OpKind positive_almost_identical = OpKind::append;
    OpKind negative = OpKind::replace;
    OpKind neutral = OpKind::append;

    OpKind lookup(DnliLabel label, std::optional<PositiveSubtype> subtype) const;
};

using PositiveClassifier = std::function<PositiveSubtype(std::string_view s1, std::string_view s2)>;

struct CurationConfig {
    std::uint64_t seed = 0;
    std::size_t target_size = 90000;
    std::size_t max_distractors = 9;
    double identity_jaccard = 0.9;
    LabelMapping mapping;
    StopwordList stopwords = StopwordList::english_v1();
    // Abort on the first malformed line instead of skipping it.
    bool strict = false;
    // Replaces the token-overlap subtype heuristic when set.
    PositiveClassifier classifier;
};

struct ExampleMeta {
    DnliLabel source_label = DnliLabel::neutral;
    std::optional<PositiveSubtype> subtype;
    std::size_t origin_index = 0;
    std::uint64_t seed = 0;

    bool operator==(const ExampleMeta&) const = default;
};

// One curated <M, s2, op> training example.
struct MmExample {
    std::vector<std::string> memory;
    std::string info;
    Operation op = Operation::append();
    std::size_t s1_index = 0;
    ExampleMeta meta;

    bool operator==(const MmExample&) const = default;
};

class MalformedRecord : public Error {
public:
    MalformedRecord(std::size_t line_no, const std::string& why);
    std::size_t line_no() const { return line_no_; }

private:
    std::size_t line_no_;
};

class MissingSubtype : public Error {
public:
    MissingSubtype() : Error("positive triple requires a subtype") {}
};

class PoolExhausted : public Error {
public:
    PoolExhausted(std::size_t wanted, std::size_t available);
};

class InsufficientData : public Error {
public:
    using Error::Error;
};

class MalformedExample : public Error {
public:
    using Error::Error;
};

struct DnliParseResult {
    std::vector<DnliTriple> triples;
    std::size_t lines = 0;
    std::size_t malformed_count = 0;
    std::size_t unknown_label_count = 0;
};

// Line-delimited JSON with keys sentence1, sentence2, label. Blank lines are
// ignored. Unknown labels are skipped and counted. Unparseable lines are
// skipped and counted unless strict, which throws MalformedRecord.
DnliParseResult parse_dnli(std::istream& in, bool strict = false);

PositiveSubtype classify_positive_tokens(const TokenSet& t1, const TokenSet& t2, double identity_jaccard);
PositiveSubtype classify_positive(std::string_view s1, std::string_view s2, const CurationConfig& config);

OpKind relabel(const DnliTriple& triple, std::optional<PositiveSubtype> subtype,
               const LabelMapping& mapping = {});

// Sentences that may pad a memory around s1, deduplicated by canonical form.
class DistractorPool {
public:
    DistractorPool() = default;
    explicit DistractorPool(std::span<const std::string> sentences);

    // Every s1 and s2 of the neutral-labeled triples.
    static DistractorPool from_neutral(std::span<const DnliTriple> triples);

    std::size_t size() const { return sentences_.size(); }
    const std::string& sentence(std::size_t i) const { return sentences_[i]; }
    const std::string& key(std::size_t i) const { return keys_[i]; }
    std::optional<std::size_t> find(const std::string& canonical) const;

private:
    std::vector<std::string> sentences_;
    std::vector<std::string> keys_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct LabeledTriple {
    DnliTriple triple;
    std::optional<PositiveSubtype> subtype;
    OpKind op = OpKind::append;
};

// Draws k ~ U{0..max_distractors} distractors without replacement (none
// normalized-equal to s1 or s2), then puts s1 at a uniform position among the
// k+1 slots. All randomness comes from record_seed.
MmExample assemble_example(const LabeledTriple& labeled, const DistractorPool& pool, std::uint64_t record_seed,
                           const CurationConfig& config);

struct BuildStats {
    std::size_t input_lines = 0;
    std::size_t malformed_count = 0;
    std::size_t unknown_label_count = 0;
    std::array<std::size_t, 3> label_counts{};    // by DnliLabel
    std::array<std::size_t, 3> subtype_counts{};  // by PositiveSubtype
    std::array<std::size_t, 3> pool_sizes{};      // by OpKind
    std::array<std::size_t, 3> output_counts{};   // by OpKind
    std::size_t requested_size = 0;
    std::size_t effective_target = 0;
    std::size_t per_op = 0;
    std::size_t distractor_pool_size = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> warnings;

    Json to_json() const;
};

struct BuildResult {
    std::vector<MmExample> examples;
    BuildStats stats;
};

// parse -> subtype -> relabel -> per-op pools -> balanced seeded downsample ->
// assemble, emitted in origin_index order.
BuildResult build_dataset(std::istream& dnli, const CurationConfig& config);

enum class ExportFormat { analysis_jsonl, seq2seq_text };

std::optional<ExportFormat> parse_export_format(std::string_view s);

Json to_json(const MmExample& example);
MmExample example_from_json(const Json& record);

// "memory: 1: <m1> | 2: <m2> new: <info>"
std::string seq2seq_input(const MmExample& example);
// "pass", "append", or "replace <1-based index>"
std::string seq2seq_target(const Operation& op);

void export_examples(std::span<const MmExample> examples, ExportFormat format, std::ostream& out);
std::vector<MmExample> read_analysis_jsonl(std::istream& in);

}  // namespace memmgr
