#include "memmgr/curation.hpp"

#include "memmgr/rng.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <unordered_set>

namespace memmgr {

std::string_view to_string(DnliLabel l) {
    switch (l) {
        case DnliLabel::positive: return "positive";
        case DnliLabel::negative: return "negative";
        case DnliLabel::neutral:  return "neutral";
    }
    return "neutral";
}

std::optional<DnliLabel> parse_dnli_label(std::string_view s) {
    if (s == "positive") return DnliLabel::positive;
    if (s == "negative") return DnliLabel::negative;
    if (s == "neutral") return DnliLabel::neutral;
    return std::nullopt;
}

std::string_view to_string(PositiveSubtype s) {
    switch (s) {
        case PositiveSubtype::s1_entails_s2:    return "s1_entails_s2";
        case PositiveSubtype::s2_entails_s1:    return "s2_entails_s1";
        case PositiveSubtype::almost_identical: return "almost_identical";
    }
    return "almost_identical";
}

std::optional<PositiveSubtype> parse_positive_subtype(std::string_view s) {
    if (s == "s1_entails_s2") return PositiveSubtype::s1_entails_s2;
    if (s == "s2_entails_s1") return PositiveSubtype::s2_entails_s1;
    if (s == "almost_identical") return PositiveSubtype::almost_identical;
    return std::nullopt;
}

OpKind LabelMapping::lookup(DnliLabel label, std::optional<PositiveSubtype> subtype) const {
    switch (label) {
        case DnliLabel::negative: return negative;
        case DnliLabel::neutral:  return neutral;
        case DnliLabel::positive: break;
    }
    if (!subtype) throw MissingSubtype();
    switch (*subtype) {
        case PositiveSubtype::s1_entails_s2:    return positive_s1_entails_s2;
        case PositiveSubtype::s2_entails_s1:    return positive_s2_entails_s1;
        case PositiveSubtype::almost_identical: return positive_almost_identical;
    }
    return positive_almost_identical;
}

MalformedRecord::MalformedRecord(std::size_t line_no, const std::string& why)
    : Error("malformed record at line " + std::to_string(line_no) + ": " + why), line_no_(line_no) {}

PoolExhausted::PoolExhausted(std::size_t wanted, std::size_t available)
    : Error("distractor pool exhausted: wanted " + std::to_string(wanted) + ", only " + std::to_string(available) +
            " valid") {}

namespace {

std::string required_sentence(const Json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_string()) throw Error(std::string("missing string field ") + key);
    std::string text{trim(it->get<std::string>())};
    if (text.empty()) throw Error(std::string("empty ") + key);
    return text;
}

}  // namespace

DnliParseResult parse_dnli(std::istream& in, bool strict) {
    DnliParseResult result;
    std::string line;
    std::size_t index = 0;
    for (; std::getline(in, line); ++index) {
        ++result.lines;
        if (is_blank(line)) continue;
        DnliTriple triple;
        std::string label;
        try {
            const Json record = Json::parse(line);
            if (!record.is_object()) throw Error("record is not an object");
            triple.s1 = required_sentence(record, "sentence1");
            triple.s2 = required_sentence(record, "sentence2");
            auto it = record.find("label");
            if (it == record.end() || !it->is_string()) throw Error("missing string field label");
            label = it->get<std::string>();
        } catch (const std::exception& e) {
            if (strict) throw MalformedRecord(index + 1, e.what());
            ++result.malformed_count;
            continue;
        }
        auto parsed = parse_dnli_label(label);
        if (!parsed) {
            ++result.unknown_label_count;
            continue;
        }
        triple.label = *parsed;
        triple.origin_index = index;
        result.triples.push_back(std::move(triple));
    }
    return result;
}

PositiveSubtype classify_positive_tokens(const TokenSet& t1, const TokenSet& t2, double identity_jaccard) {
    if (jaccard(t1, t2) >= identity_jaccard) return PositiveSubtype::almost_identical;
    if (is_strict_subset(t2, t1)) return PositiveSubtype::s1_entails_s2;
    if (is_strict_subset(t1, t2)) return PositiveSubtype::s2_entails_s1;
    if (t1.size() > t2.size()) return PositiveSubtype::s1_entails_s2;
    if (t1.size() < t2.size()) return PositiveSubtype::s2_entails_s1;
    return PositiveSubtype::almost_identical;
}

PositiveSubtype classify_positive(std::string_view s1, std::string_view s2, const CurationConfig& config) {
    if (config.classifier) return config.classifier(s1, s2);
    return classify_positive_tokens(normalize(s1, config.stopwords), normalize(s2, config.stopwords),
                                    config.identity_jaccard);
}

OpKind relabel(const DnliTriple& triple, std::optional<PositiveSubtype> subtype, const LabelMapping& mapping) {
    return mapping.lookup(triple.label, triple.label == DnliLabel::positive ? subtype : std::nullopt);
}

DistractorPool::DistractorPool(std::span<const std::string> sentences) {
    for (const auto& s : sentences) {
        std::string text{trim(s)};
        if (text.empty()) continue;
        std::string key = canonical_form(text);
        if (index_.count(key)) continue;
        index_.emplace(key, sentences_.size());
        sentences_.push_back(std::move(text));
        keys_.push_back(std::move(key));
    }
}

DistractorPool DistractorPool::from_neutral(std::span<const DnliTriple> triples) {
    std::vector<std::string> sentences;
    for (const auto& t : triples) {
        if (t.label != DnliLabel::neutral) continue;
        sentences.push_back(t.s1);
        sentences.push_back(t.s2);
    }
    return DistractorPool(sentences);
}

std::optional<std::size_t> DistractorPool::find(const std::string& canonical) const {
    auto it = index_.find(canonical);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

MmExample assemble_example(const LabeledTriple& labeled, const DistractorPool& pool, std::uint64_t record_seed,
                           const CurationConfig& config) {
    const auto& triple = labeled.triple;
    Rng rng(record_seed);
    const auto k = static_cast<std::size_t>(rng.between(0, config.max_distractors));

    const std::string key1 = canonical_form(triple.s1);
    const std::string key2 = canonical_form(triple.s2);
    std::size_t collisions = pool.find(key1) ? 1 : 0;
    if (key2 != key1 && pool.find(key2)) ++collisions;
    const std::size_t valid = pool.size() - collisions;
    if (valid < k) throw PoolExhausted(k, valid);

    std::vector<std::string> memory;
    memory.reserve(k + 1);
    std::unordered_set<std::size_t> chosen;
    while (memory.size() < k) {
        const auto i = static_cast<std::size_t>(rng.below(pool.size()));
        if (pool.key(i) == key1 || pool.key(i) == key2) continue;
        if (!chosen.insert(i).second) continue;
        memory.push_back(pool.sentence(i));
    }
    const auto s1_index = static_cast<std::size_t>(rng.between(0, k));
    memory.insert(memory.begin() + static_cast<std::ptrdiff_t>(s1_index), triple.s1);

    MmExample example;
    example.memory = std::move(memory);
    example.info = triple.s2;
    example.op = Operation::of(labeled.op, s1_index);
    example.s1_index = s1_index;
    example.meta = ExampleMeta{triple.label, labeled.subtype, triple.origin_index, record_seed};
    return example;
}

namespace {

template <std::size_t N>
Json counts_json(const std::array<std::size_t, N>& counts, auto name_of) {
    Json out = Json::object();
    for (std::size_t i = 0; i < N; ++i) out[std::string(name_of(i))] = counts[i];
    return out;
}

constexpr std::uint64_t kPoolStream = 0xB0A1'5A3D'0000'0000ULL;

}  // namespace

Json BuildStats::to_json() const {
    Json out;
    out["seed"] = seed;
    out["input_lines"] = input_lines;
    out["malformed_count"] = malformed_count;
    out["unknown_label_count"] = unknown_label_count;
    out["label_counts"] = counts_json(label_counts, [](std::size_t i) { return to_string(static_cast<DnliLabel>(i)); });
    out["positive_subtype_counts"] =
        counts_json(subtype_counts, [](std::size_t i) { return to_string(static_cast<PositiveSubtype>(i)); });
    out["op_pool_sizes"] = counts_json(pool_sizes, [](std::size_t i) { return to_string(static_cast<OpKind>(i)); });
    out["requested_size"] = requested_size;
    out["effective_target"] = effective_target;
    out["per_op"] = per_op;
    out["op_output_counts"] = counts_json(output_counts, [](std::size_t i) { return to_string(static_cast<OpKind>(i)); });
    out["distractor_pool_size"] = distractor_pool_size;
    out["warnings"] = warnings;
    return out;
}

BuildResult build_dataset(std::istream& dnli, const CurationConfig& config) {
    BuildResult result;
    auto& stats = result.stats;
    stats.seed = config.seed;
    stats.requested_size = config.target_size;

    auto parsed = parse_dnli(dnli, config.strict);
    stats.input_lines = parsed.lines;
    stats.malformed_count = parsed.malformed_count;
    stats.unknown_label_count = parsed.unknown_label_count;

    const DistractorPool distractors = DistractorPool::from_neutral(parsed.triples);
    stats.distractor_pool_size = distractors.size();

    std::vector<LabeledTriple> labeled;
    labeled.reserve(parsed.triples.size());
    std::array<std::vector<std::size_t>, 3> pools;
    for (auto& triple : parsed.triples) {
        ++stats.label_counts[static_cast<std::size_t>(triple.label)];
        std::optional<PositiveSubtype> subtype;
        if (triple.label == DnliLabel::positive) {
            subtype = classify_positive(triple.s1, triple.s2, config);
            ++stats.subtype_counts[static_cast<std::size_t>(*subtype)];
        }
        const OpKind op = relabel(triple, subtype, config.mapping);
        pools[index_of(op)].push_back(labeled.size());
        labeled.push_back(LabeledTriple{std::move(triple), subtype, op});
    }

    for (OpKind kind : kAllOpKinds) {
        stats.pool_sizes[index_of(kind)] = pools[index_of(kind)].size();
        if (pools[index_of(kind)].empty()) {
            throw InsufficientData("no input triples map to " + std::string(to_string(kind)) +
                                   "; cannot balance operations");
        }
    }

    stats.effective_target = config.target_size - config.target_size % 3;
    if (stats.effective_target != config.target_size) {
        stats.warnings.push_back("target size " + std::to_string(config.target_size) +
                                 " is not divisible by 3; truncated to " + std::to_string(stats.effective_target));
    }
    const std::size_t smallest = *std::min_element(stats.pool_sizes.begin(), stats.pool_sizes.end());
    stats.per_op = std::min(smallest, stats.effective_target / 3);
    if (stats.per_op < stats.effective_target / 3) {
        stats.warnings.push_back("smallest operation pool has " + std::to_string(smallest) + " triples; output is " +
                                 std::to_string(stats.per_op * 3) + " examples instead of " +
                                 std::to_string(stats.effective_target));
    }

    std::vector<std::size_t> selected;
    selected.reserve(stats.per_op * 3);
    for (OpKind kind : kAllOpKinds) {
        auto& pool = pools[index_of(kind)];
        Rng rng(derive_seed(config.seed, kPoolStream + index_of(kind)));
        rng.shuffle(pool);
        selected.insert(selected.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(stats.per_op));
        stats.output_counts[index_of(kind)] = stats.per_op;
    }
    // Indices follow parse order, which is origin_index order.
    std::sort(selected.begin(), selected.end());

    result.examples.reserve(selected.size());
    for (std::size_t i : selected) {
        const auto& item = labeled[i];
        result.examples.push_back(
            assemble_example(item, distractors, derive_seed(config.seed, item.triple.origin_index), config));
    }
    return result;
}

std::optional<ExportFormat> parse_export_format(std::string_view s) {
    if (s == "analysis_jsonl") return ExportFormat::analysis_jsonl;
    if (s == "seq2seq_text") return ExportFormat::seq2seq_text;
    return std::nullopt;
}

Json to_json(const MmExample& example) {
    Json out;
    out["memory"] = example.memory;
    out["info"] = example.info;
    out["op"] = to_string(example.op.kind());
    out["target_index"] = example.op.target_index() ? Json(*example.op.target_index()) : Json(nullptr);
    out["s1_index"] = example.s1_index;
    Json meta;
    meta["source_label"] = to_string(example.meta.source_label);
    meta["subtype"] = example.meta.subtype ? Json(to_string(*example.meta.subtype)) : Json(nullptr);
    meta["origin_index"] = example.meta.origin_index;
    meta["seed"] = example.meta.seed;
    out["meta"] = std::move(meta);
    return out;
}

namespace {

std::size_t example_uint(const Json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_number_unsigned()) {
        throw MalformedExample(std::string("\"") + key + "\" must be a non-negative integer");
    }
    return it->get<std::size_t>();
}

std::string example_string(const Json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_string()) throw MalformedExample(std::string("\"") + key + "\" must be a string");
    return it->get<std::string>();
}

}  // namespace

MmExample example_from_json(const Json& record) {
    if (!record.is_object()) throw MalformedExample("example is not an object");
    MmExample ex;
    auto memory = record.find("memory");
    if (memory == record.end() || !memory->is_array() || memory->empty()) {
        throw MalformedExample("\"memory\" must be a non-empty array");
    }
    for (const auto& m : *memory) {
        if (!m.is_string()) throw MalformedExample("memory sentences must be strings");
        ex.memory.push_back(m.get<std::string>());
    }
    ex.info = example_string(record, "info");
    ex.s1_index = example_uint(record, "s1_index");
    if (ex.s1_index >= ex.memory.size()) throw MalformedExample("s1_index out of range");

    auto kind = parse_op_kind(example_string(record, "op"));
    if (!kind) throw MalformedExample("unknown op");
    auto target = record.find("target_index");
    const bool has_target = target != record.end() && !target->is_null();
    if ((*kind == OpKind::replace) != has_target) throw MalformedExample("target_index present iff op is replace");
    if (has_target) {
        const auto t = example_uint(record, "target_index");
        if (t >= ex.memory.size()) throw MalformedExample("target_index out of range");
        ex.op = Operation::replace(t);
    } else {
        ex.op = Operation::of(*kind);
    }

    auto meta = record.find("meta");
    if (meta == record.end() || !meta->is_object()) throw MalformedExample("missing meta object");
    auto label = parse_dnli_label(example_string(*meta, "source_label"));
    if (!label) throw MalformedExample("unknown source_label");
    ex.meta.source_label = *label;
    auto subtype = meta->find("subtype");
    if (subtype != meta->end() && !subtype->is_null()) {
        if (!subtype->is_string()) throw MalformedExample("subtype must be a string or null");
        auto parsed = parse_positive_subtype(subtype->get<std::string>());
        if (!parsed) throw MalformedExample("unknown subtype");
        ex.meta.subtype = *parsed;
    }
    ex.meta.origin_index = example_uint(*meta, "origin_index");
    auto seed = meta->find("seed");
    if (seed == meta->end() || !seed->is_number_unsigned()) throw MalformedExample("\"seed\" must be an integer");
    ex.meta.seed = seed->get<std::uint64_t>();
    return ex;
}

namespace {

// Tabs and newlines would break the two-column text format.
std::string one_line(std::string_view s) {
    std::string out(s);
    std::replace_if(out.begin(), out.end(), [](char c) { return c == '\t' || c == '\n' || c == '\r'; }, ' ');
    return out;
}

}  // namespace

std::string seq2seq_input(const MmExample& example) {
    std::string out = "memory:";
    for (std::size_t i = 0; i < example.memory.size(); ++i) {
        out += i == 0 ? " " : " | ";
        out += std::to_string(i + 1) + ": " + one_line(example.memory[i]);
    }
    out += " new: " + one_line(example.info);
    return out;
}

std::string seq2seq_target(const Operation& op) {
    if (op.kind() == OpKind::replace) return "replace " + std::to_string(*op.target_index() + 1);
    return std::string(to_string(op.kind()));
}

void export_examples(std::span<const MmExample> examples, ExportFormat format, std::ostream& out) {
    for (const auto& ex : examples) {
        if (format == ExportFormat::analysis_jsonl) {
            out << to_json(ex).dump() << '\n';
        } else {
            out << seq2seq_input(ex) << '\t' << seq2seq_target(ex.op) << '\n';
        }
    }
}

std::vector<MmExample> read_analysis_jsonl(std::istream& in) {
    std::vector<MmExample> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank(line)) continue;
        try {
            out.push_back(example_from_json(Json::parse(line)));
        } catch (const Json::exception& e) {
            throw MalformedExample("line " + std::to_string(line_no) + ": " + e.what());
        } catch (const MalformedExample& e) {
            throw MalformedExample("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace memmgr
