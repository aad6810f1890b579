#include "memmgr/harness.hpp"

#include "memmgr/rng.hpp"
#include "memmgr/text.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_set>

namespace memmgr {

MalformedTrace::MalformedTrace(std::size_t line_no, const std::string& why)
    : Error("malformed trace at line " + std::to_string(line_no) + ": " + why), line_no_(line_no) {}

TraceError::TraceError(std::string trace_id, std::size_t turn_index, const std::string& why)
    : Error("trace " + trace_id + ", turn " + std::to_string(turn_index) + ": " + why), turn_index_(turn_index) {}

Json to_json(const ConversationTrace& trace) {
    Json turns = Json::array();
    for (const auto& t : trace.turns) {
        Json turn;
        turn["speaker"] = to_string(t.speaker);
        turn["utterance"] = t.utterance;
        turn["info"] = t.info ? Json(*t.info) : Json(nullptr);
        turns.push_back(std::move(turn));
    }
    Json out;
    out["trace_id"] = trace.trace_id;
    out["turns"] = std::move(turns);
    return out;
}

ConversationTrace trace_from_json(const Json& record) {
    if (!record.is_object()) throw Error("record is not an object");
    ConversationTrace trace;
    auto id = record.find("trace_id");
    if (id == record.end() || !id->is_string()) throw Error("missing string \"trace_id\"");
    trace.trace_id = id->get<std::string>();
    auto turns = record.find("turns");
    if (turns == record.end() || !turns->is_array()) throw Error("missing \"turns\" array");
    if (turns->empty()) throw Error("\"turns\" is empty");
    for (const auto& item : *turns) {
        if (!item.is_object()) throw Error("turn is not an object");
        Turn turn;
        auto speaker = item.find("speaker");
        if (speaker == item.end() || !speaker->is_string()) throw Error("turn lacks string \"speaker\"");
        auto parsed = parse_speaker(speaker->get<std::string>());
        if (!parsed) throw Error("unknown speaker \"" + speaker->get<std::string>() + "\"");
        turn.speaker = *parsed;
        auto utterance = item.find("utterance");
        if (utterance == item.end() || !utterance->is_string()) throw Error("turn lacks string \"utterance\"");
        turn.utterance = utterance->get<std::string>();
        auto info = item.find("info");
        if (info != item.end() && !info->is_null()) {
            if (!info->is_string()) throw Error("\"info\" must be a string or null");
            if (is_blank(info->get_ref<const std::string&>())) throw Error("\"info\" is empty");
            turn.info = info->get<std::string>();
        }
        trace.turns.push_back(std::move(turn));
    }
    return trace;
}

std::vector<ConversationTrace> load_traces(std::istream& in) {
    std::vector<ConversationTrace> traces;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank(line)) continue;
        try {
            traces.push_back(trace_from_json(Json::parse(line)));
        } catch (const std::exception& e) {
            throw MalformedTrace(line_no, e.what());
        }
    }
    return traces;
}

void write_traces(std::span<const ConversationTrace> traces, std::ostream& out) {
    for (const auto& t : traces) out << to_json(t).dump() << '\n';
}

Json SimulationReport::to_json() const {
    Json out;
    out["trace_id"] = trace_id;
    out["predictor"] = predictor;
    out["total_turns"] = total_turns;
    out["info_turns"] = per_turn_sizes.size();
    out["per_turn_sizes"] = per_turn_sizes;
    Json ops;
    for (OpKind k : kAllOpKinds) ops[std::string(memmgr::to_string(k))] = op_counts[index_of(k)];
    out["op_counts"] = std::move(ops);
    out["dedup_count"] = dedup_count;
    out["final_size"] = final_size();
    out["entries_per_100_turns"] = entries_per_100_turns;
    out["checkpoint_sizes"] = checkpoint_sizes;
    out["final_memory"] = snapshot(final_memory);
    out["meta"] = {{"turns_counted", "all"}};
    return out;
}

SimulationReport run_trace(const ConversationTrace& trace, Predictor& predictor, const CoreConfig& config) {
    SimulationReport report;
    report.trace_id = trace.trace_id;
    report.predictor = std::string(predictor.name());
    report.total_turns = trace.turns.size();

    Memory memory;
    for (std::size_t t = 0; t < trace.turns.size(); ++t) {
        const auto& turn = trace.turns[t];
        if (turn.info) {
            const UserInfo info{*turn.info, t, turn.speaker};
            try {
                const Operation op = predictor.predict(memory, info);
                auto applied = apply(std::move(memory), op, info, t, config);
                memory = std::move(applied.memory);
                if (applied.deduplicated) {
                    ++report.dedup_count;
                    ++report.op_counts[index_of(OpKind::pass)];
                } else {
                    ++report.op_counts[index_of(op.kind())];
                }
            } catch (const std::exception& e) {
                throw TraceError(trace.trace_id, t, e.what());
            }
            report.per_turn_sizes.push_back(memory.size());
        }
        if ((t + 1) % 100 == 0) report.checkpoint_sizes.push_back(memory.size());
    }
    report.entries_per_100_turns =
        report.total_turns == 0 ? 0.0
                                : 100.0 * static_cast<double>(memory.size()) / static_cast<double>(report.total_turns);
    report.final_memory = std::move(memory);
    return report;
}

namespace {

double ratio(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::string fixed(double v, int digits) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

// Left-aligned first column, right-aligned others.
std::string render_table(const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> widths;
    for (const auto& row : rows) {
        widths.resize(std::max(widths.size(), row.size()), 0);
        for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());
    }
    std::ostringstream os;
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c > 0) os << "  ";
            if (c == 0) {
                os << std::left << std::setw(static_cast<int>(widths[c])) << row[c];
            } else {
                os << std::right << std::setw(static_cast<int>(widths[c])) << row[c];
            }
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace

OpMetrics evaluate_ops(std::span<const MmExample> dataset, Predictor& predictor) {
    if (dataset.empty()) throw EmptyDataset();
    OpMetrics m;
    m.total = dataset.size();
    std::size_t strict_correct = 0;
    std::size_t gold_replace = 0;
    std::size_t replace_kind_ok = 0;
    std::size_t replace_strict_ok = 0;
    for (const auto& ex : dataset) {
        const Operation predicted = predictor.predict_example(ex);
        const auto gold = index_of(ex.op.kind());
        const auto pred = index_of(predicted.kind());
        ++m.confusion[gold][pred];
        if (predicted == ex.op) ++strict_correct;
        if (ex.op.kind() == OpKind::replace) {
            ++gold_replace;
            if (predicted.kind() == OpKind::replace) {
                ++replace_kind_ok;
                if (predicted.target_index() == ex.op.target_index()) ++replace_strict_ok;
            }
        }
    }

    std::size_t diagonal = 0;
    double f1_sum = 0.0;
    std::size_t f1_classes = 0;
    for (std::size_t c = 0; c < 3; ++c) {
        diagonal += m.confusion[c][c];
        std::size_t gold_total = 0;
        std::size_t pred_total = 0;
        for (std::size_t k = 0; k < 3; ++k) {
            gold_total += m.confusion[c][k];
            pred_total += m.confusion[k][c];
        }
        m.precision[c] = ratio(m.confusion[c][c], pred_total);
        m.recall[c] = ratio(m.confusion[c][c], gold_total);
        const double denom = m.precision[c] + m.recall[c];
        m.f1[c] = denom == 0.0 ? 0.0 : 2.0 * m.precision[c] * m.recall[c] / denom;
        // Classes absent from both gold and predictions do not enter the macro average.
        if (gold_total + pred_total > 0) {
            f1_sum += m.f1[c];
            ++f1_classes;
        }
    }
    m.accuracy = ratio(diagonal, m.total);
    m.macro_f1 = f1_classes == 0 ? 0.0 : f1_sum / static_cast<double>(f1_classes);
    m.strict_accuracy = ratio(strict_correct, m.total);
    m.strict_replace_accuracy = ratio(replace_strict_ok, gold_replace);
    m.lenient_replace_accuracy = ratio(replace_kind_ok, gold_replace);
    return m;
}

Json OpMetrics::to_json() const {
    Json out;
    out["total"] = total;
    out["accuracy"] = accuracy;
    out["strict_accuracy"] = strict_accuracy;
    out["macro_f1"] = macro_f1;
    Json per_class;
    for (OpKind k : kAllOpKinds) {
        const auto i = index_of(k);
        per_class[std::string(memmgr::to_string(k))] = {{"precision", precision[i]}, {"recall", recall[i]}, {"f1", f1[i]}};
    }
    out["per_class"] = std::move(per_class);
    out["confusion_matrix"] = {{"labels", {"append", "pass", "replace"}}, {"rows_gold_cols_predicted", confusion}};
    out["strict_replace_accuracy"] = strict_replace_accuracy;
    out["lenient_replace_accuracy"] = lenient_replace_accuracy;
    return out;
}

std::string OpMetrics::to_table() const {
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"class", "precision", "recall", "f1", "gold->append", "gold->pass", "gold->replace"});
    for (OpKind k : kAllOpKinds) {
        const auto i = index_of(k);
        rows.push_back({std::string(memmgr::to_string(k)), fixed(precision[i], 4), fixed(recall[i], 4), fixed(f1[i], 4),
                        std::to_string(confusion[i][0]), std::to_string(confusion[i][1]),
                        std::to_string(confusion[i][2])});
    }
    std::string out = render_table(rows);
    out += "examples " + std::to_string(total) + "  accuracy " + fixed(accuracy, 4) + "  strict_accuracy " +
           fixed(strict_accuracy, 4) + "  macro_f1 " + fixed(macro_f1, 4) + "\n";
    out += "replace accuracy: strict " + fixed(strict_replace_accuracy, 4) + "  lenient " +
           fixed(lenient_replace_accuracy, 4) + "\n";
    return out;
}

ComparisonTable compare(std::span<const SimulationReport> reports) {
    std::vector<std::string> order;
    std::map<std::string, std::map<std::string, const SimulationReport*>> by_predictor;
    for (const auto& r : reports) {
        auto [it, inserted] = by_predictor.try_emplace(r.predictor);
        if (inserted) order.push_back(r.predictor);
        if (!it->second.emplace(r.trace_id, &r).second) {
            throw MismatchedTraces("predictor " + r.predictor + " has two reports for trace " + r.trace_id);
        }
    }
    if (order.empty()) return {};

    const auto& reference = by_predictor.at(order.front());
    for (const auto& name : order) {
        const auto& group = by_predictor.at(name);
        bool same = group.size() == reference.size();
        for (auto a = group.begin(), b = reference.begin(); same && a != group.end(); ++a, ++b) {
            same = a->first == b->first && a->second->total_turns == b->second->total_turns;
        }
        if (!same) throw MismatchedTraces("predictor " + name + " was not run on the same traces as " + order.front());
    }

    const auto baseline = by_predictor.find("append_only");
    ComparisonTable table;
    std::optional<double> baseline_rate;
    for (const auto& name : order) {
        const auto& group = by_predictor.at(name);
        PredictorSummary row;
        row.predictor = name;
        row.traces = group.size();
        for (const auto& [trace_id, report] : group) {
            row.total_turns += report->total_turns;
            row.total_final_entries += report->final_size();
            if (baseline != by_predictor.end()) {
                const auto* unmanaged = baseline->second.at(trace_id);
                if (report->final_size() > unmanaged->final_size()) {
                    throw HarnessInvariantViolation("predictor " + name + " ended trace " + trace_id + " with " +
                                                    std::to_string(report->final_size()) + " entries, more than " +
                                                    "append_only's " + std::to_string(unmanaged->final_size()));
                }
            }
        }
        row.mean_final_size = ratio(row.total_final_entries, row.traces);
        row.entries_per_100_turns = 100.0 * ratio(row.total_final_entries, row.total_turns);
        if (name == "append_only") baseline_rate = row.entries_per_100_turns;
        table.rows.push_back(std::move(row));
    }
    if (baseline_rate) {
        for (auto& row : table.rows) {
            row.reduction_vs_append_only = *baseline_rate == 0.0 ? 0.0 : 1.0 - row.entries_per_100_turns / *baseline_rate;
        }
    }
    return table;
}

Json ComparisonTable::to_json() const {
    Json out = Json::array();
    for (const auto& r : rows) {
        Json row;
        row["predictor"] = r.predictor;
        row["traces"] = r.traces;
        row["total_turns"] = r.total_turns;
        row["total_final_entries"] = r.total_final_entries;
        row["mean_final_size"] = r.mean_final_size;
        row["entries_per_100_turns"] = r.entries_per_100_turns;
        row["reduction_vs_append_only"] = r.reduction_vs_append_only ? Json(*r.reduction_vs_append_only) : Json(nullptr);
        out.push_back(std::move(row));
    }
    return out;
}

std::string ComparisonTable::to_text() const {
    std::vector<std::vector<std::string>> cells;
    cells.push_back({"predictor", "traces", "turns", "mean_final_size", "entries_per_100_turns", "reduction"});
    for (const auto& r : rows) {
        cells.push_back({r.predictor, std::to_string(r.traces), std::to_string(r.total_turns),
                         fixed(r.mean_final_size, 1), fixed(r.entries_per_100_turns, 1),
                         r.reduction_vs_append_only ? fixed(100.0 * *r.reduction_vs_append_only, 1) + "%" : "-"});
    }
    return render_table(cells);
}

std::vector<std::string> default_sentence_pool() {
    static const char* const kVerbs[] = {
        "like",    "collect", "paint",  "photograph", "study",   "sell",     "buy",     "draw",
        "cook",    "grow",    "repair", "design",     "teach",   "review",   "sketch",  "restore",
        "research", "miss",   "admire", "avoid",      "build",   "clean",    "order",   "borrow",
        "rent",    "import",  "carve",  "knit",       "deliver", "inspect"};
    static const char* const kObjects[] = {
        "stamps",   "coins",    "bicycles", "guitars",   "paintings", "pianos",  "sandwiches", "tomatoes",
        "roses",    "boats",    "watches",  "cameras",   "puzzles",   "kites",   "lamps",      "carpets",
        "vases",    "hats",     "shoes",    "candles",   "maps",      "comics",  "novels",     "posters",
        "cookies",  "violins",  "clocks",   "tents",     "surfboards", "sculptures", "quilts", "drones",
        "mushrooms", "pumpkins", "orchids", "chairs",    "tables",    "helmets", "marbles",    "postcards"};
    std::vector<std::string> pool;
    for (const char* object : kObjects) {
        for (const char* verb : kVerbs) pool.push_back(std::string("i ") + verb + " " + object);
    }
    return pool;
}

std::string negate_sentence(std::string_view sentence) {
    static const std::set<std::string> kAuxiliaries = {"am",    "is",   "are",   "was",    "were", "can",
                                                       "could", "will", "would", "should", "must"};
    static const std::set<std::string> kSubjects = {"i", "we", "you", "they"};
    std::vector<std::string> words;
    std::istringstream in{std::string(trim(sentence))};
    for (std::string w; in >> w;) words.push_back(w);

    auto at = std::find_if(words.begin(), words.end(),
                           [](const std::string& w) { return kAuxiliaries.count(canonical_form(w)) != 0; });
    if (at != words.end()) {
        words.insert(at + 1, "not");
    } else if (!words.empty() && kSubjects.count(canonical_form(words.front()))) {
        words.insert(words.begin() + 1, {"do", "not"});
    } else {
        return "it is not true that " + std::string(trim(sentence));
    }
    std::string out;
    for (const auto& w : words) {
        if (!out.empty()) out += ' ';
        out += w;
    }
    return out;
}

ConversationTrace synth_trace(const SynthOptions& options, std::span<const std::string> pool) {
    if (pool.empty()) throw Error("synthetic trace needs a non-empty sentence pool");
    if (!(options.contradiction_rate >= 0.0 && options.contradiction_rate <= 1.0)) {
        throw Error("contradiction rate must be in [0, 1]");
    }
    std::vector<std::string> fresh;
    std::unordered_set<std::string> seen;
    for (const auto& s : pool) {
        std::string text{trim(s)};
        if (!text.empty() && seen.insert(canonical_form(text)).second) fresh.push_back(std::move(text));
    }
    if (fresh.empty()) throw Error("synthetic trace needs a non-empty sentence pool");

    Rng rng(options.seed);
    rng.shuffle(fresh);

    struct Fact {
        std::string affirmed;
        std::string negated;
        bool is_negated = false;
    };
    std::vector<Fact> facts;
    std::size_t next_fresh = 0;

    ConversationTrace trace;
    trace.trace_id = options.trace_id.empty() ? "synth-" + std::to_string(options.seed) : options.trace_id;
    trace.turns.reserve(options.n_turns);
    for (std::size_t t = 0; t < options.n_turns; ++t) {
        std::string info;
        if (facts.empty() || !rng.bernoulli(options.contradiction_rate)) {
            const std::size_t round = next_fresh / fresh.size();
            info = fresh[next_fresh % fresh.size()];
            // Cycling past the pool keeps sentences unique by tagging the round.
            if (round > 0) info += " " + std::to_string(round);
            ++next_fresh;
            facts.push_back(Fact{info, negate_sentence(info), false});
        } else {
            auto& fact = facts[static_cast<std::size_t>(rng.below(facts.size()))];
            if (rng.bernoulli(0.5)) fact.is_negated = !fact.is_negated;
            info = fact.is_negated ? fact.negated : fact.affirmed;
        }
        const Speaker speaker = t % 2 == 0 ? Speaker::user : Speaker::bot;
        trace.turns.push_back(Turn{speaker, info, info});
    }
    return trace;
}

}  // namespace memmgr
