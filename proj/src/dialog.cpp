#include "clue/dialog.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include <json.hpp>

#include "clue/metrics.hpp"

namespace clue {

void DialogState::append_turn(Turn t) {
    if (terminal()) throw Error("dialog state is frozen after grounding");
    turns_.push_back(std::move(t));
}

void DialogState::finish(const BoxNorm& box) {
    if (terminal()) throw Error("terminal box already set");
    terminal_box_ = box;
}

std::string dialog_context(std::string_view user_request, const std::vector<Turn>& turns) {
    std::string out(user_request);
    for (const auto& t : turns) {
        out += kAssistantTag;
        out += t.question;
        out += kUserTag;
        out += t.answer;
    }
    return out;
}

std::string build_prefix(const DialogState& s) {
    if (s.terminal()) throw Error("cannot build a prefix for a terminal dialog state");
    return std::string(kPrefixHeader) + dialog_context(s.user_request(), s.turns());
}

std::vector<SupervisedPair> linearize_dialog(std::string_view user_request, const std::vector<Turn>& turns,
                                             const BoxNorm& gold) {
    std::vector<SupervisedPair> pairs;
    pairs.reserve(turns.size() + 1);
    std::vector<Turn> revealed;
    for (const auto& t : turns) {
        pairs.push_back({dialog_context(user_request, revealed), t.question, false});
        revealed.push_back(t);
    }
    pairs.push_back({dialog_context(user_request, revealed), encode_box(gold), true});
    return pairs;
}

TurnLimitExceeded::TurnLimitExceeded(int limit, DialogState state)
    : Error("turn limit of " + std::to_string(limit) + " generations reached without grounding"),
      limit_(limit),
      state_(std::move(state)) {}

std::string extract_question(std::string_view generated) {
    std::string text(generated);
    static constexpr std::string_view header = "assistant:";
    for (std::size_t pos; (pos = text.find(header)) != std::string::npos;) text.erase(pos, header.size());

    std::string out;
    bool pending_space = false;
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out += ' ';
        pending_space = false;
        out += ch;
    }
    return out;
}

GeneratedOutput classify_output(std::string_view generated) {
    if (auto quad = parse_loc_sequence(generated)) return Grounding{*quad};
    std::string q = extract_question(generated);
    if (q.empty()) throw MalformedGeneration("generation is empty after cleaning");
    return Question{std::move(q)};
}

std::string ScriptedOracle::reply(const std::string&) {
    if (next_ >= replies_.size()) throw OracleExhausted("scripted oracle has no reply left");
    return replies_[next_++];
}

std::string StreamOracle::reply(const std::string& question) {
    prompt_ << "assistant: " << question << "\nuser: " << std::flush;
    std::string line;
    if (!std::getline(in_, line)) throw OracleExhausted("no reply on input stream");
    return line;
}

std::string ScriptedGenerator::generate(const std::string&) {
    if (outputs_.empty()) return {};
    const std::size_t i = std::min(calls_, outputs_.size() - 1);
    ++calls_;
    return outputs_[i];
}

std::string ToyGenerator::generate(const std::string& prefix) {
    const TokenSequence seq = make_sequence(decoder_.config(), prefix);
    return detokenize_toy(decoder_.generate(seq, max_new_));
}

DialogOutcome run_dialog(GeneratorPort& gen, ReplySource& oracle, std::string user_request, const DialogOptions& opt) {
    if (opt.max_turns < 1) throw Error("max_turns must be >= 1");
    DialogState state(std::move(user_request));
    std::vector<DialogStep> steps;
    for (int k = 0; k < opt.max_turns; ++k) {
        DialogStep step;
        step.prefix = build_prefix(state);
        if (opt.ambiguity_probe) step.p_amb = opt.ambiguity_probe(step.prefix);
        step.generated = gen.generate(step.prefix);
        const GeneratedOutput out = classify_output(step.generated);
        steps.push_back(step);

        if (const auto* g = std::get_if<Grounding>(&out)) {
            const BoxNorm box = decode_box(g->quad);
            state.finish(box);
            return {std::move(state), box, std::move(steps)};
        }
        if (k + 1 == opt.max_turns) break;
        const auto& question = std::get<Question>(out).text;
        state.append_turn({question, oracle.reply(question)});
    }
    throw TurnLimitExceeded(opt.max_turns, std::move(state));
}

namespace {

void check_ce_args(const std::vector<double>& logits, std::size_t vocab, const std::vector<int>& targets,
                   std::size_t suffix_start) {
    if (vocab == 0 || logits.size() % vocab != 0) throw DimensionError("logits size is not a multiple of vocab");
    const std::size_t rows = logits.size() / vocab;
    if (targets.empty()) throw Error("empty suffix");
    if (suffix_start >= rows || suffix_start + targets.size() > rows)
        throw DimensionError("suffix extends past the logits");
    for (int t : targets)
        if (t < 0 || static_cast<std::size_t>(t) >= vocab) throw DimensionError("target id out of vocabulary");
}

double log_sum_exp(const double* row, std::size_t n) {
    const double mx = *std::max_element(row, row + n);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp(row[i] - mx);
    return mx + std::log(s);
}

}  // namespace

double masked_ce(const std::vector<double>& logits, std::size_t vocab, const std::vector<int>& targets,
                 std::size_t suffix_start) {
    check_ce_args(logits, vocab, targets, suffix_start);
    double total = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const double* row = logits.data() + (suffix_start + i) * vocab;
        total += log_sum_exp(row, vocab) - row[targets[i]];
    }
    return total / static_cast<double>(targets.size());
}

std::vector<double> masked_ce_grad(const std::vector<double>& logits, std::size_t vocab,
                                   const std::vector<int>& targets, std::size_t suffix_start) {
    check_ce_args(logits, vocab, targets, suffix_start);
    std::vector<double> grad(logits.size(), 0.0);
    const double inv_t = 1.0 / static_cast<double>(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const std::size_t off = (suffix_start + i) * vocab;
        const double lse = log_sum_exp(logits.data() + off, vocab);
        for (std::size_t v = 0; v < vocab; ++v) grad[off + v] = std::exp(logits[off + v] - lse) * inv_t;
        grad[off + static_cast<std::size_t>(targets[i])] -= inv_t;
    }
    return grad;
}

GuesserResult evaluate_guesser(const std::vector<GuesserCase>& cases, GeneratorPort& gen, double iou_threshold) {
    if (cases.empty()) throw Error("no guesser cases");
    GuesserResult r;
    r.total = cases.size();
    for (const auto& c : cases) {
        const auto quad = parse_loc_sequence(gen.generate(c.prefix));
        if (!quad) {
            ++r.non_grounding;
            continue;
        }
        if (iou(decode_box(*quad), c.gold) >= iou_threshold) ++r.correct;
    }
    r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
    return r;
}

std::string to_json_line(const DialogRecord& r) {
    nlohmann::json turns = nlohmann::json::array();
    for (const auto& t : r.turns) turns.push_back({t.question, t.answer});
    nlohmann::ordered_json j;
    j["image_id"] = r.image_id;
    j["U"] = r.user_request;
    j["turns"] = turns;
    j["gold_box"] = {r.gold_box.y_min, r.gold_box.x_min, r.gold_box.y_max, r.gold_box.x_max};
    return j.dump();
}

DialogRecord dialog_record_from_json(std::string_view line) {
    try {
        const auto j = nlohmann::json::parse(line);
        DialogRecord r;
        r.image_id = j.at("image_id").get<std::string>();
        r.user_request = j.at("U").get<std::string>();
        for (const auto& t : j.at("turns")) {
            if (!t.is_array() || t.size() != 2) throw Error("each turn must be a [question, answer] pair");
            r.turns.push_back({t[0].get<std::string>(), t[1].get<std::string>()});
        }
        const auto& b = j.at("gold_box");
        if (!b.is_array() || b.size() != 4) throw Error("gold_box must have 4 coordinates");
        r.gold_box = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
        if (!r.gold_box.valid()) throw Error("gold_box is not a valid normalized box");
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("dialog record: ") + e.what());
    }
}

std::vector<DialogRecord> read_dialog_corpus(std::istream& in) {
    std::vector<DialogRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(dialog_record_from_json(line));
        } catch (const Error& e) {
            throw FormatError("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

std::vector<DialogRecord> read_dialog_corpus_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    return read_dialog_corpus(in);
}

std::vector<GuesserCase> guesser_cases(const std::vector<DialogRecord>& corpus) {
    std::vector<GuesserCase> cases;
    cases.reserve(corpus.size());
    for (const auto& r : corpus)
        cases.push_back({std::string(kPrefixHeader) + dialog_context(r.user_request, r.turns), r.gold_box});
    return cases;
}

}  // namespace clue
