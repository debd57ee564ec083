#pragma once

// Interactive visual grounding: prefix construction, the ask-or-ground
// loop, supervision pairs from recorded dialogs, suffix-masked
// cross-entropy, and guesser-setting evaluation.
//
// Prefix template (bit-exact):
//   "<image>clarify " + U + { " assistant: " + R_i + " user: " + H_i }

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "clue/common.hpp"
#include "clue/loc_codec.hpp"
#include "clue/toy_decoder.hpp"

namespace clue {

inline constexpr std::string_view kPrefixHeader = "<image>clarify ";
inline constexpr std::string_view kAssistantTag = " assistant: ";
inline constexpr std::string_view kUserTag = " user: ";
inline constexpr int kDefaultMaxTurns = 10;

struct Turn {
    std::string question;
    std::string answer;
    bool operator==(const Turn&) const = default;
};

class DialogState {
  public:
    explicit DialogState(std::string user_request) : user_request_(std::move(user_request)) {}

    const std::string& user_request() const { return user_request_; }
    const std::vector<Turn>& turns() const { return turns_; }
    const std::optional<BoxNorm>& terminal_box() const { return terminal_box_; }
    bool terminal() const { return terminal_box_.has_value(); }

    void append_turn(Turn t);
    void finish(const BoxNorm& box);

  private:
    std::string user_request_;
    std::vector<Turn> turns_;
    std::optional<BoxNorm> terminal_box_;
};

// Prefix without the "<image>clarify " header.
std::string dialog_context(std::string_view user_request, const std::vector<Turn>& turns);
std::string build_prefix(const DialogState& s);

struct SupervisedPair {
    std::string prefix;  // context without the fixed header
    std::string target;
    bool is_grounding = false;
};

std::vector<SupervisedPair> linearize_dialog(std::string_view user_request, const std::vector<Turn>& turns,
                                             const BoxNorm& gold);

class MalformedGeneration : public Error {
  public:
    using Error::Error;
};

class TurnLimitExceeded : public Error {
  public:
    TurnLimitExceeded(int limit, DialogState state);
    int limit() const { return limit_; }
    const DialogState& state() const { return state_; }

  private:
    int limit_;
    DialogState state_;
};

class OracleExhausted : public Error {
  public:
    using Error::Error;
};

struct Question {
    std::string text;
};
struct Grounding {
    LocQuad quad;
};
using GeneratedOutput = std::variant<Question, Grounding>;

// Loc sequence wins; otherwise the cleaned text is a question.
GeneratedOutput classify_output(std::string_view generated);
std::string extract_question(std::string_view generated);

class GeneratorPort {
  public:
    virtual ~GeneratorPort() = default;
    virtual std::string generate(const std::string& prefix) = 0;
};

class ReplySource {
  public:
    virtual ~ReplySource() = default;
    virtual std::string reply(const std::string& question) = 0;
};

// Replays recorded answers in order.
class ScriptedOracle : public ReplySource {
  public:
    explicit ScriptedOracle(std::vector<std::string> replies) : replies_(std::move(replies)) {}
    std::string reply(const std::string& question) override;
    std::size_t consumed() const { return next_; }

  private:
    std::vector<std::string> replies_;
    std::size_t next_ = 0;
};

// Human in the loop: prints the question, reads one line.
class StreamOracle : public ReplySource {
  public:
    StreamOracle(std::istream& in, std::ostream& prompt) : in_(in), prompt_(prompt) {}
    std::string reply(const std::string& question) override;

  private:
    std::istream& in_;
    std::ostream& prompt_;
};

// Replays canned generations in order; repeats the last one when exhausted.
class ScriptedGenerator : public GeneratorPort {
  public:
    explicit ScriptedGenerator(std::vector<std::string> outputs) : outputs_(std::move(outputs)) {}
    std::string generate(const std::string& prefix) override;
    std::size_t calls() const { return calls_; }

  private:
    std::vector<std::string> outputs_;
    std::size_t calls_ = 0;
};

// Greedy decoding with the toy decoder.
class ToyGenerator : public GeneratorPort {
  public:
    ToyGenerator(const ToyDecoder& decoder, int max_new_tokens) : decoder_(decoder), max_new_(max_new_tokens) {}
    std::string generate(const std::string& prefix) override;

  private:
    const ToyDecoder& decoder_;
    int max_new_;
};

struct DialogStep {
    std::string prefix;
    std::string generated;
    std::optional<double> p_amb;  // from the optional probe hook
};

struct DialogOutcome {
    DialogState state;
    BoxNorm box;
    std::vector<DialogStep> steps;
};

struct DialogOptions {
    int max_turns = kDefaultMaxTurns;
    // Optional pre-step run on each prefix before generation; its result is
    // recorded in the step log and does not alter control flow.
    std::function<std::optional<double>(const std::string& prefix)> ambiguity_probe;
};

// Throws TurnLimitExceeded after max_turns generations without a grounding.
DialogOutcome run_dialog(GeneratorPort& gen, ReplySource& oracle, std::string user_request,
                         const DialogOptions& opt = {});

// logits is row-major T_total x vocab. targets[i] scores row suffix_start + i.
double masked_ce(const std::vector<double>& logits, std::size_t vocab, const std::vector<int>& targets,
                 std::size_t suffix_start);

// d masked_ce / d logits, same layout; rows before suffix_start are exactly 0.
std::vector<double> masked_ce_grad(const std::vector<double>& logits, std::size_t vocab,
                                   const std::vector<int>& targets, std::size_t suffix_start);

struct GuesserCase {
    std::string prefix;  // full dialog history
    BoxNorm gold;
};

struct GuesserResult {
    double accuracy = 0.0;
    std::size_t correct = 0;
    std::size_t total = 0;
    std::size_t non_grounding = 0;
};

GuesserResult evaluate_guesser(const std::vector<GuesserCase>& cases, GeneratorPort& gen, double iou_threshold = 0.5);

// One line of the dialog corpus (JSON Lines).
struct DialogRecord {
    std::string image_id;
    std::string user_request;
    std::vector<Turn> turns;
    BoxNorm gold_box;
};

std::string to_json_line(const DialogRecord& r);
DialogRecord dialog_record_from_json(std::string_view line);
std::vector<DialogRecord> read_dialog_corpus(std::istream& in);
std::vector<DialogRecord> read_dialog_corpus_file(const std::string& path);

// Full-history guesser cases from a corpus.
std::vector<GuesserCase> guesser_cases(const std::vector<DialogRecord>& corpus);

}  // namespace clue
