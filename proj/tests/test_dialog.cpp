#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <sstream>

#include "clue/dialog.hpp"
#include "clue/metrics.hpp"
#include "clue/synth.hpp"
#include "oracles.hpp"

using namespace clue;

namespace {

// Answers every prefix with the gold box for that prefix, optionally shifted in x.
class GoldEcho : public GeneratorPort {
  public:
    explicit GoldEcho(const std::vector<GuesserCase>& cases, double shift = 0.0) : shift_(shift) {
        for (const auto& c : cases) gold_[c.prefix].push_back(c.gold);
    }
    // identical prefixes are answered in case order, cycling per full pass
    std::string generate(const std::string& prefix) override {
        auto& queue = gold_.at(prefix);
        BoxNorm b = queue.front();
        queue.pop_front();
        queue.push_back(b);
        b.x_min = std::min(1.0, b.x_min + shift_);
        b.x_max = std::min(1.0, b.x_max + shift_);
        return encode_box(b);
    }

  private:
    std::map<std::string, std::deque<BoxNorm>> gold_;
    double shift_;
};

std::vector<Turn> random_turns(Rng& rng, std::size_t k) {
    std::vector<Turn> turns;
    for (std::size_t i = 0; i < k; ++i)
        turns.push_back({"q" + std::to_string(rng.below(1000)) + "?", "a " + std::to_string(rng.below(1000))});
    return turns;
}

}  // namespace

TEST(BuildPrefix, Template) {
    DialogState s("Pick up the apple");
    EXPECT_EQ(build_prefix(s), "<image>clarify Pick up the apple");
    const std::string p0 = build_prefix(s);
    s.append_turn({"Which apple?", "The red one"});
    EXPECT_EQ(build_prefix(s), "<image>clarify Pick up the apple assistant: Which apple? user: The red one");
    EXPECT_EQ(build_prefix(s).rfind(p0, 0), 0u);
    s.finish({0, 0, 0.5, 0.5});
    EXPECT_THROW(build_prefix(s), Error);
    EXPECT_THROW(s.append_turn({"x", "y"}), Error);
    EXPECT_THROW(s.finish({0, 0, 1, 1}), Error);
}

TEST(LinearizeDialog, NoTurns) {
    const auto pairs = linearize_dialog("Get the cup", {}, {0, 0, 1, 1});
    ASSERT_EQ(pairs.size(), 1u);
    EXPECT_EQ(pairs[0].prefix, "Get the cup");
    EXPECT_EQ(pairs[0].target, "<loc0000><loc0000><loc1023><loc1023>");
    EXPECT_TRUE(pairs[0].is_grounding);
}

TEST(LinearizeDialog, TwoTurns) {
    const std::vector<Turn> turns{{"Which cup?", "The blue one"}, {"On the left?", "Yes"}};
    const auto pairs = linearize_dialog("Get the cup", turns, {0.25, 0.25, 0.75, 0.75});
    ASSERT_EQ(pairs.size(), 3u);
    EXPECT_EQ(pairs[0].prefix, "Get the cup");
    EXPECT_EQ(pairs[0].target, "Which cup?");
    EXPECT_EQ(pairs[1].prefix, "Get the cup assistant: Which cup? user: The blue one");
    EXPECT_EQ(pairs[1].target, "On the left?");
    EXPECT_EQ(pairs[2].prefix, "Get the cup assistant: Which cup? user: The blue one assistant: On the left? user: Yes");
    EXPECT_EQ(pairs[2].target, "<loc0256><loc0256><loc0768><loc0768>");
    EXPECT_FALSE(pairs[0].is_grounding);
    EXPECT_FALSE(pairs[1].is_grounding);
    EXPECT_TRUE(pairs[2].is_grounding);
}

TEST(LinearizeDialog, RandomizedStructure) {
    Rng rng(12);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t K = rng.below(6);
        const auto turns = random_turns(rng, K);
        const auto pairs = linearize_dialog("U" + std::to_string(trial), turns, {0.1, 0.2, 0.3, 0.4});
        ASSERT_EQ(pairs.size(), K + 1);
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            EXPECT_FALSE(pairs[i].target.empty());
            EXPECT_EQ(pairs[i].is_grounding, i == K);
            EXPECT_EQ(pairs[i].is_grounding, parse_loc_sequence(pairs[i].target).has_value());
            if (i > 0) {
                EXPECT_EQ(pairs[i].prefix.rfind(pairs[i - 1].prefix, 0), 0u);
                EXPECT_GT(pairs[i].prefix.size(), pairs[i - 1].prefix.size());
            }
        }
    }
}

TEST(ClassifyOutput, Examples) {
    const auto g = classify_output("<loc0010><loc0020><loc0500><loc0600>");
    ASSERT_TRUE(std::holds_alternative<Grounding>(g));
    EXPECT_EQ(std::get<Grounding>(g).quad, (LocQuad{{10, 20, 500, 600}}));

    const auto q = classify_output("assistant: which one is it?");
    ASSERT_TRUE(std::holds_alternative<Question>(q));
    EXPECT_EQ(std::get<Question>(q).text, "which one is it?");

    EXPECT_THROW(classify_output(""), MalformedGeneration);
    EXPECT_THROW(classify_output("  assistant:  \n"), MalformedGeneration);
    EXPECT_EQ(extract_question("  the   red\tone  "), "the red one");
}

TEST(RunDialog, GroundsImmediately) {
    const BoxNorm gold{0.1, 0.2, 0.4, 0.6};
    ScriptedGenerator gen({encode_box(gold)});
    ScriptedOracle oracle({});
    const auto out = run_dialog(gen, oracle, "Get the mug");
    EXPECT_EQ(gen.calls(), 1u);
    EXPECT_TRUE(out.state.turns().empty());
    EXPECT_TRUE(out.state.terminal());
    EXPECT_LT(std::abs(out.box.y_min - gold.y_min), 1.0 / 1024);
    EXPECT_LT(std::abs(out.box.x_max - gold.x_max), 1.0 / 1024);
    EXPECT_EQ(out.steps.size(), 1u);
}

TEST(RunDialog, AsksTwiceThenGrounds) {
    ScriptedGenerator gen({"Which mug?", "assistant: the big one?", "<loc0000><loc0000><loc0100><loc0100>"});
    ScriptedOracle oracle({"The red one", "Yes"});
    const auto out = run_dialog(gen, oracle, "Get the mug");
    ASSERT_EQ(out.state.turns().size(), 2u);
    EXPECT_EQ(out.state.turns()[0], (Turn{"Which mug?", "The red one"}));
    EXPECT_EQ(out.state.turns()[1], (Turn{"the big one?", "Yes"}));
    EXPECT_TRUE(out.state.terminal());
    EXPECT_EQ(oracle.consumed(), 2u);
    EXPECT_EQ(out.steps[2].prefix, "<image>clarify Get the mug assistant: Which mug? user: The red one assistant: "
                                   "the big one? user: Yes");
}

TEST(RunDialog, TurnLimitAtKMax) {
    ScriptedGenerator gen({"Which one?"});
    ScriptedOracle oracle(std::vector<std::string>(20, "that one"));
    try {
        run_dialog(gen, oracle, "Get the can");
        FAIL();
    } catch (const TurnLimitExceeded& e) {
        EXPECT_EQ(e.limit(), kDefaultMaxTurns);
        EXPECT_EQ(gen.calls(), static_cast<std::size_t>(kDefaultMaxTurns));
        EXPECT_EQ(e.state().turns().size(), static_cast<std::size_t>(kDefaultMaxTurns - 1));
        EXPECT_FALSE(e.state().terminal());
    }
}

TEST(RunDialog, OracleExhaustionAndMalformed) {
    ScriptedGenerator asks({"Which one?"});
    ScriptedOracle empty({});
    EXPECT_THROW(run_dialog(asks, empty, "Get the can"), OracleExhausted);

    ScriptedGenerator blank({""});
    ScriptedOracle o({"x"});
    EXPECT_THROW(run_dialog(blank, o, "Get the can"), MalformedGeneration);

    DialogOptions opt;
    opt.max_turns = 0;
    EXPECT_THROW(run_dialog(asks, o, "Get the can", opt), Error);
}

TEST(RunDialog, ProbeHookIsRecordedOnly) {
    ScriptedGenerator gen({"Which?", "<loc0000><loc0000><loc0010><loc0010>"});
    ScriptedOracle oracle({"left"});
    DialogOptions opt;
    int calls = 0;
    opt.ambiguity_probe = [&](const std::string&) -> std::optional<double> { return ++calls == 1 ? 0.9 : 0.1; };
    const auto out = run_dialog(gen, oracle, "Get it", opt);
    ASSERT_EQ(out.steps.size(), 2u);
    EXPECT_EQ(out.steps[0].p_amb, 0.9);
    EXPECT_EQ(out.steps[1].p_amb, 0.1);
}

TEST(StreamOracle, ReadsLines) {
    std::istringstream in("the red one\n");
    std::ostringstream prompt;
    StreamOracle o(in, prompt);
    EXPECT_EQ(o.reply("Which?"), "the red one");
    EXPECT_NE(prompt.str().find("Which?"), std::string::npos);
    EXPECT_THROW(o.reply("Again?"), OracleExhausted);
}

TEST(MaskedCe, UniformLogitsGiveLogV) {
    for (std::size_t V : {2u, 17u, 1284u}) {
        const std::vector<double> logits(5 * V, 0.37);
        EXPECT_NEAR(masked_ce(logits, V, {1, 0, 1}, 2), std::log(static_cast<double>(V)), 1e-9);
    }
}

TEST(MaskedCe, PrefixLogitsIgnoredBitwise) {
    Rng rng(6);
    const std::size_t V = 11, T = 7, start = 4;
    std::vector<double> logits(T * V);
    for (double& x : logits) x = rng.uniform(-5, 5);
    const std::vector<int> targets{3, 9, 0};
    const double base = masked_ce(logits, V, targets, start);
    for (int trial = 0; trial < 100; ++trial) {
        auto p = logits;
        p[rng.below(start * V)] += rng.uniform(-100, 100);
        EXPECT_EQ(masked_ce(p, V, targets, start), base);
    }
}

TEST(MaskedCe, MatchesScalarOracle) {
    const std::vector<double> logits{9, 9, 9, 0.5, -1.0, 2.0, 3.0, 0.0, -2.0};  // first row is prefix
    const double want = (oracle::softmax_ce({0.5, -1.0, 2.0}, 2) + oracle::softmax_ce({3.0, 0.0, -2.0}, 1)) / 2;
    EXPECT_NEAR(masked_ce(logits, 3, {2, 1}, 1), want, 1e-12);
}

TEST(MaskedCe, GradientAgainstFiniteDifferences) {
    Rng rng(7);
    const std::size_t V = 5;
    std::vector<double> logits(4 * V);
    for (double& x : logits) x = rng.uniform(-2, 2);
    const std::vector<int> targets{4, 1};
    const auto g = masked_ce_grad(logits, V, targets, 2);
    for (std::size_t i = 0; i < logits.size(); ++i) {
        auto up = logits, down = logits;
        up[i] += 1e-6;
        down[i] -= 1e-6;
        const double fd = (masked_ce(up, V, targets, 2) - masked_ce(down, V, targets, 2)) / 2e-6;
        EXPECT_NEAR(g[i], fd, 1e-8);
    }
}

TEST(MaskedCe, ZeroPrefixGradientThroughToyDecoder) {
    DecoderConfig cfg;
    cfg.seed = 8;
    const ToyDecoder dec(cfg);
    const auto seq = make_sequence(cfg, "<image>clarify Get the cup", "<loc0001><loc0002><loc0100><loc0200>");
    const Matrix logits = dec.forward_logits(seq);
    const std::size_t start = seq.prefix_end() - 1;  // row t predicts token t+1
    const auto& targets = seq.suffix_token_ids;
    const auto grad = masked_ce_grad(logits.data, vocab::size, targets, start);
    for (std::size_t i = 0; i < start * vocab::size; ++i) ASSERT_EQ(grad[i], 0.0);
    double suffix_mass = 0;
    for (std::size_t i = start * vocab::size; i < grad.size(); ++i) suffix_mass += std::abs(grad[i]);
    EXPECT_GT(suffix_mass, 0.0);
}

TEST(MaskedCe, Errors) {
    const std::vector<double> logits(6, 0.0);
    EXPECT_THROW(masked_ce(logits, 3, {}, 1), Error);
    EXPECT_THROW(masked_ce(logits, 3, {0, 0}, 1), DimensionError);
    EXPECT_THROW(masked_ce(logits, 4, {0}, 0), DimensionError);
    EXPECT_THROW(masked_ce(logits, 3, {3}, 0), DimensionError);
}

TEST(EvaluateGuesser, GoldEchoAlwaysAskAndShift) {
    const auto corpus = gen_dialog_corpus(500, 42);
    ASSERT_EQ(corpus.size(), 500u);
    const auto cases = guesser_cases(corpus);

    GoldEcho echo(cases);
    const auto r = evaluate_guesser(cases, echo);
    EXPECT_EQ(r.accuracy, 1.0);
    EXPECT_EQ(r.correct, 500u);

    ScriptedGenerator ask({"Which one?"});
    const auto q = evaluate_guesser(cases, ask);
    EXPECT_EQ(q.accuracy, 0.0);
    EXPECT_EQ(q.non_grounding, 500u);

    EXPECT_THROW(evaluate_guesser({}, ask), Error);
}

TEST(EvaluateGuesser, ShiftedBoxesMissAgainstRasterOracle) {
    std::vector<GuesserCase> cases;
    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
        const double y = rng.uniform(0, 0.5), x = rng.uniform(0, 0.2);
        cases.push_back({"case " + std::to_string(i), {y, x, y + 0.5, x + 0.5}});
    }
    GoldEcho shifted(cases, 0.3);
    EXPECT_EQ(evaluate_guesser(cases, shifted).accuracy, 0.0);
    for (const auto& c : cases) {
        const BoxNorm pred = decode_box(*parse_loc_sequence(shifted.generate(c.prefix)));
        const double raster = oracle::raster_iou(pred, c.gold, 2048);
        EXPECT_LT(raster, 0.5);
        EXPECT_NEAR(iou(pred, c.gold), raster, 1e-3);
        EXPECT_NEAR(iou(pred, c.gold), 0.25, 5e-3);
    }
}

TEST(EvaluateGuesser, OrderInvariant) {
    auto cases = guesser_cases(gen_dialog_corpus(60, 9));
    std::sort(cases.begin(), cases.end(), [](const auto& a, const auto& b) { return a.prefix < b.prefix; });
    cases.erase(std::unique(cases.begin(), cases.end(), [](const auto& a, const auto& b) { return a.prefix == b.prefix; }),
                cases.end());
    ASSERT_GE(cases.size(), 10u);
    GoldEcho shifted(cases, 0.06);  // cells are 1/8 wide, so some survive and some do not
    const auto a = evaluate_guesser(cases, shifted);
    std::reverse(cases.begin(), cases.end());
    const auto b = evaluate_guesser(cases, shifted);
    EXPECT_EQ(a.correct, b.correct);
    EXPECT_EQ(a.accuracy, b.accuracy);
}

TEST(DialogCorpus, JsonLinesRoundTrip) {
    const auto corpus = gen_dialog_corpus(20, 5);
    std::stringstream ss;
    for (const auto& r : corpus) ss << to_json_line(r) << '\n';
    ss << "\n";
    const auto back = read_dialog_corpus(ss);
    ASSERT_EQ(back.size(), corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        EXPECT_EQ(back[i].image_id, corpus[i].image_id);
        EXPECT_EQ(back[i].user_request, corpus[i].user_request);
        EXPECT_EQ(back[i].turns, corpus[i].turns);
        EXPECT_EQ(back[i].gold_box, corpus[i].gold_box);
    }
    EXPECT_EQ(to_json_line(DialogRecord{"img", "Get it", {{"Which?", "Left"}}, {0, 0, 0.5, 0.5}}),
              R"({"image_id":"img","U":"Get it","turns":[["Which?","Left"]],"gold_box":[0.0,0.0,0.5,0.5]})");
}

TEST(DialogCorpus, BadLinesNameTheLine) {
    std::istringstream in(R"({"image_id":"a","U":"x","turns":[],"gold_box":[0,0,1,1]})"
                          "\n"
                          R"({"image_id":"b","U":"x","turns":[["only one"]],"gold_box":[0,0,1,1]})");
    try {
        read_dialog_corpus(in);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
    std::istringstream bad_box(R"({"image_id":"a","U":"x","turns":[],"gold_box":[0.5,0,0.1,1]})");
    EXPECT_THROW(read_dialog_corpus(bad_box), FormatError);
    std::istringstream not_json("{oops");
    EXPECT_THROW(read_dialog_corpus(not_json), FormatError);
}

TEST(ToyGenerator, DeterministicText) {
    DecoderConfig cfg;
    cfg.seed = 2;
    const ToyDecoder dec(cfg);
    ToyGenerator gen(dec, 4);
    const std::string a = gen.generate("<image>clarify Get the cup");
    EXPECT_EQ(a, gen.generate("<image>clarify Get the cup"));
}
