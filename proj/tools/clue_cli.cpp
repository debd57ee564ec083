// clue: command-line front end.
//
// JSON goes to stdout, diagnostics to stderr. Every run writes
// <out-dir>/<subcommand>.manifest (flat key=value, sorted) before doing any
// work. Exit codes: 0 ok, 1 domain error, 2 usage error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "clue/aggregate.hpp"
#include "clue/attn_format.hpp"
#include "clue/dialog.hpp"
#include "clue/map_io.hpp"
#include "clue/metrics.hpp"
#include "clue/probe.hpp"
#include "clue/sweep.hpp"
#include "clue/synth.hpp"
#include "clue/toy_decoder.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace clue;

namespace {

struct Globals {
    std::uint64_t seed = 42;
    std::string out_dir = ".";
    int verbosity = 0;
};

Globals g;

void log(int level, const std::string& msg) {
    if (g.verbosity >= level) std::cerr << msg << '\n';
}

std::string out_path(const std::string& given, const std::string& fallback) {
    return given.empty() ? (fs::path(g.out_dir) / fallback).string() : given;
}

void emit(const json& j) { std::cout << j.dump(2, ' ', false, json::error_handler_t::replace) << '\n'; }

std::string option_value(const CLI::Option* opt) {
    if (opt->get_type_size() == 0) return opt->count() > 0 ? "true" : "false";
    if (opt->count() == 0) return opt->get_default_str();
    std::string v;
    for (const auto& r : opt->results()) v += (v.empty() ? "" : ",") + r;
    return v;
}

void write_manifest(const CLI::App& app, const CLI::App& sub) {
    std::map<std::string, std::string> kv;
    auto collect = [&](const CLI::App& a) {
        for (const CLI::Option* opt : a.get_options()) {
            const std::string name = opt->get_single_name();
            if (name == "help" || name == "h") continue;
            kv[name] = option_value(opt);
        }
    };
    collect(app);
    collect(sub);
    kv.erase("verbose");
    kv.erase("quiet");
    fs::create_directories(g.out_dir);
    std::ofstream out(fs::path(g.out_dir) / (sub.get_name() + ".manifest"), std::ios::trunc);
    out << "subcommand=" << sub.get_name() << '\n';
    for (const auto& [k, v] : kv) out << k << '=' << v << '\n';
    if (!out) throw Error("cannot write manifest in " + g.out_dir);
}

struct DecoderFlags {
    int grid = 8;
    int layers = 4;
    int heads = 4;
    int kv_heads = 2;
    int dim = 64;

    void attach(CLI::App* sub) {
        sub->add_option("--grid", grid, "image grid side G (L_img = G*G)")->capture_default_str();
        sub->add_option("--num-layers", layers, "decoder blocks")->capture_default_str();
        sub->add_option("--heads", heads, "query heads")->capture_default_str();
        sub->add_option("--kv-heads", kv_heads, "key/value heads")->capture_default_str();
        sub->add_option("--dim", dim, "model width")->capture_default_str();
    }
    DecoderConfig config() const {
        DecoderConfig c;
        c.grid_side = grid;
        c.num_image_tokens = grid * grid;
        c.num_layers = layers;
        c.num_heads = heads;
        c.num_kv_heads = kv_heads;
        c.model_dim = dim;
        c.seed = g.seed;
        c.validate();
        return c;
    }
};

int grid_of(const AttentionTensor& t) {
    const int G = static_cast<int>(std::lround(std::sqrt(static_cast<double>(t.num_image_tokens))));
    if (G * G != static_cast<int>(t.num_image_tokens))
        throw DimensionError("L_img=" + std::to_string(t.num_image_tokens) + " is not a square grid");
    return G;
}

json box_json(const BoxNorm& b) { return json::array({b.y_min, b.x_min, b.y_max, b.x_max}); }

json scene_json(const SyntheticScene& s) {
    json objs = json::array();
    for (const auto& o : s.objects)
        objs.push_back({{"name", o.name}, {"row", o.row}, {"col", o.col}, {"attribute", o.attribute}});
    return {{"instruction", s.instruction},
            {"label", s.label},
            {"target_attribute", s.target_attribute},
            {"objects", objs}};
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
    if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    for (const auto& l : lines) out << l << '\n';
    if (!out) throw Error("cannot write " + path);
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    return lines;
}

// ---- subcommands ----

struct GenData {
    std::string kind;
    int n = 1000;
    int grid = 32;
    double noise = 0.05;
    std::string out;

    int run() {
        json j{{"kind", kind}, {"n", n}, {"seed", g.seed}};
        if (kind == "maps") {
            MapGenOptions opt;
            opt.noise = noise;
            const auto data = gen_map_dataset(n, grid, g.seed, opt);
            const std::string dir = out_path(out, "maps");
            save_map_dataset(dir, data);
            j["path"] = dir;
            j["grid"] = grid;
        } else if (kind == "scenes") {
            const auto scenes = gen_scene_dataset(n, g.seed, default_object_classes());
            std::vector<std::string> lines;
            for (const auto& s : scenes) lines.push_back(scene_json(s).dump());
            const std::string path = out_path(out, "scenes.jsonl");
            write_lines(path, lines);
            j["path"] = path;
            j["records"] = lines.size();
        } else {
            const auto corpus = gen_dialog_corpus(n, g.seed);
            std::vector<std::string> lines;
            for (const auto& r : corpus) lines.push_back(to_json_line(r));
            const std::string path = out_path(out, "dialogs.jsonl");
            write_lines(path, lines);
            j["path"] = path;
            j["records"] = lines.size();
        }
        emit(j);
        return 0;
    }
};

struct GenAttn {
    DecoderFlags dec;
    std::string text;
    std::string suffix;
    int layer = -1;
    std::string out;

    int run() {
        const DecoderConfig cfg = dec.config();
        const ToyDecoder decoder(cfg);
        const TokenSequence seq = make_sequence(cfg, text, suffix);
        const int read = layer < 0 ? cfg.half_depth_layer() : layer;
        const AttentionTensor t = decoder.forward_attention(seq, read);
        const std::string path = out_path(out, "attn.cat1");
        write_tensor_file(path, t, decoder.query_meta(seq));
        emit({{"path", path},
              {"layer", read},
              {"heads", t.num_heads},
              {"queries", t.num_queries},
              {"keys", t.num_keys},
              {"image_tokens", t.num_image_tokens}});
        return 0;
    }
};

struct Aggregate {
    std::string in;
    std::string out;
    std::string ascii;
    double epsilon = kDefaultEpsilon;

    int run() {
        const auto d = read_tensor_file(in);
        const auto ex = extract_map(d.tensor, d.meta, grid_of(d.tensor), epsilon);
        const std::string path = out_path(out, "map.amap");
        save_map(path, ex.map);
        if (!ascii.empty()) {
            const std::string art = render_ascii(ex.map);
            if (ascii == "-") {
                std::cerr << art;
            } else {
                std::ofstream f(ascii, std::ios::binary | std::ios::trunc);
                f << art;
                if (!f) throw Error("cannot write " + ascii);
            }
        }
        emit({{"path", path},
              {"grid", ex.map.grid_side},
              {"layer", ex.map.source_layer},
              {"content_queries", ex.trace.content_query_indices.size()},
              {"pre_normalization_sum", ex.map.pre_normalization_sum}});
        return 0;
    }
};

struct TrainProbe {
    std::string data;
    std::string validation;
    std::string out;
    TrainConfig cfg;

    int run() {
        const auto train_set = load_map_dataset(data);
        const auto val = validation.empty() ? std::vector<LabeledMap>{} : load_map_dataset(validation);
        cfg.seed = g.seed;
        const TrainResult r = train(train_set, cfg, val);
        const std::string path = out_path(out, "probe.bin");
        save_params(path, r.params);
        json hist = json::array();
        for (const auto& e : r.history) {
            log(1, "epoch " + std::to_string(e.epoch) + " loss " + std::to_string(e.train_loss));
            json row{{"epoch", e.epoch}, {"train_loss", e.train_loss}};
            if (!val.empty()) {
                row["validation_f1"] = e.validation_f1;
                row["validation_accuracy"] = e.validation_accuracy;
            }
            hist.push_back(row);
        }
        emit({{"path", path}, {"grid", r.params.grid_side}, {"parameters", r.params.count()}, {"history", hist}});
        return 0;
    }
};

struct Detect {
    std::string map_file;
    std::string attn_file;
    std::string params_file;
    double threshold = 0.5;
    int min_sep = -1;
    double min_height = 0.3;

    int run() {
        const ProbeParams p = load_params(params_file);
        AmbiguityMap m;
        if (!map_file.empty()) {
            m = load_map(map_file);
        } else {
            const auto d = read_tensor_file(attn_file);
            m = extract_map(d.tensor, d.meta, grid_of(d.tensor)).map;
        }
        if (m.grid_side != p.grid_side)
            throw DimensionError("map grid " + std::to_string(m.grid_side) + " does not match probe grid " +
                                 std::to_string(p.grid_side));
        const Prediction pr = predict(p, m, threshold);
        json peaks = json::array();
        for (const auto& pk : localize_peaks(m, min_sep < 0 ? std::max(1, m.grid_side / 8) : min_sep, min_height))
            peaks.push_back({{"row", pk.row}, {"col", pk.col}, {"height", pk.height}});
        emit({{"p_amb", pr.p_amb}, {"decision", pr.ambiguous ? "ambiguous" : "unambiguous"}, {"peaks", peaks}});
        return 0;
    }
};

struct Dialog {
    DecoderFlags dec;
    std::string request;
    bool interactive = false;
    std::string oracle_file;
    std::string script_file;
    std::string params_file;
    int max_turns = kDefaultMaxTurns;
    int max_new_tokens = 32;

    int run() {
        const DecoderConfig cfg = dec.config();
        const ToyDecoder decoder(cfg);
        std::unique_ptr<GeneratorPort> gen;
        if (!script_file.empty())
            gen = std::make_unique<ScriptedGenerator>(read_lines(script_file));
        else
            gen = std::make_unique<ToyGenerator>(decoder, max_new_tokens);

        std::unique_ptr<ReplySource> oracle;
        if (interactive)
            oracle = std::make_unique<StreamOracle>(std::cin, std::cerr);
        else
            oracle = std::make_unique<ScriptedOracle>(read_lines(oracle_file));

        DialogOptions opt;
        opt.max_turns = max_turns;
        std::optional<ProbeParams> probe;
        if (!params_file.empty()) {
            probe = load_params(params_file);
            if (probe->grid_side != cfg.grid_side) throw DimensionError("probe grid does not match --grid");
            opt.ambiguity_probe = [&](const std::string& prefix) -> std::optional<double> {
                const TokenSequence seq = make_sequence(cfg, prefix);
                const auto t = decoder.forward_attention(seq, cfg.half_depth_layer());
                return forward(*probe, extract_map(t, decoder.query_meta(seq), cfg.grid_side).map);
            };
        }

        auto turns_json = [](const DialogState& s) {
            json a = json::array();
            for (const auto& t : s.turns()) a.push_back(json::array({t.question, t.answer}));
            return a;
        };
        try {
            const DialogOutcome o = run_dialog(*gen, *oracle, request, opt);
            json steps = json::array();
            for (const auto& s : o.steps) {
                json row{{"prefix", s.prefix}, {"generated", s.generated}};
                if (s.p_amb) row["p_amb"] = *s.p_amb;
                steps.push_back(row);
            }
            emit({{"request", request},
                  {"turns", turns_json(o.state)},
                  {"box", box_json(o.box)},
                  {"loc", encode_box(o.box)},
                  {"steps", steps}});
            return 0;
        } catch (const TurnLimitExceeded& e) {
            emit({{"request", request}, {"turns", turns_json(e.state())}, {"error", "turn_limit"}, {"limit", e.limit()}});
            throw;
        }
    }
};

struct Linearize {
    std::string corpus;
    std::string out;

    int run() {
        const auto records = read_dialog_corpus_file(corpus);
        std::vector<std::string> lines;
        for (const auto& r : records)
            for (const auto& p : linearize_dialog(r.user_request, r.turns, r.gold_box))
                lines.push_back(json{{"image_id", r.image_id},
                                     {"prefix", p.prefix},
                                     {"target", p.target},
                                     {"grounding", p.is_grounding}}
                                    .dump());
        const std::string path = out_path(out, "pairs.jsonl");
        write_lines(path, lines);
        emit({{"path", path}, {"dialogs", records.size()}, {"pairs", lines.size()}});
        return 0;
    }
};

// Answers case i with the i-th gold box, optionally shifted in x.
class GoldStub : public GeneratorPort {
  public:
    GoldStub(const std::vector<GuesserCase>& cases, double shift) : cases_(cases), shift_(shift) {}
    std::string generate(const std::string&) override {
        BoxNorm b = cases_.at(next_++).gold;
        b.x_min = std::min(1.0, b.x_min + shift_);
        b.x_max = std::min(1.0, b.x_max + shift_);
        return encode_box(b);
    }

  private:
    const std::vector<GuesserCase>& cases_;
    double shift_;
    std::size_t next_ = 0;
};

struct EvalGuesser {
    std::string corpus;
    std::string predictions;
    std::string stub;
    double shift = 0.3;
    double threshold = 0.5;

    int run() {
        const auto cases = guesser_cases(read_dialog_corpus_file(corpus));
        std::unique_ptr<GeneratorPort> gen;
        if (!predictions.empty()) {
            auto lines = read_lines(predictions);
            if (lines.size() != cases.size())
                throw Error(std::to_string(lines.size()) + " predictions for " + std::to_string(cases.size()) +
                            " dialogs");
            gen = std::make_unique<ScriptedGenerator>(std::move(lines));
        } else if (stub == "ask") {
            gen = std::make_unique<ScriptedGenerator>(std::vector<std::string>{"Which one do you mean?"});
        } else {
            gen = std::make_unique<GoldStub>(cases, stub == "shift" ? shift : 0.0);
        }
        const GuesserResult r = evaluate_guesser(cases, *gen, threshold);
        emit({{"accuracy", r.accuracy},
              {"correct", r.correct},
              {"total", r.total},
              {"non_grounding", r.non_grounding},
              {"iou_threshold", threshold}});
        return 0;
    }
};

struct SweepLayers {
    DecoderFlags dec;
    std::vector<int> layers{0, 1, 2, 3};
    int n = 200;
    TrainConfig train;
    double test_fraction = 0.2;
    std::string out;

    int run() {
        SweepConfig cfg;
        cfg.decoder = dec.config();
        cfg.train = train;
        cfg.train.seed = g.seed;
        cfg.test_fraction = test_fraction;
        const auto scenes = gen_scene_dataset(n, g.seed, default_object_classes(), cfg.decoder.grid_side);
        log(1, "sweeping " + std::to_string(layers.size()) + " layers over " + std::to_string(scenes.size()) +
                   " instructions");
        const LayerSweepResult r = layer_sweep(layers, scenes, cfg);
        std::cerr << format_sweep_table(r);
        json rows = json::array();
        for (const auto& row : r.rows) rows.push_back({{"layer", row.layer}, {"f1", row.f1}, {"accuracy", row.accuracy}});
        const json j{{"seed", r.seed}, {"instructions", scenes.size()}, {"rows", rows}};
        const std::string path = out_path(out, "sweep.json");
        write_lines(path, {j.dump()});
        emit(j);
        return 0;
    }
};

struct Validate {
    std::string file;
    bool softmax_rows = false;

    int run() {
        const auto d = read_tensor_file(file);
        auto report = validate_tensor(d.tensor, softmax_rows);
        const auto meta = validate_meta(d.tensor, d.meta);
        report.issues.insert(report.issues.end(), meta.issues.begin(), meta.issues.end());
        json issues = json::array();
        for (const auto& i : report.issues) issues.push_back(i.message);
        emit({{"ok", report.ok()}, {"issues", issues}});
        if (!report.ok()) {
            for (const auto& i : report.issues) std::cerr << file << ": " << i.message << '\n';
            return 1;
        }
        return 0;
    }
};

struct Inspect {
    std::string file;

    int run() {
        const auto d = read_tensor_file(file);
        const auto& t = d.tensor;
        std::map<std::string, int> roles;
        for (TokenRole r : d.meta.query_roles) ++roles[role_name(r)];
        json role_counts = json::object();
        for (const auto& [k, v] : roles) role_counts[k] = v;
        json j{{"format", "CAT1"},
               {"version", kCat1Version},
               {"layer", t.layer_index},
               {"heads", t.num_heads},
               {"queries", t.num_queries},
               {"keys", t.num_keys},
               {"image_tokens", t.num_image_tokens},
               {"bytes", cat1_size(t, d.meta)},
               {"roles", role_counts}};
        if (d.meta.text_strings) j["text_strings"] = *d.meta.text_strings;
        emit(j);
        return 0;
    }
};

void add_train_flags(CLI::App* sub, TrainConfig& cfg) {
    sub->add_option("--epochs", cfg.epochs, "training epochs")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--batch", cfg.batch_size, "minibatch size")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--lr", cfg.lr, "AdamW learning rate")->capture_default_str();
    sub->add_option("--weight-decay", cfg.weight_decay, "decoupled weight decay")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"clue: attention-map ambiguity toolkit"};
    app.require_subcommand(1);
    app.fallthrough();
    app.add_option("--seed", g.seed, "seed for every random draw")->capture_default_str();
    app.add_option("--out-dir", g.out_dir, "directory for outputs and manifests")->capture_default_str();
    app.add_flag("-v,--verbose", g.verbosity, "more diagnostics on stderr (repeatable)");
    app.add_flag_callback("-q,--quiet", [] { g.verbosity = -1; }, "no diagnostics");

    std::function<int()> action;
    auto bind = [&](CLI::App* sub, auto& cmd) { sub->callback([&] { action = [&] { return cmd.run(); }; }); };

    GenData gen_data;
    {
        auto* s = app.add_subcommand("gen-data", "generate synthetic maps, scenes or dialogs");
        s->add_option("--kind", gen_data.kind, "maps | scenes | dialogs")
            ->required()
            ->check(CLI::IsMember({"maps", "scenes", "dialogs"}));
        s->add_option("--n", gen_data.n, "number of samples")->capture_default_str()->check(CLI::PositiveNumber);
        s->add_option("--grid", gen_data.grid, "map grid side (maps)")->capture_default_str();
        s->add_option("--noise", gen_data.noise, "additive uniform noise amplitude (maps)")->capture_default_str();
        s->add_option("--out", gen_data.out, "output path (default under --out-dir)");
        bind(s, gen_data);
    }
    GenAttn gen_attn;
    {
        auto* s = app.add_subcommand("gen-attn", "run the toy decoder and write a CAT1 attention file");
        gen_attn.dec.attach(s);
        s->add_option("--text", gen_attn.text, "prefix text")->required();
        s->add_option("--suffix", gen_attn.suffix, "suffix text");
        s->add_option("--layer", gen_attn.layer, "block to read (default half depth)")->capture_default_str();
        s->add_option("--out", gen_attn.out, "output CAT1 path");
        bind(s, gen_attn);
    }
    Aggregate aggregate;
    {
        auto* s = app.add_subcommand("aggregate", "CAT1 file to ambiguity map");
        s->add_option("--in", aggregate.in, "CAT1 input")->required()->check(CLI::ExistingFile);
        s->add_option("--out", aggregate.out, "AMAP output path");
        s->add_option("--ascii", aggregate.ascii, "also write a text rendering to FILE ('-' for stderr)");
        s->add_option("--epsilon", aggregate.epsilon, "renormalization epsilon")
            ->capture_default_str()
            ->check(CLI::PositiveNumber);
        bind(s, aggregate);
    }
    TrainProbe train_probe;
    {
        auto* s = app.add_subcommand("train-probe", "train the CNN probe on a map dataset");
        s->add_option("--data", train_probe.data, "map dataset directory")->required()->check(CLI::ExistingDirectory);
        s->add_option("--validation", train_probe.validation, "held-out map dataset directory")
            ->check(CLI::ExistingDirectory);
        s->add_option("--out", train_probe.out, "params output path");
        add_train_flags(s, train_probe.cfg);
        bind(s, train_probe);
    }
    Detect detect;
    {
        auto* s = app.add_subcommand("detect", "classify one map or CAT1 file with a trained probe");
        auto* m = s->add_option("--map", detect.map_file, "AMAP input")->check(CLI::ExistingFile);
        auto* a = s->add_option("--attn", detect.attn_file, "CAT1 input")->check(CLI::ExistingFile);
        m->excludes(a);
        s->add_option("--params", detect.params_file, "probe params")->required()->check(CLI::ExistingFile);
        s->add_option("--threshold", detect.threshold, "decision threshold (ties are ambiguous)")->capture_default_str();
        s->add_option("--min-sep", detect.min_sep, "peak separation in cells (default G/8)")->capture_default_str();
        s->add_option("--min-height", detect.min_height, "peak height floor")->capture_default_str();
        s->callback([&, m, a] {
            if (m->count() + a->count() != 1) throw CLI::RequiredError("exactly one of --map or --attn");
            action = [&] { return detect.run(); };
        });
    }
    Dialog dialog;
    {
        auto* s = app.add_subcommand("dialog", "run the clarification loop");
        dialog.dec.attach(s);
        s->add_option("--request", dialog.request, "user request U")->required();
        auto* i = s->add_flag("--interactive", dialog.interactive, "read replies from stdin");
        auto* o = s->add_option("--oracle", dialog.oracle_file, "file of scripted replies, one per line")
                      ->check(CLI::ExistingFile);
        i->excludes(o);
        s->add_option("--script", dialog.script_file, "scripted generator outputs, one per line")
            ->check(CLI::ExistingFile);
        s->add_option("--params", dialog.params_file, "probe params for per-step p_amb")->check(CLI::ExistingFile);
        s->add_option("--max-turns", dialog.max_turns, "generation budget k_max")->capture_default_str();
        s->add_option("--max-new-tokens", dialog.max_new_tokens, "toy generator length cap")->capture_default_str();
        s->callback([&, i, o] {
            if (i->count() + o->count() != 1) throw CLI::RequiredError("exactly one of --interactive or --oracle");
            action = [&] { return dialog.run(); };
        });
    }
    Linearize linearize;
    {
        auto* s = app.add_subcommand("linearize", "dialog corpus to prefix/target training pairs");
        s->add_option("--corpus", linearize.corpus, "dialog corpus (JSON lines)")->required()->check(CLI::ExistingFile);
        s->add_option("--out", linearize.out, "pairs output path");
        bind(s, linearize);
    }
    EvalGuesser eval;
    {
        auto* s = app.add_subcommand("eval-guesser", "Acc@IoU over a dialog corpus");
        s->add_option("--corpus", eval.corpus, "dialog corpus (JSON lines)")->required()->check(CLI::ExistingFile);
        auto* p = s->add_option("--predictions", eval.predictions, "generated output per dialog, one per line")
                      ->check(CLI::ExistingFile);
        auto* st = s->add_option("--stub", eval.stub, "gold | ask | shift")->check(CLI::IsMember({"gold", "ask", "shift"}));
        p->excludes(st);
        s->add_option("--shift", eval.shift, "x shift for --stub shift")->capture_default_str();
        s->add_option("--iou", eval.threshold, "IoU threshold")->capture_default_str();
        s->callback([&, p, st] {
            if (p->count() + st->count() != 1) throw CLI::RequiredError("exactly one of --predictions or --stub");
            action = [&] { return eval.run(); };
        });
    }
    SweepLayers sweep;
    {
        auto* s = app.add_subcommand("sweep-layers", "probe F1 per decoder layer on synthetic scenes");
        sweep.dec.attach(s);
        s->add_option("--layers", sweep.layers, "comma-separated layer indices")
            ->delimiter(',')
            ->capture_default_str();
        s->add_option("--n", sweep.n, "ambiguous instructions to generate")->capture_default_str();
        s->add_option("--test-fraction", sweep.test_fraction, "held-out share")->capture_default_str();
        s->add_option("--out", sweep.out, "JSON output path");
        add_train_flags(s, sweep.train);
        bind(s, sweep);
    }
    Validate validate;
    {
        auto* s = app.add_subcommand("validate", "check a CAT1 file");
        s->add_option("file", validate.file, "CAT1 file")->required()->check(CLI::ExistingFile);
        s->add_flag("--softmax-rows", validate.softmax_rows, "also require rows to sum to 1");
        bind(s, validate);
    }
    Inspect inspect;
    {
        auto* s = app.add_subcommand("inspect", "print a CAT1 header summary");
        s->add_option("file", inspect.file, "CAT1 file")->required()->check(CLI::ExistingFile);
        bind(s, inspect);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n";
        const auto subs = app.get_subcommands();
        std::cerr << (subs.empty() ? app.help() : subs.front()->help());
        return 2;
    }

    try {
        write_manifest(app, *app.get_subcommands().front());
        return action();
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
