#include "clue/sweep.hpp"

#include <cstdio>
#include <numeric>

#include "clue/metrics.hpp"

namespace clue {

TokenSequence scene_sequence(const DecoderConfig& cfg, const SyntheticScene& scene) {
    TokenSequence seq = make_sequence(cfg, scene.instruction);
    seq.image_content.assign(static_cast<std::size_t>(cfg.num_image_tokens), {});
    for (const auto& o : scene.objects) {
        if (o.row < 0 || o.row >= cfg.grid_side || o.col < 0 || o.col >= cfg.grid_side)
            throw Error("scene object outside the decoder grid");
        seq.image_content[static_cast<std::size_t>(o.row * cfg.grid_side + o.col)] = tokenize_toy(o.name);
    }
    return seq;
}

std::vector<std::vector<LabeledMap>> scene_maps(const ToyDecoder& decoder, const std::vector<SyntheticScene>& data,
                                                const std::vector<int>& layers, Exec exec) {
    const auto& cfg = decoder.config();
    std::vector<std::vector<LabeledMap>> out(layers.size(), std::vector<LabeledMap>(data.size()));
    auto body = [&](std::size_t i) {
        const TokenSequence seq = scene_sequence(cfg, data[i]);
        const TokenMeta meta = decoder.query_meta(seq);
        const auto tensors = decoder.forward_attention_layers(seq, layers);
        for (std::size_t s = 0; s < layers.size(); ++s) {
            out[s][i].map = extract_map(tensors[s], meta, cfg.grid_side, kDefaultEpsilon, Exec::serial).map;
            out[s][i].label = data[i].label;
        }
    };
    if (exec == Exec::parallel) {
        std::vector<std::string> errors(data.size());
#pragma omp parallel for schedule(dynamic)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(data.size()); ++i) {
            try {
                body(static_cast<std::size_t>(i));
            } catch (const std::exception& e) {
                errors[static_cast<std::size_t>(i)] = e.what();
            }
        }
        for (const auto& e : errors)
            if (!e.empty()) throw Error(e);
    } else {
        for (std::size_t i = 0; i < data.size(); ++i) body(i);
    }
    return out;
}

LayerSweepResult layer_sweep(const std::vector<int>& layers, const std::vector<SyntheticScene>& data,
                             const SweepConfig& cfg) {
    if (layers.empty()) throw Error("no layers requested");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i] < 0 || layers[i] >= cfg.decoder.num_layers)
            throw Error("layer " + std::to_string(layers[i]) + " out of range for a " +
                        std::to_string(cfg.decoder.num_layers) + "-block decoder");
        if (i > 0 && layers[i] <= layers[i - 1]) throw Error("layers must be strictly increasing");
    }
    if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0)) throw Error("test_fraction must be in (0,1)");

    const ToyDecoder decoder(cfg.decoder);
    const auto maps = scene_maps(decoder, data, layers, cfg.train.exec);

    // one shuffled split shared by every layer
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(cfg.train.seed, 0x5eedULL));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    const auto n_test = static_cast<std::size_t>(static_cast<double>(data.size()) * cfg.test_fraction);
    if (n_test == 0 || n_test >= data.size()) throw Error("dataset too small for the requested split");

    LayerSweepResult result;
    result.seed = cfg.train.seed;
    for (std::size_t s = 0; s < layers.size(); ++s) {
        std::vector<LabeledMap> train_set, test_set;
        for (std::size_t i = 0; i < order.size(); ++i)
            (i < n_test ? test_set : train_set).push_back(maps[s][order[i]]);
        const TrainResult trained = train(train_set, cfg.train);
        ConfusionCounts c;
        for (const auto& t : test_set) c.add(predict(trained.params, t.map).ambiguous, t.label == 1);
        const auto m = classification_metrics(c);
        result.rows.push_back({layers[s], m.f1, m.accuracy});
    }
    return result;
}

std::string format_sweep_table(const LayerSweepResult& r) {
    std::string out = "layer      f1  accuracy\n";
    char buf[64];
    for (const auto& row : r.rows) {
        std::snprintf(buf, sizeof buf, "%5d  %6.4f  %8.4f\n", row.layer, row.f1, row.accuracy);
        out += buf;
    }
    std::snprintf(buf, sizeof buf, "reference: layer %d F1 %.3f (full-scale backbone)\n", reference::kPeakLayer,
                  reference::kPeakLayerF1);
    out += buf;
    return out;
}

}  // namespace clue
