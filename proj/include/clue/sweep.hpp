#pragma once

// Decoder-layer ablation: for each layer, extract maps from that layer's
// attention, train a fresh probe with the same seed, score it on a held-out
// split.

#include <cstdint>
#include <string>
#include <vector>

#include "clue/probe.hpp"
#include "clue/synth.hpp"
#include "clue/toy_decoder.hpp"

namespace clue {

struct SweepConfig {
    DecoderConfig decoder;
    TrainConfig train;
    double test_fraction = 0.2;
};

struct LayerScore {
    int layer = 0;
    double f1 = 0.0;
    double accuracy = 0.0;
    bool operator==(const LayerScore&) const = default;
};

struct LayerSweepResult {
    std::vector<LayerScore> rows;
    std::uint64_t seed = 0;
    bool operator==(const LayerSweepResult&) const = default;
};

// Scene + instruction as a decoder input: object names are written into
// the patches they occupy.
TokenSequence scene_sequence(const DecoderConfig& cfg, const SyntheticScene& scene);

// Maps from one decoder pass per sample, indexed [layer slot][sample].
std::vector<std::vector<LabeledMap>> scene_maps(const ToyDecoder& decoder, const std::vector<SyntheticScene>& data,
                                                const std::vector<int>& layers, Exec exec = Exec::parallel);

// layers must be strictly increasing and inside the decoder's depth.
LayerSweepResult layer_sweep(const std::vector<int>& layers, const std::vector<SyntheticScene>& data,
                             const SweepConfig& cfg);

std::string format_sweep_table(const LayerSweepResult& r);

}  // namespace clue
