#pragma once

// Synthetic data at desk scale:
//   - ambiguity maps: one blob (unambiguous) vs 2-3 separated blobs (ambiguous)
//   - tabletop scenes with at least one duplicated object class and
//     "Get the <object>" instructions labeled by recounting class matches
//   - clarification dialogs over those scenes, for the dialog engine

#include <cstdint>
#include <string>
#include <vector>

#include "clue/dialog.hpp"
#include "clue/probe.hpp"

namespace clue {

struct MapGenOptions {
    double sigma_min = 1.5;
    double sigma_max = 3.0;
    double amplitude_min = 0.6;
    double amplitude_max = 1.0;
    double noise = 0.05;  // additive uniform [0, noise)
};

struct BlobSpec {
    double row = 0, col = 0, sigma = 0, amplitude = 0;
};

// Sample i has label i % 2, so classes are balanced within +-1.
std::vector<LabeledMap> gen_map_dataset(int n, int grid_side, std::uint64_t seed, const MapGenOptions& opt = {});

// The blobs behind sample `index` of gen_map_dataset(.., seed, opt).
std::vector<BlobSpec> map_blobs(int index, int grid_side, std::uint64_t seed, const MapGenOptions& opt = {});

struct SceneObject {
    std::string name;
    int row = 0, col = 0;
    std::string attribute;
};

struct SyntheticScene {
    std::vector<SceneObject> objects;
    std::string instruction;
    int label = 0;
    std::string target_attribute;  // disambiguating attribute for the dialog oracle (ambiguous case)
};

std::vector<std::string> default_object_classes();

int count_class(const SyntheticScene& s, const std::string& name);

// Each scene emits one ambiguous instruction, plus one unambiguous when a
// unique object exists.
std::vector<SyntheticScene> gen_scene_dataset(int n, std::uint64_t seed, const std::vector<std::string>& classes,
                                              int grid_side = 8);

// Object cell rendered as a normalized box on a grid_side grid.
BoxNorm object_box(const SceneObject& o, int grid_side);

// Exactly n records: ambiguous scenes get one clarification turn.
std::vector<DialogRecord> gen_dialog_corpus(int n, std::uint64_t seed, int grid_side = 8);

}  // namespace clue
