#include "clue/synth.hpp"

#include <algorithm>
#include <cmath>

#include "clue/common.hpp"

namespace clue {

std::vector<BlobSpec> map_blobs(int index, int grid_side, std::uint64_t seed, const MapGenOptions& opt) {
    if (grid_side < 8) throw Error("grid side must be >= 8 for the blob separation constraint");
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(index)));
    const int label = index % 2;
    const int count = label == 0 ? 1 : 2 + static_cast<int>(rng.below(2));
    const double min_dist = grid_side / 4.0;
    const double lo = 0.5, hi = grid_side - 1.5;

    std::vector<BlobSpec> blobs;
    while (static_cast<int>(blobs.size()) < count) {
        BlobSpec b;
        b.row = rng.uniform(lo, hi);
        b.col = rng.uniform(lo, hi);
        b.sigma = rng.uniform(opt.sigma_min, opt.sigma_max);
        b.amplitude = rng.uniform(opt.amplitude_min, opt.amplitude_max);
        const bool far = std::all_of(blobs.begin(), blobs.end(),
                                     [&](const BlobSpec& o) { return std::hypot(o.row - b.row, o.col - b.col) >= min_dist; });
        if (far) blobs.push_back(b);
    }
    return blobs;
}

namespace {

LabeledMap render_sample(int index, int grid_side, std::uint64_t seed, const MapGenOptions& opt) {
    const auto blobs = map_blobs(index, grid_side, seed, opt);
    // noise stream is separate from the blob stream
    Rng noise(derive_seed(~seed, static_cast<std::uint64_t>(index)));
    std::vector<double> raw(static_cast<std::size_t>(grid_side) * grid_side, 0.0);
    for (int r = 0; r < grid_side; ++r)
        for (int c = 0; c < grid_side; ++c) {
            double v = 0.0;
            for (const auto& b : blobs) {
                const double d2 = (r - b.row) * (r - b.row) + (c - b.col) * (c - b.col);
                v += b.amplitude * std::exp(-d2 / (2.0 * b.sigma * b.sigma));
            }
            raw[static_cast<std::size_t>(r) * grid_side + c] = v + opt.noise * noise.uniform();
        }
    LabeledMap s;
    s.map = finalize_map(raw, grid_side);
    s.label = index % 2;
    return s;
}

}  // namespace

std::vector<LabeledMap> gen_map_dataset(int n, int grid_side, std::uint64_t seed, const MapGenOptions& opt) {
    if (n <= 0) throw Error("dataset size must be positive");
    if (grid_side < 8) throw Error("grid side must be >= 8 for the blob separation constraint");
    std::vector<LabeledMap> out(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = render_sample(i, grid_side, seed, opt);
    return out;
}

std::vector<std::string> default_object_classes() {
    return {"apple", "mug", "banana", "bowl", "cup", "can", "box", "sponge"};
}

int count_class(const SyntheticScene& s, const std::string& name) {
    return static_cast<int>(
        std::count_if(s.objects.begin(), s.objects.end(), [&](const SceneObject& o) { return o.name == name; }));
}

namespace {

const std::vector<std::string> kAttributes = {"red", "green", "blue", "yellow", "left", "right"};

SyntheticScene random_scene(Rng& rng, const std::vector<std::string>& classes, int grid_side) {
    SyntheticScene s;
    std::vector<int> occupied;
    auto place = [&](const std::string& name) {
        int cell;
        do {
            cell = static_cast<int>(rng.below(static_cast<std::uint64_t>(grid_side * grid_side)));
        } while (std::find(occupied.begin(), occupied.end(), cell) != occupied.end());
        occupied.push_back(cell);
        // attribute unique among objects of this class
        std::string attr;
        do {
            attr = kAttributes[rng.below(kAttributes.size())];
        } while (std::any_of(s.objects.begin(), s.objects.end(),
                             [&](const SceneObject& o) { return o.name == name && o.attribute == attr; }));
        s.objects.push_back({name, cell / grid_side, cell % grid_side, attr});
    };

    const std::string& dup = classes[rng.below(classes.size())];
    const int copies = 2 + static_cast<int>(rng.below(2));
    for (int i = 0; i < copies; ++i) place(dup);
    const int extra = 1 + static_cast<int>(rng.below(3));
    for (int i = 0; i < extra; ++i) place(classes[rng.below(classes.size())]);
    return s;
}

}  // namespace

std::vector<SyntheticScene> gen_scene_dataset(int n, std::uint64_t seed, const std::vector<std::string>& classes,
                                              int grid_side) {
    if (classes.size() < 2) throw Error("need at least two object classes");
    if (n < 0) throw Error("scene count must be non-negative");
    if (grid_side * grid_side < 8) throw Error("grid too small for a scene");
    std::vector<SyntheticScene> out;
    for (int i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        const SyntheticScene base = random_scene(rng, classes, grid_side);

        std::vector<std::string> dups, uniques;
        for (const auto& o : base.objects) {
            auto& bucket = count_class(base, o.name) >= 2 ? dups : uniques;
            if (std::find(bucket.begin(), bucket.end(), o.name) == bucket.end()) bucket.push_back(o.name);
        }

        SyntheticScene amb = base;
        const std::string& dup = dups[rng.below(dups.size())];
        amb.instruction = "Get the " + dup;
        amb.label = 1;
        for (const auto& o : base.objects)
            if (o.name == dup) {
                amb.target_attribute = o.attribute;
                break;
            }
        out.push_back(std::move(amb));

        if (!uniques.empty()) {
            SyntheticScene una = base;
            una.instruction = "Get the " + uniques[rng.below(uniques.size())];
            una.label = 0;
            out.push_back(std::move(una));
        }
    }
    return out;
}

BoxNorm object_box(const SceneObject& o, int grid_side) {
    const double g = grid_side;
    return {o.row / g, o.col / g, (o.row + 1) / g, (o.col + 1) / g};
}

std::vector<DialogRecord> gen_dialog_corpus(int n, std::uint64_t seed, int grid_side) {
    const auto scenes = gen_scene_dataset(n, seed, default_object_classes(), grid_side);
    std::vector<DialogRecord> out;
    for (std::size_t i = 0; i < scenes.size() && out.size() < static_cast<std::size_t>(n); ++i) {
        const auto& s = scenes[i];
        const std::string name = s.instruction.substr(std::string("Get the ").size());
        DialogRecord r;
        r.image_id = "scene-" + std::to_string(i);
        r.user_request = s.instruction;
        const SceneObject* target = nullptr;
        for (const auto& o : s.objects)
            if (o.name == name && (s.label == 0 || o.attribute == s.target_attribute)) {
                target = &o;
                break;
            }
        if (s.label == 1) r.turns.push_back({"Which " + name + " do you mean?", "The " + target->attribute + " one"});
        r.gold_box = object_box(*target, grid_side);
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace clue
