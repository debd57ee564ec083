#pragma once

// Ambiguity probe: a small CNN from a G x G ambiguity map to p_amb.
//
//   conv 1->8 3x3 pad 1, ReLU, maxpool 2
//   conv 8->16 3x3 pad 1, ReLU, maxpool 2
//   fc 16*(G/4)^2 -> 64, ReLU
//   fc 64 -> 1, sigmoid
//
// Trained with BCE and AdamW. Parameters live in double precision; the
// on-disk format stores f32.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "clue/aggregate.hpp"
#include "clue/parallel.hpp"

namespace clue {

inline constexpr int kConv1Out = 8;
inline constexpr int kConv2Out = 16;
inline constexpr int kHidden = 64;

struct ProbeParams {
    int grid_side = 0;
    std::vector<double> conv1_w;  // 8 x 1 x 3 x 3
    std::vector<double> conv1_b;  // 8
    std::vector<double> conv2_w;  // 16 x 8 x 3 x 3
    std::vector<double> conv2_b;  // 16
    std::vector<double> fc1_w;    // 64 x F, F = 16*(G/4)^2
    std::vector<double> fc1_b;    // 64
    std::vector<double> fc2_w;    // 1 x 64
    std::vector<double> fc2_b;    // 1

    static ProbeParams zeros(int grid_side);

    int flat_features() const { return kConv2Out * (grid_side / 4) * (grid_side / 4); }
    std::size_t count() const;
    std::array<std::span<double>, 8> tensors();
    std::array<std::span<const double>, 8> tensors() const;
    static constexpr std::array<const char*, 8> names{"conv1_w", "conv1_b", "conv2_w", "conv2_b",
                                                      "fc1_w",   "fc1_b",   "fc2_w",   "fc2_b"};

    bool operator==(const ProbeParams&) const = default;
};

using ProbeGrad = ProbeParams;

ProbeParams init_params(int grid_side, std::uint64_t seed);

double forward(const ProbeParams& p, const AmbiguityMap& m);

// Loss uses logs clamped at 1e-12; p outside (0,1) is rejected.
double bce_loss(double p_amb, int label);

struct LabeledMap {
    AmbiguityMap map;
    int label = 0;  // 1 ambiguous, 0 unambiguous
};

// Gradient of bce_loss(forward(p, m), y) for one sample.
ProbeGrad backward(const ProbeParams& p, const AmbiguityMap& m, int label, double* loss_out = nullptr);

// Mean gradient over a batch. Per-sample gradients are reduced in input order.
ProbeGrad batch_gradient(const ProbeParams& p, std::span<const LabeledMap* const> batch, double* mean_loss_out,
                         Exec exec = Exec::parallel);

struct OptimizerState {
    std::int64_t step = 0;
    ProbeParams first_moment;
    ProbeParams second_moment;
    double lr = 1e-4;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static OptimizerState for_params(const ProbeParams& p);
};

// Decoupled weight decay with bias correction. Updates p and s in place.
void adamw_step(ProbeParams& p, const ProbeGrad& g, OptimizerState& s);

struct TrainConfig {
    int epochs = 10;
    int batch_size = 32;
    double lr = 1e-4;
    double weight_decay = 1e-4;
    std::uint64_t seed = 42;
    Exec exec = Exec::parallel;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double validation_f1 = 0.0;  // 0 when no validation set
    double validation_accuracy = 0.0;
};

struct TrainResult {
    ProbeParams params;
    std::vector<EpochRecord> history;
};

TrainResult train(const std::vector<LabeledMap>& dataset, const TrainConfig& cfg,
                  const std::vector<LabeledMap>& validation = {});

struct Prediction {
    bool ambiguous = false;
    double p_amb = 0.0;
};

// Ties resolve to ambiguous.
Prediction predict(const ProbeParams& p, const AmbiguityMap& m, double threshold = 0.5);

struct GridPoint {
    int row = 0;
    int col = 0;
    double height = 0.0;
    bool operator==(const GridPoint&) const = default;
};

// Local maxima (8-neighbourhood) strictly above min_height, taken greedily
// by height with pairwise Chebyshev distance >= min_separation.
std::vector<GridPoint> localize_peaks(const AmbiguityMap& m, int min_separation, double min_height);

std::vector<std::uint8_t> encode_params(const ProbeParams& p);
ProbeParams decode_params(std::span<const std::uint8_t> bytes);
void save_params(const std::string& path, const ProbeParams& p);
ProbeParams load_params(const std::string& path);

}  // namespace clue
