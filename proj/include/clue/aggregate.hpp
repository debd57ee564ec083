#pragma once

// Cross-attention -> spatial ambiguity map.
//
//   1. keep content queries only (conditioning/eos/pad/image roles dropped)
//   2. per (head, query) row, L1-renormalize over the image keys:
//        a[h,q,k] = A[h,q,k] / (sum_{j<L_img} A[h,q,j] + eps)
//   3. mean over heads and content queries -> v, length L_img
//   4. reshape row-major to G x G and min-max normalize
//
// Arithmetic is 64-bit. Summation order is fixed (keys innermost, then
// queries, then heads), so the serial and OpenMP paths agree bitwise.

#include <cstddef>
#include <utility>
#include <vector>

#include "clue/attn_format.hpp"
#include "clue/parallel.hpp"

namespace clue {

inline constexpr double kDefaultEpsilon = 1e-8;

struct AmbiguityMap {
    int grid_side = 0;
    std::vector<double> values;  // G*G, row-major, in [0,1]
    int source_layer = -1;
    double pre_normalization_sum = 0.0;

    double at(int row, int col) const { return values[static_cast<std::size_t>(row) * grid_side + col]; }
    double& at(int row, int col) { return values[static_cast<std::size_t>(row) * grid_side + col]; }
};

// Renormalized image attention, [h][query slot][k].
struct RenormalizedAttention {
    std::size_t num_heads = 0;
    std::size_t num_queries = 0;
    std::size_t num_image_tokens = 0;
    std::vector<double> values;
    std::vector<double> image_mass;  // raw sum over image keys, [h][query slot]

    double at(std::size_t h, std::size_t q, std::size_t k) const {
        return values[(h * num_queries + q) * num_image_tokens + k];
    }
};

struct AggregationTrace {
    std::vector<std::size_t> content_query_indices;
    RenormalizedAttention renormalized;
    std::vector<double> pooled;
    double epsilon = kDefaultEpsilon;
};

std::vector<std::size_t> select_queries(const TokenMeta& meta);

RenormalizedAttention renormalize_per_head(const AttentionTensor& t, const std::vector<std::size_t>& queries,
                                           double epsilon, Exec exec = Exec::parallel);

std::vector<double> aggregate_mean(const RenormalizedAttention& renorm, Exec exec = Exec::parallel);

// Constant input maps to all zeros.
AmbiguityMap finalize_map(const std::vector<double>& pooled, int grid_side);

struct Extraction {
    AmbiguityMap map;
    AggregationTrace trace;
};

Extraction extract_map(const AttentionTensor& t, const TokenMeta& meta, int grid_side,
                       double epsilon = kDefaultEpsilon, Exec exec = Exec::parallel);

struct TensorSample {
    AttentionTensor tensor;
    TokenMeta meta;
};

// Maps for many samples, returned in input order. The parallel path fans
// out across samples.
std::vector<AmbiguityMap> extract_maps(const std::vector<TensorSample>& batch, int grid_side,
                                       double epsilon = kDefaultEpsilon, Exec exec = Exec::parallel);

// Plain-text heat map, one character per cell.
std::string render_ascii(const AmbiguityMap& m);

}  // namespace clue
