#include "clue/aggregate.hpp"

#include <algorithm>
#include <string>

#include "clue/common.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace clue {

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

std::vector<std::size_t> select_queries(const TokenMeta& meta) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < meta.query_roles.size(); ++i)
        if (meta.query_roles[i] == TokenRole::content) out.push_back(i);
    if (out.empty()) throw Error("no content queries");
    return out;
}

namespace {

void renormalize_row(const AttentionTensor& t, std::size_t h, std::size_t q, double epsilon, double* dst,
                     double& mass) {
    const std::size_t L = t.num_image_tokens;
    const float* src = t.values.data() + t.index(h, q, 0);
    double sum = 0.0;
    for (std::size_t j = 0; j < L; ++j) sum += static_cast<double>(src[j]);
    mass = sum;
    const double denom = sum + epsilon;
    for (std::size_t k = 0; k < L; ++k) dst[k] = static_cast<double>(src[k]) / denom;
}

}  // namespace

RenormalizedAttention renormalize_per_head(const AttentionTensor& t, const std::vector<std::size_t>& queries,
                                           double epsilon, Exec exec) {
    if (!(epsilon > 0.0)) throw Error("epsilon must be positive");
    for (std::size_t q : queries)
        if (q >= t.num_queries) throw DimensionError("query index " + std::to_string(q) + " out of range");

    RenormalizedAttention r;
    r.num_heads = t.num_heads;
    r.num_queries = queries.size();
    r.num_image_tokens = t.num_image_tokens;
    r.values.resize(r.num_heads * r.num_queries * r.num_image_tokens);
    r.image_mass.resize(r.num_heads * r.num_queries);

    const auto rows = static_cast<std::ptrdiff_t>(r.num_heads * r.num_queries);
    const auto L = r.num_image_tokens;
    auto body = [&](std::ptrdiff_t row) {
        const auto h = static_cast<std::size_t>(row) / r.num_queries;
        const auto slot = static_cast<std::size_t>(row) % r.num_queries;
        renormalize_row(t, h, queries[slot], epsilon, r.values.data() + static_cast<std::size_t>(row) * L,
                        r.image_mass[static_cast<std::size_t>(row)]);
    };
    if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t row = 0; row < rows; ++row) body(row);
    } else {
        for (std::ptrdiff_t row = 0; row < rows; ++row) body(row);
    }
    return r;
}

std::vector<double> aggregate_mean(const RenormalizedAttention& renorm, Exec exec) {
    if (renorm.num_queries == 0 || renorm.num_heads == 0) throw Error("no content queries");
    const std::size_t L = renorm.num_image_tokens;
    const double count = static_cast<double>(renorm.num_queries * renorm.num_heads);
    std::vector<double> v(L, 0.0);

    if (exec == Exec::parallel) {
        // Each key owns its accumulator, so the h/q addition order matches the serial loop.
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t kk = 0; kk < static_cast<std::ptrdiff_t>(L); ++kk) {
            const auto k = static_cast<std::size_t>(kk);
            double acc = 0.0;
            for (std::size_t h = 0; h < renorm.num_heads; ++h)
                for (std::size_t q = 0; q < renorm.num_queries; ++q) acc += renorm.at(h, q, k);
            v[k] = acc / count;
        }
    } else {
        for (std::size_t h = 0; h < renorm.num_heads; ++h)
            for (std::size_t q = 0; q < renorm.num_queries; ++q)
                for (std::size_t k = 0; k < L; ++k) v[k] += renorm.at(h, q, k);
        for (double& x : v) x /= count;
    }
    return v;
}

AmbiguityMap finalize_map(const std::vector<double>& pooled, int grid_side) {
    if (grid_side <= 0 || pooled.size() != static_cast<std::size_t>(grid_side) * grid_side)
        throw DimensionError("pooled vector of length " + std::to_string(pooled.size()) +
                             " cannot be reshaped to " + std::to_string(grid_side) + "x" +
                             std::to_string(grid_side));
    AmbiguityMap m;
    m.grid_side = grid_side;
    m.values.assign(pooled.size(), 0.0);
    for (double x : pooled) m.pre_normalization_sum += x;

    const auto [lo, hi] = std::minmax_element(pooled.begin(), pooled.end());
    const double range = *hi - *lo;
    if (range > 0.0)
        for (std::size_t i = 0; i < pooled.size(); ++i) m.values[i] = (pooled[i] - *lo) / range;
    return m;
}

Extraction extract_map(const AttentionTensor& t, const TokenMeta& meta, int grid_side, double epsilon, Exec exec) {
    if (meta.query_roles.size() != t.num_queries)
        throw DimensionError("token meta has " + std::to_string(meta.query_roles.size()) + " roles for " +
                             std::to_string(t.num_queries) + " queries");
    if (static_cast<std::size_t>(grid_side) * grid_side != t.num_image_tokens)
        throw DimensionError("num_image_tokens " + std::to_string(t.num_image_tokens) + " is not " +
                             std::to_string(grid_side) + "^2");

    Extraction out;
    out.trace.epsilon = epsilon;
    out.trace.content_query_indices = select_queries(meta);
    out.trace.renormalized = renormalize_per_head(t, out.trace.content_query_indices, epsilon, exec);
    out.trace.pooled = aggregate_mean(out.trace.renormalized, exec);
    out.map = finalize_map(out.trace.pooled, grid_side);
    out.map.source_layer = static_cast<int>(t.layer_index);
    return out;
}

std::vector<AmbiguityMap> extract_maps(const std::vector<TensorSample>& batch, int grid_side, double epsilon,
                                       Exec exec) {
    std::vector<AmbiguityMap> maps(batch.size());
    if (exec == Exec::parallel) {
        // Samples fan out; per-sample kernels run serially inside.
        std::vector<std::string> errors(batch.size());
#pragma omp parallel for schedule(dynamic)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(batch.size()); ++i) {
            const auto& s = batch[static_cast<std::size_t>(i)];
            try {
                maps[static_cast<std::size_t>(i)] = extract_map(s.tensor, s.meta, grid_side, epsilon, Exec::serial).map;
            } catch (const std::exception& e) {
                errors[static_cast<std::size_t>(i)] = e.what();
            }
        }
        for (std::size_t i = 0; i < errors.size(); ++i)
            if (!errors[i].empty()) throw Error("sample " + std::to_string(i) + ": " + errors[i]);
    } else {
        for (std::size_t i = 0; i < batch.size(); ++i)
            maps[i] = extract_map(batch[i].tensor, batch[i].meta, grid_side, epsilon, Exec::serial).map;
    }
    return maps;
}

std::string render_ascii(const AmbiguityMap& m) {
    static constexpr char ramp[] = " .:-=+*#%@";
    std::string out;
    for (int r = 0; r < m.grid_side; ++r) {
        for (int c = 0; c < m.grid_side; ++c) {
            const int idx = std::clamp(static_cast<int>(m.at(r, c) * 9.0 + 0.5), 0, 9);
            out += ramp[idx];
            out += ramp[idx];
        }
        out += '\n';
    }
    return out;
}

}  // namespace clue
