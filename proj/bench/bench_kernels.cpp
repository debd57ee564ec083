// Serial reference vs OpenMP paths for the hot kernels. The second argument
// of every benchmark selects the path: 0 serial, 1 parallel.

#include <benchmark/benchmark.h>

#include <cmath>

#include "clue/aggregate.hpp"
#include "clue/probe.hpp"
#include "clue/synth.hpp"

using namespace clue;

namespace {

Exec exec_of(const benchmark::State& st) { return st.range(1) == 0 ? Exec::serial : Exec::parallel; }

AttentionTensor random_tensor(Rng& rng, std::uint32_t H, std::uint32_t Q, std::uint32_t L) {
    AttentionTensor t;
    t.num_heads = H;
    t.num_queries = Q;
    t.num_keys = L + Q;
    t.num_image_tokens = L;
    t.values.resize(std::size_t{H} * Q * t.num_keys);
    for (std::size_t r = 0; r < std::size_t{H} * Q; ++r) {
        double sum = 0.0;
        for (std::size_t k = 0; k < t.num_keys; ++k) sum += (t.values[r * t.num_keys + k] = static_cast<float>(std::exp(rng.uniform(-3, 3))));
        for (std::size_t k = 0; k < t.num_keys; ++k) t.values[r * t.num_keys + k] = static_cast<float>(t.values[r * t.num_keys + k] / sum);
    }
    return t;
}

TokenMeta content_meta(std::size_t q) { return {std::vector<TokenRole>(q, TokenRole::content), std::nullopt}; }

void BM_ExtractMap(benchmark::State& st) {
    const int G = static_cast<int>(st.range(0));
    Rng rng(1);
    const auto t = random_tensor(rng, 8, 16, static_cast<std::uint32_t>(G * G));
    const auto meta = content_meta(16);
    for (auto _ : st) benchmark::DoNotOptimize(extract_map(t, meta, G, kDefaultEpsilon, exec_of(st)));
    st.SetItemsProcessed(st.iterations());
}

void BM_ExtractMapsBatch(benchmark::State& st) {
    const int G = static_cast<int>(st.range(0));
    Rng rng(2);
    std::vector<TensorSample> batch;
    for (int i = 0; i < 32; ++i) batch.push_back({random_tensor(rng, 4, 8, static_cast<std::uint32_t>(G * G)), content_meta(8)});
    for (auto _ : st) benchmark::DoNotOptimize(extract_maps(batch, G, kDefaultEpsilon, exec_of(st)));
    st.SetItemsProcessed(st.iterations() * 32);
}

void BM_BatchGradient(benchmark::State& st) {
    const int G = static_cast<int>(st.range(0));
    const auto data = gen_map_dataset(32, G, 3);
    std::vector<const LabeledMap*> ptrs;
    for (const auto& s : data) ptrs.push_back(&s);
    const auto p = init_params(G, 4);
    double loss = 0.0;
    for (auto _ : st) benchmark::DoNotOptimize(batch_gradient(p, ptrs, &loss, exec_of(st)));
    st.SetItemsProcessed(st.iterations() * 32);
}

}  // namespace

BENCHMARK(BM_ExtractMap)->ArgsProduct({{8, 32}, {0, 1}})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ExtractMapsBatch)->ArgsProduct({{8, 32}, {0, 1}})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_BatchGradient)->ArgsProduct({{16, 32}, {0, 1}})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
