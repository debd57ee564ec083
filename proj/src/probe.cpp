#include "clue/probe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "clue/bytes.hpp"
#include "clue/common.hpp"
#include "clue/metrics.hpp"

namespace clue {

ProbeParams ProbeParams::zeros(int grid_side) {
    if (grid_side <= 0 || grid_side % 4 != 0)
        throw DimensionError("grid side " + std::to_string(grid_side) + " is not a positive multiple of 4");
    ProbeParams p;
    p.grid_side = grid_side;
    p.conv1_w.assign(kConv1Out * 9, 0.0);
    p.conv1_b.assign(kConv1Out, 0.0);
    p.conv2_w.assign(kConv2Out * kConv1Out * 9, 0.0);
    p.conv2_b.assign(kConv2Out, 0.0);
    p.fc1_w.assign(static_cast<std::size_t>(kHidden) * p.flat_features(), 0.0);
    p.fc1_b.assign(kHidden, 0.0);
    p.fc2_w.assign(kHidden, 0.0);
    p.fc2_b.assign(1, 0.0);
    return p;
}

std::size_t ProbeParams::count() const {
    std::size_t n = 0;
    for (auto t : tensors()) n += t.size();
    return n;
}

std::array<std::span<double>, 8> ProbeParams::tensors() {
    return {conv1_w, conv1_b, conv2_w, conv2_b, fc1_w, fc1_b, fc2_w, fc2_b};
}

std::array<std::span<const double>, 8> ProbeParams::tensors() const {
    return {conv1_w, conv1_b, conv2_w, conv2_b, fc1_w, fc1_b, fc2_w, fc2_b};
}

ProbeParams init_params(int grid_side, std::uint64_t seed) {
    ProbeParams p = ProbeParams::zeros(grid_side);
    Rng rng(seed);
    auto fill = [&](std::vector<double>& w, int fan_in) {
        const double bound = std::sqrt(6.0 / fan_in);
        for (double& x : w) x = rng.uniform(-bound, bound);
    };
    fill(p.conv1_w, 9);
    fill(p.conv2_w, kConv1Out * 9);
    fill(p.fc1_w, p.flat_features());
    fill(p.fc2_w, kHidden);
    return p;
}

namespace {

// 3x3 same-padding convolution, planes are [channel][y][x].
void conv3x3(const double* in, int in_ch, int side, const double* w, const double* b, int out_ch, double* out) {
    for (int o = 0; o < out_ch; ++o) {
        double* dst = out + static_cast<std::size_t>(o) * side * side;
        std::fill(dst, dst + side * side, b[o]);
        for (int i = 0; i < in_ch; ++i) {
            const double* src = in + static_cast<std::size_t>(i) * side * side;
            const double* k = w + (static_cast<std::size_t>(o) * in_ch + i) * 9;
            for (int y = 0; y < side; ++y)
                for (int ky = 0; ky < 3; ++ky) {
                    const int sy = y + ky - 1;
                    if (sy < 0 || sy >= side) continue;
                    for (int x = 0; x < side; ++x)
                        for (int kx = 0; kx < 3; ++kx) {
                            const int sx = x + kx - 1;
                            if (sx < 0 || sx >= side) continue;
                            dst[y * side + x] += k[ky * 3 + kx] * src[sy * side + sx];
                        }
                }
        }
    }
}

void conv3x3_backward(const double* in, int in_ch, int side, const double* w, int out_ch, const double* d_out,
                      double* d_w, double* d_b, double* d_in) {
    for (int o = 0; o < out_ch; ++o) {
        const double* g = d_out + static_cast<std::size_t>(o) * side * side;
        for (int n = 0; n < side * side; ++n) d_b[o] += g[n];
        for (int i = 0; i < in_ch; ++i) {
            const double* src = in + static_cast<std::size_t>(i) * side * side;
            const double* k = w + (static_cast<std::size_t>(o) * in_ch + i) * 9;
            double* dk = d_w + (static_cast<std::size_t>(o) * in_ch + i) * 9;
            double* di = d_in ? d_in + static_cast<std::size_t>(i) * side * side : nullptr;
            for (int y = 0; y < side; ++y)
                for (int ky = 0; ky < 3; ++ky) {
                    const int sy = y + ky - 1;
                    if (sy < 0 || sy >= side) continue;
                    for (int x = 0; x < side; ++x)
                        for (int kx = 0; kx < 3; ++kx) {
                            const int sx = x + kx - 1;
                            if (sx < 0 || sx >= side) continue;
                            const double go = g[y * side + x];
                            dk[ky * 3 + kx] += go * src[sy * side + sx];
                            if (di) di[sy * side + sx] += go * k[ky * 3 + kx];
                        }
                }
        }
    }
}

// 2x2 max pool; argmax keeps the first maximum in row-major window order.
void maxpool2(const double* in, int ch, int side, double* out, int* argmax) {
    const int half = side / 2;
    for (int c = 0; c < ch; ++c)
        for (int y = 0; y < half; ++y)
            for (int x = 0; x < half; ++x) {
                const std::size_t base = static_cast<std::size_t>(c) * side * side;
                int best = static_cast<int>(base) + (2 * y) * side + 2 * x;
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        const int idx = static_cast<int>(base) + (2 * y + dy) * side + 2 * x + dx;
                        if (in[idx] > in[best]) best = idx;
                    }
                const std::size_t o = (static_cast<std::size_t>(c) * half + y) * half + x;
                out[o] = in[best];
                argmax[o] = best;
            }
}

struct Activations {
    std::vector<double> c1, p1, c2, p2, h;
    std::vector<int> a1, a2;
    double z = 0.0;
    double prob = 0.0;
};

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

void check_map(const ProbeParams& p, const AmbiguityMap& m) {
    if (m.grid_side != p.grid_side || m.values.size() != static_cast<std::size_t>(p.grid_side) * p.grid_side)
        throw DimensionError("map grid " + std::to_string(m.grid_side) + " does not match probe grid " +
                             std::to_string(p.grid_side));
}

Activations run_forward(const ProbeParams& p, const AmbiguityMap& m) {
    check_map(p, m);
    const int G = p.grid_side, G2 = G / 2, G4 = G / 4;
    Activations a;
    a.c1.resize(static_cast<std::size_t>(kConv1Out) * G * G);
    conv3x3(m.values.data(), 1, G, p.conv1_w.data(), p.conv1_b.data(), kConv1Out, a.c1.data());
    for (double& x : a.c1) x = std::max(x, 0.0);
    a.p1.resize(static_cast<std::size_t>(kConv1Out) * G2 * G2);
    a.a1.resize(a.p1.size());
    maxpool2(a.c1.data(), kConv1Out, G, a.p1.data(), a.a1.data());

    a.c2.resize(static_cast<std::size_t>(kConv2Out) * G2 * G2);
    conv3x3(a.p1.data(), kConv1Out, G2, p.conv2_w.data(), p.conv2_b.data(), kConv2Out, a.c2.data());
    for (double& x : a.c2) x = std::max(x, 0.0);
    a.p2.resize(static_cast<std::size_t>(kConv2Out) * G4 * G4);
    a.a2.resize(a.p2.size());
    maxpool2(a.c2.data(), kConv2Out, G2, a.p2.data(), a.a2.data());

    const int F = p.flat_features();
    a.h.resize(kHidden);
    for (int j = 0; j < kHidden; ++j) {
        double s = p.fc1_b[j];
        const double* row = p.fc1_w.data() + static_cast<std::size_t>(j) * F;
        for (int f = 0; f < F; ++f) s += row[f] * a.p2[f];
        a.h[j] = std::max(s, 0.0);
    }
    a.z = p.fc2_b[0];
    for (int j = 0; j < kHidden; ++j) a.z += p.fc2_w[j] * a.h[j];
    a.prob = sigmoid(a.z);
    return a;
}

}  // namespace

double forward(const ProbeParams& p, const AmbiguityMap& m) {
    const double prob = run_forward(p, m).prob;
    // keep strictly inside (0,1) even when the logit saturates
    return std::clamp(prob, 1e-15, 1.0 - 1e-15);
}

double bce_loss(double p_amb, int label) {
    if (!(p_amb > 0.0 && p_amb < 1.0)) throw Error("p_amb outside (0,1)");
    if (label != 0 && label != 1) throw Error("label must be 0 or 1");
    constexpr double floor = 1e-12;
    return label == 1 ? -std::log(std::max(p_amb, floor)) : -std::log(std::max(1.0 - p_amb, floor));
}

ProbeGrad backward(const ProbeParams& p, const AmbiguityMap& m, int label, double* loss_out) {
    const Activations a = run_forward(p, m);
    if (loss_out) *loss_out = bce_loss(std::clamp(a.prob, 1e-15, 1.0 - 1e-15), label);

    const int G = p.grid_side, G2 = G / 2;
    const int F = p.flat_features();
    ProbeGrad g = ProbeParams::zeros(G);

    // d loss / d z for sigmoid + BCE
    const double dz = a.prob - static_cast<double>(label);
    g.fc2_b[0] = dz;
    std::vector<double> dh(kHidden);
    for (int j = 0; j < kHidden; ++j) {
        g.fc2_w[j] = dz * a.h[j];
        dh[j] = a.h[j] > 0.0 ? dz * p.fc2_w[j] : 0.0;
    }

    std::vector<double> dp2(static_cast<std::size_t>(F), 0.0);
    for (int j = 0; j < kHidden; ++j) {
        if (dh[j] == 0.0) continue;
        g.fc1_b[j] = dh[j];
        const double* row = p.fc1_w.data() + static_cast<std::size_t>(j) * F;
        double* grow = g.fc1_w.data() + static_cast<std::size_t>(j) * F;
        for (int f = 0; f < F; ++f) {
            grow[f] = dh[j] * a.p2[f];
            dp2[f] += dh[j] * row[f];
        }
    }

    std::vector<double> dc2(a.c2.size(), 0.0);
    for (std::size_t i = 0; i < dp2.size(); ++i) dc2[a.a2[i]] += dp2[i];
    for (std::size_t i = 0; i < dc2.size(); ++i)
        if (a.c2[i] <= 0.0) dc2[i] = 0.0;

    std::vector<double> dp1(a.p1.size(), 0.0);
    conv3x3_backward(a.p1.data(), kConv1Out, G2, p.conv2_w.data(), kConv2Out, dc2.data(), g.conv2_w.data(),
                     g.conv2_b.data(), dp1.data());

    std::vector<double> dc1(a.c1.size(), 0.0);
    for (std::size_t i = 0; i < dp1.size(); ++i) dc1[a.a1[i]] += dp1[i];
    for (std::size_t i = 0; i < dc1.size(); ++i)
        if (a.c1[i] <= 0.0) dc1[i] = 0.0;

    conv3x3_backward(m.values.data(), 1, G, p.conv1_w.data(), kConv1Out, dc1.data(), g.conv1_w.data(),
                     g.conv1_b.data(), nullptr);
    return g;
}

namespace {

void accumulate(ProbeGrad& into, const ProbeGrad& g) {
    auto dst = into.tensors();
    auto src = g.tensors();
    for (std::size_t t = 0; t < dst.size(); ++t)
        for (std::size_t i = 0; i < dst[t].size(); ++i) dst[t][i] += src[t][i];
}

void scale(ProbeGrad& g, double s) {
    for (auto t : g.tensors())
        for (double& x : t) x *= s;
}

}  // namespace

ProbeGrad batch_gradient(const ProbeParams& p, std::span<const LabeledMap* const> batch, double* mean_loss_out,
                         Exec exec) {
    if (batch.empty()) throw Error("empty batch");
    const std::size_t n = batch.size();
    ProbeGrad total = ProbeParams::zeros(p.grid_side);
    std::vector<double> losses(n, 0.0);

    if (exec == Exec::parallel) {
        std::vector<ProbeGrad> per(n);
        std::vector<std::string> errors(n);
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
            const auto k = static_cast<std::size_t>(i);
            try {
                per[k] = backward(p, batch[k]->map, batch[k]->label, &losses[k]);
            } catch (const std::exception& e) {
                errors[k] = e.what();
            }
        }
        for (std::size_t k = 0; k < n; ++k) {
            if (!errors[k].empty()) throw Error(errors[k]);
            accumulate(total, per[k]);
        }
    } else {
        for (std::size_t k = 0; k < n; ++k) accumulate(total, backward(p, batch[k]->map, batch[k]->label, &losses[k]));
    }

    scale(total, 1.0 / static_cast<double>(n));
    if (mean_loss_out) {
        double s = 0.0;
        for (double l : losses) s += l;
        *mean_loss_out = s / static_cast<double>(n);
    }
    return total;
}

OptimizerState OptimizerState::for_params(const ProbeParams& p) {
    OptimizerState s;
    s.first_moment = ProbeParams::zeros(p.grid_side);
    s.second_moment = ProbeParams::zeros(p.grid_side);
    return s;
}

void adamw_step(ProbeParams& p, const ProbeGrad& g, OptimizerState& s) {
    if (g.grid_side != p.grid_side || s.first_moment.grid_side != p.grid_side)
        throw DimensionError("optimizer shapes do not match parameters");
    for (auto t : g.tensors())
        for (double x : t)
            if (!std::isfinite(x)) throw Error("non-finite gradient");

    s.step += 1;
    const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
    const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
    auto params = p.tensors();
    auto grads = g.tensors();
    auto m1 = s.first_moment.tensors();
    auto m2 = s.second_moment.tensors();
    for (std::size_t t = 0; t < params.size(); ++t) {
        for (std::size_t i = 0; i < params[t].size(); ++i) {
            double& w = params[t][i];
            const double gi = grads[t][i];
            w -= s.lr * s.weight_decay * w;
            m1[t][i] = s.beta1 * m1[t][i] + (1.0 - s.beta1) * gi;
            m2[t][i] = s.beta2 * m2[t][i] + (1.0 - s.beta2) * gi * gi;
            const double mhat = m1[t][i] / bc1;
            const double vhat = m2[t][i] / bc2;
            w -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
        }
    }
}

TrainResult train(const std::vector<LabeledMap>& dataset, const TrainConfig& cfg,
                  const std::vector<LabeledMap>& validation) {
    if (dataset.empty()) throw Error("empty training set");
    const bool has0 = std::any_of(dataset.begin(), dataset.end(), [](const auto& s) { return s.label == 0; });
    const bool has1 = std::any_of(dataset.begin(), dataset.end(), [](const auto& s) { return s.label == 1; });
    if (!has0 || !has1) throw Error("training set must contain both classes");
    if (cfg.batch_size < 1 || cfg.epochs < 0) throw Error("invalid training config");

    const int G = dataset.front().map.grid_side;
    TrainResult out;
    out.params = init_params(G, cfg.seed);
    OptimizerState opt = OptimizerState::for_params(out.params);
    opt.lr = cfg.lr;
    opt.weight_decay = cfg.weight_decay;

    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<const LabeledMap*> batch;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            batch.clear();
            for (std::size_t i = start; i < end; ++i) batch.push_back(&dataset[order[i]]);
            double batch_loss = 0.0;
            const ProbeGrad g = batch_gradient(out.params, batch, &batch_loss, cfg.exec);
            loss_sum += batch_loss * static_cast<double>(batch.size());
            adamw_step(out.params, g, opt);
        }

        EpochRecord rec;
        rec.epoch = epoch + 1;
        rec.train_loss = loss_sum / static_cast<double>(dataset.size());
        if (!validation.empty()) {
            ConfusionCounts c;
            for (const auto& s : validation) c.add(predict(out.params, s.map).ambiguous, s.label == 1);
            const auto metrics = classification_metrics(c);
            rec.validation_f1 = metrics.f1;
            rec.validation_accuracy = metrics.accuracy;
        }
        out.history.push_back(rec);
    }
    return out;
}

Prediction predict(const ProbeParams& p, const AmbiguityMap& m, double threshold) {
    Prediction r;
    r.p_amb = forward(p, m);
    r.ambiguous = r.p_amb >= threshold;
    return r;
}

std::vector<GridPoint> localize_peaks(const AmbiguityMap& m, int min_separation, double min_height) {
    const int G = m.grid_side;
    std::vector<GridPoint> candidates;
    for (int r = 0; r < G; ++r)
        for (int c = 0; c < G; ++c) {
            const double v = m.at(r, c);
            if (!(v > min_height)) continue;
            bool is_max = true;
            for (int dr = -1; dr <= 1 && is_max; ++dr)
                for (int dc = -1; dc <= 1; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    if ((dr == 0 && dc == 0) || rr < 0 || rr >= G || cc < 0 || cc >= G) continue;
                    if (m.at(rr, cc) > v) {
                        is_max = false;
                        break;
                    }
                }
            if (is_max) candidates.push_back({r, c, v});
        }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const GridPoint& a, const GridPoint& b) { return a.height > b.height; });

    std::vector<GridPoint> peaks;
    for (const auto& cand : candidates) {
        const bool far = std::all_of(peaks.begin(), peaks.end(), [&](const GridPoint& p) {
            return std::max(std::abs(p.row - cand.row), std::abs(p.col - cand.col)) >= min_separation;
        });
        if (far) peaks.push_back(cand);
    }
    return peaks;
}

namespace {
constexpr char kParamsMagic[4] = {'C', 'P', 'R', 'B'};
constexpr std::uint16_t kParamsVersion = 1;
}  // namespace

std::vector<std::uint8_t> encode_params(const ProbeParams& p) {
    ByteWriter w;
    w.bytes(kParamsMagic, 4);
    w.u16(kParamsVersion);
    w.u16(static_cast<std::uint16_t>(p.tensors().size()));
    w.u32(static_cast<std::uint32_t>(p.grid_side));
    for (auto t : p.tensors()) w.u32(static_cast<std::uint32_t>(t.size()));
    for (auto t : p.tensors())
        for (double x : t) w.f32(static_cast<float>(x));
    return std::move(w.buffer());
}

ProbeParams decode_params(std::span<const std::uint8_t> bytes) {
    ByteReader rd(bytes);
    char magic[4];
    rd.read(magic, 4);
    if (std::memcmp(magic, kParamsMagic, 4) != 0) throw FormatError("bad magic: not a probe params file");
    if (const auto v = rd.u16(); v != kParamsVersion) throw FormatError("unsupported params version " + std::to_string(v));
    if (rd.u16() != 8) throw FormatError("params file: unexpected tensor count");
    ProbeParams p = ProbeParams::zeros(static_cast<int>(rd.u32()));
    for (auto t : p.tensors())
        if (rd.u32() != t.size()) throw FormatError("params file: tensor shape does not match grid side");
    for (auto t : p.tensors())
        for (double& x : t) {
            const float f = rd.f32();
            if (!std::isfinite(f)) throw FormatError("params file: non-finite weight");
            x = f;
        }
    if (rd.remaining() != 0) throw FormatError("params file: trailing bytes");
    return p;
}

void save_params(const std::string& path, const ProbeParams& p) { write_file_bytes(path, encode_params(p)); }

ProbeParams load_params(const std::string& path) { return decode_params(read_file_bytes(path)); }

}  // namespace clue
