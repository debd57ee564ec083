#include "clue/toy_decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "clue/common.hpp"

namespace clue {

namespace {

struct Literal {
    std::string_view text;
    int id;
};
constexpr Literal kLiterals[] = {
    {"<image>", vocab::image},
    {"clarify", vocab::clarify},
    {"<eos>", vocab::eos},
    {"<pad>", vocab::pad},
};

int loc_literal(std::string_view s, std::size_t pos) {
    if (pos + 9 > s.size() || s.compare(pos, 4, "<loc") != 0 || s[pos + 8] != '>') return -1;
    int v = 0;
    for (std::size_t i = pos + 4; i < pos + 8; ++i) {
        if (s[i] < '0' || s[i] > '9') return -1;
        v = v * 10 + (s[i] - '0');
    }
    return v < 1024 ? v : -1;
}

}  // namespace

std::vector<int> tokenize_toy(std::string_view text) {
    std::vector<int> ids;
    std::size_t pos = 0;
    while (pos < text.size()) {
        bool matched = false;
        for (const auto& lit : kLiterals) {
            if (text.compare(pos, lit.text.size(), lit.text) == 0) {
                ids.push_back(lit.id);
                pos += lit.text.size();
                matched = true;
                break;
            }
        }
        if (matched) continue;
        if (int loc = loc_literal(text, pos); loc >= 0) {
            ids.push_back(vocab::loc_base + loc);
            pos += 9;
            continue;
        }
        ids.push_back(vocab::byte_base + static_cast<unsigned char>(text[pos]));
        ++pos;
    }
    return ids;
}

std::string detokenize_toy(const std::vector<int>& ids) {
    std::string out;
    char buf[16];
    for (int id : ids) {
        if (id >= vocab::loc_base && id < vocab::size) {
            std::snprintf(buf, sizeof buf, "<loc%04d>", id - vocab::loc_base);
            out += buf;
        } else if (id >= vocab::byte_base && id < vocab::loc_base) {
            out += static_cast<char>(id - vocab::byte_base);
        } else {
            for (const auto& lit : kLiterals)
                if (lit.id == id) out += lit.text;
        }
    }
    return out;
}

TokenRole role_of_token(int id) {
    switch (id) {
        case vocab::clarify: return TokenRole::conditioning;
        case vocab::eos: return TokenRole::eos;
        case vocab::pad: return TokenRole::pad;
        case vocab::image: return TokenRole::image;
        default: return TokenRole::content;
    }
}

void DecoderConfig::validate() const {
    if (num_layers < 1 || num_heads < 1 || num_kv_heads < 1 || model_dim < 1)
        throw Error("decoder dimensions must be positive");
    if (num_heads % num_kv_heads != 0) throw Error("num_kv_heads must divide num_heads");
    if (model_dim % num_heads != 0) throw Error("num_heads must divide model_dim");
    if (num_image_tokens != grid_side * grid_side) throw Error("num_image_tokens must equal grid_side^2");
    if (vocab_size < vocab::size) throw Error("vocab_size too small for the reserved token layout");
}

DecoderConfig canonical_decoder_config(std::uint64_t seed) {
    DecoderConfig c;
    c.grid_side = 32;
    c.num_image_tokens = 1024;
    c.seed = seed;
    return c;
}

int TokenSequence::token_at(std::size_t pos) const {
    const auto img = static_cast<std::size_t>(image_token_count);
    if (pos < img) return vocab::image;
    if (pos < prefix_end()) return prefix_token_ids[pos - img];
    return suffix_token_ids[pos - prefix_end()];
}

AttentionMask build_mask(const TokenSequence& seq) {
    const std::size_t T = seq.length();
    if (T == 0) throw Error("empty token sequence");
    const std::size_t p = seq.prefix_end();
    AttentionMask m{T, std::vector<std::uint8_t>(T * T, 0)};
    for (std::size_t i = 0; i < T; ++i) {
        const std::size_t limit = i < p ? p : i + 1;
        for (std::size_t j = 0; j < limit; ++j) m.allowed[i * T + j] = 1;
    }
    return m;
}

namespace {

Matrix he_uniform(int rows, int cols, int fan_in, Rng& rng) {
    Matrix m(rows, cols);
    const double bound = std::sqrt(6.0 / fan_in);
    for (auto& v : m.data) v = rng.uniform(-bound, bound);
    return m;
}

Matrix layer_norm(const Matrix& x) {
    Matrix out(x.rows, x.cols);
    for (int r = 0; r < x.rows; ++r) {
        double mean = 0.0;
        for (int c = 0; c < x.cols; ++c) mean += x(r, c);
        mean /= x.cols;
        double var = 0.0;
        for (int c = 0; c < x.cols; ++c) var += (x(r, c) - mean) * (x(r, c) - mean);
        const double inv = 1.0 / std::sqrt(var / x.cols + 1e-5);
        for (int c = 0; c < x.cols; ++c) out(r, c) = (x(r, c) - mean) * inv;
    }
    return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows, b.cols);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < a.rows; ++i)
        for (int k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            for (int j = 0; j < b.cols; ++j) out(i, j) += aik * b(k, j);
        }
    return out;
}

}  // namespace

ToyDecoder::ToyDecoder(const DecoderConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const int d = cfg_.model_dim;
    const int hd = cfg_.head_dim();
    Rng rng(cfg_.seed);
    tok_emb_ = he_uniform(cfg_.vocab_size, d, d, rng);
    img_emb_ = he_uniform(cfg_.num_image_tokens, d, d, rng);
    pos_emb_ = he_uniform(cfg_.max_positions, d, d, rng);
    for (int l = 0; l < cfg_.num_layers; ++l) {
        DecoderLayer L;
        L.wq = he_uniform(d, cfg_.num_heads * hd, d, rng);
        L.wk = he_uniform(d, cfg_.num_kv_heads * hd, d, rng);
        L.wv = he_uniform(d, cfg_.num_kv_heads * hd, d, rng);
        L.wo = he_uniform(cfg_.num_heads * hd, d, cfg_.num_heads * hd, rng);
        L.w1 = he_uniform(d, 4 * d, d, rng);
        L.w2 = he_uniform(4 * d, d, 4 * d, rng);
        layers_.push_back(std::move(L));
    }
    lm_head_ = he_uniform(d, cfg_.vocab_size, d, rng);
}

Matrix ToyDecoder::embed(const TokenSequence& seq) const {
    const std::size_t T = seq.length();
    if (T == 0) throw Error("empty token sequence");
    if (seq.image_token_count != cfg_.num_image_tokens)
        throw Error("sequence has " + std::to_string(seq.image_token_count) + " image tokens, decoder expects " +
                    std::to_string(cfg_.num_image_tokens));
    if (T > static_cast<std::size_t>(cfg_.max_positions)) throw Error("sequence longer than max_positions");
    if (!seq.image_content.empty() && seq.image_content.size() != static_cast<std::size_t>(seq.image_token_count))
        throw Error("image_content must have one entry per image token");

    const int d = cfg_.model_dim;
    Matrix x(static_cast<int>(T), d);
    for (std::size_t t = 0; t < T; ++t) {
        const int r = static_cast<int>(t);
        if (t < static_cast<std::size_t>(seq.image_token_count)) {
            for (int c = 0; c < d; ++c) x(r, c) = img_emb_(r, c);
            if (!seq.image_content.empty() && !seq.image_content[t].empty()) {
                const auto& ids = seq.image_content[t];
                for (int id : ids)
                    for (int c = 0; c < d; ++c) x(r, c) += tok_emb_(id, c) / static_cast<double>(ids.size());
            }
        } else {
            const int id = seq.token_at(t);
            if (id < 0 || id >= cfg_.vocab_size) throw Error("token id out of vocabulary: " + std::to_string(id));
            for (int c = 0; c < d; ++c) x(r, c) = tok_emb_(id, c);
        }
        for (int c = 0; c < d; ++c) x(r, c) += pos_emb_(r, c);
    }
    return x;
}

Matrix ToyDecoder::run_blocks(const TokenSequence& seq, int last, std::vector<std::vector<double>>* probs) const {
    const AttentionMask mask = build_mask(seq);
    Matrix x = embed(seq);
    const int T = x.rows;
    const int H = cfg_.num_heads;
    const int hd = cfg_.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    if (probs) probs->assign(static_cast<std::size_t>(last) + 1, {});

    for (int l = 0; l <= last; ++l) {
        const DecoderLayer& L = layers_[static_cast<std::size_t>(l)];
        const Matrix hn = layer_norm(x);
        const Matrix q = matmul(hn, L.wq);
        const Matrix k = matmul(hn, L.wk);
        const Matrix v = matmul(hn, L.wv);
        Matrix ctx(T, H * hd);
        std::vector<double>* keep = probs ? &(*probs)[static_cast<std::size_t>(l)] : nullptr;
        if (keep) keep->assign(static_cast<std::size_t>(H) * T * T, 0.0);

#pragma omp parallel for collapse(2) schedule(static)
        for (int h = 0; h < H; ++h) {
            for (int i = 0; i < T; ++i) {
                const int g = kv_head_for(h);
                std::vector<double> row(static_cast<std::size_t>(T), 0.0);
                double mx = -std::numeric_limits<double>::infinity();
                for (int j = 0; j < T; ++j) {
                    if (!mask(i, j)) continue;
                    double s = 0.0;
                    for (int c = 0; c < hd; ++c) s += q(i, h * hd + c) * k(j, g * hd + c);
                    row[j] = s * scale;
                    mx = std::max(mx, row[j]);
                }
                double z = 0.0;
                for (int j = 0; j < T; ++j) {
                    row[j] = mask(i, j) ? std::exp(row[j] - mx) : 0.0;
                    z += row[j];
                }
                for (int j = 0; j < T; ++j) row[j] /= z;
                for (int j = 0; j < T; ++j) {
                    if (row[j] == 0.0) continue;
                    for (int c = 0; c < hd; ++c) ctx(i, h * hd + c) += row[j] * v(j, g * hd + c);
                }
                if (keep)
                    std::copy(row.begin(), row.end(),
                              keep->begin() + (static_cast<std::ptrdiff_t>(h) * T + i) * T);
            }
        }

        const Matrix attn_out = matmul(ctx, L.wo);
        for (std::size_t n = 0; n < x.data.size(); ++n) x.data[n] += attn_out.data[n];

        Matrix hidden = matmul(layer_norm(x), L.w1);
        for (auto& h : hidden.data) h = std::max(h, 0.0);
        const Matrix mlp = matmul(hidden, L.w2);
        for (std::size_t n = 0; n < x.data.size(); ++n) x.data[n] += mlp.data[n];
    }
    return x;
}

TokenMeta ToyDecoder::query_meta(const TokenSequence& seq) const {
    TokenMeta meta;
    std::vector<std::string> strings;
    for (std::size_t t = static_cast<std::size_t>(seq.image_token_count); t < seq.length(); ++t) {
        const int id = seq.token_at(t);
        meta.query_roles.push_back(role_of_token(id));
        strings.push_back(detokenize_toy({id}));
    }
    meta.text_strings = std::move(strings);
    return meta;
}

AttentionTensor ToyDecoder::to_tensor(const std::vector<double>& probs, const TokenSequence& seq, int layer) const {
    const std::size_t T = seq.length();
    const std::size_t img = static_cast<std::size_t>(seq.image_token_count);
    AttentionTensor t;
    t.layer_index = static_cast<std::uint32_t>(layer);
    t.num_heads = static_cast<std::uint32_t>(cfg_.num_heads);
    t.num_queries = static_cast<std::uint32_t>(T - img);
    t.num_keys = static_cast<std::uint32_t>(T);
    t.num_image_tokens = static_cast<std::uint32_t>(img);
    t.values.resize(std::size_t{t.num_heads} * t.num_queries * t.num_keys);
    for (std::size_t h = 0; h < t.num_heads; ++h)
        for (std::size_t q = 0; q < t.num_queries; ++q)
            for (std::size_t k = 0; k < T; ++k)
                t.at(h, q, k) = static_cast<float>(probs[(h * T + img + q) * T + k]);
    return t;
}

std::vector<AttentionTensor> ToyDecoder::forward_attention_layers(const TokenSequence& seq,
                                                                  const std::vector<int>& layers) const {
    if (layers.empty()) return {};
    for (int l : layers)
        if (l < 0 || l >= cfg_.num_layers)
            throw Error("read_layer " + std::to_string(l) + " out of range [0," + std::to_string(cfg_.num_layers) +
                        ")");
    if (seq.length() == static_cast<std::size_t>(seq.image_token_count)) throw Error("sequence has no text queries");
    std::vector<std::vector<double>> probs;
    run_blocks(seq, *std::max_element(layers.begin(), layers.end()), &probs);
    std::vector<AttentionTensor> out;
    out.reserve(layers.size());
    for (int l : layers) out.push_back(to_tensor(probs[static_cast<std::size_t>(l)], seq, l));
    return out;
}

AttentionTensor ToyDecoder::forward_attention(const TokenSequence& seq, int read_layer) const {
    return std::move(forward_attention_layers(seq, {read_layer}).front());
}

Matrix ToyDecoder::forward_logits(const TokenSequence& seq) const {
    const Matrix x = run_blocks(seq, cfg_.num_layers - 1, nullptr);
    return matmul(layer_norm(x), lm_head_);
}

std::vector<int> ToyDecoder::generate(TokenSequence seq, int max_new) const {
    std::vector<int> out;
    for (int step = 0; step < max_new; ++step) {
        if (seq.length() >= static_cast<std::size_t>(cfg_.max_positions)) break;
        const Matrix logits = forward_logits(seq);
        const int last = logits.rows - 1;
        int best = 0;
        for (int c = 1; c < logits.cols; ++c)
            if (logits(last, c) > logits(last, best)) best = c;
        if (best == vocab::eos) break;
        out.push_back(best);
        seq.suffix_token_ids.push_back(best);
    }
    return out;
}

TokenSequence make_sequence(const DecoderConfig& cfg, std::string_view prefix_text, std::string_view suffix_text) {
    TokenSequence seq;
    seq.image_token_count = cfg.num_image_tokens;
    seq.prefix_token_ids = tokenize_toy(prefix_text);
    if (!seq.prefix_token_ids.empty() && seq.prefix_token_ids.front() == vocab::image)
        seq.prefix_token_ids.erase(seq.prefix_token_ids.begin());
    seq.suffix_token_ids = tokenize_toy(suffix_text);
    return seq;
}

}  // namespace clue
