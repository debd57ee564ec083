#include <gtest/gtest.h>

#include <cmath>

#include "clue/common.hpp"
#include "clue/toy_decoder.hpp"

using namespace clue;

namespace {

TokenSequence random_sequence(Rng& rng, const DecoderConfig& cfg, std::size_t max_prefix, std::size_t max_suffix) {
    TokenSequence s;
    s.image_token_count = cfg.num_image_tokens;
    const std::size_t np = 1 + rng.below(max_prefix);
    const std::size_t ns = rng.below(max_suffix + 1);
    for (std::size_t i = 0; i < np; ++i) s.prefix_token_ids.push_back(static_cast<int>(rng.below(vocab::size)));
    for (std::size_t i = 0; i < ns; ++i) s.suffix_token_ids.push_back(static_cast<int>(rng.below(vocab::size)));
    return s;
}

DecoderConfig small_config(std::uint64_t seed) {
    DecoderConfig c;
    c.grid_side = 4;
    c.num_image_tokens = 16;
    c.seed = seed;
    return c;
}

}  // namespace

TEST(Tokenizer, Examples) {
    EXPECT_TRUE(tokenize_toy("").empty());
    EXPECT_EQ(tokenize_toy("a"), tokenize_toy("a"));
    EXPECT_EQ(tokenize_toy("a").size(), 1u);
    EXPECT_EQ(tokenize_toy("clarify"), (std::vector<int>{vocab::clarify}));
    EXPECT_EQ(tokenize_toy("<image>clarify hi<eos>"),
              (std::vector<int>{vocab::image, vocab::clarify, vocab::byte_base + ' ', vocab::byte_base + 'h',
                                vocab::byte_base + 'i', vocab::eos}));
    EXPECT_EQ(tokenize_toy("<loc0042>"), (std::vector<int>{vocab::loc_base + 42}));
    EXPECT_EQ(tokenize_toy("<loc1024>").size(), 9u);
}

TEST(Tokenizer, IdsInRangeAndRoundTrip) {
    Rng rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        std::string s;
        const std::size_t n = rng.below(40);
        for (std::size_t i = 0; i < n; ++i) s += static_cast<char>(rng.below(256));
        const auto ids = tokenize_toy(s);
        for (int id : ids) {
            EXPECT_GE(id, 0);
            EXPECT_LT(id, vocab::size);
        }
        EXPECT_EQ(detokenize_toy(ids), s);
    }
}

TEST(Tokenizer, Roles) {
    EXPECT_EQ(role_of_token(vocab::clarify), TokenRole::conditioning);
    EXPECT_EQ(role_of_token(vocab::eos), TokenRole::eos);
    EXPECT_EQ(role_of_token(vocab::pad), TokenRole::pad);
    EXPECT_EQ(role_of_token(vocab::image), TokenRole::image);
    EXPECT_EQ(role_of_token(vocab::byte_base + 'x'), TokenRole::content);
}

TEST(DecoderConfig, Validation) {
    DecoderConfig c;
    EXPECT_NO_THROW(c.validate());
    EXPECT_EQ(c.half_depth_layer(), 2);
    c.num_kv_heads = 3;
    EXPECT_THROW(c.validate(), Error);
    c = DecoderConfig{};
    c.num_image_tokens = 63;
    EXPECT_THROW(c.validate(), Error);
    c = DecoderConfig{};
    c.vocab_size = 256;
    EXPECT_THROW(c.validate(), Error);
    const auto canon = canonical_decoder_config(1);
    EXPECT_EQ(canon.grid_side, 32);
    EXPECT_EQ(canon.num_image_tokens, 1024);
    EXPECT_NO_THROW(canon.validate());
}

TEST(BuildMask, PurePrefixIsBidirectional) {
    TokenSequence s;
    s.image_token_count = 2;
    s.prefix_token_ids = {5, 6};
    const auto m = build_mask(s);
    ASSERT_EQ(m.size, 4u);
    for (auto a : m.allowed) EXPECT_EQ(a, 1);
}

TEST(BuildMask, SuffixIsCausal) {
    TokenSequence s;
    s.image_token_count = 1;
    s.prefix_token_ids = {5};
    s.suffix_token_ids = {6, 7};
    const auto m = build_mask(s);
    EXPECT_EQ((std::vector<bool>{m(2, 0), m(2, 1), m(2, 2), m(2, 3)}), (std::vector<bool>{true, true, true, false}));
    EXPECT_EQ((std::vector<bool>{m(3, 0), m(3, 1), m(3, 2), m(3, 3)}), (std::vector<bool>{true, true, true, true}));
    // prefix never sees the suffix
    EXPECT_FALSE(m(0, 2));
    EXPECT_FALSE(m(1, 3));
}

TEST(BuildMask, DiagonalAlwaysAllowed) {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        TokenSequence s;
        s.image_token_count = static_cast<int>(rng.below(5));
        s.prefix_token_ids.assign(rng.below(5), 9);
        s.suffix_token_ids.assign(1 + rng.below(5), 9);
        const auto m = build_mask(s);
        for (std::size_t i = 0; i < m.size; ++i) EXPECT_TRUE(m(i, i));
    }
    EXPECT_THROW(build_mask(TokenSequence{}), Error);
}

TEST(ToyDecoder, GroupedQueryHeadsMatchSingleHeadOracle) {
    // T=2 (one image token, one prefix token), head dim 4
    DecoderConfig cfg;
    cfg.num_layers = 1;
    cfg.num_heads = 4;
    cfg.num_kv_heads = 2;
    cfg.model_dim = 16;
    cfg.grid_side = 1;
    cfg.num_image_tokens = 1;
    cfg.seed = 17;
    const ToyDecoder dec(cfg);
    const TokenSequence seq = make_sequence(cfg, "a");
    ASSERT_EQ(seq.length(), 2u);

    const Matrix x = dec.embed(seq);
    const DecoderLayer& L = dec.layer(0);
    const int d = 16, hd = 4;
    double hn[2][16];
    for (int t = 0; t < 2; ++t) {
        double mean = 0, var = 0;
        for (int c = 0; c < d; ++c) mean += x(t, c) / d;
        for (int c = 0; c < d; ++c) var += (x(t, c) - mean) * (x(t, c) - mean) / d;
        for (int c = 0; c < d; ++c) hn[t][c] = (x(t, c) - mean) / std::sqrt(var + 1e-5);
    }
    auto proj = [&](const Matrix& w, int t, int col) {
        double s = 0;
        for (int c = 0; c < d; ++c) s += hn[t][c] * w(c, col);
        return s;
    };

    const AttentionTensor att = dec.forward_attention(seq, 0);
    ASSERT_EQ(att.num_queries, 1u);
    ASSERT_EQ(att.num_keys, 2u);
    EXPECT_EQ(dec.kv_head_for(0), 0);
    EXPECT_EQ(dec.kv_head_for(1), 0);
    EXPECT_EQ(dec.kv_head_for(2), 1);
    EXPECT_EQ(dec.kv_head_for(3), 1);
    for (int h = 0; h < 4; ++h) {
        const int g = h / 2;  // kv head shared by query heads {2g, 2g+1}
        double s[2];
        for (int j = 0; j < 2; ++j) {
            double dot = 0;
            for (int c = 0; c < hd; ++c) dot += proj(L.wq, 1, h * hd + c) * proj(L.wk, j, g * hd + c);
            s[j] = dot / 2.0;  // sqrt(hd)
        }
        const double p1 = 1.0 / (1.0 + std::exp(s[0] - s[1]));
        EXPECT_NEAR(att.at(h, 0, 1), p1, 1e-6) << "head " << h;
        EXPECT_NEAR(att.at(h, 0, 0), 1.0 - p1, 1e-6) << "head " << h;
    }
    // the weight layout itself is grouped: kv projections have kv*hd columns
    EXPECT_EQ(L.wk.cols, 2 * hd);
    EXPECT_EQ(L.wv.cols, 2 * hd);
    EXPECT_EQ(L.wq.cols, 4 * hd);
}

TEST(ToyDecoder, DeterministicAndShape) {
    const auto cfg = small_config(5);
    const ToyDecoder a(cfg), b(cfg);
    const auto seq = make_sequence(cfg, "<image>clarify pick the cup", "ok");
    const auto ta = a.forward_attention(seq, 1);
    const auto tb = b.forward_attention(seq, 1);
    EXPECT_EQ(ta, tb);
    EXPECT_EQ(ta.layer_index, 1u);
    EXPECT_EQ(ta.num_heads, 4u);
    EXPECT_EQ(ta.num_keys, seq.length());
    EXPECT_EQ(ta.num_queries, seq.length() - 16);
    EXPECT_EQ(ta.num_image_tokens, 16u);
    EXPECT_THROW(a.forward_attention(seq, 4), Error);
    EXPECT_THROW(a.forward_attention(seq, -1), Error);
}

TEST(ToyDecoder, DifferentSeedsDiffer) {
    const auto seq = make_sequence(small_config(1), "clarify a b");
    EXPECT_NE(ToyDecoder(small_config(1)).forward_attention(seq, 0),
              ToyDecoder(small_config(2)).forward_attention(seq, 0));
}

TEST(ToyDecoder, MaskedZeroRowStochasticPrefixPositive) {
    Rng rng(100);
    for (int trial = 0; trial < 30; ++trial) {
        const auto cfg = small_config(rng.next());
        const ToyDecoder dec(cfg);
        const auto seq = random_sequence(rng, cfg, 6, 4);
        const auto mask = build_mask(seq);
        const auto layers = dec.forward_attention_layers(seq, {0, 1, 2, 3});
        const std::size_t img = 16;
        for (const auto& t : layers)
            for (std::size_t h = 0; h < t.num_heads; ++h)
                for (std::size_t q = 0; q < t.num_queries; ++q) {
                    double sum = 0;
                    for (std::size_t k = 0; k < t.num_keys; ++k) {
                        const float v = t.at(h, q, k);
                        if (!mask(img + q, k)) {
                            EXPECT_EQ(v, 0.0f);
                        } else if (img + q < seq.prefix_end()) {
                            EXPECT_GT(v, 0.0f);
                        }
                        sum += v;
                    }
                    EXPECT_NEAR(sum, 1.0, 1e-5);
                }
    }
}

TEST(ToyDecoder, LayersInOnePassMatchSingleReads) {
    const auto cfg = small_config(9);
    const ToyDecoder dec(cfg);
    const auto seq = make_sequence(cfg, "clarify get the mug");
    const auto all = dec.forward_attention_layers(seq, {3, 0, 2});
    EXPECT_EQ(all[0], dec.forward_attention(seq, 3));
    EXPECT_EQ(all[1], dec.forward_attention(seq, 0));
    EXPECT_EQ(all[2], dec.forward_attention(seq, 2));
}

TEST(ToyDecoder, QueryMetaRoles) {
    const auto cfg = small_config(1);
    const ToyDecoder dec(cfg);
    const auto seq = make_sequence(cfg, "<image>clarify ab", "<eos>");
    const auto m = dec.query_meta(seq);
    ASSERT_EQ(m.query_roles.size(), 5u);
    EXPECT_EQ(m.query_roles[0], TokenRole::conditioning);
    EXPECT_EQ(m.query_roles[1], TokenRole::content);
    EXPECT_EQ(m.query_roles[4], TokenRole::eos);
    EXPECT_EQ((*m.text_strings)[2], "a");
}

TEST(ToyDecoder, ImageContentChangesAttention) {
    const auto cfg = small_config(4);
    const ToyDecoder dec(cfg);
    auto seq = make_sequence(cfg, "clarify get the cup");
    const auto plain = dec.forward_attention(seq, 0);
    seq.image_content.assign(16, {});
    seq.image_content[5] = tokenize_toy("cup");
    EXPECT_NE(dec.forward_attention(seq, 0), plain);
    seq.image_content.resize(3);
    EXPECT_THROW(dec.forward_attention(seq, 0), Error);
}

TEST(ToyDecoder, InputValidation) {
    const auto cfg = small_config(1);
    const ToyDecoder dec(cfg);
    TokenSequence s = make_sequence(cfg, "x");
    s.image_token_count = 4;
    EXPECT_THROW(dec.forward_attention(s, 0), Error);
    s = make_sequence(cfg, "");
    EXPECT_THROW(dec.forward_attention(s, 0), Error);
    s = make_sequence(cfg, "x");
    s.prefix_token_ids[0] = vocab::size;
    EXPECT_THROW(dec.forward_attention(s, 0), Error);
}

TEST(ToyDecoder, LogitsShapeAndGenerateDeterminism) {
    const auto cfg = small_config(6);
    const ToyDecoder dec(cfg);
    const auto seq = make_sequence(cfg, "clarify get the cup");
    const Matrix logits = dec.forward_logits(seq);
    EXPECT_EQ(logits.rows, static_cast<int>(seq.length()));
    EXPECT_EQ(logits.cols, vocab::size);
    const auto g1 = dec.generate(seq, 5);
    EXPECT_EQ(g1, dec.generate(seq, 5));
    EXPECT_LE(g1.size(), 5u);
}

TEST(ToyDecoder, CanonicalGridAttention) {
    const auto cfg = canonical_decoder_config(42);
    const ToyDecoder dec(cfg);
    const auto seq = make_sequence(cfg, "<image>clarify detect the apple");
    const auto t = dec.forward_attention(seq, cfg.half_depth_layer());
    EXPECT_EQ(t.num_image_tokens, 1024u);
    EXPECT_TRUE(validate_tensor(t, true).ok());
}
