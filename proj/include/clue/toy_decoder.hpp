#pragma once

// Minimal multimodal decoder: image tokens, then a bidirectional text prefix,
// then a causal suffix. Grouped-query attention, fixed seeded weights,
// inference only. Exists so the attention pipeline has genuine input.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "clue/attn_format.hpp"

namespace clue {

// Toy vocabulary layout.
namespace vocab {
inline constexpr int pad = 0;
inline constexpr int eos = 1;
inline constexpr int image = 2;
inline constexpr int clarify = 3;
inline constexpr int byte_base = 4;                 // 256 byte ids
inline constexpr int loc_base = byte_base + 256;    // 1024 <locDDDD> ids
inline constexpr int size = loc_base + 1024;        // 1284
}  // namespace vocab

std::vector<int> tokenize_toy(std::string_view text);
std::string detokenize_toy(const std::vector<int>& ids);
TokenRole role_of_token(int id);

struct DecoderConfig {
    int num_layers = 4;
    int num_heads = 4;
    int num_kv_heads = 2;
    int model_dim = 64;
    int vocab_size = vocab::size;
    int grid_side = 8;
    int num_image_tokens = 64;
    int max_positions = 2048;
    std::uint64_t seed = 0;

    int head_dim() const { return model_dim / num_heads; }
    int half_depth_layer() const { return num_layers / 2; }
    void validate() const;
};

DecoderConfig canonical_decoder_config(std::uint64_t seed);  // G=32, L_img=1024

struct TokenSequence {
    int image_token_count = 0;
    std::vector<int> prefix_token_ids;
    std::vector<int> suffix_token_ids;
    // Optional scene content: for each image token, the text ids of the
    // object name covering that patch (empty for background). The mean of
    // their embeddings is added to the patch embedding.
    std::vector<std::vector<int>> image_content;

    std::size_t length() const {
        return static_cast<std::size_t>(image_token_count) + prefix_token_ids.size() + suffix_token_ids.size();
    }
    std::size_t prefix_end() const { return static_cast<std::size_t>(image_token_count) + prefix_token_ids.size(); }
    int token_at(std::size_t pos) const;  // vocab::image for image positions
};

// allowed[i*T + j]: may position i attend to position j.
struct AttentionMask {
    std::size_t size = 0;
    std::vector<std::uint8_t> allowed;
    bool operator()(std::size_t i, std::size_t j) const { return allowed[i * size + j] != 0; }
};

AttentionMask build_mask(const TokenSequence& seq);

// Row-major dense matrix of doubles.
struct Matrix {
    int rows = 0, cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}
    double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

struct DecoderLayer {
    Matrix wq;  // d x (H*hd)
    Matrix wk;  // d x (kv*hd), shared by each group of H/kv query heads
    Matrix wv;  // d x (kv*hd)
    Matrix wo;  // (H*hd) x d
    Matrix w1;  // d x 4d
    Matrix w2;  // 4d x d
};

class ToyDecoder {
  public:
    explicit ToyDecoder(const DecoderConfig& cfg);

    const DecoderConfig& config() const { return cfg_; }
    const DecoderLayer& layer(int i) const { return layers_.at(static_cast<std::size_t>(i)); }
    int kv_head_for(int query_head) const { return query_head / (cfg_.num_heads / cfg_.num_kv_heads); }

    // Input embeddings, T x d.
    Matrix embed(const TokenSequence& seq) const;

    // Post-softmax attention of block `read_layer` after running blocks
    // 0..read_layer. Queries are the text positions (prefix then suffix);
    // keys are all T positions with the image tokens first.
    AttentionTensor forward_attention(const TokenSequence& seq, int read_layer) const;
    // One pass, one tensor per requested layer (any order, each in range).
    std::vector<AttentionTensor> forward_attention_layers(const TokenSequence& seq,
                                                          const std::vector<int>& layers) const;
    TokenMeta query_meta(const TokenSequence& seq) const;

    // Full-stack next-token logits, T x vocab.
    Matrix forward_logits(const TokenSequence& seq) const;

    // Greedy continuation of seq's prefix; stops on eos or max_new tokens.
    std::vector<int> generate(TokenSequence seq, int max_new) const;

  private:
    // Runs blocks [0, last]; when probs is given, (*probs)[l] receives block l's
    // probabilities (H x T x T) for every l <= last.
    Matrix run_blocks(const TokenSequence& seq, int last, std::vector<std::vector<double>>* probs) const;
    AttentionTensor to_tensor(const std::vector<double>& probs, const TokenSequence& seq, int layer) const;

    DecoderConfig cfg_;
    Matrix tok_emb_;    // vocab x d
    Matrix img_emb_;    // L_img x d
    Matrix pos_emb_;    // max_positions x d
    Matrix lm_head_;    // d x vocab
    std::vector<DecoderLayer> layers_;
};

// Text -> sequence for the decoder: image tokens, then the tokenized
// instruction. A leading literal "<image>" in the text is dropped since the
// image block is already prepended.
TokenSequence make_sequence(const DecoderConfig& cfg, std::string_view prefix_text, std::string_view suffix_text = {});

}  // namespace clue
