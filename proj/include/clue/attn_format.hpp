#pragma once

// CAT1: one decoder layer's text->image attention plus query token roles.
//
//   offset  size  field
//   0       4     magic "CAT1"
//   4       2     version (u16, currently 1)
//   6       4     layer_index (u32)
//   10      4     num_heads H
//   14      4     num_queries Q
//   18      4     num_keys K
//   22      4     num_image_tokens L_img
//   26      38    zero padding up to 64
//   64      4HQK  f32 values, row-major [head][query][key]
//   ...     Q     role codes, one byte per query
//   ...           optional string table: u32 count, then count * (u32 len, bytes)
//
// All integers and floats are little-endian.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace clue {

inline constexpr char kCat1Magic[4] = {'C', 'A', 'T', '1'};
inline constexpr std::uint16_t kCat1Version = 1;
inline constexpr std::size_t kCat1HeaderBytes = 64;

enum class TokenRole : std::uint8_t {
    content = 0,
    conditioning = 1,
    eos = 2,
    pad = 3,
    image = 4,
};

const char* role_name(TokenRole r);

struct AttentionTensor {
    std::uint32_t layer_index = 0;
    std::uint32_t num_heads = 0;
    std::uint32_t num_queries = 0;
    std::uint32_t num_keys = 0;
    std::uint32_t num_image_tokens = 0;
    std::vector<float> values;  // H*Q*K, [h][q][k]

    std::size_t index(std::size_t h, std::size_t q, std::size_t k) const {
        return (h * num_queries + q) * num_keys + k;
    }
    float at(std::size_t h, std::size_t q, std::size_t k) const { return values[index(h, q, k)]; }
    float& at(std::size_t h, std::size_t q, std::size_t k) { return values[index(h, q, k)]; }

    bool operator==(const AttentionTensor&) const = default;
};

struct TokenMeta {
    std::vector<TokenRole> query_roles;
    std::optional<std::vector<std::string>> text_strings;

    bool operator==(const TokenMeta&) const = default;
};

struct ValidationIssue {
    enum class Kind { shape, negative, non_finite, row_sum, meta };
    Kind kind;
    std::string message;
};

struct ValidationReport {
    std::vector<ValidationIssue> issues;
    bool ok() const { return issues.empty(); }
};

// Every violated invariant, in scan order. With softmax_rows, each
// values[h,q,:] must also sum to 1 +- 1e-5.
ValidationReport validate_tensor(const AttentionTensor& t, bool softmax_rows);
ValidationReport validate_meta(const AttentionTensor& t, const TokenMeta& m);

std::size_t cat1_size(const AttentionTensor& t, const TokenMeta& m);

std::size_t write_tensor(const AttentionTensor& t, const TokenMeta& m, std::ostream& out);
std::vector<std::uint8_t> encode_tensor(const AttentionTensor& t, const TokenMeta& m);

struct DecodedTensor {
    AttentionTensor tensor;
    TokenMeta meta;
};

DecodedTensor read_tensor(std::istream& in);
DecodedTensor decode_tensor(const std::vector<std::uint8_t>& bytes);

DecodedTensor read_tensor_file(const std::string& path);
void write_tensor_file(const std::string& path, const AttentionTensor& t, const TokenMeta& m);

}  // namespace clue
