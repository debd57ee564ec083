#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace clue {

// 1024 usable bins. Index 1024 of the base model's <loc> range is reserved and never emitted.
inline constexpr int kLocBins = 1024;

// Normalized box in [0,1], order (y_min, x_min, y_max, x_max).
struct BoxNorm {
    double y_min = 0, x_min = 0, y_max = 0, x_max = 0;

    bool valid() const;
    double area() const { return (y_max - y_min) * (x_max - x_min); }
    bool operator==(const BoxNorm&) const = default;
};

// Quantized box, same order as BoxNorm, each in [0,1023].
struct LocQuad {
    std::array<int, 4> v{};

    bool valid() const;
    bool operator==(const LocQuad&) const = default;
};

int quantize(double c);
double dequantize(int bin);  // bin center

LocQuad quantize_box(const BoxNorm& b);
std::string encode_box(const BoxNorm& b);
std::string encode_quad(const LocQuad& q);
BoxNorm decode_box(const LocQuad& q);

// First window of 4 directly adjacent <locDDDD> tokens that forms a
// well-ordered quad. Badly ordered windows are skipped, never repaired.
std::optional<LocQuad> parse_loc_sequence(std::string_view text);

}  // namespace clue
