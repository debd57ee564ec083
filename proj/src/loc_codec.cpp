#include "clue/loc_codec.hpp"

#include <cmath>
#include <cstdio>
#include <vector>

#include "clue/common.hpp"

namespace clue {

bool BoxNorm::valid() const {
    for (double c : {y_min, x_min, y_max, x_max})
        if (!(c >= 0.0 && c <= 1.0)) return false;
    return y_min <= y_max && x_min <= x_max;
}

bool LocQuad::valid() const {
    for (int c : v)
        if (c < 0 || c >= kLocBins) return false;
    return v[0] <= v[2] && v[1] <= v[3];
}

int quantize(double c) {
    if (!(c >= 0.0 && c <= 1.0)) throw Error("coordinate outside [0,1]: " + std::to_string(c));
    const int bin = static_cast<int>(std::floor(c * kLocBins));
    return bin < kLocBins - 1 ? bin : kLocBins - 1;
}

double dequantize(int bin) { return (bin + 0.5) / kLocBins; }

LocQuad quantize_box(const BoxNorm& b) {
    if (!b.valid()) throw Error("invalid box");
    return LocQuad{{quantize(b.y_min), quantize(b.x_min), quantize(b.y_max), quantize(b.x_max)}};
}

std::string encode_quad(const LocQuad& q) {
    if (!q.valid()) throw Error("invalid loc quad");
    std::string out;
    char buf[16];
    for (int c : q.v) {
        std::snprintf(buf, sizeof buf, "<loc%04d>", c);
        out += buf;
    }
    return out;
}

std::string encode_box(const BoxNorm& b) { return encode_quad(quantize_box(b)); }

BoxNorm decode_box(const LocQuad& q) {
    if (!q.valid()) throw Error("loc quad violates ordering or range");
    return {dequantize(q.v[0]), dequantize(q.v[1]), dequantize(q.v[2]), dequantize(q.v[3])};
}

namespace {

constexpr std::size_t kTokenLen = 9;  // <locDDDD>

// Token value at pos, or -1.
int token_at(std::string_view s, std::size_t pos) {
    if (pos + kTokenLen > s.size()) return -1;
    if (s.compare(pos, 4, "<loc") != 0 || s[pos + 8] != '>') return -1;
    int value = 0;
    for (std::size_t i = pos + 4; i < pos + 8; ++i) {
        if (s[i] < '0' || s[i] > '9') return -1;
        value = value * 10 + (s[i] - '0');
    }
    return value < kLocBins ? value : -1;
}

}  // namespace

std::optional<LocQuad> parse_loc_sequence(std::string_view text) {
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::vector<int> run;
        std::size_t p = pos;
        for (int v; (v = token_at(text, p)) >= 0; p += kTokenLen) run.push_back(v);
        if (run.empty()) {
            ++pos;
            continue;
        }
        for (std::size_t i = 0; i + 4 <= run.size(); ++i) {
            LocQuad q{{run[i], run[i + 1], run[i + 2], run[i + 3]}};
            if (q.valid()) return q;
        }
        pos = p;
    }
    return std::nullopt;
}

}  // namespace clue
