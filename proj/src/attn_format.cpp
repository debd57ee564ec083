#include "clue/attn_format.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "clue/bytes.hpp"

namespace clue {

const char* role_name(TokenRole r) {
    switch (r) {
        case TokenRole::content: return "content";
        case TokenRole::conditioning: return "conditioning";
        case TokenRole::eos: return "eos";
        case TokenRole::pad: return "pad";
        case TokenRole::image: return "image";
    }
    return "unknown";
}

namespace {

std::string at_index(std::size_t h, std::size_t q, std::size_t k) {
    std::ostringstream os;
    os << "[" << h << "," << q << "," << k << "]";
    return os.str();
}

void check_shape(const AttentionTensor& t, ValidationReport& r) {
    using K = ValidationIssue::Kind;
    if (t.num_heads < 1) r.issues.push_back({K::shape, "num_heads must be >= 1"});
    if (t.num_queries < 1) r.issues.push_back({K::shape, "num_queries must be >= 1"});
    if (t.num_image_tokens > t.num_keys)
        r.issues.push_back({K::shape, "num_image_tokens " + std::to_string(t.num_image_tokens) +
                                          " exceeds num_keys " + std::to_string(t.num_keys)});
    const std::size_t expect = std::size_t{t.num_heads} * t.num_queries * t.num_keys;
    if (t.values.size() != expect)
        r.issues.push_back({K::shape, "values holds " + std::to_string(t.values.size()) +
                                          " entries, header implies " + std::to_string(expect)});
}

}  // namespace

ValidationReport validate_tensor(const AttentionTensor& t, bool softmax_rows) {
    using K = ValidationIssue::Kind;
    ValidationReport r;
    check_shape(t, r);
    if (!r.ok()) return r;

    for (std::size_t h = 0; h < t.num_heads; ++h) {
        for (std::size_t q = 0; q < t.num_queries; ++q) {
            double row = 0.0;
            bool row_finite = true;
            for (std::size_t k = 0; k < t.num_keys; ++k) {
                const float v = t.at(h, q, k);
                if (std::isnan(v) || std::isinf(v)) {
                    r.issues.push_back({K::non_finite, "non-finite value at " + at_index(h, q, k)});
                    row_finite = false;
                    continue;
                }
                if (v < 0.0f) {
                    std::ostringstream os;
                    os << "negative value " << v << " at " << at_index(h, q, k);
                    r.issues.push_back({K::negative, os.str()});
                }
                row += v;
            }
            if (softmax_rows && row_finite && std::abs(row - 1.0) > 1e-5) {
                std::ostringstream os;
                os << "row head=" << h << " query=" << q << " sums to " << row;
                r.issues.push_back({K::row_sum, os.str()});
            }
        }
    }
    return r;
}

ValidationReport validate_meta(const AttentionTensor& t, const TokenMeta& m) {
    using K = ValidationIssue::Kind;
    ValidationReport r;
    if (m.query_roles.size() != t.num_queries)
        r.issues.push_back({K::meta, "role count " + std::to_string(m.query_roles.size()) +
                                         " does not match num_queries " +
                                         std::to_string(t.num_queries)});
    for (std::size_t i = 0; i < m.query_roles.size(); ++i)
        if (static_cast<std::uint8_t>(m.query_roles[i]) > 4)
            r.issues.push_back({K::meta, "unknown role code at query " + std::to_string(i)});
    return r;
}

std::size_t cat1_size(const AttentionTensor& t, const TokenMeta& m) {
    std::size_t n = kCat1HeaderBytes + 4 * t.values.size() + m.query_roles.size();
    if (m.text_strings) {
        n += 4;
        for (const auto& s : *m.text_strings) n += 4 + s.size();
    }
    return n;
}

std::vector<std::uint8_t> encode_tensor(const AttentionTensor& t, const TokenMeta& m) {
    auto shape = validate_tensor(t, false);
    auto meta = validate_meta(t, m);
    if (!shape.ok()) throw DimensionError(shape.issues.front().message);
    if (!meta.ok()) throw DimensionError(meta.issues.front().message);

    ByteWriter w;
    w.bytes(kCat1Magic, 4);
    w.u16(kCat1Version);
    w.u32(t.layer_index);
    w.u32(t.num_heads);
    w.u32(t.num_queries);
    w.u32(t.num_keys);
    w.u32(t.num_image_tokens);
    w.zeros(kCat1HeaderBytes - w.size());
    for (float v : t.values) w.f32(v);
    for (TokenRole r : m.query_roles) w.u8(static_cast<std::uint8_t>(r));
    if (m.text_strings) {
        w.u32(static_cast<std::uint32_t>(m.text_strings->size()));
        for (const auto& s : *m.text_strings) {
            w.u32(static_cast<std::uint32_t>(s.size()));
            w.bytes(s.data(), s.size());
        }
    }
    return std::move(w.buffer());
}

std::size_t write_tensor(const AttentionTensor& t, const TokenMeta& m, std::ostream& out) {
    const auto bytes = encode_tensor(t, m);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("CAT1 write failed");
    return bytes.size();
}

DecodedTensor decode_tensor(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < kCat1HeaderBytes)
        throw FormatError("truncated header: expected " + std::to_string(kCat1HeaderBytes) +
                          " bytes, got " + std::to_string(bytes.size()));
    if (std::memcmp(bytes.data(), kCat1Magic, 4) != 0) throw FormatError("bad magic: not a CAT1 file");

    ByteReader rd(bytes);
    rd.skip(4);
    DecodedTensor out;
    AttentionTensor& t = out.tensor;
    const std::uint16_t version = rd.u16();
    if (version != kCat1Version) throw FormatError("unsupported CAT1 version " + std::to_string(version));
    t.layer_index = rd.u32();
    t.num_heads = rd.u32();
    t.num_queries = rd.u32();
    t.num_keys = rd.u32();
    t.num_image_tokens = rd.u32();
    rd.skip(kCat1HeaderBytes - rd.position());

    if (t.num_heads < 1 || t.num_queries < 1) throw FormatError("header declares an empty tensor");
    if (t.num_image_tokens > t.num_keys) throw FormatError("header: num_image_tokens exceeds num_keys");

    const std::uint64_t count = std::uint64_t{t.num_heads} * t.num_queries * t.num_keys;
    const std::uint64_t fixed = kCat1HeaderBytes + 4 * count + t.num_queries;
    if (bytes.size() < fixed)
        throw FormatError("truncated payload: expected at least " + std::to_string(fixed) +
                          " bytes, got " + std::to_string(bytes.size()));

    t.values.resize(count);
    rd.read(t.values.data(), 4 * count);
    for (std::size_t i = 0; i < t.values.size(); ++i) {
        const float v = t.values[i];
        if (std::isnan(v) || std::isinf(v)) throw FormatError("non-finite value at flat index " + std::to_string(i));
        if (v < 0.0f) throw FormatError("negative value at flat index " + std::to_string(i));
    }

    out.meta.query_roles.resize(t.num_queries);
    for (auto& r : out.meta.query_roles) {
        const std::uint8_t code = rd.u8();
        if (code > 4) throw FormatError("unknown role code " + std::to_string(code));
        r = static_cast<TokenRole>(code);
    }

    if (rd.remaining() > 0) {
        try {
            std::vector<std::string> strings(rd.u32());
            for (auto& s : strings) {
                s.resize(rd.u32());
                rd.read(s.data(), s.size());
            }
            out.meta.text_strings = std::move(strings);
        } catch (const FormatError& e) {
            throw FormatError(std::string("header/payload length disagreement in string table: ") + e.what());
        }
        if (rd.remaining() != 0)
            throw FormatError("header/payload length disagreement: " + std::to_string(rd.remaining()) +
                              " trailing bytes");
    }
    return out;
}

DecodedTensor read_tensor(std::istream& in) {
    std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return decode_tensor(bytes);
}

DecodedTensor read_tensor_file(const std::string& path) { return decode_tensor(read_file_bytes(path)); }

void write_tensor_file(const std::string& path, const AttentionTensor& t, const TokenMeta& m) {
    write_file_bytes(path, encode_tensor(t, m));
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed: " + path);
}

}  // namespace clue
