#include "clue/map_io.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "clue/bytes.hpp"

namespace clue {

namespace {

constexpr char kMapMagic[4] = {'A', 'M', 'A', 'P'};

void append_map(ByteWriter& w, const AmbiguityMap& m) {
    w.bytes(kMapMagic, 4);
    w.u32(static_cast<std::uint32_t>(m.grid_side));
    for (double v : m.values) w.f32(static_cast<float>(v));
}

AmbiguityMap take_map(ByteReader& rd) {
    char magic[4];
    rd.read(magic, 4);
    if (std::memcmp(magic, kMapMagic, 4) != 0) throw FormatError("bad magic: not an AMAP record");
    AmbiguityMap m;
    const std::uint32_t side = rd.u32();
    if (side == 0 || side > 4096) throw FormatError("implausible map grid side " + std::to_string(side));
    m.grid_side = static_cast<int>(side);
    m.values.resize(std::size_t{side} * side);
    for (double& v : m.values) {
        const float f = rd.f32();
        if (!std::isfinite(f) || f < 0.0f || f > 1.0f) throw FormatError("map value outside [0,1]");
        v = f;
        m.pre_normalization_sum += v;
    }
    return m;
}

}  // namespace

std::vector<std::uint8_t> encode_map(const AmbiguityMap& m) {
    ByteWriter w;
    append_map(w, m);
    return std::move(w.buffer());
}

void save_map(const std::string& path, const AmbiguityMap& m) { write_file_bytes(path, encode_map(m)); }

AmbiguityMap load_map(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    ByteReader rd(bytes);
    AmbiguityMap m = take_map(rd);
    if (rd.remaining() != 0) throw FormatError(path + ": trailing bytes after map");
    return m;
}

void save_map_dataset(const std::string& dir, const std::vector<LabeledMap>& data) {
    std::filesystem::create_directories(dir);
    ByteWriter w;
    std::string labels;
    for (const auto& s : data) {
        append_map(w, s.map);
        labels += std::to_string(s.label);
        labels += '\n';
    }
    write_file_bytes(dir + "/maps.bin", w.buffer());
    std::ofstream out(dir + "/labels.txt", std::ios::binary | std::ios::trunc);
    out << labels;
    if (!out) throw Error("cannot write " + dir + "/labels.txt");
}

std::vector<LabeledMap> load_map_dataset(const std::string& dir) {
    const auto bytes = read_file_bytes(dir + "/maps.bin");
    std::ifstream in(dir + "/labels.txt");
    if (!in) throw Error("cannot open " + dir + "/labels.txt");

    std::vector<LabeledMap> out;
    ByteReader rd(bytes);
    while (rd.remaining() > 0) {
        LabeledMap s;
        s.map = take_map(rd);
        if (!(in >> s.label) || (s.label != 0 && s.label != 1))
            throw FormatError("labels.txt: missing or invalid label for map " + std::to_string(out.size()));
        out.push_back(std::move(s));
    }
    int extra;
    if (in >> extra) throw FormatError("labels.txt has more labels than maps.bin has maps");
    return out;
}

}  // namespace clue
