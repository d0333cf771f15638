#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "voxboost/csv.hpp"
#include "voxboost/volume.hpp"

namespace voxboost {

std::string shape_string(const std::array<int, 4>& dims) {
    return std::to_string(dims[0]) + "x" + std::to_string(dims[1]) + "x" + std::to_string(dims[2]) + "x" +
           std::to_string(dims[3]);
}

namespace {

std::uint32_t to_little(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big) return __builtin_bswap32(v);
    return v;
}

} // namespace

void write_vvol(std::ostream& out, const Volume<float>& volume) {
    out << "vvol v1 " << volume.channels() << ' ' << volume.depth() << ' ' << volume.height() << ' ' << volume.width()
        << '\n';
    std::vector<std::uint32_t> words(static_cast<std::size_t>(volume.size()));
    for (std::size_t i = 0; i < words.size(); ++i)
        words[i] = to_little(std::bit_cast<std::uint32_t>(volume.data()(static_cast<Eigen::Index>(i))));
    out.write(reinterpret_cast<const char*>(words.data()), static_cast<std::streamsize>(words.size() * 4));
}

void write_vvol(const std::filesystem::path& path, const Volume<float>& volume) {
    auto out = open_output(path, true);
    write_vvol(out, volume);
    if (!out) throw IoError("failed writing " + path.string());
}

Volume<float> read_vvol(std::istream& in) {
    std::string header;
    if (!std::getline(in, header)) throw InvalidInput("vvol: missing header");
    std::istringstream fields(header);
    std::string magic, version;
    int c = 0, d = 0, h = 0, w = 0;
    fields >> magic >> version >> c >> d >> h >> w;
    if (!fields || magic != "vvol" || version != "v1") throw InvalidInput("vvol: bad header '" + header + "'");
    if (c < 1 || d < 1 || h < 1 || w < 1) throw InvalidInput("vvol: non-positive dimension");
    Volume<float> volume(c, d, h, w);
    std::vector<std::uint32_t> words(static_cast<std::size_t>(volume.size()));
    in.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(words.size() * 4));
    if (in.gcount() != static_cast<std::streamsize>(words.size() * 4)) throw InvalidInput("vvol: truncated payload");
    for (std::size_t i = 0; i < words.size(); ++i)
        volume.data()(static_cast<Eigen::Index>(i)) = std::bit_cast<float>(to_little(words[i]));
    return volume;
}

Volume<float> read_vvol(const std::filesystem::path& path) {
    auto in = open_input(path, true);
    return read_vvol(in);
}

} // namespace voxboost
