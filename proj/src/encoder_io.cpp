#include <bit>
#include <fstream>
#include <sstream>

#include "voxboost/csv.hpp"
#include "voxboost/encoder.hpp"

namespace voxboost {

namespace {

std::uint64_t to_little(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::big) return __builtin_bswap64(v);
    return v;
}

void write_blob(std::ostream& out, const double* data, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::uint64_t word = to_little(std::bit_cast<std::uint64_t>(data[i]));
        out.write(reinterpret_cast<const char*>(&word), 8);
    }
}

void read_blob(std::istream& in, double* data, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) {
        std::uint64_t word = 0;
        in.read(reinterpret_cast<char*>(&word), 8);
        if (in.gcount() != 8) throw InvalidInput("vxenc: truncated weight blob");
        data[i] = std::bit_cast<double>(to_little(word));
    }
}

std::istringstream manifest_line(std::istream& in, const std::string& key) {
    std::string line;
    if (!std::getline(in, line)) throw InvalidInput("vxenc: manifest ends before '" + key + "'");
    std::istringstream fields(line);
    std::string name;
    fields >> name;
    if (name != key) throw InvalidInput("vxenc: expected '" + key + "', got '" + name + "'");
    return fields;
}

} // namespace

void save_encoder(std::ostream& out, const EncoderModel& model) {
    const auto& cfg = model.config;
    out << "vxenc v1\n";
    out << "input_size " << cfg.input_size << '\n';
    out << "input_channels " << cfg.input_channels << '\n';
    out << "channels";
    for (int c : cfg.channels) out << ' ' << c;
    out << '\n';
    out << "kernel " << cfg.kernel << '\n';
    out << "head_outputs " << cfg.head_outputs << '\n';
    out << "normalization " << format_real(model.normalization.intensity_mean) << ' '
        << format_real(model.normalization.intensity_scale) << ' ' << format_real(model.normalization.label_scale)
        << '\n';
    out << "layers " << model.layers.size() << '\n';
    for (const auto& layer : model.layers)
        out << "conv " << layer.out_channels << ' ' << layer.in_channels << ' ' << layer.kernel << ' '
            << layer.padding << '\n';
    out << "end\n";
    for (const auto& layer : model.layers) {
        write_blob(out, layer.weight.data(), layer.weight.size());
        write_blob(out, layer.bias.data(), layer.bias.size());
    }
}

void save_encoder(const std::filesystem::path& path, const EncoderModel& model) {
    auto out = open_output(path, true);
    save_encoder(out, model);
    if (!out) throw IoError("failed writing " + path.string());
}

EncoderModel load_encoder(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "vxenc v1") throw InvalidInput("not a 'vxenc v1' checkpoint");
    EncoderConfig cfg;
    manifest_line(in, "input_size") >> cfg.input_size;
    manifest_line(in, "input_channels") >> cfg.input_channels;
    {
        auto fields = manifest_line(in, "channels");
        cfg.channels.clear();
        int c = 0;
        while (fields >> c) cfg.channels.push_back(c);
    }
    manifest_line(in, "kernel") >> cfg.kernel;
    manifest_line(in, "head_outputs") >> cfg.head_outputs;
    cfg.validate();

    EncoderModel model = EncoderModel::initialize(cfg, 0);
    {
        auto fields = manifest_line(in, "normalization");
        std::string mean, scale, label;
        fields >> mean >> scale >> label;
        model.normalization = {parse_real(mean), parse_real(scale), parse_real(label)};
    }
    std::size_t n_layers = 0;
    manifest_line(in, "layers") >> n_layers;
    if (n_layers != model.layers.size()) throw InvalidInput("vxenc: layer count does not match configuration");
    for (const auto& layer : model.layers) {
        int out = 0, inc = 0, k = 0, pad = 0;
        manifest_line(in, "conv") >> out >> inc >> k >> pad;
        if (out != layer.out_channels || inc != layer.in_channels || k != layer.kernel || pad != layer.padding)
            throw InvalidInput("vxenc: layer shape does not match configuration");
    }
    if (!std::getline(in, line) || line != "end") throw InvalidInput("vxenc: missing manifest terminator");
    for (auto& layer : model.layers) {
        read_blob(in, layer.weight.data(), layer.weight.size());
        read_blob(in, layer.bias.data(), layer.bias.size());
    }
    return model;
}

EncoderModel load_encoder(const std::filesystem::path& path) {
    auto in = open_input(path, true);
    return load_encoder(in);
}

} // namespace voxboost
