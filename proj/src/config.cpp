#include "voxboost/config.hpp"

#include <charconv>
#include <limits>
#include <fstream>
#include <functional>
#include <sstream>

#include "voxboost/csv.hpp"
#include "voxboost/error.hpp"
#include "voxboost/rng.hpp"

namespace voxboost {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = s.find(',', start);
        auto item = trim(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (item.empty()) throw InvalidInput("empty list element");
        out.push_back(std::move(item));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

std::string show(double v) { return format_shortest(v); }
std::string show(int v) { return std::to_string(v); }
std::string show(std::uint64_t v) { return std::to_string(v); }
std::string show(bool v) { return v ? "true" : "false"; }
std::string show(const std::string& v) { return v; }

template <typename T>
std::string show(const std::vector<T>& values) {
    std::string out;
    for (const auto& v : values) out += (out.empty() ? "" : ", ") + show(v);
    return out;
}

void read(std::string_view s, double& v) { v = parse_real(s); }
void read(std::string_view s, int& v) {
    const auto n = parse_integer(s);
    if (n < std::numeric_limits<int>::min() || n > std::numeric_limits<int>::max())
        throw InvalidInput("integer out of range");
    v = static_cast<int>(n);
}
void read(std::string_view s, std::uint64_t& v) {
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size())
        throw InvalidInput("not an unsigned 64-bit integer: '" + std::string(s) + "'");
}
void read(std::string_view s, bool& v) {
    if (s == "true" || s == "1" || s == "yes") v = true;
    else if (s == "false" || s == "0" || s == "no") v = false;
    else throw InvalidInput("not a boolean: '" + std::string(s) + "'");
}
void read(std::string_view s, std::string& v) {
    if (s.empty()) throw InvalidInput("empty value");
    v = std::string(s);
}
template <typename T>
void read(std::string_view s, std::vector<T>& values) {
    std::vector<T> out;
    for (const auto& item : split_list(s)) {
        T v{};
        read(item, v);
        out.push_back(std::move(v));
    }
    values = std::move(out);
}

struct Key {
    std::string name;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, std::string_view)> set;
    bool optional = false;
    std::function<bool(const RunConfig&)> is_set = {};
};

template <typename T>
Key field(std::string name, T RunConfig::*member) {
    return {std::move(name), [member](const RunConfig& c) { return show(c.*member); },
            [member](RunConfig& c, std::string_view s) { read(s, c.*member); }};
}

template <typename Section, typename T>
Key field(std::string name, Section PipelineConfig::*section, T Section::*member) {
    return {std::move(name), [=](const RunConfig& c) { return show(c.pipeline.*section.*member); },
            [=](RunConfig& c, std::string_view s) { read(s, c.pipeline.*section.*member); }};
}

template <typename T>
Key field(std::string name, T PipelineConfig::*member) {
    return {std::move(name), [=](const RunConfig& c) { return show(c.pipeline.*member); },
            [=](RunConfig& c, std::string_view s) { read(s, c.pipeline.*member); }};
}

Key seed_field(std::string name, std::optional<std::uint64_t> RunConfig::*member) {
    Key k{std::move(name), [=](const RunConfig& c) { return show(*(c.*member)); },
          [=](RunConfig& c, std::string_view s) {
              std::uint64_t v = 0;
              read(s, v);
              c.*member = v;
          }};
    k.optional = true;
    k.is_set = [=](const RunConfig& c) { return (c.*member).has_value(); };
    return k;
}

const std::vector<Key>& keys() {
    using P = PipelineConfig;
    static const std::vector<Key> table{
        field("run.seed", &RunConfig::seed),
        field("run.workers", &RunConfig::workers),

        field("cohort.n_train", &P::cohort, &CohortConfig::n_train),
        field("cohort.n_val", &P::cohort, &CohortConfig::n_val),
        field("cohort.n_test", &P::cohort, &CohortConfig::n_test),
        field("cohort.volume_size", &P::cohort, &CohortConfig::volume_size),
        field("cohort.n_regions", &P::cohort, &CohortConfig::n_regions),
        field("cohort.noise", &P::cohort, &CohortConfig::noise),
        field("cohort.signal", &P::cohort, &CohortConfig::signal),
        field("cohort.intensity_noise", &P::cohort, &CohortConfig::intensity_noise),
        field("cohort.missing_rate", &P::cohort, &CohortConfig::missing_rate),
        seed_field("cohort.seed", &RunConfig::cohort_seed),
        field("cohort.sites", &P::cohort, &CohortConfig::sites),
        field("cohort.sexes", &P::cohort, &CohortConfig::sexes),
        field("cohort.ethnicities", &P::cohort, &CohortConfig::ethnicities),
        field("cohort.marital_statuses", &P::cohort, &CohortConfig::marital_statuses),

        field("encoder.input_size", &P::encoder, &EncoderConfig::input_size),
        field("encoder.input_channels", &P::encoder, &EncoderConfig::input_channels),
        field("encoder.channels", &P::encoder, &EncoderConfig::channels),
        field("encoder.kernel", &P::encoder, &EncoderConfig::kernel),
        field("encoder.head_outputs", &P::encoder, &EncoderConfig::head_outputs),
        field("encoder.learning_rate", &P::sgd, &SgdMomentumConfig::learning_rate),
        field("encoder.momentum", &P::sgd, &SgdMomentumConfig::momentum),
        field("encoder.batch_size", &P::sgd, &SgdMomentumConfig::batch_size),
        field("encoder.epochs", &P::sgd, &SgdMomentumConfig::epochs),
        seed_field("encoder.seed", &RunConfig::encoder_seed),

        field("gbm.learning_rate", &P::gbm, &GbmHyperparams::learning_rate),
        field("gbm.n_trees", &P::gbm, &GbmHyperparams::n_trees),
        field("gbm.max_depth", &P::gbm, &GbmHyperparams::max_depth),
        field("gbm.lambda", &P::gbm, &GbmHyperparams::lambda),
        field("gbm.alpha", &P::gbm, &GbmHyperparams::alpha),
        field("gbm.subsample", &P::gbm, &GbmHyperparams::subsample),
        seed_field("gbm.seed", &RunConfig::gbm_seed),

        field("grid.learning_rates", &P::grid, &GridSpec::learning_rates),
        field("grid.n_trees", &P::grid, &GridSpec::n_trees),
        field("grid.max_depths", &P::grid, &GridSpec::max_depths),
        field("grid.lambdas", &P::grid, &GridSpec::lambdas),
        field("grid.alphas", &P::grid, &GridSpec::alphas),
        field("grid.fine_lr_factors", &P::grid, &GridSpec::fine_lr_factors),
        field("grid.fine_depth_offsets", &P::grid, &GridSpec::fine_depth_offsets),

        field("pipeline.feature_scale", &P::feature_scale),
        field("pipeline.compare_scales", &P::compare_scales),

        field("paths.workdir", &RunConfig::workdir),
        field("paths.manifest", &RunConfig::manifest),
        field("paths.answers", &RunConfig::answers),
        field("paths.outputs", &RunConfig::outputs),
    };
    return table;
}

const Key* find_key(std::string_view name) {
    for (const auto& k : keys())
        if (k.name == name) return &k;
    return nullptr;
}

// Applies one assignment; returns an error message or empty.
std::string assign(RunConfig& config, std::string_view key, std::string_view value) {
    const Key* k = find_key(key);
    if (!k) return "unknown key '" + std::string(key) + "'";
    try {
        k->set(config, value);
    } catch (const std::exception& e) {
        return "bad value for '" + std::string(key) + "': " + e.what();
    }
    return {};
}

[[noreturn]] void fail(const std::vector<std::string>& errors) {
    std::string message = "invalid configuration:";
    for (const auto& e : errors) message += "\n  " + e;
    throw ConfigError(message);
}

} // namespace

PipelineConfig RunConfig::resolved() const {
    PipelineConfig p = pipeline;
    p.cohort.seed = cohort_seed.value_or(seed);
    p.sgd.seed = encoder_seed.value_or(derive_seed(seed, 1));
    p.gbm.seed = gbm_seed.value_or(derive_seed(seed, 2));
    p.workers = workers;
    p.validate();
    return p;
}

Workspace RunConfig::workspace() const {
    const std::filesystem::path root(workdir);
    auto resolve = [&](const std::string& p) {
        const std::filesystem::path path(p);
        return path.is_absolute() ? path : root / path;
    };
    Workspace ws;
    ws.manifest = resolve(manifest);
    ws.answers = resolve(answers);
    ws.outputs = resolve(outputs);
    return ws;
}

RunConfig parse_config(std::string_view text, RunConfig base) {
    std::vector<std::string> errors;
    std::istringstream in{std::string(text)};
    std::string line;
    for (int number = 1; std::getline(in, line); ++number) {
        const auto content = trim(line);
        if (content.empty() || content[0] == '#') continue;
        const auto eq = content.find('=');
        if (eq == std::string::npos) {
            errors.push_back("line " + std::to_string(number) + ": expected 'section.key = value'");
            continue;
        }
        const auto error = assign(base, trim(std::string_view(content).substr(0, eq)),
                                  trim(std::string_view(content).substr(eq + 1)));
        if (!error.empty()) errors.push_back("line " + std::to_string(number) + ": " + error);
    }
    if (!errors.empty()) fail(errors);
    return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
    auto in = open_input(path);
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str(), std::move(base));
}

void apply_overrides(RunConfig& config, const std::vector<std::string>& assignments) {
    std::vector<std::string> errors;
    for (const auto& a : assignments) {
        const auto eq = a.find('=');
        if (eq == std::string::npos) {
            errors.push_back("override '" + a + "': expected key=value");
            continue;
        }
        const auto error = assign(config, trim(std::string_view(a).substr(0, eq)), trim(std::string_view(a).substr(eq + 1)));
        if (!error.empty()) errors.push_back("override: " + error);
    }
    if (!errors.empty()) fail(errors);
}

std::string format_config(const RunConfig& config) {
    std::string out;
    std::string section;
    for (const auto& k : keys()) {
        const auto dot = k.name.find('.');
        const auto this_section = k.name.substr(0, dot);
        if (this_section != section) {
            if (!section.empty()) out += '\n';
            section = this_section;
        }
        if (k.optional && !k.is_set(config)) {
            out += "# " + k.name + " = <derived from run.seed>\n";
            continue;
        }
        out += k.name + " = " + k.get(config) + '\n';
    }
    return out;
}

bool operator==(const RunConfig& a, const RunConfig& b) { return format_config(a) == format_config(b); }

} // namespace voxboost
