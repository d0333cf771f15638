#include <fstream>
#include <sstream>
#include <string>

#include "voxboost/csv.hpp"
#include "voxboost/error.hpp"
#include "voxboost/gbm.hpp"

// gbmmodel v1
//   learning_rate <r> / n_trees <n> / max_depth <n> / lambda <r> / alpha <r> /
//   subsample <r> / seed <u64> / n_features <n> / f0 <r> / stages <k>
//   then k lines: stage <rho> followed by the pre-order node list,
//   each node either "node <feature> <threshold>" or "leaf <value>".

namespace voxboost {

namespace {

void write_preorder(std::ostream& out, const RegressionTree& tree, std::int32_t i) {
    const auto& node = tree.nodes[static_cast<std::size_t>(i)];
    if (node.is_leaf()) {
        out << " leaf " << format_real(node.value);
        return;
    }
    out << " node " << node.feature << ' ' << format_real(node.threshold);
    write_preorder(out, tree, node.left);
    write_preorder(out, tree, node.right);
}

std::int32_t read_preorder(std::istringstream& in, RegressionTree& tree, Eigen::Index n_features, int depth) {
    if (depth > 64) throw InvalidInput("gbmmodel: tree too deep");
    std::string kind;
    if (!(in >> kind)) throw InvalidInput("gbmmodel: truncated node list");
    const auto index = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    std::string token;
    if (kind == "leaf") {
        in >> token;
        tree.nodes.back().value = parse_real(token);
        return index;
    }
    if (kind != "node") throw InvalidInput("gbmmodel: expected 'node' or 'leaf', got '" + kind + "'");
    in >> token;
    const auto feature = parse_integer(token);
    if (feature < 0 || feature >= n_features) throw InvalidInput("gbmmodel: split feature out of range");
    in >> token;
    const double threshold = parse_real(token);
    const auto left = read_preorder(in, tree, n_features, depth + 1);
    const auto right = read_preorder(in, tree, n_features, depth + 1);
    auto& node = tree.nodes[static_cast<std::size_t>(index)];
    node.feature = static_cast<std::int32_t>(feature);
    node.threshold = threshold;
    node.left = left;
    node.right = right;
    return index;
}

std::string expect_field(std::istream& in, const char* key) {
    std::string line;
    if (!std::getline(in, line)) throw InvalidInput(std::string("gbmmodel: missing field ") + key);
    std::istringstream fields(line);
    std::string name, value;
    fields >> name >> value;
    if (name != key) throw InvalidInput("gbmmodel: expected '" + std::string(key) + "', got '" + name + "'");
    return value;
}

} // namespace

void save_model(std::ostream& out, const GbmModel& model) {
    const auto& hp = model.hyperparams;
    out << "gbmmodel v1\n";
    out << "learning_rate " << format_real(hp.learning_rate) << '\n';
    out << "n_trees " << hp.n_trees << '\n';
    out << "max_depth " << hp.max_depth << '\n';
    out << "lambda " << format_real(hp.lambda) << '\n';
    out << "alpha " << format_real(hp.alpha) << '\n';
    out << "subsample " << format_real(hp.subsample) << '\n';
    out << "seed " << hp.seed << '\n';
    out << "n_features " << model.n_features << '\n';
    out << "f0 " << format_real(model.f0) << '\n';
    out << "stages " << model.stages.size() << '\n';
    for (const auto& stage : model.stages) {
        out << "stage " << format_real(stage.rho);
        write_preorder(out, stage.tree, 0);
        out << '\n';
    }
}

void save_model(const std::filesystem::path& path, const GbmModel& model) {
    auto out = open_output(path);
    save_model(out, model);
    if (!out) throw IoError("failed writing " + path.string());
}

GbmModel load_model(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "gbmmodel v1") throw InvalidInput("not a 'gbmmodel v1' file");
    GbmModel model;
    auto& hp = model.hyperparams;
    hp.learning_rate = parse_real(expect_field(in, "learning_rate"));
    hp.n_trees = static_cast<int>(parse_integer(expect_field(in, "n_trees")));
    hp.max_depth = static_cast<int>(parse_integer(expect_field(in, "max_depth")));
    hp.lambda = parse_real(expect_field(in, "lambda"));
    hp.alpha = parse_real(expect_field(in, "alpha"));
    hp.subsample = parse_real(expect_field(in, "subsample"));
    hp.seed = std::stoull(expect_field(in, "seed"));
    model.n_features = static_cast<Eigen::Index>(parse_integer(expect_field(in, "n_features")));
    model.f0 = parse_real(expect_field(in, "f0"));
    const auto n_stages = parse_integer(expect_field(in, "stages"));
    if (n_stages < 0) throw InvalidInput("gbmmodel: negative stage count");
    model.gamma = hp.learning_rate;
    for (long long m = 0; m < n_stages; ++m) {
        if (!std::getline(in, line)) throw InvalidInput("gbmmodel: truncated stage list");
        std::istringstream fields(line);
        std::string tag, rho;
        fields >> tag >> rho;
        if (tag != "stage") throw InvalidInput("gbmmodel: expected 'stage'");
        GbmStage stage;
        stage.rho = parse_real(rho);
        read_preorder(fields, stage.tree, model.n_features, 0);
        std::string trailing;
        if (fields >> trailing) throw InvalidInput("gbmmodel: trailing tokens after stage tree");
        model.stages.push_back(std::move(stage));
    }
    return model;
}

GbmModel load_model(const std::filesystem::path& path) {
    auto in = open_input(path);
    return load_model(in);
}

} // namespace voxboost
