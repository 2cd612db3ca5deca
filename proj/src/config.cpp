#include "fsmlp/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace fsmlp::cli {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::int64_t parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const std::int64_t v = std::stoll(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' needs an integer, got '" + value + "'");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const std::uint64_t v = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' needs an unsigned integer, got '" +
                          value + "'");
    }
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' needs a number, got '" + value + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ConfigError("config: key '" + key + "' needs a boolean, got '" + value + "'");
}

}  // namespace

std::map<std::string, std::string> parse_kv_text(const std::string& text,
                                                 const std::string& origin) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    std::string section;
    std::int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos)
            line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config: bad section header at " + origin + ":" +
                                  std::to_string(line_no));
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: expected key=value at " + origin + ":" +
                              std::to_string(line_no));
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("config: empty key at " + origin + ":" + std::to_string(line_no));
        const std::string full = section.empty() ? key : section + "." + key;
        if (kv.count(full) != 0)
            throw ConfigError("config: duplicate key '" + full + "' at " + origin + ":" +
                              std::to_string(line_no));
        kv[full] = value;
    }
    return kv;
}

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot open '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_kv_text(ss.str(), path);
}

RunConfig::RunConfig() {
    const char* env = std::getenv("FSMLP_OUT");
    out_root = env != nullptr && *env != '\0' ? env : "runs";
}

void RunConfig::apply(const std::map<std::string, std::string>& kv) {
    for (const auto& [key, value] : kv) apply_one(key, value);
}

void RunConfig::apply_one(const std::string& key, const std::string& value) {
    if (key == "data.path") data_path = value;
    else if (key == "data.kind") {
        if (value != "auto" && value != "ett" && value != "other")
            throw ConfigError("config: data.kind must be auto|ett|other, got '" + value + "'");
        dataset_kind = value;
    } else if (key == "data.raw_metrics") raw_metrics = parse_bool(key, value);
    else if (key == "model.lookback") model.lookback = parse_int(key, value);
    else if (key == "model.horizon") model.horizon = parse_int(key, value);
    else if (key == "model.channels") model.channels = parse_int(key, value);
    else if (key == "model.n_blocks") model.n_blocks = parse_int(key, value);
    else if (key == "model.hidden_dim") model.hidden_dim = parse_int(key, value);
    else if (key == "model.transform") model.transform = layers::transform_from_name(value);
    else if (key == "model.activation") model.activation = layers::activation_from_name(value);
    else if (key == "model.simplex_axis") model.simplex_axis = layers::axis_from_name(value);
    else if (key == "model.no_embedding") model.no_embedding = parse_bool(key, value);
    else if (key == "model.seed") model.seed = parse_u64(key, value);
    else if (key == "model.mixer") mixer = layers::mixer_spec_from_string(value);
    else if (key == "train.epochs") train.epochs = parse_int(key, value);
    else if (key == "train.patience") train.patience = parse_int(key, value);
    else if (key == "train.batch_size") train.batch_size = parse_int(key, value);
    else if (key == "train.learning_rate") train.learning_rate = parse_double(key, value);
    else if (key == "train.beta1") train.beta1 = parse_double(key, value);
    else if (key == "train.beta2") train.beta2 = parse_double(key, value);
    else if (key == "train.adam_eps") train.adam_eps = parse_double(key, value);
    else if (key == "train.seed") train.seed = parse_u64(key, value);
    else if (key == "train.loss_mode") train.loss_mode = training::loss_mode_from_name(value);
    else if (key == "run.out_dir") out_root = value;
    else if (key == "run.name") run_name = value;
    else throw ConfigError("config: unknown key '" + key + "'");
}

std::string RunConfig::resolved_text() const {
    std::ostringstream os;
    os << "[data]\n";
    os << "path = " << data_path << "\n";
    os << "kind = " << dataset_kind << "\n";
    os << "raw_metrics = " << (raw_metrics ? "true" : "false") << "\n";
    os << "\n[model]\n";
    os << "lookback = " << model.lookback << "\n";
    os << "horizon = " << model.horizon << "\n";
    os << "channels = " << model.channels << "\n";
    os << "n_blocks = " << model.n_blocks << "\n";
    os << "hidden_dim = " << model.hidden_dim << "\n";
    os << "transform = " << layers::transform_name(model.transform) << "\n";
    os << "activation = " << layers::activation_name(model.activation) << "\n";
    os << "simplex_axis = " << layers::axis_name(model.simplex_axis) << "\n";
    os << "no_embedding = " << (model.no_embedding ? "true" : "false") << "\n";
    os << "seed = " << model.seed << "\n";
    os << "mixer = " << layers::mixer_spec_to_string(mixer) << "\n";
    os << "\n[train]\n";
    os << "epochs = " << train.epochs << "\n";
    os << "patience = " << train.patience << "\n";
    os << "batch_size = " << train.batch_size << "\n";
    os << "learning_rate = " << train.learning_rate << "\n";
    os << "beta1 = " << train.beta1 << "\n";
    os << "beta2 = " << train.beta2 << "\n";
    os << "adam_eps = " << train.adam_eps << "\n";
    os << "seed = " << train.seed << "\n";
    os << "loss_mode = " << training::loss_mode_name(train.loss_mode) << "\n";
    os << "\n[run]\n";
    os << "out_dir = " << out_root << "\n";
    os << "name = " << run_name << "\n";
    return os.str();
}

data::SplitRatios RunConfig::ratios() const {
    if (dataset_kind == "ett") return data::kEttRatios;
    if (dataset_kind == "other") return data::kDefaultRatios;
    return data::looks_like_ett(data_path) ? data::kEttRatios : data::kDefaultRatios;
}

std::string RunConfig::run_dir() const { return out_root + "/" + run_name; }

}  // namespace fsmlp::cli
