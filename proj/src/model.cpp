#include "fsmlp/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace fsmlp::model {

namespace ad = fsmlp::autodiff;
using layers::MixerSpec;

void ModelConfig::validate() const {
    if (lookback < 1 || horizon < 1 || channels < 1 || n_blocks < 1 || hidden_dim < 1)
        throw ConfigError(
            "ModelConfig: lookback, horizon, channels, n_blocks, hidden_dim must all be >= 1");
}

FsmlpModel::FsmlpModel(const ModelConfig& config) : FsmlpModel(config, MixerSpec{}) {}

FsmlpModel::FsmlpModel(const ModelConfig& config, const MixerSpec& mixer)
    : cfg_(config),
      mixer_spec_(mixer),
      plan_in_(config.lookback),
      plan_out_(config.horizon) {
    cfg_.validate();
    Rng rng(cfg_.seed);
    const std::int64_t feat = cfg_.feature_width();
    if (!cfg_.no_embedding) embedding_.emplace(cfg_.lookback, cfg_.hidden_dim, rng);
    const auto factory = layers::make_mixer_factory(mixer_spec_, cfg_.transform, cfg_.simplex_axis);
    scwm_.reserve(static_cast<std::size_t>(cfg_.n_blocks));
    for (std::int64_t i = 0; i < cfg_.n_blocks; ++i)
        scwm_.emplace_back(cfg_.channels, feat, cfg_.activation, factory, rng);
    ftm_.reserve(static_cast<std::size_t>(cfg_.n_blocks));
    for (std::int64_t i = 0; i < cfg_.n_blocks; ++i)
        ftm_.emplace_back(feat, cfg_.activation, rng);
    head_ = layers::LinearLayer(feat, cfg_.horizon, rng);
}

namespace {

ad::Var checked(ad::Var v, const std::string& stage) {
    if (!v.value().all_finite())
        throw NumericError("non-finite values detected at stage '" + stage + "'");
    return v;
}

}  // namespace

ad::Var FsmlpModel::forward_var(const Tensor3& x) const {
    if (x.dim1() != cfg_.channels || x.dim2() != cfg_.lookback)
        throw DimensionError("forward: input " + x.shape().str() + " does not match (B," +
                             std::to_string(cfg_.channels) + "," +
                             std::to_string(cfg_.lookback) + ")");
    if (!x.all_finite()) throw NumericError("non-finite values detected at stage 'input'");

    const layers::RevinState st = layers::revin_state(x);
    ad::Var h = ad::constant(layers::revin_normalize(x, st));
    h = checked(ad::fixed_linear_map(h, plan_in_.matrix()), "ft");
    if (embedding_) h = checked(embedding_->forward(h), "embedding");
    h = ad::transpose12(h);  // (B, F, N)
    for (std::size_t i = 0; i < scwm_.size(); ++i)
        h = checked(scwm_[i].forward(h), "scwm" + std::to_string(i));
    h = ad::transpose12(h);  // (B, N, F)
    for (std::size_t i = 0; i < ftm_.size(); ++i)
        h = checked(ftm_[i].forward(h), "ftm" + std::to_string(i));
    h = checked(head_.forward(h), "head");  // (B, N, tau) frequency coefficients
    h = checked(ad::fixed_linear_map(h, plan_out_.inverse_matrix()), "ift");
    return checked(layers::revin_denormalize(h, st), "denormalize");
}

Tensor3 FsmlpModel::forward(const Tensor3& x) const { return forward_var(x).value(); }

std::vector<layers::Parameter> FsmlpModel::parameters() const {
    std::vector<layers::Parameter> out;
    if (embedding_) embedding_->collect_parameters(out, "embed");
    for (std::size_t i = 0; i < scwm_.size(); ++i)
        scwm_[i].collect_parameters(out, "scwm" + std::to_string(i));
    for (std::size_t i = 0; i < ftm_.size(); ++i)
        ftm_[i].collect_parameters(out, "ftm" + std::to_string(i));
    head_.collect_parameters(out, "head");
    return out;
}

void FsmlpModel::zero_grad() const {
    for (const auto& p : parameters()) p.node->zero_grad();
}

ad::Var FsmlpModel::penalty() const {
    ad::Var total;
    for (const auto& block : scwm_) {
        ad::Var p = block.mixer().penalty();
        if (!p.defined()) continue;
        total = total.defined() ? ad::add(total, p) : p;
    }
    return total;
}

std::int64_t FsmlpModel::parameter_count() const {
    std::int64_t count = 0;
    for (const auto& p : parameters()) count += p.node->value.size();
    return count;
}

std::int64_t FsmlpModel::parameter_count(const ModelConfig& config) {
    config.validate();
    const std::int64_t f = config.feature_width();
    const std::int64_t n = config.channels;
    std::int64_t count = 0;
    if (!config.no_embedding) count += config.lookback * config.hidden_dim + config.hidden_dim;
    count += config.n_blocks * (n * n + n + f * f + f);  // SCWM blocks
    count += config.n_blocks * (f * f + f);              // FTM blocks
    count += f * config.horizon + config.horizon;        // head
    return count;
}

std::vector<const layers::SimplexLinearLayer*> FsmlpModel::simplex_layers() const {
    std::vector<const layers::SimplexLinearLayer*> out;
    for (const auto& block : scwm_)
        if (const auto* s = block.mixer().as_simplex()) out.push_back(s);
    return out;
}

std::int64_t FsmlpModel::degenerate_slices_seen() const {
    std::int64_t total = 0;
    for (const auto* s : simplex_layers()) total += s->degenerate_slices_seen();
    return total;
}

// --- checkpoint format ---

namespace {

constexpr char kMagic[8] = {'F', 'S', 'M', 'L', 'P', 'C', 'K', 'P'};

nlohmann::ordered_json config_to_json(const ModelConfig& c, const MixerSpec& mixer) {
    nlohmann::ordered_json j;
    j["lookback"] = c.lookback;
    j["horizon"] = c.horizon;
    j["channels"] = c.channels;
    j["n_blocks"] = c.n_blocks;
    j["hidden_dim"] = c.hidden_dim;
    j["transform"] = layers::transform_name(c.transform);
    j["activation"] = layers::activation_name(c.activation);
    j["simplex_axis"] = layers::axis_name(c.simplex_axis);
    j["no_embedding"] = c.no_embedding;
    j["seed"] = c.seed;
    j["mixer"] = layers::mixer_spec_to_string(mixer);
    return j;
}

std::pair<ModelConfig, MixerSpec> config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.lookback = j.at("lookback").get<std::int64_t>();
    c.horizon = j.at("horizon").get<std::int64_t>();
    c.channels = j.at("channels").get<std::int64_t>();
    c.n_blocks = j.at("n_blocks").get<std::int64_t>();
    c.hidden_dim = j.at("hidden_dim").get<std::int64_t>();
    c.transform = layers::transform_from_name(j.at("transform").get<std::string>());
    c.activation = layers::activation_from_name(j.at("activation").get<std::string>());
    c.simplex_axis = layers::axis_from_name(j.at("simplex_axis").get<std::string>());
    c.no_embedding = j.at("no_embedding").get<bool>();
    c.seed = j.at("seed").get<std::uint64_t>();
    const MixerSpec mixer = layers::mixer_spec_from_string(j.at("mixer").get<std::string>());
    return {c, mixer};
}

}  // namespace

void save_checkpoint(const FsmlpModel& model, const std::string& path) {
    static_assert(std::endian::native == std::endian::little,
                  "checkpoint blob is little-endian");
    const auto params = model.parameters();
    nlohmann::ordered_json header;
    header["version"] = kCheckpointVersion;
    header["config"] = config_to_json(model.config(), model.mixer_spec());
    nlohmann::ordered_json table = nlohmann::ordered_json::array();
    std::uint64_t offset = 0;
    for (const auto& p : params) {
        const auto& s = p.node->value.shape();
        nlohmann::ordered_json entry;
        entry["name"] = p.name;
        entry["shape"] = {s.d0, s.d1, s.d2};
        entry["offset"] = offset;
        table.push_back(entry);
        offset += static_cast<std::uint64_t>(s.numel()) * sizeof(double);
    }
    header["tensors"] = table;
    const std::string header_text = header.dump();

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("save_checkpoint: cannot open '" + path + "' for writing");
    f.write(kMagic, sizeof(kMagic));
    const std::uint64_t hlen = header_text.size();
    f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    f.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    for (const auto& p : params) {
        const Tensor3& t = p.node->value;
        f.write(reinterpret_cast<const char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!f) throw IoError("save_checkpoint: write failed for '" + path + "'");
}

FsmlpModel load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("load_checkpoint: cannot open '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    if (bytes.size() < sizeof(kMagic) + sizeof(std::uint64_t) ||
        std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
        throw IoError("load_checkpoint: '" + path + "' is not a checkpoint file");
    std::uint64_t hlen = 0;
    std::memcpy(&hlen, bytes.data() + sizeof(kMagic), sizeof(hlen));
    const std::size_t header_start = sizeof(kMagic) + sizeof(std::uint64_t);
    if (bytes.size() < header_start + hlen)
        throw IoError("load_checkpoint: truncated header in '" + path + "'");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(header_start, hlen));
    } catch (const nlohmann::json::exception& e) {
        throw IoError("load_checkpoint: corrupt header in '" + path + "': " + e.what());
    }
    const int version = header.at("version").get<int>();
    if (version != kCheckpointVersion)
        throw IoError("load_checkpoint: version " + std::to_string(version) +
                      " != supported version " + std::to_string(kCheckpointVersion));

    auto [config, mixer] = config_from_json(header.at("config"));
    FsmlpModel model(config, mixer);
    auto params = model.parameters();

    const std::size_t blob_start = header_start + hlen;
    const auto& table = header.at("tensors");
    if (table.size() != params.size())
        throw IoError("load_checkpoint: tensor table has " + std::to_string(table.size()) +
                      " entries, model expects " + std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& entry = table.at(i);
        const std::string name = entry.at("name").get<std::string>();
        if (name != params[i].name)
            throw IoError("load_checkpoint: tensor '" + name + "' where '" + params[i].name +
                          "' was expected");
        const auto shape = entry.at("shape");
        const Shape3 want = params[i].node->value.shape();
        const Shape3 got{shape.at(0).get<std::int64_t>(), shape.at(1).get<std::int64_t>(),
                         shape.at(2).get<std::int64_t>()};
        if (!(want == got))
            throw IoError("load_checkpoint: shape mismatch for '" + name + "': file has " +
                          got.str() + ", model expects " + want.str());
        const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
        const std::size_t nbytes = static_cast<std::size_t>(want.numel()) * sizeof(double);
        if (blob_start + offset + nbytes > bytes.size())
            throw IoError("load_checkpoint: truncated data for tensor '" + name + "'");
        std::memcpy(params[i].node->value.data(), bytes.data() + blob_start + offset, nbytes);
    }
    return model;
}

}  // namespace fsmlp::model
