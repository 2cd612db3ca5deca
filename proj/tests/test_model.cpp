#include <doctest.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "fsmlp/model.hpp"
#include "helpers.hpp"

using namespace fsmlp;
namespace ad = fsmlp::autodiff;
using model::FsmlpModel;
using model::ModelConfig;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.lookback = 8;
    cfg.horizon = 4;
    cfg.channels = 2;
    cfg.n_blocks = 1;
    cfg.hidden_dim = 8;
    cfg.seed = 5;
    return cfg;
}

double median_forward_seconds(const FsmlpModel& m, const Tensor3& x, int reps) {
    std::vector<double> times;
    m.forward(x);  // warmup
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        m.forward(x);
        times.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    std::sort(times.begin(), times.end());
    return times[times.size() / 2];
}

}  // namespace

TEST_CASE("forward shape contract: (2,7,96) -> (2,7,96)") {
    ModelConfig cfg;
    cfg.lookback = 96;
    cfg.horizon = 96;
    cfg.channels = 7;
    const FsmlpModel m(cfg);
    Rng rng(1);
    const Tensor3 x = Tensor3::random_uniform({2, 7, 96}, -1.0, 1.0, rng);
    const Tensor3 y = m.forward(x);
    CHECK(y.shape() == Shape3{2, 7, 96});
    CHECK(y.all_finite());

    CHECK_THROWS_AS(m.forward(Tensor3(2, 7, 95)), DimensionError);
    CHECK_THROWS_AS(m.forward(Tensor3(2, 6, 96)), DimensionError);
}

TEST_CASE("constant channels pass through when every parameter is zero") {
    ModelConfig cfg = tiny_config();
    const FsmlpModel m(cfg);
    for (const auto& p : m.parameters()) p.node->value.zero();
    Tensor3 x(3, 2, cfg.lookback);
    for (std::int64_t b = 0; b < 3; ++b)
        for (std::int64_t c = 0; c < 2; ++c)
            for (std::int64_t t = 0; t < cfg.lookback; ++t)
                x.at(b, c, t) = 1.0 + static_cast<double>(b) + 10.0 * static_cast<double>(c);
    const Tensor3 y = m.forward(x);
    // RevIN sees zeros, zeroed net predicts zero frequency coefficients, and
    // denormalization restores the per-channel constant.
    for (std::int64_t b = 0; b < 3; ++b)
        for (std::int64_t c = 0; c < 2; ++c)
            for (std::int64_t t = 0; t < cfg.horizon; ++t)
                CHECK(y.at(b, c, t) ==
                      doctest::Approx(x.at(b, c, 0)).epsilon(1e-12));
}

TEST_CASE("end-to-end gradcheck on the tiny config covers every parameter") {
    const ModelConfig cfg = tiny_config();
    const FsmlpModel m(cfg);
    Rng rng(33);
    const Tensor3 x = test::random_tensor({2, 2, cfg.lookback}, rng);
    const Tensor3 target = test::random_tensor({2, 2, cfg.horizon}, rng);

    std::vector<ad::Var> leaves;
    for (const auto& p : m.parameters()) {
        // keep raw weights off the |w| kink
        for (std::int64_t i = 0; i < p.node->value.size(); ++i)
            if (std::fabs(p.node->value[i]) < 0.03) p.node->value[i] = 0.07;
        leaves.emplace_back(p.node);
    }
    auto loss = [&] {
        const ad::Var pred = m.forward_var(x);
        return ad::reduce_mean(ad::square(ad::sub(pred, ad::constant(target))), ad::kAxisAll);
    };
    const auto r = test::gradcheck(leaves, loss);
    CHECK_MESSAGE(r.ok, r.worst_at);
}

TEST_CASE("parameter_count closed form matches the instance and hand count") {
    const ModelConfig cfg = tiny_config();
    const FsmlpModel m(cfg);
    // hand count: embed 8*8+8 = 72; SCWM: mix 2*2+2 = 6, temporal 8*8+8 = 72;
    // FTM: 72; head: 8*4+4 = 36 -> total 258
    CHECK(FsmlpModel::parameter_count(cfg) == 258);
    CHECK(m.parameter_count() == 258);

    // without the embedding, doubling N changes only the channel-mixer terms:
    // n_blocks * ((2N)^2 + 2N - N^2 - N) = 3N^2 + N per block
    ModelConfig a = tiny_config();
    a.no_embedding = true;
    ModelConfig b = a;
    b.channels = 2 * a.channels;
    const std::int64_t predicted_delta =
        a.n_blocks * (3 * a.channels * a.channels + a.channels);
    CHECK(FsmlpModel::parameter_count(b) - FsmlpModel::parameter_count(a) == predicted_delta);

    // count is a pure function of the config; forward batch size cannot
    // change it
    const FsmlpModel m2(cfg);
    Rng rng(2);
    m2.forward(Tensor3::random_uniform({5, 2, 8}, -1, 1, rng));
    CHECK(m2.parameter_count() == 258);
}

TEST_CASE("checkpoint round-trip is bit-exact and reproduces forward outputs") {
    const ModelConfig cfg = tiny_config();
    FsmlpModel m(cfg);
    Rng rng(9);
    // push the parameters off their init values
    for (const auto& p : m.parameters())
        for (std::int64_t i = 0; i < p.node->value.size(); ++i)
            p.node->value[i] += rng.uniform(-0.3, 0.3);

    const std::string path = "ckpt_roundtrip.bin";
    model::save_checkpoint(m, path);
    const FsmlpModel loaded = model::load_checkpoint(path);

    const auto pa = m.parameters();
    const auto pb = loaded.parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].name == pb[i].name);
        CHECK(pa[i].node->value.max_abs_diff(pb[i].node->value) == 0.0);
    }
    const Tensor3 x = test::random_tensor({2, 2, cfg.lookback}, rng);
    CHECK(m.forward(x).max_abs_diff(loaded.forward(x)) == 0.0);

    // simplex membership survives the round trip
    for (const auto* s : loaded.simplex_layers()) {
        const Tensor3 eff = s->effective_weights();
        for (std::int64_t o = 0; o < eff.dim2(); ++o) {
            double sum = 0.0;
            for (std::int64_t i = 0; i < eff.dim1(); ++i) {
                CHECK(eff.at(0, i, o) >= 0.0);
                sum += eff.at(0, i, o);
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
    std::remove(path.c_str());
}

TEST_CASE("checkpoint error paths: magic, truncation, version, shape") {
    const ModelConfig cfg = tiny_config();
    FsmlpModel m(cfg);
    const std::string path = "ckpt_errors.bin";
    model::save_checkpoint(m, path);

    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();

    auto write_bytes = [](const std::string& p, const std::string& content) {
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        out << content;
    };

    SUBCASE("not a checkpoint") {
        write_bytes(path, "definitely not a checkpoint");
        CHECK_THROWS_AS(model::load_checkpoint(path), IoError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(model::load_checkpoint("no_such_file.bin"), IoError);
    }
    SUBCASE("truncated data blob") {
        write_bytes(path, bytes.substr(0, bytes.size() - 16));
        CHECK_THROWS_AS(model::load_checkpoint(path), IoError);
    }
    SUBCASE("version mismatch") {
        const auto pos = bytes.find("\"version\":1");
        REQUIRE(pos != std::string::npos);
        std::string patched = bytes;
        patched[pos + 10] = '9';
        write_bytes(path, patched);
        CHECK_THROWS_WITH_AS(model::load_checkpoint(path),
                             "load_checkpoint: version 9 != supported version 1", IoError);
    }
    SUBCASE("tensor shape mismatch") {
        // rebuild the header with a doctored first tensor shape, keep the blob
        std::uint64_t hlen = 0;
        std::memcpy(&hlen, bytes.data() + 8, sizeof(hlen));
        auto header = nlohmann::json::parse(bytes.substr(16, hlen));
        header["tensors"][0]["shape"] = {1, 3, 9};
        const std::string new_header = header.dump();
        std::string patched = bytes.substr(0, 8);
        const std::uint64_t new_len = new_header.size();
        patched.append(reinterpret_cast<const char*>(&new_len), sizeof(new_len));
        patched += new_header;
        patched += bytes.substr(16 + hlen);
        write_bytes(path, patched);
        CHECK_THROWS_AS(model::load_checkpoint(path), IoError);
    }
    std::remove(path.c_str());
}

TEST_CASE("determinism: same seed and config give identical parameters and outputs") {
    const ModelConfig cfg = tiny_config();
    const FsmlpModel a(cfg);
    const FsmlpModel b(cfg);
    const auto pa = a.parameters();
    const auto pb = b.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i)
        CHECK(pa[i].node->value.max_abs_diff(pb[i].node->value) == 0.0);
    Rng rng(3);
    const Tensor3 x = test::random_tensor({3, 2, cfg.lookback}, rng);
    CHECK(a.forward(x).max_abs_diff(b.forward(x)) == 0.0);

    ModelConfig other = cfg;
    other.seed = cfg.seed + 1;
    const FsmlpModel c(other);
    CHECK(c.parameters()[0].node->value.max_abs_diff(pa[0].node->value) > 0.0);
}

TEST_CASE("forward cost growth stays within the linear envelope (asymptotic smoke test)") {
    // Fixed hidden width; doubling N or L must not grow cost more than
    // 1.5x past linear. Constant block terms can make growth sublinear,
    // which is fine for an O(NL) claim.
    Rng rng(7);
    ModelConfig base;
    base.lookback = 96;
    base.horizon = 48;
    base.channels = 7;
    base.n_blocks = 2;
    base.hidden_dim = 64;

    ModelConfig big_n = base;
    big_n.channels = 14;
    ModelConfig big_l = base;
    big_l.lookback = 192;

    const FsmlpModel m_base(base), m_n(big_n), m_l(big_l);
    const Tensor3 x_base = Tensor3::random_uniform({16, 7, 96}, -1, 1, rng);
    const Tensor3 x_n = Tensor3::random_uniform({16, 14, 96}, -1, 1, rng);
    const Tensor3 x_l = Tensor3::random_uniform({16, 7, 192}, -1, 1, rng);

    const double t_base = median_forward_seconds(m_base, x_base, 5);
    const double t_n = median_forward_seconds(m_n, x_n, 5);
    const double t_l = median_forward_seconds(m_l, x_l, 5);

    CHECK(t_n / t_base < 3.0);  // 2x linear + 50%
    CHECK(t_l / t_base < 3.0);
}

TEST_CASE("NaN input is rejected with the stage name") {
    const ModelConfig cfg = tiny_config();
    const FsmlpModel m(cfg);
    Tensor3 x(1, 2, cfg.lookback, 1.0);
    x.at(0, 0, 3) = std::nan("");
    CHECK_THROWS_WITH_AS(m.forward(x), "non-finite values detected at stage 'input'",
                         NumericError);
}

TEST_CASE("no_embedding mode runs blocks on the L coefficients directly") {
    ModelConfig cfg = tiny_config();
    cfg.no_embedding = true;
    const FsmlpModel m(cfg);
    Rng rng(4);
    const Tensor3 x = test::random_tensor({2, 2, cfg.lookback}, rng);
    const Tensor3 y = m.forward(x);
    CHECK(y.shape() == Shape3{2, 2, cfg.horizon});
    // no embed parameters present
    for (const auto& p : m.parameters()) CHECK(p.name.rfind("embed", 0) != 0);
}
