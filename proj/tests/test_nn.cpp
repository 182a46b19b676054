#include "semcom/nn.hpp"

#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "fd_check.hpp"
#include "semcom/util.hpp"

using namespace semcom;
using ad::Mat;
using ad::Tape;
using ad::Var;
using test::check_gradients;
using test::random_mat;

TEST_CASE("model config validation") {
    nn::ModelConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.heads = 7;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.max_len = 2;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    auto j = cfg.to_json();
    auto back = nn::ModelConfig::from_json(j);
    CHECK(back.d_model == cfg.d_model);
    CHECK(back.dropout == cfg.dropout);
}

TEST_CASE("param store seeds by name, not creation order") {
    nn::ParamStore a(7), b(7);
    a.create("x", 3, 4, nn::Init::glorot);
    a.create("y", 3, 4, nn::Init::glorot);
    b.create("y", 3, 4, nn::Init::glorot);
    b.create("x", 3, 4, nn::Init::glorot);
    CHECK(a.get("x").isApprox(b.get("x")));
    CHECK(a.get("y").isApprox(b.get("y")));
    CHECK_FALSE(a.get("x").isApprox(a.get("y")));

    nn::ParamStore c(8);
    c.create("x", 3, 4, nn::Init::glorot);
    CHECK_FALSE(c.get("x").isApprox(a.get("x")));

    CHECK_THROWS_AS(a.create("x", 4, 4, nn::Init::glorot), std::invalid_argument);
    CHECK_THROWS_AS(a.get("missing"), std::out_of_range);
}

TEST_CASE("adam first step has lr magnitude and honors edge cases") {
    nn::ParamStore ps(1);
    Mat& p = ps.create("w", 2, 2, nn::Init::glorot);
    Mat before = p;
    nn::AdamConfig cfg;
    cfg.lr = 1e-3;

    // Zero gradient from fresh state: no movement.
    ps.grad("w").setZero();
    ps.adam_step(cfg);
    CHECK(p.isApprox(before));

    // Constant gradient: first-step magnitude is lr (bias-corrected).
    nn::ParamStore ps2(1);
    Mat& q = ps2.create("w", 2, 2, nn::Init::glorot);
    Mat before2 = q;
    ps2.grad("w").setConstant(0.37);
    ps2.adam_step(cfg);
    Mat step = before2 - q;
    for (Eigen::Index i = 0; i < step.size(); ++i)
        CHECK(step.data()[i] == doctest::Approx(cfg.lr).epsilon(1e-6));

    // lr = 0: no movement even with nonzero gradient.
    nn::AdamConfig frozen = cfg;
    frozen.lr = 0.0;
    ps2.grad("w").setConstant(1.0);
    Mat before3 = q;
    ps2.adam_step(frozen);
    CHECK(q.isApprox(before3));

    // Non-finite gradient names the parameter.
    ps2.grad("w")(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_WITH_AS(ps2.adam_step(cfg), doctest::Contains("w"), std::runtime_error);
}

TEST_CASE("layer norm unit behavior matches hand values") {
    Tape t(false);
    Mat ones(1, 3);
    ones << 1, 1, 1;
    Var g1 = t.leaf(Mat::Ones(1, 3), nullptr);
    Var b0 = t.leaf(Mat::Zero(1, 3), nullptr);
    const Mat& y = t.val(t.layer_norm(t.leaf(ones, nullptr), g1, b0));
    CHECK(y.cwiseAbs().maxCoeff() < 1e-6);

    Mat pm(1, 2);
    pm << 1, -1;
    Tape t2(false);
    const Mat& y2 = t2.val(t2.layer_norm(t2.leaf(pm, nullptr), t2.leaf(Mat::Ones(1, 2), nullptr),
                                         t2.leaf(Mat::Zero(1, 2), nullptr)));
    CHECK(y2(0, 0) == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(y2(0, 1) == doctest::Approx(-1.0).epsilon(1e-5));

    Mat bias(1, 2);
    bias << 4.0, -2.5;
    Tape t3(false);
    const Mat& y3 = t3.val(t3.layer_norm(t3.leaf(pm, nullptr), t3.leaf(Mat::Zero(1, 2), nullptr),
                                         t3.leaf(bias, nullptr)));
    CHECK(y3(0, 0) == 4.0);
    CHECK(y3(0, 1) == -2.5);
}

TEST_CASE("positional encoding has the sinusoidal structure") {
    Mat pe = nn::positional_encoding(16, 8);
    CHECK(pe(0, 0) == 0.0);
    CHECK(pe(0, 1) == 1.0);
    CHECK(pe(3, 0) == doctest::Approx(std::sin(3.0)));
    CHECK(pe(3, 1) == doctest::Approx(std::cos(3.0)));
    CHECK(pe(5, 2) == doctest::Approx(std::sin(5.0 / std::pow(10000.0, 2.0 / 8.0))));
    CHECK(pe.cwiseAbs().maxCoeff() <= 1.0);
}

namespace {

nn::ModelConfig tiny_cfg() {
    nn::ModelConfig cfg;
    cfg.layers = 1;
    cfg.d_model = 8;
    cfg.heads = 2;
    cfg.d_ff = 16;
    cfg.channel_dim = 4;
    cfg.max_len = 5;
    cfg.dropout = 0.0;
    return cfg;
}

}  // namespace

TEST_CASE("encoder layer gradients match finite differences for every parameter") {
    auto cfg = tiny_cfg();
    nn::ParamStore ps(3);
    nn::create_encoder_layer_params(ps, "enc0", cfg);

    Mat x = random_mat(cfg.max_len, cfg.d_model, 42);
    Mat mask = Mat::Ones(1, cfg.max_len);
    mask(0, 4) = 0.0;

    // Analytic gradients for every parameter.
    std::map<std::string, Mat> grads;
    {
        Tape t(true);
        nn::ParamBinder b(t, ps, true);
        Var z = t.leaf(x, nullptr);
        Var out = nn::encoder_layer(b, "enc0", z, 1, cfg.max_len, cfg, &mask, nullptr);
        t.backward(t.mean_all(out));
        for (const auto& name : ps.names()) grads[name] = ps.grad(name);
    }

    auto eval = [&]() {
        Tape t(false);
        nn::ParamBinder b(t, ps, false);
        Var z = t.leaf(x, nullptr);
        return t.val(t.mean_all(nn::encoder_layer(b, "enc0", z, 1, cfg.max_len, cfg, &mask, nullptr)))(0, 0);
    };

    double h = 1e-5;
    double worst = 0.0;
    for (const auto& name : ps.names()) {
        Mat& p = ps.get(name);
        for (Eigen::Index i = 0; i < p.rows(); ++i) {
            for (Eigen::Index j = 0; j < p.cols(); ++j) {
                double saved = p(i, j);
                p(i, j) = saved + h;
                double fp = eval();
                p(i, j) = saved - h;
                double fm = eval();
                p(i, j) = saved;
                double numeric = (fp - fm) / (2 * h);
                double analytic = grads[name](i, j);
                worst = std::max(worst, std::abs(analytic - numeric) /
                                            std::max({1.0, std::abs(analytic), std::abs(numeric)}));
            }
        }
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("encoder layer is pure and permutation-equivariant without positions") {
    auto cfg = tiny_cfg();
    nn::ParamStore ps(5);
    nn::create_encoder_layer_params(ps, "enc0", cfg);
    Mat x = random_mat(cfg.max_len, cfg.d_model, 43);

    auto run = [&](const Mat& in) {
        Tape t(false);
        nn::ParamBinder b(t, ps, false);
        return Mat(t.val(nn::encoder_layer(b, "enc0", t.leaf(in, nullptr), 1, cfg.max_len, cfg, nullptr, nullptr)));
    };

    Mat y1 = run(x);
    Mat y2 = run(x);
    CHECK((y1 - y2).cwiseAbs().maxCoeff() == 0.0);  // purity

    std::vector<int> perm{3, 0, 4, 1, 2};
    Mat xp(cfg.max_len, cfg.d_model), yp_expect(cfg.max_len, cfg.d_model);
    for (int i = 0; i < cfg.max_len; ++i) {
        xp.row(i) = x.row(perm[i]);
        yp_expect.row(i) = y1.row(perm[i]);
    }
    Mat yp = run(xp);
    CHECK((yp - yp_expect).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("masked pad positions do not leak into real positions") {
    auto cfg = tiny_cfg();
    nn::ParamStore ps(6);
    nn::create_encoder_layer_params(ps, "enc0", cfg);

    Mat x = random_mat(cfg.max_len, cfg.d_model, 44);
    Mat x_junk = x;
    x_junk.bottomRows(2) = random_mat(2, cfg.d_model, 45, 10.0);
    Mat mask = Mat::Ones(1, cfg.max_len);
    mask(0, 3) = 0.0;
    mask(0, 4) = 0.0;

    auto run = [&](const Mat& in) {
        Tape t(false);
        nn::ParamBinder b(t, ps, false);
        return Mat(t.val(nn::encoder_layer(b, "enc0", t.leaf(in, nullptr), 1, cfg.max_len, cfg, &mask, nullptr)));
    };
    Mat y1 = run(x), y2 = run(x_junk);
    CHECK((y1.topRows(3) - y2.topRows(3)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("binder freezes by prefix and caches leaves") {
    auto cfg = tiny_cfg();
    nn::ParamStore ps(9);
    nn::create_dense_params(ps, "a", 4, 4);
    nn::create_dense_params(ps, "b", 4, 4);

    Tape t(true);
    nn::ParamBinder bind(t, ps, true);
    bind.freeze_prefix("a.");
    Var x = t.leaf(random_mat(2, 4, 46), nullptr);
    Var y = nn::dense(bind, "a", x);
    y = nn::dense(bind, "b", y);
    Var y2 = nn::dense(bind, "b", y);  // re-bind: cached leaves
    t.backward(t.mean_all(y2));
    CHECK(ps.grad("a.w").isZero());
    CHECK_FALSE(ps.grad("b.w").isZero());
}

TEST_CASE("checkpoint round trip preserves float32 values and metadata") {
    namespace fs = std::filesystem;
    auto dir = (fs::temp_directory_path() / "semcom_ckpt_test").string();
    fs::remove_all(dir);

    nn::ParamStore ps(11);
    ps.create("layer.w", 7, 3, nn::Init::glorot);
    ps.create("layer.b", 1, 3, nn::Init::normal);
    ps.set_step(123);
    nlohmann::json meta;
    meta["note"] = "round-trip";
    nn::save_checkpoint(dir, ps, meta);

    nn::ParamStore back;
    auto manifest = nn::load_checkpoint(dir, back);
    CHECK(back.step() == 123);
    CHECK(manifest["meta"]["note"] == "round-trip");
    REQUIRE(back.has("layer.w"));
    // Values survive at float32 precision.
    CHECK((back.get("layer.w") - ps.get("layer.w")).cwiseAbs().maxCoeff() < 1e-6);

    // Saving the loaded store reproduces identical parameter bytes.
    auto dir2 = (fs::temp_directory_path() / "semcom_ckpt_test2").string();
    fs::remove_all(dir2);
    nn::save_checkpoint(dir2, back, meta);
    CHECK(read_file(dir + "/layer.w.bin") == read_file(dir2 + "/layer.w.bin"));

    CHECK_THROWS_AS(nn::load_checkpoint("/nonexistent/ckpt", back), std::runtime_error);

    // Truncated parameter file is rejected.
    write_file(dir + "/layer.w.bin", "abc");
    nn::ParamStore bad;
    CHECK_THROWS_WITH_AS(nn::load_checkpoint(dir, bad), doctest::Contains("truncated"), std::runtime_error);
}
