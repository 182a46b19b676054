#include "semcom/autodiff.hpp"

#include <cmath>

#include "doctest.h"
#include "fd_check.hpp"

using namespace semcom;
using ad::Mat;
using ad::Tape;
using ad::Var;
using test::check_gradients;
using test::random_mat;

namespace {
constexpr double kTol = 1e-4;
}

TEST_CASE("elementwise and linear ops match finite differences") {
    auto r = check_gradients(
        {random_mat(3, 4, 1), random_mat(4, 5, 2), random_mat(3, 5, 3), random_mat(1, 5, 4)},
        [](Tape& t, const std::vector<Var>& v) {
            Var y = t.matmul(v[0], v[1]);          // 3x5
            y = t.add_rowvec(y, v[3]);
            y = t.sub(y, v[2]);
            y = t.hadamard(y, v[2]);
            y = t.scale(y, 0.7);
            y = t.add_scalar(y, 0.3);
            return t.mean_all(y);
        });
    CHECK_MESSAGE(r.max_rel_err < kTol, r.where);
}

TEST_CASE("relu and sigmoid match finite differences") {
    Mat x = random_mat(4, 6, 5);
    // Keep entries away from the relu kink where FD is ill-defined.
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (std::abs(x.data()[i]) < 0.05) x.data()[i] = 0.1;
    auto r = check_gradients({x}, [](Tape& t, const std::vector<Var>& v) {
        return t.sum_all(t.sigmoid(t.relu(v[0])));
    });
    CHECK_MESSAGE(r.max_rel_err < kTol, r.where);
}

TEST_CASE("layer_norm matches finite differences") {
    auto r = check_gradients(
        {random_mat(5, 8, 6), random_mat(1, 8, 7, 0.5), random_mat(1, 8, 8, 0.5)},
        [](Tape& t, const std::vector<Var>& v) {
            return t.mean_all(t.layer_norm(v[0], v[1], v[2]));
        });
    CHECK_MESSAGE(r.max_rel_err < kTol, r.where);
}

TEST_CASE("layer_norm output is standardized before gain and bias") {
    Tape t(false);
    Mat x = random_mat(3, 16, 9, 2.0);
    Var gain = t.leaf(Mat::Ones(1, 16), nullptr);
    Var bias = t.leaf(Mat::Zero(1, 16), nullptr);
    const Mat& y = t.val(t.layer_norm(t.leaf(x, nullptr), gain, bias));
    for (int i = 0; i < 3; ++i) {
        CHECK(y.row(i).mean() == doctest::Approx(0.0).epsilon(1e-9));
        double var = (y.row(i).array() - y.row(i).mean()).square().mean();
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));  // eps in the denominator shifts it slightly
    }
}

TEST_CASE("embedding gathers rows and scatters gradients with repeats") {
    auto r = check_gradients({random_mat(6, 4, 10)}, [](Tape& t, const std::vector<Var>& v) {
        return t.sum_all(t.embedding(v[0], {0, 3, 3, 5}));
    });
    CHECK_MESSAGE(r.max_rel_err < kTol, r.where);

    Tape t(true);
    Mat table = random_mat(6, 4, 11);
    Mat grad = Mat::Zero(6, 4);
    Var e = t.embedding(t.leaf(table, &grad), {2, 2, 2});
    t.backward(t.sum_all(e));
    CHECK(grad.row(2).isApprox(Mat::Ones(1, 4) * 3.0));
    CHECK(grad.row(0).isZero());

    Tape t2(false);
    CHECK_THROWS_AS((void)t2.embedding(t2.leaf(table, nullptr), {6}), std::out_of_range);
}

TEST_CASE("row reshaping ops match finite differences") {
    auto r = check_gradients({random_mat(4, 3, 12), random_mat(2, 3, 13)},
                             [](Tape& t, const std::vector<Var>& v) {
                                 Var cat = t.concat_rows(v[0], v[1]);       // 6x3
                                 Var mid = t.slice_rows(cat, 1, 4);         // 4x3
                                 Var mean = t.mean_rows(mid, {0.25, 0.25, 0.25, 0.25});
                                 Var ss = t.rows_sumsq(cat);                // 6x1
                                 return t.add(t.sum_all(mean), t.mean_all(ss));
                             });
    CHECK_MESSAGE(r.max_rel_err < kTol, r.where);
}

TEST_CASE("reusing a node accumulates gradient") {
    Tape t(true);
    Mat x = random_mat(2, 2, 14);
    Mat g = Mat::Zero(2, 2);
    Var v = t.leaf(x, &g);
    t.backward(t.sum_all(t.add(v, v)));
    CHECK(g.isApprox(Mat::Ones(2, 2) * 2.0));
}

TEST_CASE("frozen leaves receive no gradient and stop propagation") {
    Tape t(true);
    Mat x = random_mat(2, 3, 15);
    Var frozen = t.leaf(x, nullptr);
    Var root = t.sum_all(t.hadamard(frozen, frozen));
    t.backward(root);  // nothing to flush, must not throw
    CHECK(t.val(root)(0, 0) == doctest::Approx(x.squaredNorm()));
}

TEST_CASE("self and cross attention match finite differences") {
    int batch = 2, q_len = 3, kv_len = 4, d = 8, heads = 2;
    auto r = check_gradients(
        {random_mat(batch * q_len, d, 16), random_mat(batch * kv_len, d, 17), random_mat(batch * kv_len, d, 18)},
        [=](Tape& t, const std::vector<Var>& v) {
            return t.mean_all(t.multihead_attention(v[0], v[1], v[2], batch, q_len, kv_len, heads, nullptr, false));
        });
    CHECK_MESSAGE(r.max_rel_err < kTol, r.where);
}

TEST_CASE("masked attention ignores masked keys and matches finite differences") {
    int batch = 2, len = 3, d = 4, heads = 1;
    Mat mask(batch, len);
    mask << 1, 1, 0,
            1, 1, 1;
    auto r = check_gradients(
        {random_mat(batch * len, d, 19), random_mat(batch * len, d, 20), random_mat(batch * len, d, 21)},
        [=, &mask](Tape& t, const std::vector<Var>& v) {
            return t.mean_all(t.multihead_attention(v[0], v[1], v[2], batch, len, len, heads, &mask, false));
        });
    CHECK_MESSAGE(r.max_rel_err < kTol, r.where);

    // A masked key must not influence the output at all.
    Tape t(false);
    Mat q = random_mat(len, d, 22), k = random_mat(len, d, 23), v0 = random_mat(len, d, 24);
    Mat m1 = Mat::Ones(1, len);
    m1(0, 2) = 0;
    Var out1 = t.multihead_attention(t.leaf(q, nullptr), t.leaf(k, nullptr), t.leaf(v0, nullptr), 1, len, len, heads, &m1, false);
    Mat k2 = k, v2 = v0;
    k2.row(2).setConstant(99.0);
    v2.row(2).setConstant(-99.0);
    Var out2 = t.multihead_attention(t.leaf(q, nullptr), t.leaf(k2, nullptr), t.leaf(v2, nullptr), 1, len, len, heads, &m1, false);
    CHECK((t.val(out1) - t.val(out2)).cwiseAbs().maxCoeff() < 1e-12);

    Mat all_masked = Mat::Zero(1, len);
    CHECK_THROWS(t.multihead_attention(t.leaf(q, nullptr), t.leaf(k, nullptr), t.leaf(v0, nullptr), 1, len, len, heads, &all_masked, false));
}

TEST_CASE("causal attention never looks ahead") {
    int len = 4, d = 4;
    Tape t(false);
    Mat q = random_mat(len, d, 25), k = random_mat(len, d, 26), v = random_mat(len, d, 27);
    Var out1 = t.multihead_attention(t.leaf(q, nullptr), t.leaf(k, nullptr), t.leaf(v, nullptr), 1, len, len, 2, nullptr, true);
    // Wrecking the future rows of k/v must not change row 0 or 1.
    Mat k2 = k, v2 = v;
    k2.bottomRows(2).setConstant(50.0);
    v2.bottomRows(2).setConstant(-50.0);
    Var out2 = t.multihead_attention(t.leaf(q, nullptr), t.leaf(k2, nullptr), t.leaf(v2, nullptr), 1, len, len, 2, nullptr, true);
    CHECK((t.val(out1).topRows(2) - t.val(out2).topRows(2)).cwiseAbs().maxCoeff() < 1e-12);

    auto r = check_gradients(
        {random_mat(len, d, 28), random_mat(len, d, 29), random_mat(len, d, 30)},
        [=](Tape& t2, const std::vector<Var>& vv) {
            return t2.mean_all(t2.multihead_attention(vv[0], vv[1], vv[2], 1, len, len, 2, nullptr, true));
        });
    CHECK_MESSAGE(r.max_rel_err < kTol, r.where);
}

TEST_CASE("unit_power_blocks normalizes per block and matches finite differences") {
    Tape t(false);
    Mat x = random_mat(6, 8, 31, 3.0);
    const Mat& y = t.val(t.unit_power_blocks(t.leaf(x, nullptr), 3));
    double p0 = y.topRows(3).squaredNorm() / (3.0 * 4.0);
    double p1 = y.bottomRows(3).squaredNorm() / (3.0 * 4.0);
    CHECK(p0 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p1 == doctest::Approx(1.0).epsilon(1e-12));

    auto r = check_gradients({x}, [](Tape& t2, const std::vector<Var>& v) {
        Var y2 = t2.unit_power_blocks(v[0], 3);
        return t2.mean_all(t2.hadamard(y2, y2));
    });
    CHECK_MESSAGE(r.max_rel_err < kTol, r.where);
}

TEST_CASE("cross_entropy matches hand value, shift invariance, finite differences") {
    // Uniform logits: loss is sum over scored rows of ln(V).
    Tape t(false);
    int V = 11;
    Mat logits = Mat::Zero(4, V);
    Var ce = t.cross_entropy(t.leaf(logits, nullptr), {1, 2, 3, 4}, {1, 1, 1, 0});
    CHECK(t.val(ce)(0, 0) == doctest::Approx(3.0 * std::log(V)).epsilon(1e-12));

    Mat shifted = random_mat(4, V, 32);
    Mat shifted2 = shifted;
    shifted2.row(1).array() += 17.0;
    Var a = t.cross_entropy(t.leaf(shifted, nullptr), {0, 1, 2, 3}, {1, 1, 1, 1});
    Var b = t.cross_entropy(t.leaf(shifted2, nullptr), {0, 1, 2, 3}, {1, 1, 1, 1});
    CHECK(t.val(a)(0, 0) == doctest::Approx(t.val(b)(0, 0)).epsilon(1e-9));

    auto r = check_gradients({random_mat(5, 7, 33)}, [](Tape& t2, const std::vector<Var>& v) {
        return t2.cross_entropy(v[0], {0, 6, 3, 2, 1}, {1.0, 0.5, 1.0, 0.0, 2.0});
    });
    CHECK_MESSAGE(r.max_rel_err < kTol, r.where);

    CHECK_THROWS_AS((void)t.cross_entropy(t.leaf(Mat::Zero(2, 3), nullptr), {0, 3}, {1, 1}), std::out_of_range);
}

TEST_CASE("weighted_bce reproduces the pinned value and matches finite differences") {
    Tape t(false);
    Mat probs(1, 2);
    probs << 0.9, 0.1;
    Var l = t.weighted_bce(t.leaf(probs, nullptr), {1.0, 0.0}, 0.02);
    CHECK(t.val(l)(0, 0) == doctest::Approx(0.10536).epsilon(1e-4));
    // Closed form: (0.98 + 0.02) * -ln(0.9).
    CHECK(t.val(l)(0, 0) == doctest::Approx(-std::log(0.9)).epsilon(1e-12));

    Mat p2(2, 3);
    p2 << 0.2, 0.5, 0.8,
          0.35, 0.6, 0.45;
    auto r = check_gradients({p2}, [](Tape& t2, const std::vector<Var>& v) {
        return t2.weighted_bce(v[0], {1, 0, 1, 0, 0, 1}, 0.02);
    });
    CHECK_MESSAGE(r.max_rel_err < kTol, r.where);

    CHECK_THROWS_AS((void)t.weighted_bce(t.leaf(probs, nullptr), {1.0, 0.0}, 1.5), std::invalid_argument);

    // Clamp keeps extreme probabilities finite.
    Mat p3(1, 2);
    p3 << 0.0, 1.0;
    Var l3 = t.weighted_bce(t.leaf(p3, nullptr), {1.0, 0.0}, 0.02);
    CHECK(std::isfinite(t.val(l3)(0, 0)));
}

TEST_CASE("infonce is ln(K+1) in the symmetric case and matches finite differences") {
    Tape t(false);
    int K = 63, d = 8;
    Mat vh = random_mat(1, d, 34);
    Mat vpos = vh;
    Mat vnegs(K, d);
    for (int k = 0; k < K; ++k) vnegs.row(k) = vh;
    Var l = t.infonce(t.leaf(vh, nullptr), t.leaf(vpos, nullptr), t.leaf(vnegs, nullptr), 0.2);
    CHECK(t.val(l)(0, 0) == doctest::Approx(std::log(64.0)).epsilon(1e-9));

    auto r = check_gradients({random_mat(1, 5, 35), random_mat(1, 5, 36), random_mat(7, 5, 37)},
                             [](Tape& t2, const std::vector<Var>& v) {
                                 return t2.infonce(v[0], v[1], v[2], 0.2);
                             });
    CHECK_MESSAGE(r.max_rel_err < kTol, r.where);

    CHECK_THROWS_AS((void)t.infonce(t.leaf(vh, nullptr), t.leaf(vpos, nullptr), t.leaf(vnegs, nullptr), 0.0),
                    std::invalid_argument);
}

TEST_CASE("dropout masks, rescales, and routes gradient through kept units") {
    Tape t(true);
    Mat x = Mat::Ones(8, 8);
    Mat g = Mat::Zero(8, 8);
    std::mt19937_64 rng(99);
    Var v = t.leaf(x, &g);
    Var d = t.dropout(v, 0.5, rng);
    const Mat& y = t.val(d);
    int kept = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        bool is_zero = y.data()[i] == 0.0;
        bool is_scaled = y.data()[i] == doctest::Approx(2.0);
        CHECK((is_zero || is_scaled));
        kept += is_scaled ? 1 : 0;
    }
    CHECK(kept > 10);
    CHECK(kept < 54);
    t.backward(t.sum_all(d));
    CHECK(g.sum() == doctest::Approx(2.0 * kept));

    std::mt19937_64 rng2(99);
    Tape t2(false);
    Var same = t2.dropout(t2.leaf(x, nullptr), 0.0, rng2);
    CHECK((t2.val(same) - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("shape errors are loud") {
    Tape t(false);
    Var a = t.leaf(Mat::Zero(2, 3), nullptr);
    Var b = t.leaf(Mat::Zero(3, 3), nullptr);
    CHECK_THROWS_AS((void)t.add(a, b), std::invalid_argument);
    CHECK_THROWS_AS((void)t.matmul(a, a), std::invalid_argument);
    CHECK_THROWS_AS((void)t.slice_rows(a, 1, 4), std::invalid_argument);
    CHECK_THROWS_AS((void)t.mean_rows(a, {1.0}), std::invalid_argument);
    CHECK_THROWS_AS(t.backward(a), std::logic_error);  // non-recording tape
}

TEST_CASE("backward on a recording tape requires a scalar root") {
    Tape t(true);
    Var a = t.leaf(Mat::Zero(2, 2), nullptr);
    CHECK_THROWS_AS(t.backward(a), std::invalid_argument);
}
