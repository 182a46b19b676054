#include "semcom/channel.hpp"

#include <cmath>

#include "doctest.h"

#include "semcom/util.hpp"

using namespace semcom;

namespace {

SymbolBlock random_block(int rows, int cols, uint64_t seed) {
    auto rng = make_rng(seed, {label("test-block")});
    std::normal_distribution<double> g(0.0, 1.0);
    SymbolBlock x(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) x(i, j) = {g(rng), g(rng)};
    return x;
}

}  // namespace

TEST_CASE("power_normalize yields unit mean power and is idempotent") {
    auto x = random_block(8, 16, 7);
    auto y = power_normalize(x);
    CHECK(mean_symbol_power(y) == doctest::Approx(1.0).epsilon(1e-6));
    auto z = power_normalize(y);
    CHECK((z - y).cwiseAbs().maxCoeff() < 1e-6);
    // Scalar multiple of the input.
    std::complex<double> ratio = y(0, 0) / x(0, 0);
    CHECK((y - ratio.real() * x).cwiseAbs().maxCoeff() < 1e-9);
    CHECK_THROWS(power_normalize(SymbolBlock::Zero(4, 4)));
}

TEST_CASE("transmit is noiseless in the high-snr limit") {
    auto x = power_normalize(random_block(8, 16, 11));
    auto rng = make_rng(3, {label("chan")});
    auto res = transmit(x, {ChannelKind::awgn, 300.0, 0}, rng);
    CHECK(res.coeff == std::complex<double>(1.0, 0.0));
    CHECK((res.received - x).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("transmit rejects non-normalized input") {
    auto x = 3.0 * power_normalize(random_block(4, 8, 13));
    auto rng = make_rng(3, {label("chan")});
    CHECK_THROWS(transmit(x, {ChannelKind::awgn, 10.0, 0}, rng));
}

TEST_CASE("awgn noise power matches the configured snr") {
    // 10^5+ symbols at 0 dB: empirical noise power within 2% of 1.0.
    auto x = power_normalize(random_block(500, 100, 17));
    auto rng = make_rng(5, {label("chan")});
    auto res = transmit(x, {ChannelKind::awgn, 0.0, 0}, rng);
    double noise_power = (res.received - x).squaredNorm() / static_cast<double>(x.size());
    CHECK(noise_power == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("awgn empirical snr lands within 0.2 dB at 10 dB") {
    auto x = power_normalize(random_block(500, 100, 19));
    auto rng = make_rng(7, {label("chan")});
    auto res = transmit(x, {ChannelKind::awgn, 10.0, 0}, rng);
    double sig = x.squaredNorm() / static_cast<double>(x.size());
    double noise = (res.received - x).squaredNorm() / static_cast<double>(x.size());
    double snr_db = 10.0 * std::log10(sig / noise);
    CHECK(snr_db == doctest::Approx(10.0).epsilon(0.02));
}

TEST_CASE("same seed reproduces the channel exactly") {
    auto x = power_normalize(random_block(8, 16, 23));
    ChannelConfig cfg{ChannelKind::rayleigh, 4.0, 0};
    auto r1 = make_rng(9, {label("chan")});
    auto r2 = make_rng(9, {label("chan")});
    auto a = transmit(x, cfg, r1);
    auto b = transmit(x, cfg, r2);
    CHECK(a.coeff == b.coeff);
    CHECK((a.received - b.received).cwiseAbs().maxCoeff() == 0.0);

    auto r3 = make_rng(10, {label("chan")});
    auto c = transmit(x, cfg, r3);
    CHECK((a.received - c.received).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("rayleigh coefficient has unit mean power and equalize inverts it") {
    ChannelConfig cfg{ChannelKind::rayleigh, 300.0, 0};
    auto rng = make_rng(21, {label("chan")});
    auto x = power_normalize(random_block(4, 8, 29));
    double acc = 0.0;
    int n = 4000;
    for (int i = 0; i < n; ++i) {
        auto res = transmit(x, cfg, rng);
        acc += std::norm(res.coeff);
        if (i == 0) {
            auto back = equalize(res.received, res.coeff);
            CHECK((back - x).cwiseAbs().maxCoeff() < 1e-6);
        }
    }
    CHECK(acc / n == doctest::Approx(1.0).epsilon(0.05));
    CHECK_THROWS(equalize(x, {0.0, 0.0}));
}

TEST_CASE("equalize alone inverts a noise-free fading block within 1e-9") {
    auto x = power_normalize(random_block(4, 8, 31));
    std::complex<double> h{0.6, -0.8};
    SymbolBlock y = h * x;
    CHECK((equalize(y, h) - x).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("real-pair view round trips") {
    auto x = random_block(3, 5, 37);
    auto m = to_real_pairs(x);
    CHECK(m.rows() == 3);
    CHECK(m.cols() == 10);
    CHECK(m(1, 4) == x(1, 2).real());
    CHECK(m(1, 5) == x(1, 2).imag());
    auto back = from_real_pairs(m);
    CHECK((back - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("equalized noise pairs mirror the simulated channel") {
    auto x = power_normalize(random_block(6, 16, 41));
    ChannelConfig cfg{ChannelKind::rayleigh, 2.0, 0};

    auto r1 = make_rng(13, {label("chan")});
    auto res = transmit(x, cfg, r1);
    Eigen::MatrixXd via_sim = to_real_pairs(equalize(res.received, res.coeff) - x);

    auto r2 = make_rng(13, {label("chan")});
    Eigen::MatrixXd direct = equalized_noise_pairs(6, 16, cfg, r2);

    CHECK((via_sim - direct).cwiseAbs().maxCoeff() < 1e-12);
}
