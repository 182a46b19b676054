#include "semcom/channel.hpp"

#include <cmath>
#include <stdexcept>

namespace semcom {

ChannelKind channel_kind_from_string(const std::string& s) {
    if (s == "awgn") return ChannelKind::awgn;
    if (s == "rayleigh") return ChannelKind::rayleigh;
    throw std::invalid_argument("unknown channel kind: " + s);
}

std::string to_string(ChannelKind k) {
    return k == ChannelKind::awgn ? "awgn" : "rayleigh";
}

double mean_symbol_power(const SymbolBlock& x) {
    if (x.size() == 0) throw std::invalid_argument("empty symbol block");
    return x.cwiseAbs2().sum() / static_cast<double>(x.size());
}

SymbolBlock power_normalize(const SymbolBlock& x) {
    double p = mean_symbol_power(x);
    if (p <= 0.0) throw std::invalid_argument("cannot power-normalize an all-zero symbol block");
    return x / std::sqrt(p);
}

namespace {

std::complex<double> draw_unit_coeff(ChannelKind kind, std::mt19937_64& rng) {
    if (kind == ChannelKind::awgn) return {1.0, 0.0};
    std::normal_distribution<double> gauss(0.0, 1.0);
    // E|H|^2 = 1
    double re = gauss(rng) / std::sqrt(2.0);
    double im = gauss(rng) / std::sqrt(2.0);
    return {re, im};
}

SymbolBlock draw_noise(Eigen::Index rows, Eigen::Index cols, double sigma2, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    double comp_std = std::sqrt(sigma2 / 2.0);
    SymbolBlock n(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) {
            double re = gauss(rng) * comp_std;
            double im = gauss(rng) * comp_std;
            n(i, j) = {re, im};
        }
    }
    return n;
}

}  // namespace

TransmitResult transmit(const SymbolBlock& x, const ChannelConfig& cfg, std::mt19937_64& rng) {
    if (!std::isfinite(cfg.snr_db)) throw std::invalid_argument("snr_db must be finite");
    double p = mean_symbol_power(x);
    if (std::abs(p - 1.0) > 1e-3)
        throw std::invalid_argument("transmit requires a power-normalized block (mean power " + std::to_string(p) + ")");

    std::complex<double> coeff = draw_unit_coeff(cfg.kind, rng);
    double sigma2 = std::pow(10.0, -cfg.snr_db / 10.0);
    SymbolBlock noise = draw_noise(x.rows(), x.cols(), sigma2, rng);
    TransmitResult res;
    res.coeff = coeff;
    res.received = coeff * x + noise;
    return res;
}

SymbolBlock equalize(const SymbolBlock& y, std::complex<double> coeff) {
    if (std::abs(coeff) == 0.0) throw std::invalid_argument("cannot equalize with H == 0");
    return y / coeff;
}

Eigen::MatrixXd to_real_pairs(const SymbolBlock& x) {
    Eigen::MatrixXd m(x.rows(), 2 * x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            m(i, 2 * j) = x(i, j).real();
            m(i, 2 * j + 1) = x(i, j).imag();
        }
    }
    return m;
}

SymbolBlock from_real_pairs(const Eigen::MatrixXd& m) {
    if (m.cols() % 2 != 0) throw std::invalid_argument("real-pair matrix needs an even column count");
    SymbolBlock x(m.rows(), m.cols() / 2);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            x(i, j) = {m(i, 2 * j), m(i, 2 * j + 1)};
        }
    }
    return x;
}

Eigen::MatrixXd equalized_noise_pairs(int rows, int symbols_per_row, const ChannelConfig& cfg, std::mt19937_64& rng) {
    // Same draw order as transmit(), so the bridged training channel and the
    // simulator realize identical (H, n) for identical rng state.
    std::complex<double> coeff = draw_unit_coeff(cfg.kind, rng);
    double sigma2 = std::pow(10.0, -cfg.snr_db / 10.0);
    SymbolBlock noise = draw_noise(rows, symbols_per_row, sigma2, rng);
    if (std::abs(coeff) == 0.0) throw std::runtime_error("degenerate zero channel coefficient");
    return to_real_pairs(noise / coeff);
}

}  // namespace semcom
