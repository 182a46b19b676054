#pragma once

#include <complex>
#include <random>
#include <string>

#include <Eigen/Dense>

namespace semcom {

enum class ChannelKind { awgn, rayleigh };

ChannelKind channel_kind_from_string(const std::string& s);
std::string to_string(ChannelKind k);

struct ChannelConfig {
    ChannelKind kind = ChannelKind::awgn;
    double snr_db = 0.0;
    uint64_t seed = 1;
};

// N x c complex symbols for one sentence.
using SymbolBlock = Eigen::MatrixXcd;

struct TransmitResult {
    SymbolBlock received;        // y = Hx + n
    std::complex<double> coeff;  // H (1 for AWGN)
};

double mean_symbol_power(const SymbolBlock& x);

// Scales the block so its average per-symbol power is 1.
SymbolBlock power_normalize(const SymbolBlock& x);

// y = Hx + n with per-symbol noise power 10^(-snr_db/10). Rayleigh draws one
// unit-mean-power H per block. Requires x already power-normalized.
TransmitResult transmit(const SymbolBlock& x, const ChannelConfig& cfg, std::mt19937_64& rng);

// Perfect-CSI compensation: y / H.
SymbolBlock equalize(const SymbolBlock& y, std::complex<double> coeff);

// Real-pair view used on the differentiable path: column 2j is Re, 2j+1 is Im.
Eigen::MatrixXd to_real_pairs(const SymbolBlock& x);
SymbolBlock from_real_pairs(const Eigen::MatrixXd& m);

// Equalized channel perturbation n/H as real pairs, for dropping the channel
// into a training graph as an additive constant.
Eigen::MatrixXd equalized_noise_pairs(int rows, int symbols_per_row, const ChannelConfig& cfg, std::mt19937_64& rng);

}  // namespace semcom
