#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "semcom/autodiff.hpp"

namespace semcom::test {

using ad::Mat;
using ad::Tape;
using ad::Var;

// Builds a scalar loss from leaves created over `inputs` (in order).
using LossBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string where;
};

// Central-difference gradient check across every element of every input.
// Error metric: |analytic - numeric| / max(1, |analytic|, |numeric|).
inline GradCheckResult check_gradients(std::vector<Mat> inputs, const LossBuilder& build,
                                       double h = 1e-5) {
    auto eval = [&](const std::vector<Mat>& xs) {
        Tape tape(false);
        std::vector<Var> vars;
        vars.reserve(xs.size());
        for (const auto& x : xs) vars.push_back(tape.leaf(x, nullptr));
        return tape.val(build(tape, vars))(0, 0);
    };

    std::vector<Mat> grads;
    grads.reserve(inputs.size());
    for (const auto& x : inputs) grads.push_back(Mat::Zero(x.rows(), x.cols()));
    {
        Tape tape(true);
        std::vector<Var> vars;
        for (size_t i = 0; i < inputs.size(); ++i) vars.push_back(tape.leaf(inputs[i], &grads[i]));
        tape.backward(build(tape, vars));
    }

    GradCheckResult res;
    for (size_t m = 0; m < inputs.size(); ++m) {
        for (Eigen::Index r = 0; r < inputs[m].rows(); ++r) {
            for (Eigen::Index c = 0; c < inputs[m].cols(); ++c) {
                double saved = inputs[m](r, c);
                inputs[m](r, c) = saved + h;
                double fp = eval(inputs);
                inputs[m](r, c) = saved - h;
                double fm = eval(inputs);
                inputs[m](r, c) = saved;
                double numeric = (fp - fm) / (2.0 * h);
                double analytic = grads[m](r, c);
                double err = std::abs(analytic - numeric) /
                             std::max({1.0, std::abs(analytic), std::abs(numeric)});
                if (err > res.max_rel_err) {
                    res.max_rel_err = err;
                    res.where = "input " + std::to_string(m) + " (" + std::to_string(r) + "," +
                                std::to_string(c) + "): analytic " + std::to_string(analytic) +
                                " numeric " + std::to_string(numeric);
                }
            }
        }
    }
    return res;
}

inline Mat random_mat(Eigen::Index rows, Eigen::Index cols, uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, scale);
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = g(rng);
    return m;
}

}  // namespace semcom::test
