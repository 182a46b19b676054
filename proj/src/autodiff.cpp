#include "semcom/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace semcom::ad {

namespace {
constexpr double kMaskFill = -1e30;
}

double logsumexp_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
    double m = row.maxCoeff();
    return m + std::log((row.array() - m).exp().sum());
}

void masked_softmax_row_inplace(RowRef row, const std::vector<char>& valid) {
    double m = kMaskFill;
    for (Eigen::Index j = 0; j < row.size(); ++j)
        if (valid[j] && row(j) > m) m = row(j);
    if (m == kMaskFill) throw std::runtime_error("attention row with every key masked");
    double denom = 0.0;
    for (Eigen::Index j = 0; j < row.size(); ++j) {
        if (valid[j]) {
            row(j) = std::exp(row(j) - m);
            denom += row(j);
        } else {
            row(j) = 0.0;
        }
    }
    row /= denom;
}

int Tape::push(Mat value, bool requires_grad, std::function<void(Tape&)> back) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = record_ && requires_grad;
    if (n.requires_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

Mat& Tape::grad_of(int idx) {
    Node& n = nodes_[idx];
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
}

void Tape::check_same_shape(Var a, Var b, const char* op) const {
    if (rows(a) != rows(b) || cols(a) != cols(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + std::to_string(rows(a)) + "x" + std::to_string(cols(a)) + " vs " + std::to_string(rows(b)) + "x" + std::to_string(cols(b)));
}

Var Tape::constant(Mat v) { return {push(std::move(v), false, {})}; }

Var Tape::leaf(const Mat& value, Mat* grad_sink) {
    int idx = push(value, grad_sink != nullptr, {});
    nodes_[idx].grad_sink = grad_sink;
    return {idx};
}

Var Tape::matmul(Var a, Var b) {
    if (cols(a) != rows(b))
        throw std::invalid_argument("matmul: inner dimensions " + std::to_string(cols(a)) + " vs " + std::to_string(rows(b)));
    Mat out = val(a) * val(b);
    int ia = a.idx, ib = b.idx;
    int idx = push(std::move(out), needs(a) || needs(b), {});
    if (nodes_[idx].requires_grad) {
        bool na = needs(a), nb = needs(b);
        nodes_[idx].back = [ia, ib, idx, na, nb](Tape& t) {
            const Mat& g = t.nodes_[idx].grad;
            if (na) t.grad_of(ia).noalias() += g * t.nodes_[ib].value.transpose();
            if (nb) t.grad_of(ib).noalias() += t.nodes_[ia].value.transpose() * g;
        };
    }
    return {idx};
}

Var Tape::add(Var a, Var b) {
    check_same_shape(a, b, "add");
    Mat out = val(a) + val(b);
    int ia = a.idx, ib = b.idx;
    int idx = push(std::move(out), needs(a) || needs(b), {});
    if (nodes_[idx].requires_grad) {
        bool na = needs(a), nb = needs(b);
        nodes_[idx].back = [ia, ib, idx, na, nb](Tape& t) {
            const Mat& g = t.nodes_[idx].grad;
            if (na) t.grad_of(ia) += g;
            if (nb) t.grad_of(ib) += g;
        };
    }
    return {idx};
}

Var Tape::sub(Var a, Var b) {
    check_same_shape(a, b, "sub");
    Mat out = val(a) - val(b);
    int ia = a.idx, ib = b.idx;
    int idx = push(std::move(out), needs(a) || needs(b), {});
    if (nodes_[idx].requires_grad) {
        bool na = needs(a), nb = needs(b);
        nodes_[idx].back = [ia, ib, idx, na, nb](Tape& t) {
            const Mat& g = t.nodes_[idx].grad;
            if (na) t.grad_of(ia) += g;
            if (nb) t.grad_of(ib) -= g;
        };
    }
    return {idx};
}

Var Tape::hadamard(Var a, Var b) {
    check_same_shape(a, b, "hadamard");
    Mat out = val(a).cwiseProduct(val(b));
    int ia = a.idx, ib = b.idx;
    int idx = push(std::move(out), needs(a) || needs(b), {});
    if (nodes_[idx].requires_grad) {
        bool na = needs(a), nb = needs(b);
        nodes_[idx].back = [ia, ib, idx, na, nb](Tape& t) {
            const Mat& g = t.nodes_[idx].grad;
            if (na) t.grad_of(ia) += g.cwiseProduct(t.nodes_[ib].value);
            if (nb) t.grad_of(ib) += g.cwiseProduct(t.nodes_[ia].value);
        };
    }
    return {idx};
}

Var Tape::add_rowvec(Var a, Var bias) {
    if (rows(bias) != 1 || cols(bias) != cols(a))
        throw std::invalid_argument("add_rowvec: bias must be 1x" + std::to_string(cols(a)));
    Mat out = val(a).rowwise() + val(bias).row(0);
    int ia = a.idx, ib = bias.idx;
    int idx = push(std::move(out), needs(a) || needs(bias), {});
    if (nodes_[idx].requires_grad) {
        bool na = needs(a), nb = needs(bias);
        nodes_[idx].back = [ia, ib, idx, na, nb](Tape& t) {
            const Mat& g = t.nodes_[idx].grad;
            if (na) t.grad_of(ia) += g;
            if (nb) t.grad_of(ib) += g.colwise().sum();
        };
    }
    return {idx};
}

Var Tape::add_const(Var a, const Mat& c) {
    if (rows(a) != c.rows() || cols(a) != c.cols()) throw std::invalid_argument("add_const: shape mismatch");
    Mat out = val(a) + c;
    int ia = a.idx;
    int idx = push(std::move(out), needs(a), {});
    if (nodes_[idx].requires_grad) {
        nodes_[idx].back = [ia, idx](Tape& t) { t.grad_of(ia) += t.nodes_[idx].grad; };
    }
    return {idx};
}

Var Tape::scale(Var a, double s) {
    Mat out = val(a) * s;
    int ia = a.idx;
    int idx = push(std::move(out), needs(a), {});
    if (nodes_[idx].requires_grad) {
        nodes_[idx].back = [ia, idx, s](Tape& t) { t.grad_of(ia) += s * t.nodes_[idx].grad; };
    }
    return {idx};
}

Var Tape::add_scalar(Var a, double s) {
    Mat out = val(a).array() + s;
    int ia = a.idx;
    int idx = push(std::move(out), needs(a), {});
    if (nodes_[idx].requires_grad) {
        nodes_[idx].back = [ia, idx](Tape& t) { t.grad_of(ia) += t.nodes_[idx].grad; };
    }
    return {idx};
}

Var Tape::relu(Var a) {
    Mat out = val(a).cwiseMax(0.0);
    int ia = a.idx;
    int idx = push(std::move(out), needs(a), {});
    if (nodes_[idx].requires_grad) {
        nodes_[idx].back = [ia, idx](Tape& t) {
            const Mat& g = t.nodes_[idx].grad;
            const Mat& x = t.nodes_[ia].value;
            t.grad_of(ia) += g.cwiseProduct((x.array() > 0.0).cast<double>().matrix());
        };
    }
    return {idx};
}

Var Tape::sigmoid(Var a) {
    Mat out = (1.0 / (1.0 + (-val(a).array()).exp())).matrix();
    int ia = a.idx;
    int idx = push(std::move(out), needs(a), {});
    if (nodes_[idx].requires_grad) {
        nodes_[idx].back = [ia, idx](Tape& t) {
            const Mat& g = t.nodes_[idx].grad;
            const Mat& s = t.nodes_[idx].value;
            t.grad_of(ia) += g.cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix()));
        };
    }
    return {idx};
}

Var Tape::dropout(Var a, double rate, std::mt19937_64& rng) {
    if (rate <= 0.0) return a;
    if (rate >= 1.0) throw std::invalid_argument("dropout rate must be < 1");
    std::bernoulli_distribution keep(1.0 - rate);
    Mat mask(rows(a), cols(a));
    double inv = 1.0 / (1.0 - rate);
    for (Eigen::Index i = 0; i < mask.rows(); ++i)
        for (Eigen::Index j = 0; j < mask.cols(); ++j) mask(i, j) = keep(rng) ? inv : 0.0;
    Mat out = val(a).cwiseProduct(mask);
    int ia = a.idx;
    int idx = push(std::move(out), needs(a), {});
    if (nodes_[idx].requires_grad) {
        nodes_[idx].back = [ia, idx, mask = std::move(mask)](Tape& t) {
            t.grad_of(ia) += t.nodes_[idx].grad.cwiseProduct(mask);
        };
    }
    return {idx};
}

Var Tape::layer_norm(Var a, Var gain, Var bias, double eps) {
    if (rows(gain) != 1 || cols(gain) != cols(a) || rows(bias) != 1 || cols(bias) != cols(a))
        throw std::invalid_argument("layer_norm: gain/bias must be 1x" + std::to_string(cols(a)));
    const Mat& x = val(a);
    Eigen::Index R = x.rows(), C = x.cols();
    Mat xhat(R, C);
    Eigen::VectorXd inv_std(R);
    for (Eigen::Index i = 0; i < R; ++i) {
        double mu = x.row(i).mean();
        double var = (x.row(i).array() - mu).square().sum() / static_cast<double>(C);
        double s = 1.0 / std::sqrt(var + eps);
        inv_std(i) = s;
        xhat.row(i) = (x.row(i).array() - mu) * s;
    }
    Mat out = (xhat.array().rowwise() * val(gain).row(0).array()).rowwise() + val(bias).row(0).array();
    int ia = a.idx, ig = gain.idx, ib = bias.idx;
    int idx = push(std::move(out), needs(a) || needs(gain) || needs(bias), {});
    if (nodes_[idx].requires_grad) {
        bool na = needs(a), ng = needs(gain), nb = needs(bias);
        nodes_[idx].back = [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t) {
            const Mat& g = t.nodes_[idx].grad;
            if (ng) t.grad_of(ig) += g.cwiseProduct(xhat).colwise().sum();
            if (nb) t.grad_of(ib) += g.colwise().sum();
            if (na) {
                const Mat& gamma = t.nodes_[ig].value;
                Mat dxhat = g.array().rowwise() * gamma.row(0).array();
                Mat& da = t.grad_of(ia);
                for (Eigen::Index i = 0; i < dxhat.rows(); ++i) {
                    double mean_d = dxhat.row(i).mean();
                    double mean_dx = dxhat.row(i).cwiseProduct(xhat.row(i)).mean();
                    da.row(i) += inv_std(i) * (dxhat.row(i).array() - mean_d - xhat.row(i).array() * mean_dx).matrix();
                }
            }
        };
    }
    return {idx};
}

Var Tape::embedding(Var table, const std::vector<int>& ids) {
    const Mat& tab = val(table);
    Mat out(static_cast<Eigen::Index>(ids.size()), tab.cols());
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= tab.rows())
            throw std::out_of_range("embedding: id " + std::to_string(ids[i]) + " outside table of " + std::to_string(tab.rows()) + " rows");
        out.row(static_cast<Eigen::Index>(i)) = tab.row(ids[i]);
    }
    int it = table.idx;
    int idx = push(std::move(out), needs(table), {});
    if (nodes_[idx].requires_grad) {
        nodes_[idx].back = [it, idx, ids](Tape& t) {
            const Mat& g = t.nodes_[idx].grad;
            Mat& gt = t.grad_of(it);
            for (size_t i = 0; i < ids.size(); ++i) gt.row(ids[i]) += g.row(static_cast<Eigen::Index>(i));
        };
    }
    return {idx};
}

Var Tape::concat_rows(Var a, Var b) {
    if (cols(a) != cols(b)) throw std::invalid_argument("concat_rows: column mismatch");
    Mat out(rows(a) + rows(b), cols(a));
    out.topRows(rows(a)) = val(a);
    out.bottomRows(rows(b)) = val(b);
    int ia = a.idx, ib = b.idx;
    Eigen::Index ra = rows(a), rb = rows(b);
    int idx = push(std::move(out), needs(a) || needs(b), {});
    if (nodes_[idx].requires_grad) {
        bool na = needs(a), nb = needs(b);
        nodes_[idx].back = [=](Tape& t) {
            const Mat& g = t.nodes_[idx].grad;
            if (na) t.grad_of(ia) += g.topRows(ra);
            if (nb) t.grad_of(ib) += g.bottomRows(rb);
        };
    }
    return {idx};
}

Var Tape::slice_rows(Var a, int start, int count) {
    if (start < 0 || count < 0 || start + count > rows(a)) throw std::invalid_argument("slice_rows: range out of bounds");
    Mat out = val(a).middleRows(start, count);
    int ia = a.idx;
    int idx = push(std::move(out), needs(a), {});
    if (nodes_[idx].requires_grad) {
        nodes_[idx].back = [ia, idx, start, count](Tape& t) {
            t.grad_of(ia).middleRows(start, count) += t.nodes_[idx].grad;
        };
    }
    return {idx};
}

Var Tape::mean_rows(Var a, const std::vector<double>& weights) {
    if (static_cast<Eigen::Index>(weights.size()) != rows(a))
        throw std::invalid_argument("mean_rows: weight count " + std::to_string(weights.size()) + " vs " + std::to_string(rows(a)) + " rows");
    Mat out = Mat::Zero(1, cols(a));
    for (Eigen::Index i = 0; i < rows(a); ++i) out.row(0) += weights[i] * val(a).row(i);
    int ia = a.idx;
    int idx = push(std::move(out), needs(a), {});
    if (nodes_[idx].requires_grad) {
        nodes_[idx].back = [ia, idx, weights](Tape& t) {
            const Mat& g = t.nodes_[idx].grad;
            Mat& da = t.grad_of(ia);
            for (Eigen::Index i = 0; i < da.rows(); ++i) da.row(i) += weights[i] * g.row(0);
        };
    }
    return {idx};
}

Var Tape::rows_sumsq(Var a) {
    Mat out = val(a).rowwise().squaredNorm();
    int ia = a.idx;
    int idx = push(std::move(out), needs(a), {});
    if (nodes_[idx].requires_grad) {
        nodes_[idx].back = [ia, idx](Tape& t) {
            const Mat& g = t.nodes_[idx].grad;  // rows x 1
            const Mat& x = t.nodes_[ia].value;
            t.grad_of(ia) += 2.0 * (x.array().colwise() * g.col(0).array()).matrix();
        };
    }
    return {idx};
}

Var Tape::sum_all(Var a) {
    Mat out(1, 1);
    out(0, 0) = val(a).sum();
    int ia = a.idx;
    int idx = push(std::move(out), needs(a), {});
    if (nodes_[idx].requires_grad) {
        nodes_[idx].back = [ia, idx](Tape& t) {
            t.grad_of(ia).array() += t.nodes_[idx].grad(0, 0);
        };
    }
    return {idx};
}

Var Tape::mean_all(Var a) {
    double n = static_cast<double>(rows(a) * cols(a));
    Mat out(1, 1);
    out(0, 0) = val(a).sum() / n;
    int ia = a.idx;
    int idx = push(std::move(out), needs(a), {});
    if (nodes_[idx].requires_grad) {
        nodes_[idx].back = [ia, idx, n](Tape& t) {
            t.grad_of(ia).array() += t.nodes_[idx].grad(0, 0) / n;
        };
    }
    return {idx};
}

Var Tape::multihead_attention(Var q, Var k, Var v, int batch, int q_len, int kv_len,
                              int heads, const Mat* key_mask, bool causal) {
    Eigen::Index d_model = cols(q);
    if (cols(k) != d_model || cols(v) != d_model) throw std::invalid_argument("attention: column mismatch across q/k/v");
    if (d_model % heads != 0) throw std::invalid_argument("attention: d_model not divisible by head count");
    if (rows(q) != static_cast<Eigen::Index>(batch) * q_len) throw std::invalid_argument("attention: q rows != batch*q_len");
    if (rows(k) != static_cast<Eigen::Index>(batch) * kv_len || rows(v) != rows(k))
        throw std::invalid_argument("attention: k/v rows != batch*kv_len");
    if (causal && q_len != kv_len) throw std::invalid_argument("attention: causal mask needs q_len == kv_len");
    if (key_mask && (key_mask->rows() != batch || key_mask->cols() != kv_len))
        throw std::invalid_argument("attention: key_mask must be batch x kv_len");

    Eigen::Index dh = d_model / heads;
    double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Mat out(rows(q), d_model);
    std::vector<Mat> weights;
    weights.reserve(static_cast<size_t>(batch) * heads);
    std::vector<char> valid(static_cast<size_t>(kv_len), 1);

    for (int b = 0; b < batch; ++b) {
        if (key_mask) {
            for (int j = 0; j < kv_len; ++j) valid[static_cast<size_t>(j)] = (*key_mask)(b, j) != 0.0 ? 1 : 0;
        }
        for (int h = 0; h < heads; ++h) {
            auto Qb = val(q).block(static_cast<Eigen::Index>(b) * q_len, h * dh, q_len, dh);
            auto Kb = val(k).block(static_cast<Eigen::Index>(b) * kv_len, h * dh, kv_len, dh);
            auto Vb = val(v).block(static_cast<Eigen::Index>(b) * kv_len, h * dh, kv_len, dh);
            Mat W = (Qb * Kb.transpose()) * scale;
            for (Eigen::Index i = 0; i < W.rows(); ++i) {
                if (causal) {
                    std::vector<char> row_valid = valid;
                    for (Eigen::Index j = i + 1; j < kv_len; ++j) row_valid[static_cast<size_t>(j)] = 0;
                    masked_softmax_row_inplace(W.row(i), row_valid);
                } else {
                    masked_softmax_row_inplace(W.row(i), valid);
                }
            }
            out.block(static_cast<Eigen::Index>(b) * q_len, h * dh, q_len, dh).noalias() = W * Vb;
            weights.push_back(std::move(W));
        }
    }

    int iq = q.idx, ik = k.idx, iv = v.idx;
    int idx = push(std::move(out), needs(q) || needs(k) || needs(v), {});
    if (nodes_[idx].requires_grad) {
        bool nq = needs(q), nk = needs(k), nv = needs(v);
        nodes_[idx].back = [=, weights = std::move(weights)](Tape& t) {
            const Mat& g = t.nodes_[idx].grad;
            Mat* dq = nq ? &t.grad_of(iq) : nullptr;
            Mat* dk = nk ? &t.grad_of(ik) : nullptr;
            Mat* dv = nv ? &t.grad_of(iv) : nullptr;
            for (int b = 0; b < batch; ++b) {
                for (int h = 0; h < heads; ++h) {
                    const Mat& W = weights[static_cast<size_t>(b) * heads + h];
                    auto Qb = t.nodes_[iq].value.block(static_cast<Eigen::Index>(b) * q_len, h * dh, q_len, dh);
                    auto Kb = t.nodes_[ik].value.block(static_cast<Eigen::Index>(b) * kv_len, h * dh, kv_len, dh);
                    auto Vb = t.nodes_[iv].value.block(static_cast<Eigen::Index>(b) * kv_len, h * dh, kv_len, dh);
                    auto gO = g.block(static_cast<Eigen::Index>(b) * q_len, h * dh, q_len, dh);
                    if (dv) dv->block(static_cast<Eigen::Index>(b) * kv_len, h * dh, kv_len, dh).noalias() += W.transpose() * gO;
                    if (nq || nk) {
                        Mat dW = gO * Vb.transpose();
                        // softmax backward per row: dS = W .* (dW - rowsum(dW .* W))
                        Mat dS(W.rows(), W.cols());
                        for (Eigen::Index i = 0; i < W.rows(); ++i) {
                            double dot = dW.row(i).cwiseProduct(W.row(i)).sum();
                            dS.row(i) = W.row(i).cwiseProduct((dW.row(i).array() - dot).matrix());
                        }
                        if (dq) dq->block(static_cast<Eigen::Index>(b) * q_len, h * dh, q_len, dh).noalias() += scale * (dS * Kb);
                        if (dk) dk->block(static_cast<Eigen::Index>(b) * kv_len, h * dh, kv_len, dh).noalias() += scale * (dS.transpose() * Qb);
                    }
                }
            }
        };
    }
    return {idx};
}

Var Tape::unit_power_blocks(Var x, int block_rows) {
    if (block_rows <= 0 || rows(x) % block_rows != 0)
        throw std::invalid_argument("unit_power_blocks: row count not divisible by block size");
    if (cols(x) % 2 != 0) throw std::invalid_argument("unit_power_blocks: needs an even column count (re/im pairs)");
    Eigen::Index n_blocks = rows(x) / block_rows;
    double symbols_per_block = static_cast<double>(block_rows) * (static_cast<double>(cols(x)) / 2.0);

    Mat out(rows(x), cols(x));
    std::vector<double> inv_scale(static_cast<size_t>(n_blocks));
    for (Eigen::Index b = 0; b < n_blocks; ++b) {
        auto Xb = val(x).middleRows(b * block_rows, block_rows);
        double power = Xb.squaredNorm() / symbols_per_block;
        if (power <= 0.0) throw std::runtime_error("cannot power-normalize an all-zero symbol block");
        double s = 1.0 / std::sqrt(power);
        inv_scale[static_cast<size_t>(b)] = s;
        out.middleRows(b * block_rows, block_rows) = Xb * s;
    }
    int ix = x.idx;
    int idx = push(std::move(out), needs(x), {});
    if (nodes_[idx].requires_grad) {
        nodes_[idx].back = [=, inv_scale = std::move(inv_scale)](Tape& t) {
            const Mat& g = t.nodes_[idx].grad;
            const Mat& xv = t.nodes_[ix].value;
            Mat& dx = t.grad_of(ix);
            for (Eigen::Index b = 0; b < n_blocks; ++b) {
                auto Xb = xv.middleRows(b * block_rows, block_rows);
                auto Gb = g.middleRows(b * block_rows, block_rows);
                double s = inv_scale[static_cast<size_t>(b)];
                double dot = Gb.cwiseProduct(Xb).sum();
                dx.middleRows(b * block_rows, block_rows) += s * Gb - (s * s * s / symbols_per_block) * dot * Xb;
            }
        };
    }
    return {idx};
}

Var Tape::cross_entropy(Var logits, const std::vector<int>& targets, const std::vector<double>& weights) {
    if (static_cast<Eigen::Index>(targets.size()) != rows(logits) || weights.size() != targets.size())
        throw std::invalid_argument("cross_entropy: targets/weights must have one entry per logit row");
    if (!val(logits).allFinite()) throw std::runtime_error("cross_entropy: non-finite logits");
    const Mat& L = val(logits);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < L.rows(); ++i) {
        if (weights[static_cast<size_t>(i)] == 0.0) continue;
        int tgt = targets[static_cast<size_t>(i)];
        if (tgt < 0 || tgt >= L.cols()) throw std::out_of_range("cross_entropy: target id out of range");
        loss += weights[static_cast<size_t>(i)] * (logsumexp_row(L.row(i)) - L(i, tgt));
    }
    Mat out(1, 1);
    out(0, 0) = loss;
    int il = logits.idx;
    int idx = push(std::move(out), needs(logits), {});
    if (nodes_[idx].requires_grad) {
        nodes_[idx].back = [il, idx, targets, weights](Tape& t) {
            double g = t.nodes_[idx].grad(0, 0);
            const Mat& L2 = t.nodes_[il].value;
            Mat& dL = t.grad_of(il);
            for (Eigen::Index i = 0; i < L2.rows(); ++i) {
                double w = weights[static_cast<size_t>(i)];
                if (w == 0.0) continue;
                Eigen::RowVectorXd p = (L2.row(i).array() - logsumexp_row(L2.row(i))).exp();
                p(targets[static_cast<size_t>(i)]) -= 1.0;
                dL.row(i) += (g * w) * p;
            }
        };
    }
    return {idx};
}

Var Tape::weighted_bce(Var probs, const std::vector<double>& labels, double w) {
    if (w <= 0.0 || w >= 1.0) throw std::invalid_argument("weighted_bce: w must lie in (0,1)");
    if (static_cast<Eigen::Index>(labels.size()) != val(probs).size())
        throw std::invalid_argument("weighted_bce: label/score length mismatch");
    constexpr double lo = 1e-7, hi = 1.0 - 1e-7;
    const Mat& P = val(probs);
    double loss = 0.0;
    size_t flat = 0;
    for (Eigen::Index r = 0; r < P.rows(); ++r) {
        for (Eigen::Index c = 0; c < P.cols(); ++c, ++flat) {
            double t_i = labels[flat];
            double p = std::clamp(P(r, c), lo, hi);
            double wi = (t_i == 0.0) ? w : 1.0 - w;
            loss -= wi * (t_i * std::log(p) + (1.0 - t_i) * std::log(1.0 - p));
        }
    }
    Mat out(1, 1);
    out(0, 0) = loss;
    int ip = probs.idx;
    int idx = push(std::move(out), needs(probs), {});
    if (nodes_[idx].requires_grad) {
        nodes_[idx].back = [ip, idx, labels, w](Tape& t) {
            double g = t.nodes_[idx].grad(0, 0);
            const Mat& P2 = t.nodes_[ip].value;
            Mat& dP = t.grad_of(ip);
            size_t f = 0;
            for (Eigen::Index r = 0; r < P2.rows(); ++r) {
                for (Eigen::Index c = 0; c < P2.cols(); ++c, ++f) {
                    double p = P2(r, c);
                    if (p <= lo || p >= hi) continue;  // clamped region: zero gradient
                    double t_i = labels[f];
                    double wi = (t_i == 0.0) ? w : 1.0 - w;
                    dP(r, c) += g * wi * (-t_i / p + (1.0 - t_i) / (1.0 - p));
                }
            }
        };
    }
    return {idx};
}

Var Tape::infonce(Var vh, Var vpos, Var vnegs, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("infonce: temperature must be positive");
    if (rows(vh) != 1 || rows(vpos) != 1) throw std::invalid_argument("infonce: vh/vpos must be row vectors");
    if (cols(vh) != cols(vpos) || cols(vh) != cols(vnegs)) throw std::invalid_argument("infonce: dimension mismatch");
    if (rows(vnegs) < 1) throw std::invalid_argument("infonce: need at least one negative");

    Eigen::Index K = rows(vnegs);
    Eigen::RowVectorXd logits(K + 1);
    logits(0) = val(vh).row(0).dot(val(vpos).row(0)) / tau;
    for (Eigen::Index k = 0; k < K; ++k) logits(k + 1) = val(vh).row(0).dot(val(vnegs).row(k)) / tau;
    double lse = logsumexp_row(logits);
    Mat out(1, 1);
    out(0, 0) = lse - logits(0);

    int ih = vh.idx, ip = vpos.idx, in = vnegs.idx;
    int idx = push(std::move(out), needs(vh) || needs(vpos) || needs(vnegs), {});
    if (nodes_[idx].requires_grad) {
        bool nh = needs(vh), np = needs(vpos), nn = needs(vnegs);
        Eigen::RowVectorXd p = (logits.array() - lse).exp();
        nodes_[idx].back = [=, p = std::move(p)](Tape& t) {
            double g = t.nodes_[idx].grad(0, 0);
            // d loss / d logit_j = p_j - [j == 0]
            Eigen::RowVectorXd dl = p;
            dl(0) -= 1.0;
            dl *= g / tau;
            const Mat& h = t.nodes_[ih].value;
            if (nh) {
                Mat& dh = t.grad_of(ih);
                dh.row(0) += dl(0) * t.nodes_[ip].value.row(0);
                for (Eigen::Index k = 0; k < K; ++k) dh.row(0) += dl(k + 1) * t.nodes_[in].value.row(k);
            }
            if (np) t.grad_of(ip).row(0) += dl(0) * h.row(0);
            if (nn) {
                Mat& dn = t.grad_of(in);
                for (Eigen::Index k = 0; k < K; ++k) dn.row(k) += dl(k + 1) * h.row(0);
            }
        };
    }
    return {idx};
}

void Tape::backward(Var root) {
    if (!record_) throw std::logic_error("backward() on a non-recording tape");
    if (rows(root) != 1 || cols(root) != 1) throw std::invalid_argument("backward: root must be a scalar node");
    grad_of(root.idx).setOnes();
    for (int i = root.idx; i >= 0; --i) {
        if (!grad_live(i)) continue;
        if (nodes_[i].back) nodes_[i].back(*this);
    }
    for (auto& n : nodes_) {
        if (n.grad_sink && n.grad.size() > 0) *n.grad_sink += n.grad;
    }
}

}  // namespace semcom::ad
