#pragma once

#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace semcom::ad {

using Mat = Eigen::MatrixXd;

// Reverse-mode tape over dense matrices. One tape per forward pass; backward()
// accumulates parameter gradients into the external buffers given to leaf().
// With record=false the tape only evaluates (inference mode).
class Tape {
public:
    struct Var {
        int idx = -1;
        bool valid() const { return idx >= 0; }
    };

    explicit Tape(bool record = true) : record_(record) {}

    Var constant(Mat v);
    // Copies `value`; on backward, d(loss)/d(value) is added into *grad_sink.
    // A null grad_sink makes the leaf a frozen parameter.
    Var leaf(const Mat& value, Mat* grad_sink);

    const Mat& val(Var v) const { return nodes_[v.idx].value; }
    Eigen::Index rows(Var v) const { return nodes_[v.idx].value.rows(); }
    Eigen::Index cols(Var v) const { return nodes_[v.idx].value.cols(); }

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var hadamard(Var a, Var b);
    Var add_rowvec(Var a, Var bias);  // bias is 1 x cols, broadcast over rows
    Var add_const(Var a, const Mat& c);
    Var scale(Var a, double s);
    Var add_scalar(Var a, double s);
    Var relu(Var a);
    Var sigmoid(Var a);
    // Inverted-dropout mask drawn from rng; identity when rate == 0.
    Var dropout(Var a, double rate, std::mt19937_64& rng);

    // Row-wise normalization: per row, (x - mean) / sqrt(var + eps) * gain + bias.
    // gain/bias are 1 x cols. Population variance, eps inside the sqrt.
    Var layer_norm(Var a, Var gain, Var bias, double eps = 1e-5);

    // Gathers rows of `table` by id; backward scatters.
    Var embedding(Var table, const std::vector<int>& ids);

    Var concat_rows(Var a, Var b);
    Var slice_rows(Var a, int start, int count);
    // out = sum_i weights[i] * row_i  (1 x cols). Pass 1/n weights for a mean.
    Var mean_rows(Var a, const std::vector<double>& weights);
    Var rows_sumsq(Var a);  // rows x 1
    Var sum_all(Var a);     // 1 x 1
    Var mean_all(Var a);    // 1 x 1

    // Scaled dot-product attention over `batch` independent blocks of
    // q_len/kv_len rows, split into `heads` equal column groups.
    // key_mask (batch x kv_len, 1 = attend) may be null; causal masks j > i
    // and requires q_len == kv_len.
    Var multihead_attention(Var q, Var k, Var v, int batch, int q_len, int kv_len,
                            int heads, const Mat* key_mask, bool causal);

    // Normalizes each block of block_rows rows to unit mean power per complex
    // symbol, where consecutive column pairs form one complex symbol.
    Var unit_power_blocks(Var x, int block_rows);

    // Sum over rows i of weights[i] * (logsumexp(logits_i) - logits_i[target_i]).
    Var cross_entropy(Var logits, const std::vector<int>& targets, const std::vector<double>& weights);

    // Eq-style weighted BCE on probabilities clamped to [1e-7, 1-1e-7]:
    // sum_i w_i * -(t_i log p_i + (1-t_i) log(1-p_i)), w_i = w if t_i == 0 else 1-w.
    Var weighted_bce(Var probs, const std::vector<double>& labels, double w);

    // -log( exp(vh.vpos/tau) / (exp(vh.vpos/tau) + sum_k exp(vh.vneg_k/tau)) ),
    // max-subtracted. vh, vpos are 1 x d; vnegs is K x d.
    Var infonce(Var vh, Var vpos, Var vnegs, double tau);

    // Seeds d(root)=1 and accumulates gradients down the tape, flushing leaf
    // gradients into their external sinks. root must be 1 x 1.
    void backward(Var root);

    bool recording() const { return record_; }
    size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Mat value;
        Mat grad;  // allocated lazily during backward
        Mat* grad_sink = nullptr;
        std::function<void(Tape&)> back;
        bool requires_grad = false;
    };

    std::vector<Node> nodes_;
    bool record_;

    int push(Mat value, bool requires_grad, std::function<void(Tape&)> back);
    bool needs(Var v) const { return nodes_[v.idx].requires_grad; }
    Mat& grad_of(int idx);
    bool grad_live(int idx) const { return nodes_[idx].grad.size() > 0; }
    void check_same_shape(Var a, Var b, const char* op) const;
};

using Var = Tape::Var;

// Shared numerics (also used by oracle-style tests and the non-tape APIs).
// RowRef binds to rows of column-major matrices, hence the free inner stride.
using RowRef = Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>>;
double logsumexp_row(const Eigen::Ref<const Eigen::RowVectorXd>& row);
void masked_softmax_row_inplace(RowRef row, const std::vector<char>& valid);

}  // namespace semcom::ad
