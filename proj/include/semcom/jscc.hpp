#pragma once

#include <string>
#include <vector>

#include "semcom/channel.hpp"
#include "semcom/corpus.hpp"
#include "semcom/nn.hpp"

namespace semcom::jscc {

using ad::Mat;
using ad::Var;

// Transformer codec around the channel: semantic encoder, channel
// encoder/decoder (dense maps), decoder with cross-attention, output
// projection. Canonical parameter names: embed, enc{i}.*, dec{i}.*,
// chanenc.*, chandec.*, out.*.
struct JsccModel {
    nn::ModelConfig cfg;
    int vocab_size = 0;
    uint64_t vocab_hash = 0;
    nn::ParamStore params;

    JsccModel(const nn::ModelConfig& cfg, int vocab_size, uint64_t init_seed);

    void save(const std::string& dir) const;
    static JsccModel load(const std::string& dir);
};

struct TrainConfig {
    int batch_size = 32;
    double lr = 1e-4;
    int epochs = 10;
    double train_snr_db = 0.0;
    ChannelKind channel = ChannelKind::awgn;
    uint64_t seed = 1;
    std::string checkpoint_dir;  // empty: no checkpoint written
    std::string log_csv;         // empty: no loss curve written
};

struct TrainResult {
    JsccModel model;
    std::vector<double> epoch_losses;  // mean per-token loss per epoch
};

// Tape graph pieces shared by every receiver variant. All of them read the
// canonical parameter names from the binder's store.
namespace graph {

// Pad mask (batch x N, 1 = real token) from true lengths.
Mat pad_mask(const std::vector<const TokenSequence*>& batch, int max_len);

// Token embedding (scaled by sqrt(d_model)) plus positional encoding,
// stacked (batch * N) x d_model.
Var embed_sequences(nn::ParamBinder& b, const nn::ModelConfig& cfg,
                    const std::vector<const TokenSequence*>& batch);

Var encoder_stack(nn::ParamBinder& b, const nn::ModelConfig& cfg, Var z, int n_sentences,
                  int len, const Mat* pad_mask, std::mt19937_64* drop_rng);

// chanenc dense -> per-sentence unit power -> equalized channel noise ->
// chandec dense. Channel draws come from chan_rng, one sentence at a time.
Var transmit_decode(nn::ParamBinder& b, const nn::ModelConfig& cfg, Var h, int n_sentences,
                    const ChannelConfig& chan, std::mt19937_64& chan_rng);

Var decoder_stack(nn::ParamBinder& b, const nn::ModelConfig& cfg, Var z, Var memory,
                  int n_sentences, int q_len, int kv_len, const Mat* mem_mask,
                  std::mt19937_64* drop_rng);

Var output_logits(nn::ParamBinder& b, Var decoder_out);

}  // namespace graph

// --- Single-sentence forward API -------------------------------------------

// Token embedding + positions through the encoder stack; pad keys masked.
Mat semantic_encode(JsccModel& m, const TokenSequence& s);

// Per-token dense map to c complex symbols, power-normalized per block.
SymbolBlock channel_encode(JsccModel& m, const Mat& h);

// Per-token dense map back to d_model reals.
Mat channel_decode(JsccModel& m, const SymbolBlock& y);

// Decoder memory: h_hat rows plus optional knowledge rows appended along the
// sequence axis. All-zero knowledge rows are masked out so an absent or zero
// k reproduces the baseline decoder exactly.
void append_knowledge(Mat& memory, Mat& mask, const Mat& k);

// Greedy autoregressive decode over the given memory, halting at the end
// token or after cfg.max_len steps. Ties pick the lowest token id.
TokenSequence greedy_decode(nn::ParamStore& ps, const nn::ModelConfig& cfg, int vocab_size,
                            const Mat& memory, const Mat& memory_mask);

// k null: baseline decode. k pointing at an n_k x d_model matrix: knowledge
// rows join the memory.
TokenSequence semantic_decode(JsccModel& m, const Mat& h_hat, const Mat* k = nullptr);

// Teacher-forced cross-entropy summed over positions whose target token is
// not pad. logits: N x vocab, row i scores the token at position i+1.
double sequence_loss(const TokenSequence& s, const Mat& logits);

// Flattened targets/weights for a batch, matching graph::output_logits rows.
void teacher_targets(const std::vector<const TokenSequence*>& batch, int max_len,
                     std::vector<int>& targets, std::vector<double>& weights);

// Mean per-token loss of one batch under a fixed noise draw, no dropout.
double eval_batch_loss(JsccModel& m, const std::vector<const TokenSequence*>& batch,
                       const ChannelConfig& chan, uint64_t noise_seed);

// End-to-end training through the channel at cfg.train_snr_db. Deterministic
// given cfg.seed. On divergence (non-finite loss or gradient) saves the last
// finite state to cfg.checkpoint_dir and throws.
TrainResult train_jscc(const CorpusSplit& corpus, const nn::ModelConfig& model_cfg,
                       const TrainConfig& cfg);

int argmax_row(const Eigen::Ref<const Eigen::RowVectorXd>& row);  // first occurrence wins

}  // namespace semcom::jscc
