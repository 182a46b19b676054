#include "semcom/jscc.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "semcom/util.hpp"

namespace semcom::jscc {

using ad::Tape;
using nn::ParamBinder;

namespace {

void create_params(nn::ParamStore& ps, const nn::ModelConfig& cfg, int vocab_size) {
    ps.create("embed", vocab_size, cfg.d_model, nn::Init::normal);
    for (int l = 0; l < cfg.layers; ++l) {
        nn::create_encoder_layer_params(ps, "enc" + std::to_string(l), cfg);
        nn::create_decoder_layer_params(ps, "dec" + std::to_string(l), cfg);
    }
    nn::create_dense_params(ps, "chanenc", cfg.d_model, 2 * cfg.channel_dim);
    nn::create_dense_params(ps, "chandec", 2 * cfg.channel_dim, cfg.d_model);
    nn::create_dense_params(ps, "out", cfg.d_model, vocab_size);
}

std::vector<const TokenSequence*> pointers(const std::vector<DataPair>& pairs,
                                           const std::vector<size_t>& idx) {
    std::vector<const TokenSequence*> out;
    out.reserve(idx.size());
    for (size_t i : idx) out.push_back(&pairs[i].tokens);
    return out;
}

}  // namespace

JsccModel::JsccModel(const nn::ModelConfig& cfg_, int vocab_size_, uint64_t init_seed)
    : cfg(cfg_), vocab_size(vocab_size_), params(init_seed) {
    cfg.validate();
    if (vocab_size < 5) throw std::invalid_argument("vocabulary too small for a codec: " + std::to_string(vocab_size));
    create_params(params, cfg, vocab_size);
}

void JsccModel::save(const std::string& dir) const {
    nlohmann::json meta;
    meta["kind"] = "jscc";
    meta["model"] = cfg.to_json();
    meta["vocab_size"] = vocab_size;
    meta["vocab_hash"] = hex64(vocab_hash);
    nn::save_checkpoint(dir, params, meta);
}

JsccModel JsccModel::load(const std::string& dir) {
    nn::ParamStore probe;
    auto manifest = nn::load_checkpoint(dir, probe);
    const auto& meta = manifest.at("meta");
    if (meta.value("kind", "") != "jscc")
        throw std::runtime_error("checkpoint " + dir + " is not a codec checkpoint");
    JsccModel m(nn::ModelConfig::from_json(meta.at("model")), meta.at("vocab_size").get<int>(), 0);
    nn::load_checkpoint(dir, m.params);
    m.vocab_hash = std::stoull(meta.at("vocab_hash").get<std::string>(), nullptr, 16);
    m.params.set_step(manifest.at("step").get<int64_t>());
    if (m.params.size() != manifest.at("params").size())
        throw std::runtime_error("checkpoint " + dir + " parameter set does not match the codec layout");
    return m;
}

namespace graph {

Mat pad_mask(const std::vector<const TokenSequence*>& batch, int max_len) {
    Mat mask(static_cast<Eigen::Index>(batch.size()), max_len);
    for (size_t i = 0; i < batch.size(); ++i) {
        if (batch[i]->capacity() != max_len)
            throw std::invalid_argument("sequence length " + std::to_string(batch[i]->capacity()) +
                                        " does not match the model frame " + std::to_string(max_len));
        for (int j = 0; j < max_len; ++j)
            mask(static_cast<Eigen::Index>(i), j) = j < batch[i]->true_length ? 1.0 : 0.0;
    }
    return mask;
}

Var embed_sequences(ParamBinder& b, const nn::ModelConfig& cfg,
                    const std::vector<const TokenSequence*>& batch) {
    if (batch.empty()) throw std::invalid_argument("empty batch");
    Tape& t = b.tape();
    std::vector<int> flat;
    flat.reserve(batch.size() * static_cast<size_t>(cfg.max_len));
    for (const auto* s : batch) {
        if (s->capacity() != cfg.max_len)
            throw std::invalid_argument("sequence length " + std::to_string(s->capacity()) +
                                        " does not match the model frame " + std::to_string(cfg.max_len));
        flat.insert(flat.end(), s->ids.begin(), s->ids.end());
    }
    Var e = t.embedding(b["embed"], flat);
    e = t.scale(e, std::sqrt(static_cast<double>(cfg.d_model)));
    Mat pe = nn::positional_encoding(cfg.max_len, cfg.d_model);
    Mat tiled(static_cast<Eigen::Index>(batch.size()) * cfg.max_len, cfg.d_model);
    for (size_t i = 0; i < batch.size(); ++i)
        tiled.middleRows(static_cast<Eigen::Index>(i) * cfg.max_len, cfg.max_len) = pe;
    return t.add_const(e, tiled);
}

Var encoder_stack(ParamBinder& b, const nn::ModelConfig& cfg, Var z, int n_sentences, int len,
                  const Mat* pad_mask, std::mt19937_64* drop_rng) {
    for (int l = 0; l < cfg.layers; ++l)
        z = nn::encoder_layer(b, "enc" + std::to_string(l), z, n_sentences, len, cfg, pad_mask, drop_rng);
    return z;
}

Var transmit_decode(ParamBinder& b, const nn::ModelConfig& cfg, Var h, int n_sentences,
                    const ChannelConfig& chan, std::mt19937_64& chan_rng) {
    Tape& t = b.tape();
    Var x = dense(b, "chanenc", h);
    x = t.unit_power_blocks(x, cfg.max_len);
    Mat noise(static_cast<Eigen::Index>(n_sentences) * cfg.max_len, 2 * cfg.channel_dim);
    for (int i = 0; i < n_sentences; ++i)
        noise.middleRows(static_cast<Eigen::Index>(i) * cfg.max_len, cfg.max_len) =
            equalized_noise_pairs(cfg.max_len, cfg.channel_dim, chan, chan_rng);
    Var y = t.add_const(x, noise);
    return dense(b, "chandec", y);
}

Var decoder_stack(ParamBinder& b, const nn::ModelConfig& cfg, Var z, Var memory, int n_sentences,
                  int q_len, int kv_len, const Mat* mem_mask, std::mt19937_64* drop_rng) {
    for (int l = 0; l < cfg.layers; ++l)
        z = nn::decoder_layer(b, "dec" + std::to_string(l), z, memory, n_sentences, q_len, kv_len,
                              cfg, mem_mask, drop_rng);
    return z;
}

Var output_logits(ParamBinder& b, Var decoder_out) { return dense(b, "out", decoder_out); }

}  // namespace graph

Mat semantic_encode(JsccModel& m, const TokenSequence& s) {
    if (s.capacity() != m.cfg.max_len)
        throw std::invalid_argument("sequence length " + std::to_string(s.capacity()) +
                                    " does not match the model frame " + std::to_string(m.cfg.max_len));
    if (s.true_length <= 0 || s.true_length > m.cfg.max_len)
        throw std::invalid_argument("true_length out of range");
    Tape t(false);
    ParamBinder b(t, m.params, false);
    std::vector<const TokenSequence*> batch{&s};
    Mat mask = graph::pad_mask(batch, m.cfg.max_len);
    Var z = graph::embed_sequences(b, m.cfg, batch);
    Var h = graph::encoder_stack(b, m.cfg, z, 1, m.cfg.max_len, &mask, nullptr);
    return t.val(h);
}

SymbolBlock channel_encode(JsccModel& m, const Mat& h) {
    if (h.cols() != m.cfg.d_model)
        throw std::invalid_argument("semantic vector width " + std::to_string(h.cols()) +
                                    " does not match d_model " + std::to_string(m.cfg.d_model));
    Tape t(false);
    ParamBinder b(t, m.params, false);
    Var x = nn::dense(b, "chanenc", t.constant(h));
    x = t.unit_power_blocks(x, static_cast<int>(h.rows()));
    return from_real_pairs(t.val(x));
}

Mat channel_decode(JsccModel& m, const SymbolBlock& y) {
    if (y.cols() != m.cfg.channel_dim)
        throw std::invalid_argument("symbol block width " + std::to_string(y.cols()) +
                                    " does not match channel_dim " + std::to_string(m.cfg.channel_dim));
    Tape t(false);
    ParamBinder b(t, m.params, false);
    return t.val(nn::dense(b, "chandec", t.constant(to_real_pairs(y))));
}

void append_knowledge(Mat& memory, Mat& mask, const Mat& k) {
    if (k.rows() == 0) return;
    if (k.cols() != memory.cols())
        throw std::invalid_argument("knowledge vector width " + std::to_string(k.cols()) +
                                    " does not match memory width " + std::to_string(memory.cols()));
    Eigen::Index base = memory.rows();
    memory.conservativeResize(base + k.rows(), Eigen::NoChange);
    mask.conservativeResize(Eigen::NoChange, base + k.rows());
    for (Eigen::Index i = 0; i < k.rows(); ++i) {
        memory.row(base + i) = k.row(i);
        mask(0, base + i) = k.row(i).isZero(0.0) ? 0.0 : 1.0;
    }
}

int argmax_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
    int best = 0;
    for (Eigen::Index j = 1; j < row.size(); ++j)
        if (row(j) > row(best)) best = static_cast<int>(j);
    return best;
}

TokenSequence greedy_decode(nn::ParamStore& ps, const nn::ModelConfig& cfg, int vocab_size,
                            const Mat& memory, const Mat& memory_mask) {
    if (memory.cols() != cfg.d_model) throw std::invalid_argument("memory width does not match d_model");
    if (memory_mask.rows() != 1 || memory_mask.cols() != memory.rows())
        throw std::invalid_argument("memory mask must be 1 x memory rows");
    if (ps.get("out.w").cols() != vocab_size)
        throw std::invalid_argument("output projection width does not match the vocabulary");

    Mat pe = nn::positional_encoding(cfg.max_len, cfg.d_model);
    std::vector<int> ids{Vocabulary::kStart};
    while (static_cast<int>(ids.size()) < cfg.max_len) {
        int len = static_cast<int>(ids.size());
        Tape t(false);
        ParamBinder b(t, ps, false);
        Var e = t.embedding(b["embed"], ids);
        e = t.scale(e, std::sqrt(static_cast<double>(cfg.d_model)));
        e = t.add_const(e, pe.topRows(len));
        Var mem = t.constant(memory);
        Var dec = graph::decoder_stack(b, cfg, e, mem, 1, len, static_cast<int>(memory.rows()),
                                       &memory_mask, nullptr);
        Var logits = graph::output_logits(b, dec);
        int next = argmax_row(t.val(logits).row(len - 1));
        ids.push_back(next);
        if (next == Vocabulary::kEnd) break;
    }

    TokenSequence out;
    out.ids.assign(cfg.max_len, Vocabulary::kPad);
    std::copy(ids.begin(), ids.end(), out.ids.begin());
    out.true_length = static_cast<int>(ids.size());
    return out;
}

TokenSequence semantic_decode(JsccModel& m, const Mat& h_hat, const Mat* k) {
    if (h_hat.rows() != m.cfg.max_len || h_hat.cols() != m.cfg.d_model)
        throw std::invalid_argument("decoded vector block must be N x d_model");
    Mat memory = h_hat;
    Mat mask = Mat::Ones(1, memory.rows());
    if (k) append_knowledge(memory, mask, *k);
    return greedy_decode(m.params, m.cfg, m.vocab_size, memory, mask);
}

double sequence_loss(const TokenSequence& s, const Mat& logits) {
    int n = s.capacity();
    if (logits.rows() != n) throw std::invalid_argument("logit rows must match the sequence frame");
    if (!logits.allFinite()) throw std::runtime_error("sequence_loss: non-finite logits");
    double loss = 0.0;
    for (int i = 0; i + 1 < n; ++i) {
        int target = s.ids[static_cast<size_t>(i) + 1];
        if (target == Vocabulary::kPad) continue;
        loss += ad::logsumexp_row(logits.row(i)) - logits(i, target);
    }
    return loss;
}

void teacher_targets(const std::vector<const TokenSequence*>& batch, int max_len,
                     std::vector<int>& targets, std::vector<double>& weights) {
    targets.clear();
    weights.clear();
    targets.reserve(batch.size() * static_cast<size_t>(max_len));
    weights.reserve(batch.size() * static_cast<size_t>(max_len));
    for (const auto* s : batch) {
        for (int i = 0; i < max_len; ++i) {
            int target = i + 1 < max_len ? s->ids[static_cast<size_t>(i) + 1] : Vocabulary::kPad;
            targets.push_back(target == Vocabulary::kPad ? 0 : target);
            weights.push_back(target == Vocabulary::kPad ? 0.0 : 1.0);
        }
    }
}

namespace {

struct BatchLoss {
    Var loss;       // mean per scored token
    double total_weight = 0.0;
};

BatchLoss batch_loss_graph(ParamBinder& b, const nn::ModelConfig& cfg,
                           const std::vector<const TokenSequence*>& batch,
                           const ChannelConfig& chan, std::mt19937_64& chan_rng,
                           std::mt19937_64* drop_rng) {
    Tape& t = b.tape();
    int n = static_cast<int>(batch.size());
    Mat mask = graph::pad_mask(batch, cfg.max_len);
    Var z = graph::embed_sequences(b, cfg, batch);
    Var h = graph::encoder_stack(b, cfg, z, n, cfg.max_len, &mask, drop_rng);
    Var h_hat = graph::transmit_decode(b, cfg, h, n, chan, chan_rng);
    Var dec_in = graph::embed_sequences(b, cfg, batch);
    Var dec = graph::decoder_stack(b, cfg, dec_in, h_hat, n, cfg.max_len, cfg.max_len, nullptr, drop_rng);
    Var logits = graph::output_logits(b, dec);

    std::vector<int> targets;
    std::vector<double> weights;
    teacher_targets(batch, cfg.max_len, targets, weights);
    double total = 0.0;
    for (double w : weights) total += w;
    if (total <= 0.0) throw std::runtime_error("batch contains no scored tokens");
    Var ce = t.cross_entropy(logits, targets, weights);
    return {t.scale(ce, 1.0 / total), total};
}

}  // namespace

double eval_batch_loss(JsccModel& m, const std::vector<const TokenSequence*>& batch,
                       const ChannelConfig& chan, uint64_t noise_seed) {
    Tape t(false);
    ParamBinder b(t, m.params, false);
    auto rng = make_rng(noise_seed, {label("eval-noise")});
    auto bl = batch_loss_graph(b, m.cfg, batch, chan, rng, nullptr);
    return t.val(bl.loss)(0, 0);
}

TrainResult train_jscc(const CorpusSplit& corpus, const nn::ModelConfig& model_cfg,
                       const TrainConfig& cfg) {
    if (corpus.train.empty()) throw std::invalid_argument("cannot train on an empty corpus");
    if (cfg.batch_size < 1 || cfg.epochs < 1)
        throw std::invalid_argument("batch_size and epochs must be at least 1");

    TrainResult result{JsccModel(model_cfg, corpus.vocab.size(), cfg.seed), {}};
    JsccModel& model = result.model;
    model.vocab_hash = corpus.vocab.hash();

    ChannelConfig chan{cfg.channel, cfg.train_snr_db, 0};
    nn::AdamConfig adam;
    adam.lr = cfg.lr;

    auto save_state = [&](const std::string& suffix) {
        if (cfg.checkpoint_dir.empty()) return;
        model.save(suffix.empty() ? cfg.checkpoint_dir : cfg.checkpoint_dir + suffix);
    };

    std::vector<size_t> order(corpus.train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto shuffle_rng = make_rng(cfg.seed, {label("jscc-shuffle"), static_cast<uint64_t>(epoch)});
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        auto chan_rng = make_rng(cfg.seed, {label("jscc-noise"), static_cast<uint64_t>(epoch)});
        auto drop_rng = make_rng(cfg.seed, {label("jscc-dropout"), static_cast<uint64_t>(epoch)});

        double loss_sum = 0.0, weight_sum = 0.0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            std::vector<size_t> chunk(order.begin() + static_cast<long>(start),
                                      order.begin() + static_cast<long>(end));
            auto batch = pointers(corpus.train, chunk);

            Tape t(true);
            ParamBinder b(t, model.params, true);
            double lv = 0.0, tw = 0.0;
            try {
                auto bl = batch_loss_graph(b, model.cfg, batch, chan, chan_rng, &drop_rng);
                lv = t.val(bl.loss)(0, 0);
                tw = bl.total_weight;
                if (!std::isfinite(lv)) throw std::runtime_error("non-finite loss");
                model.params.zero_grads();
                t.backward(bl.loss);
                model.params.adam_step(adam);
            } catch (const std::runtime_error& e) {
                // Parameters are still the last finite state: a poisoned update
                // never gets applied (non-finite gradients throw first).
                save_state("");
                throw std::runtime_error("training diverged at epoch " + std::to_string(epoch + 1) +
                                         ": " + std::string(e.what()) +
                                         (cfg.checkpoint_dir.empty() ? "" : "; last finite state saved"));
            }
            loss_sum += lv * tw;
            weight_sum += tw;
        }
        result.epoch_losses.push_back(loss_sum / weight_sum);
    }

    if (!cfg.log_csv.empty()) {
        std::ofstream out(cfg.log_csv);
        if (!out) throw std::runtime_error("cannot write loss log " + cfg.log_csv);
        out << "epoch,loss\n";
        for (size_t i = 0; i < result.epoch_losses.size(); ++i)
            out << i + 1 << "," << format_fixed(result.epoch_losses[i], 6) << "\n";
    }
    save_state("");
    return result;
}

}  // namespace semcom::jscc
