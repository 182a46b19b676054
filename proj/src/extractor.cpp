#include "semcom/extractor.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "semcom/util.hpp"

namespace semcom::extractor {

namespace {

using ad::Tape;
using jscc::graph::embed_sequences;
using jscc::graph::encoder_stack;
using jscc::graph::pad_mask;
using jscc::graph::transmit_decode;

std::vector<int> triple_token_ids(const FactTriple& tr, const Vocabulary& vocab) {
    std::vector<int> ids;
    for (const auto& tok : tokenize(tr.head + " " + tr.relation + " " + tr.tail))
        ids.push_back(vocab.id_of(tok));
    return ids;
}

void create_scorer_params(nn::ParamStore& ps, const nn::ModelConfig& cfg, int n_t) {
    for (int i = 0; i < cfg.layers; ++i)
        nn::create_encoder_layer_params(ps, "xenc" + std::to_string(i), cfg);
    ps.create("cls.w", cfg.d_model, n_t, nn::Init::glorot);
    ps.create("cls.b", 1, n_t, nn::Init::zeros);
    nn::create_dense_params(ps, "kproj", cfg.d_model, cfg.d_model);
}

bool receiver_side(const std::string& name) {
    return name == "embed" || name.rfind("dec", 0) == 0 || name.rfind("out.", 0) == 0;
}

// Encoder stack over h_hat rows plus mean pool, one row per sentence. The
// receiver has no length side channel, so the pool runs over all N positions.
Var pooled_scores(nn::ParamBinder& bx, const nn::ModelConfig& cfg, Var h_hat, int n_sentences,
                  std::mt19937_64* drop_rng) {
    Tape& t = bx.tape();
    Var z = h_hat;
    for (int i = 0; i < cfg.layers; ++i)
        z = nn::encoder_layer(bx, "xenc" + std::to_string(i), z, n_sentences, cfg.max_len, cfg,
                              nullptr, drop_rng);
    const std::vector<double> ones(cfg.max_len, 1.0);
    Var pool{};
    for (int s = 0; s < n_sentences; ++s) {
        Var row = t.mean_rows(t.slice_rows(z, s * cfg.max_len, cfg.max_len), ones);
        pool = (s == 0) ? row : t.concat_rows(pool, row);
    }
    return t.sigmoid(t.add_rowvec(t.matmul(pool, bx["cls.w"]), bx["cls.b"]));
}

// Tape-side knowledge row for one sentence; zero constant when no triples.
Var knowledge_row(nn::ParamBinder& bx, const nn::ModelConfig& cfg,
                  const std::vector<FactTriple>& triples, const Vocabulary& vocab) {
    Tape& t = bx.tape();
    if (triples.empty()) return t.constant(Mat::Zero(1, cfg.d_model));
    Var acc{};
    for (size_t i = 0; i < triples.size(); ++i) {
        auto ids = triple_token_ids(triples[i], vocab);
        const std::vector<double> ones(ids.size(), 1.0);
        Var mean = t.mean_rows(t.embedding(bx["embed"], ids), ones);
        acc = (i == 0) ? mean : t.concat_rows(acc, mean);
    }
    const std::vector<double> ones(triples.size(), 1.0);
    return t.add_rowvec(t.matmul(t.mean_rows(acc, ones), bx["kproj.w"]), bx["kproj.b"]);
}

}  // namespace

ExtractorModel::ExtractorModel(const nn::ModelConfig& cfg_, int vocab_size_, int n_t_,
                               uint64_t init_seed)
    : cfg(cfg_), vocab_size(vocab_size_), n_t(n_t_), params(init_seed) {
    cfg.validate();
    if (n_t < 0) throw std::invalid_argument("ExtractorModel: negative classifier width");
    create_scorer_params(params, cfg, n_t);
    params.create("embed", vocab_size, cfg.d_model, nn::Init::normal);
    for (int i = 0; i < cfg.layers; ++i)
        nn::create_decoder_layer_params(params, "dec" + std::to_string(i), cfg);
    nn::create_dense_params(params, "out", cfg.d_model, vocab_size);
}

ExtractorModel::ExtractorModel(const jscc::JsccModel& codec, const KnowledgeBase& kb,
                               uint64_t init_seed)
    : ExtractorModel(codec.cfg, codec.vocab_size, kb.size(), init_seed) {
    kb_hash = kb.hash();
    vocab_hash = codec.vocab_hash;
    for (const auto& [name, value] : codec.params.params())
        if (receiver_side(name)) params.get(name) = value;
}

double weighted_bce(const std::vector<double>& labels, const std::vector<double>& scores,
                    double w) {
    if (w <= 0.0 || w >= 1.0) throw std::invalid_argument("weighted_bce: w must lie in (0,1)");
    if (labels.size() != scores.size())
        throw std::invalid_argument("weighted_bce: label/score length mismatch");
    constexpr double lo = 1e-7, hi = 1.0 - 1e-7;
    double loss = 0.0;
    for (size_t i = 0; i < labels.size(); ++i) {
        double p = std::clamp(scores[i], lo, hi);
        double wi = (labels[i] == 0.0) ? w : 1.0 - w;
        loss -= wi * (labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p));
    }
    return loss;
}

std::vector<double> score_triples(const Mat& h_hat, ExtractorModel& model,
                                  const KnowledgeBase& kb) {
    if (kb.hash() != model.kb_hash || kb.size() != model.n_t)
        throw std::runtime_error(
            "score_triples: knowledge base changed since training; "
            "the classifier is stale, retrain the extractor");
    if (h_hat.rows() != model.cfg.max_len || h_hat.cols() != model.cfg.d_model)
        throw std::invalid_argument("score_triples: h_hat must be N x d_model");
    Tape t(false);
    nn::ParamBinder bx(t, model.params, false);
    Var scores = pooled_scores(bx, model.cfg, t.constant(h_hat), 1, nullptr);
    const Mat& row = t.val(scores);
    return {row.data(), row.data() + row.size()};
}

std::vector<FactTriple> select_triples(const std::vector<double>& scores,
                                       const KnowledgeBase& kb, double threshold) {
    if (threshold <= 0.0 || threshold >= 1.0)
        throw std::invalid_argument("select_triples: threshold must lie in (0,1)");
    if (static_cast<int>(scores.size()) != kb.size())
        throw std::invalid_argument("select_triples: score vector does not match kb size");
    std::vector<FactTriple> out;
    for (size_t i = 0; i < scores.size(); ++i)
        if (scores[i] >= threshold) out.push_back(kb.triples()[i]);
    return out;
}

Mat knowledge_embed(const std::vector<FactTriple>& triples, const Vocabulary& vocab,
                    const Mat& embed_table, const Mat& proj_w, const Mat& proj_b) {
    if (proj_w.rows() != embed_table.cols() || proj_b.cols() != proj_w.cols())
        throw std::invalid_argument("knowledge_embed: projection shape mismatch");
    if (triples.empty()) return Mat::Zero(1, proj_w.cols());
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(embed_table.cols());
    for (const auto& tr : triples) {
        auto ids = triple_token_ids(tr, vocab);
        Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(embed_table.cols());
        for (int id : ids) {
            if (id < 0 || id >= embed_table.rows())
                throw std::out_of_range("knowledge_embed: token id outside embedding table");
            mean += embed_table.row(id);
        }
        if (!ids.empty()) mean /= static_cast<double>(ids.size());
        acc += mean;
    }
    acc /= static_cast<double>(triples.size());
    return (acc * proj_w) + proj_b;
}

Mat knowledge_embed(const std::vector<FactTriple>& triples, const Vocabulary& vocab,
                    ExtractorModel& model) {
    return knowledge_embed(triples, vocab, model.params.get("embed"),
                           model.params.get("kproj.w"), model.params.get("kproj.b"));
}

ExtractorTrainResult train_extractor(jscc::JsccModel& codec, const CorpusSplit& corpus,
                                     const KnowledgeBase& kb, const ExtractorTrainConfig& cfg) {
    if (corpus.train.empty()) throw std::invalid_argument("train_extractor: empty train split");
    if (cfg.w <= 0.0 || cfg.w >= 1.0)
        throw std::invalid_argument("train_extractor: w must lie in (0,1)");
    if (corpus.vocab.hash() != codec.vocab_hash)
        throw std::invalid_argument("train_extractor: corpus vocabulary does not match the codec");

    ExtractorTrainResult res{ExtractorModel(codec, kb, cfg.seed), {}, {}, {}, {}};
    ExtractorModel& model = res.model;
    const nn::ModelConfig& mcfg = model.cfg;
    const int n_t = model.n_t;

    // Also validates that every gold triple is present in the kb.
    std::vector<std::vector<double>> labels;
    labels.reserve(corpus.train.size());
    for (const auto& pair : corpus.train) labels.push_back(labels_for(pair, kb));

    const ChannelConfig chan{cfg.channel, cfg.train_snr_db, 0};
    const nn::AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8};

    std::ostringstream csv;
    csv << "stage,epoch,loss,precision,recall\n";
    auto save_state = [&] {
        if (!cfg.checkpoint_dir.empty()) model.save(cfg.checkpoint_dir);
        if (!cfg.log_csv.empty()) write_file(cfg.log_csv, csv.str());
    };
    auto diverged = [&](int epoch, const char* stage, const std::exception& e) {
        save_state();
        throw std::runtime_error("extractor training diverged at " + std::string(stage) +
                                 " epoch " + std::to_string(epoch + 1) + ": " + e.what() +
                                 (cfg.checkpoint_dir.empty() ? "" : "; last finite state saved"));
    };

    std::vector<size_t> order(corpus.train.size());
    std::iota(order.begin(), order.end(), 0);

    // Stage 1: the triple scorer through the frozen codec and channel.
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto shuffle_rng = make_rng(cfg.seed, {label("ext-shuffle"), static_cast<uint64_t>(epoch)});
        auto chan_rng = make_rng(cfg.seed, {label("ext-noise"), static_cast<uint64_t>(epoch)});
        auto drop_rng = make_rng(cfg.seed, {label("ext-dropout"), static_cast<uint64_t>(epoch)});
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double epoch_loss = 0.0;
        int n_batches = 0;
        long tp = 0, fp = 0, fn = 0;
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<size_t> chunk(order.begin() + start, order.begin() + end);
            std::vector<const TokenSequence*> batch;
            std::vector<double> flat;
            for (size_t idx : chunk) {
                batch.push_back(&corpus.train[idx].tokens);
                flat.insert(flat.end(), labels[idx].begin(), labels[idx].end());
            }
            int n = static_cast<int>(batch.size());
            try {
                Tape t(true);
                nn::ParamBinder bj(t, codec.params, false);
                nn::ParamBinder bx(t, model.params, true);
                bx.freeze_prefix("embed");
                bx.freeze_prefix("dec");
                bx.freeze_prefix("out.");
                bx.freeze_prefix("kproj");
                Mat mask = pad_mask(batch, mcfg.max_len);
                Var h = encoder_stack(bj, mcfg, embed_sequences(bj, mcfg, batch), n, mcfg.max_len,
                                      &mask, nullptr);
                Var h_hat = transmit_decode(bj, mcfg, h, n, chan, chan_rng);
                Var scores = pooled_scores(bx, mcfg, h_hat, n, &drop_rng);
                Var loss = t.scale(t.weighted_bce(scores, flat, cfg.w), 1.0 / n);
                double lv = t.val(loss)(0, 0);
                if (!std::isfinite(lv)) throw std::runtime_error("non-finite loss");
                const Mat& sv = t.val(scores);
                for (Eigen::Index r = 0; r < sv.rows(); ++r)
                    for (Eigen::Index c = 0; c < sv.cols(); ++c) {
                        bool pred = sv(r, c) >= 0.5;
                        bool gold = flat[static_cast<size_t>(r) * n_t + c] != 0.0;
                        tp += pred && gold;
                        fp += pred && !gold;
                        fn += !pred && gold;
                    }
                model.params.zero_grads();
                t.backward(loss);
                model.params.adam_step(adam);
                epoch_loss += lv;
                ++n_batches;
            } catch (const std::runtime_error& e) {
                diverged(epoch, "scorer", e);
            }
        }
        res.epoch_losses.push_back(epoch_loss / n_batches);
        res.epoch_precision.push_back(tp + fp == 0 ? 1.0 : static_cast<double>(tp) / (tp + fp));
        res.epoch_recall.push_back(tp + fn == 0 ? 1.0 : static_cast<double>(tp) / (tp + fn));
        csv << "scorer," << epoch + 1 << "," << format_fixed(res.epoch_losses.back(), 6) << ","
            << format_fixed(res.epoch_precision.back(), 6) << ","
            << format_fixed(res.epoch_recall.back(), 6) << "\n";
    }

    // Stage 2: tune the receiver-side decoder copies and the knowledge
    // projection against the scorer's own selections, so the decoder learns
    // how far to trust what it will actually see. The codec stays untouched.
    for (int epoch = 0; epoch < cfg.adapt_epochs; ++epoch) {
        auto shuffle_rng =
            make_rng(cfg.seed, {label("ext-adapt-shuffle"), static_cast<uint64_t>(epoch)});
        auto chan_rng = make_rng(cfg.seed, {label("ext-adapt-noise"), static_cast<uint64_t>(epoch)});
        auto drop_rng =
            make_rng(cfg.seed, {label("ext-adapt-dropout"), static_cast<uint64_t>(epoch)});
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double epoch_loss = 0.0;
        double epoch_weight = 0.0;
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<size_t> chunk(order.begin() + start, order.begin() + end);
            std::vector<const TokenSequence*> batch;
            for (size_t idx : chunk) batch.push_back(&corpus.train[idx].tokens);
            int n = static_cast<int>(batch.size());
            try {
                Tape t(true);
                nn::ParamBinder bj(t, codec.params, false);
                nn::ParamBinder bx(t, model.params, true);
                bx.freeze_prefix("xenc");
                bx.freeze_prefix("cls");
                Mat mask = pad_mask(batch, mcfg.max_len);
                Var h = encoder_stack(bj, mcfg, embed_sequences(bj, mcfg, batch), n, mcfg.max_len,
                                      &mask, nullptr);
                Var h_hat = transmit_decode(bj, mcfg, h, n, chan, chan_rng);
                Var memory{};
                Mat mem_mask(n, mcfg.max_len + 1);
                Mat hv = t.val(h_hat);  // copy: tape storage moves as ops are added
                for (int s = 0; s < n; ++s) {
                    Mat hs = hv.middleRows(static_cast<Eigen::Index>(s) * mcfg.max_len,
                                           mcfg.max_len);
                    auto sel = select_triples(score_triples(hs, model, kb), kb, 0.5);
                    Var block = t.concat_rows(t.slice_rows(h_hat, s * mcfg.max_len, mcfg.max_len),
                                              knowledge_row(bx, mcfg, sel, corpus.vocab));
                    memory = (s == 0) ? block : t.concat_rows(memory, block);
                    mem_mask.row(s).setOnes();
                    if (sel.empty()) mem_mask(s, mcfg.max_len) = 0.0;
                }
                Var dec_in = embed_sequences(bx, mcfg, batch);
                Var dec = jscc::graph::decoder_stack(bx, mcfg, dec_in, memory, n, mcfg.max_len,
                                                     mcfg.max_len + 1, &mem_mask, &drop_rng);
                Var logits = jscc::graph::output_logits(bx, dec);
                std::vector<int> targets;
                std::vector<double> weights;
                jscc::teacher_targets(batch, mcfg.max_len, targets, weights);
                double total = std::accumulate(weights.begin(), weights.end(), 0.0);
                Var loss = t.scale(t.cross_entropy(logits, targets, weights), 1.0 / total);
                double lv = t.val(loss)(0, 0);
                if (!std::isfinite(lv)) throw std::runtime_error("non-finite loss");
                model.params.zero_grads();
                t.backward(loss);
                model.params.adam_step(adam);
                epoch_loss += lv * total;
                epoch_weight += total;
            } catch (const std::runtime_error& e) {
                diverged(epoch, "adapt", e);
            }
        }
        res.adapt_losses.push_back(epoch_loss / epoch_weight);
        csv << "adapt," << epoch + 1 << "," << format_fixed(res.adapt_losses.back(), 6) << ",,\n";
        model.adapted = true;
    }

    save_state();
    return res;
}

TokenSequence receive_with_kg(const SymbolBlock& y, jscc::JsccModel& codec, ExtractorModel& model,
                              const KnowledgeBase& kb, const Vocabulary& vocab) {
    if (vocab.hash() != model.vocab_hash || model.vocab_hash != codec.vocab_hash)
        throw std::runtime_error("receive_with_kg: vocabulary mismatch between codec and extractor");
    Mat h_hat = jscc::channel_decode(codec, y);
    auto scores = score_triples(h_hat, model, kb);
    auto selected = select_triples(scores, kb, 0.5);
    if (selected.empty()) return jscc::semantic_decode(codec, h_hat);
    Mat memory = h_hat;
    Mat mask = Mat::Ones(1, memory.rows());
    Mat k = knowledge_embed(selected, vocab, model);
    jscc::append_knowledge(memory, mask, k);
    return jscc::greedy_decode(model.params, model.cfg, model.vocab_size, memory, mask);
}

void ExtractorModel::save(const std::string& dir) const {
    nlohmann::json meta;
    meta["kind"] = "extractor";
    meta["model"] = cfg.to_json();
    meta["vocab_size"] = vocab_size;
    meta["vocab_hash"] = hex64(vocab_hash);
    meta["kb_hash"] = hex64(kb_hash);
    meta["n_t"] = n_t;
    meta["adapted"] = adapted;
    nn::save_checkpoint(dir, params, meta);
}

ExtractorModel ExtractorModel::load(const std::string& dir) {
    nn::ParamStore probe(1);
    nlohmann::json manifest = nn::load_checkpoint(dir, probe);
    const auto& meta = manifest.at("meta");
    if (meta.value("kind", "") != "extractor")
        throw std::runtime_error("checkpoint at " + dir + " is not an extractor checkpoint");
    ExtractorModel m(nn::ModelConfig::from_json(meta.at("model")), meta.at("vocab_size").get<int>(),
                     meta.at("n_t").get<int>(), 1);
    m.vocab_hash = std::stoull(meta.at("vocab_hash").get<std::string>(), nullptr, 16);
    m.kb_hash = std::stoull(meta.at("kb_hash").get<std::string>(), nullptr, 16);
    m.adapted = meta.value("adapted", false);
    nn::load_checkpoint(dir, m.params);
    if (m.params.size() != probe.size())
        throw std::runtime_error("extractor checkpoint parameter set mismatch");
    return m;
}

}  // namespace semcom::extractor
