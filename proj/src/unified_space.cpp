#include "semcom/unified_space.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "semcom/util.hpp"

namespace semcom::unified {

namespace {

using ad::Tape;
using ad::Var;
using jscc::graph::embed_sequences;
using jscc::graph::encoder_stack;
using jscc::graph::pad_mask;
using jscc::graph::transmit_decode;

Vec compositional_embedding(const std::string& name, const Vocabulary& vocab, const Mat& embed) {
    Vec acc = Vec::Zero(embed.cols());
    auto toks = tokenize(name);
    for (const auto& tok : toks) acc += embed.row(vocab.id_of(tok));
    if (!toks.empty()) acc /= static_cast<double>(toks.size());
    return acc;
}

Vec affine(const Vec& x, const Mat& w, const Mat& b) { return (x * w) + b.row(0); }

std::vector<double> softmax_row(Eigen::RowVectorXd logits) {
    logits.array() -= logits.maxCoeff();
    Eigen::RowVectorXd e = logits.array().exp();
    e /= e.sum();
    return {e.data(), e.data() + e.size()};
}

// Frozen single-sentence pass through codec and channel.
Var decoded_signal(nn::ParamBinder& bj, const nn::ModelConfig& cfg, const TokenSequence& s,
                   const ChannelConfig& chan, std::mt19937_64& chan_rng) {
    std::vector<const TokenSequence*> batch{&s};
    Mat mask = pad_mask(batch, cfg.max_len);
    Var h = encoder_stack(bj, cfg, embed_sequences(bj, cfg, batch), 1, cfg.max_len, &mask, nullptr);
    return transmit_decode(bj, cfg, h, 1, chan, chan_rng);
}

}  // namespace

DistanceKind distance_kind_from_string(const std::string& s) {
    if (s == "euclidean") return DistanceKind::euclidean;
    if (s == "cosine") return DistanceKind::cosine;
    throw std::invalid_argument("unknown distance kind '" + s + "'");
}

std::string to_string(DistanceKind k) {
    return k == DistanceKind::euclidean ? "euclidean" : "cosine";
}

UnifiedSpace::UnifiedSpace(const jscc::JsccModel& codec, const Vocabulary& voc,
                           const KnowledgeBase& kb, int d_, uint64_t init_seed)
    : d(d_), vocab(voc), params(init_seed) {
    if (d < 2) throw std::invalid_argument("UnifiedSpace: d must be at least 2");
    if (vocab.size() != codec.vocab_size)
        throw std::invalid_argument("UnifiedSpace: vocabulary does not match the codec");
    const int d_model = codec.cfg.d_model;
    vocab_hash = vocab.hash();
    kb_hash = kb.hash();
    entity_names = kb.entities();

    params.create("embed", codec.vocab_size, d_model, nn::Init::zeros) =
        codec.params.get("embed");
    Mat& etable = params.create("etable", static_cast<Eigen::Index>(entity_names.size()), d_model,
                                nn::Init::zeros);
    for (size_t i = 0; i < entity_names.size(); ++i)
        etable.row(static_cast<Eigen::Index>(i)) =
            compositional_embedding(entity_names[i], vocab, params.get("embed"));
    nn::create_dense_params(params, "eproj", d_model, d);
    nn::create_dense_params(params, "wh", d_model, d);
    rebuild_row_index();
}

void UnifiedSpace::rebuild_row_index() {
    entity_row_.clear();
    for (size_t i = 0; i < entity_names.size(); ++i)
        entity_row_[entity_names[i]] = static_cast<int>(i);
}

std::optional<int> UnifiedSpace::table_row(const std::string& entity) const {
    auto it = entity_row_.find(entity);
    if (it == entity_row_.end()) return std::nullopt;
    return it->second;
}

Vec embed_entity(const std::string& entity, const UnifiedSpace& space, const KnowledgeBase& kb) {
    std::string name = normalize_surface(entity);
    if (!kb.has_entity(name))
        throw std::runtime_error("embed_entity: unknown entity '" + name + "'");
    Vec base;
    if (auto row = space.table_row(name)) {
        base = space.params.get("etable").row(*row);
    } else {
        // Entity joined the kb after training: compositional fallback.
        base = compositional_embedding(name, space.vocab, space.params.get("embed"));
    }
    return affine(base, space.params.get("eproj.w"), space.params.get("eproj.b"));
}

Vec map_received(const Mat& h_hat, const UnifiedSpace& space) {
    const Mat& w = space.params.get("wh.w");
    if (h_hat.cols() != w.rows() || h_hat.rows() < 1)
        throw std::invalid_argument("map_received: h_hat shape does not match the mapper");
    Vec mean = h_hat.colwise().mean();
    return affine(mean, w, space.params.get("wh.b"));
}

double distance(const Vec& u, const Vec& v, DistanceKind kind) {
    if (u.size() != v.size()) throw std::invalid_argument("distance: dimension mismatch");
    if (kind == DistanceKind::euclidean) return (u - v).norm();
    double nu = u.norm(), nv = v.norm();
    if (nu == 0.0 || nv == 0.0)
        throw std::invalid_argument("distance: cosine distance undefined for a zero vector");
    return 1.0 - u.dot(v) / (nu * nv);
}

std::vector<std::string> retrieve_entities(const Vec& v_h, const KnowledgeBase& kb,
                                           const UnifiedSpace& space) {
    std::vector<std::string> out;
    for (const auto& e : kb.entities())
        if (distance(v_h, embed_entity(e, space, kb), space.kind) <= space.lambda)
            out.push_back(e);
    return out;
}

std::vector<double> relation_probs(const std::string& e_p, const std::string& e_q,
                                   const RelationPredictor& pred, const UnifiedSpace& space,
                                   const KnowledgeBase& kb) {
    Vec vp = embed_entity(e_p, space, kb);
    Vec vq = embed_entity(e_q, space, kb);
    const Mat& w1 = pred.params.get("rel.w1");
    if (vp.size() + vq.size() != w1.rows())
        throw std::invalid_argument("relation_probs: embedding width does not match the predictor");
    Eigen::RowVectorXd x(w1.rows());
    x << vp, vq;
    Eigen::RowVectorXd hidden =
        ((x * w1) + pred.params.get("rel.b1").row(0)).cwiseMax(0.0);
    Eigen::RowVectorXd logits = (hidden * pred.params.get("rel.w2")) + pred.params.get("rel.b2").row(0);
    return softmax_row(logits);
}

std::optional<std::string> predict_relation(const std::string& e_p, const std::string& e_q,
                                            const RelationPredictor& pred,
                                            const UnifiedSpace& space, const KnowledgeBase& kb) {
    auto probs = relation_probs(e_p, e_q, pred, space, kb);
    Eigen::Map<const Eigen::RowVectorXd> row(probs.data(), static_cast<Eigen::Index>(probs.size()));
    int best = jscc::argmax_row(row);
    if (best == pred.no_relation_index()) return std::nullopt;
    return pred.relation_names[static_cast<size_t>(best)];
}

AssembledTriples assemble_triples(const std::vector<std::string>& entities, KnowledgeBase& kb,
                                  const RelationPredictor& pred, const UnifiedSpace& space) {
    std::set<int> indices;
    for (const auto& e : entities) {
        auto idx = kb.entity_index(normalize_surface(e));
        if (!idx) throw std::invalid_argument("assemble_triples: entity '" + e + "' not in kb");
        indices.insert(*idx);
    }
    AssembledTriples out;
    for (int p : indices) {
        for (int q : indices) {
            if (p == q) continue;
            const std::string& head = kb.entities()[static_cast<size_t>(p)];
            const std::string& tail = kb.entities()[static_cast<size_t>(q)];
            auto existing = kb.triples_between(head, tail);
            if (!existing.empty()) {
                for (int t : existing) out.m.push_back(kb.triples()[static_cast<size_t>(t)]);
            } else if (auto rel = predict_relation(head, tail, pred, space, kb)) {
                FactTriple fresh{head, *rel, tail};
                kb_add(kb, fresh);
                out.m.push_back(fresh);
                out.new_triples.push_back(fresh);
            }
        }
    }
    return out;
}

double infonce_loss(const Vec& v_h, const Vec& v_pos, const std::vector<Vec>& v_negs, double tau) {
    if (v_negs.empty()) throw std::invalid_argument("infonce_loss: at least one negative required");
    Mat negs(static_cast<Eigen::Index>(v_negs.size()), v_h.size());
    for (size_t i = 0; i < v_negs.size(); ++i) {
        if (v_negs[i].size() != v_h.size())
            throw std::invalid_argument("infonce_loss: negative dimension mismatch");
        negs.row(static_cast<Eigen::Index>(i)) = v_negs[i];
    }
    Tape t(false);
    return t.val(t.infonce(t.constant(v_h), t.constant(v_pos), t.constant(negs), tau))(0, 0);
}

namespace {

// Shared graph head: v_h against one positive and K negatives, plus the norm
// penalty that keeps embeddings near unit scale (so lambda stays meaningful).
Var contrastive_head(nn::ParamBinder& bs, Var h_hat, int max_len, int pos_row,
                     const std::vector<int>& neg_rows, const ContrastiveConfig& cfg) {
    Tape& t = bs.tape();
    const std::vector<double> ones(static_cast<size_t>(max_len), 1.0);
    Var vh = t.add_rowvec(t.matmul(t.mean_rows(h_hat, ones), bs["wh.w"]), bs["wh.b"]);
    Var pos = nn::dense(bs, "eproj", t.embedding(bs["etable"], {pos_row}));
    Var negs = nn::dense(bs, "eproj", t.embedding(bs["etable"], neg_rows));
    Var loss = t.infonce(vh, pos, negs, cfg.tau);
    if (cfg.norm_reg > 0.0) {
        Var all = t.concat_rows(t.concat_rows(vh, pos), negs);
        Var off = t.add_scalar(t.rows_sumsq(all), -1.0);
        loss = t.add(loss, t.scale(t.mean_all(t.hadamard(off, off)), cfg.norm_reg));
    }
    return loss;
}

struct SamplePlan {
    int pos_row = -1;
    std::vector<int> neg_rows;
};

// Positive defaults to a uniform gold pick; negatives are uniform over the
// non-gold table rows, drawn with replacement.
std::optional<SamplePlan> plan_sample(const DataPair& pair, const UnifiedSpace& space, int K,
                                      std::mt19937_64& rng) {
    if (pair.gold_entities.empty()) return std::nullopt;
    std::vector<int> gold_rows;
    for (const auto& g : pair.gold_entities) {
        auto row = space.table_row(normalize_surface(g));
        if (!row) throw std::invalid_argument("unified space is missing gold entity '" + g + "'");
        gold_rows.push_back(*row);
    }
    std::vector<int> pool;
    for (int i = 0; i < static_cast<int>(space.entity_names.size()); ++i)
        if (std::find(gold_rows.begin(), gold_rows.end(), i) == gold_rows.end())
            pool.push_back(i);
    if (pool.empty()) return std::nullopt;
    SamplePlan plan;
    plan.pos_row = gold_rows[rng() % gold_rows.size()];
    for (int k = 0; k < K; ++k) plan.neg_rows.push_back(pool[rng() % pool.size()]);
    return plan;
}

}  // namespace

ContrastiveTrainResult train_unified_space(jscc::JsccModel& codec, const CorpusSplit& corpus,
                                           const KnowledgeBase& kb, const ContrastiveConfig& cfg) {
    if (corpus.train.empty()) throw std::invalid_argument("train_unified_space: empty train split");
    if (cfg.K < 1) throw std::invalid_argument("train_unified_space: K must be at least 1");
    if (cfg.tau <= 0.0) throw std::invalid_argument("train_unified_space: tau must be positive");
    if (corpus.vocab.hash() != codec.vocab_hash)
        throw std::invalid_argument("train_unified_space: corpus vocabulary does not match codec");

    ContrastiveTrainResult res{UnifiedSpace(codec, corpus.vocab, kb, cfg.d, cfg.seed), {}};
    UnifiedSpace& space = res.space;
    const nn::ModelConfig& mcfg = codec.cfg;
    const ChannelConfig chan{cfg.channel, cfg.train_snr_db, 0};
    const nn::AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8};

    std::ostringstream csv;
    csv << "epoch,loss\n";
    auto save_state = [&] {
        if (!cfg.checkpoint_dir.empty()) space.save(cfg.checkpoint_dir);
        if (!cfg.log_csv.empty()) write_file(cfg.log_csv, csv.str());
    };

    std::vector<size_t> order(corpus.train.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto shuffle_rng =
            make_rng(cfg.seed, {label("space-shuffle"), static_cast<uint64_t>(epoch)});
        auto chan_rng = make_rng(cfg.seed, {label("space-noise"), static_cast<uint64_t>(epoch)});
        auto pick_rng = make_rng(cfg.seed, {label("space-neg"), static_cast<uint64_t>(epoch)});
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double epoch_loss = 0.0;
        int n_samples = 0;
        for (size_t idx : order) {
            const DataPair& pair = corpus.train[idx];
            auto plan = plan_sample(pair, space, cfg.K, pick_rng);
            if (!plan) {
                if (epoch == 0)
                    std::cerr << "train_unified_space: skipping pair without usable entities: "
                              << pair.text << "\n";
                continue;
            }
            try {
                Tape t(true);
                nn::ParamBinder bj(t, codec.params, false);
                nn::ParamBinder bs(t, space.params, true);
                bs.freeze_prefix("embed");
                Var h_hat = decoded_signal(bj, mcfg, pair.tokens, chan, chan_rng);
                Var loss =
                    contrastive_head(bs, h_hat, mcfg.max_len, plan->pos_row, plan->neg_rows, cfg);
                double lv = t.val(loss)(0, 0);
                if (!std::isfinite(lv)) throw std::runtime_error("non-finite loss");
                space.params.zero_grads();
                t.backward(loss);
                space.params.adam_step(adam);
                epoch_loss += lv;
                ++n_samples;
            } catch (const std::runtime_error& e) {
                save_state();
                throw std::runtime_error("unified space training diverged at epoch " +
                                         std::to_string(epoch + 1) + ": " + e.what() +
                                         (cfg.checkpoint_dir.empty() ? ""
                                                                     : "; last finite state saved"));
            }
        }
        if (n_samples == 0)
            throw std::invalid_argument("train_unified_space: no pair has usable gold entities");
        res.epoch_losses.push_back(epoch_loss / n_samples);
        csv << epoch + 1 << "," << format_fixed(res.epoch_losses.back(), 6) << "\n";
    }

    save_state();
    return res;
}

double eval_contrastive_loss(jscc::JsccModel& codec, const UnifiedSpace& space,
                             const std::vector<DataPair>& pairs, const Vocabulary& vocab,
                             const KnowledgeBase& kb, const ContrastiveConfig& cfg,
                             uint64_t eval_seed) {
    (void)vocab;
    (void)kb;
    const nn::ModelConfig& mcfg = codec.cfg;
    const ChannelConfig chan{cfg.channel, cfg.train_snr_db, 0};
    auto chan_rng = make_rng(eval_seed, {label("space-eval-noise")});
    double total = 0.0;
    int n = 0;
    for (size_t idx = 0; idx < pairs.size(); ++idx) {
        auto pick_rng = make_rng(eval_seed, {label("space-eval-neg"), idx});
        auto plan = plan_sample(pairs[idx], space, cfg.K, pick_rng);
        if (!plan) continue;
        Tape t(false);
        nn::ParamBinder bj(t, const_cast<nn::ParamStore&>(codec.params), false);
        nn::ParamBinder bs(t, const_cast<nn::ParamStore&>(space.params), false);
        Var h_hat = decoded_signal(bj, mcfg, pairs[idx].tokens, chan, chan_rng);
        ContrastiveConfig plain = cfg;
        plain.norm_reg = 0.0;  // report the bare InfoNCE objective
        Var loss = contrastive_head(bs, h_hat, mcfg.max_len, plan->pos_row, plan->neg_rows, plain);
        total += t.val(loss)(0, 0);
        ++n;
    }
    if (n == 0) throw std::invalid_argument("eval_contrastive_loss: no usable pairs");
    return total / n;
}

RelationPredictor::RelationPredictor(const KnowledgeBase& kb, int d_, int hidden_,
                                     uint64_t init_seed)
    : d(d_), hidden(hidden_), relation_names(kb.relations()), params(init_seed) {
    if (d < 1 || hidden < 1)
        throw std::invalid_argument("RelationPredictor: dimensions must be positive");
    const int n_labels = static_cast<int>(relation_names.size()) + 1;
    params.create("rel.w1", 2 * d, hidden, nn::Init::glorot);
    params.create("rel.b1", 1, hidden, nn::Init::zeros);
    params.create("rel.w2", hidden, n_labels, nn::Init::glorot);
    params.create("rel.b2", 1, n_labels, nn::Init::zeros);
}

RelPredTrainResult train_relation_predictor(const UnifiedSpace& space, const KnowledgeBase& kb,
                                            const RelPredConfig& cfg) {
    if (kb.size() == 0) throw std::invalid_argument("train_relation_predictor: empty kb");
    RelPredTrainResult res{RelationPredictor(kb, space.d, cfg.hidden, cfg.seed), {}};
    RelationPredictor& pred = res.predictor;

    // Entity embeddings are frozen features here.
    std::vector<Vec> emb;
    emb.reserve(kb.entities().size());
    for (const auto& e : kb.entities()) emb.push_back(embed_entity(e, space, kb));

    struct Example {
        int head, tail, label;
    };
    std::vector<Example> data;
    for (const auto& tr : kb.triples()) {
        int h = *kb.entity_index(tr.head);
        int t = *kb.entity_index(tr.tail);
        int r = *kb.relation_index(tr.relation);
        data.push_back({h, t, r});
    }
    const size_t n_pos = data.size();
    const size_t want = n_pos * static_cast<size_t>(1 + std::max(0, cfg.neg_ratio));
    auto neg_rng = make_rng(cfg.seed, {label("relpred-neg")});
    const int n_e = static_cast<int>(kb.entities().size());
    size_t attempts = 0;
    while (data.size() < want && attempts < 1000 * n_pos + 1000) {
        ++attempts;
        if (n_e < 2) break;
        int h = static_cast<int>(neg_rng() % n_e);
        int t = static_cast<int>(neg_rng() % n_e);
        if (h == t) continue;
        if (!kb.triples_between(kb.entities()[h], kb.entities()[t]).empty()) continue;
        data.push_back({h, t, pred.no_relation_index()});
    }
    if (data.size() < want)
        std::cerr << "train_relation_predictor: only " << data.size() - n_pos
                  << " non-edges available for " << n_pos << " positives\n";

    const nn::AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8};
    std::ostringstream csv;
    csv << "epoch,loss\n";
    std::vector<size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto shuffle_rng =
            make_rng(cfg.seed, {label("relpred-shuffle"), static_cast<uint64_t>(epoch)});
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_loss = 0.0;
        int n_batches = 0;
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            size_t end = std::min(order.size(), start + cfg.batch_size);
            Mat x(static_cast<Eigen::Index>(end - start), 2 * space.d);
            std::vector<int> targets;
            for (size_t i = start; i < end; ++i) {
                const Example& ex = data[order[i]];
                x.row(static_cast<Eigen::Index>(i - start)) << emb[ex.head], emb[ex.tail];
                targets.push_back(ex.label);
            }
            std::vector<double> weights(targets.size(), 1.0);
            try {
                Tape t(true);
                nn::ParamBinder bp(t, pred.params, true);
                Var hidden = t.relu(t.add_rowvec(t.matmul(t.constant(x), bp["rel.w1"]),
                                                 bp["rel.b1"]));
                Var logits = t.add_rowvec(t.matmul(hidden, bp["rel.w2"]), bp["rel.b2"]);
                Var loss = t.scale(t.cross_entropy(logits, targets, weights),
                                   1.0 / static_cast<double>(targets.size()));
                double lv = t.val(loss)(0, 0);
                if (!std::isfinite(lv)) throw std::runtime_error("non-finite loss");
                pred.params.zero_grads();
                t.backward(loss);
                pred.params.adam_step(adam);
                epoch_loss += lv;
                ++n_batches;
            } catch (const std::runtime_error& e) {
                if (!cfg.checkpoint_dir.empty()) pred.save(cfg.checkpoint_dir);
                throw std::runtime_error("relation predictor training diverged at epoch " +
                                         std::to_string(epoch + 1) + ": " + e.what());
            }
        }
        res.epoch_losses.push_back(epoch_loss / n_batches);
        csv << epoch + 1 << "," << format_fixed(res.epoch_losses.back(), 6) << "\n";
    }

    if (!cfg.checkpoint_dir.empty()) pred.save(cfg.checkpoint_dir);
    if (!cfg.log_csv.empty()) write_file(cfg.log_csv, csv.str());
    return res;
}

TokenSequence receive_with_evolving_kg(const SymbolBlock& y, jscc::JsccModel& codec,
                                       const UnifiedSpace& space, const RelationPredictor& pred,
                                       KnowledgeBase& kb, const Vocabulary& vocab,
                                       extractor::ExtractorModel* knowledge_decoder) {
    if (vocab.hash() != codec.vocab_hash)
        throw std::runtime_error("receive_with_evolving_kg: vocabulary mismatch with the codec");
    Mat h_hat = jscc::channel_decode(codec, y);
    Vec v_h = map_received(h_hat, space);
    auto entities = retrieve_entities(v_h, kb, space);
    AssembledTriples assembled;
    if (entities.size() >= 2) assembled = assemble_triples(entities, kb, pred, space);
    if (assembled.m.empty() || knowledge_decoder == nullptr)
        return jscc::semantic_decode(codec, h_hat);
    if (knowledge_decoder->vocab_hash != codec.vocab_hash)
        throw std::runtime_error("receive_with_evolving_kg: knowledge decoder vocabulary mismatch");
    Mat k = extractor::knowledge_embed(assembled.m, vocab, *knowledge_decoder);
    Mat memory = h_hat;
    Mat mask = Mat::Ones(1, memory.rows());
    jscc::append_knowledge(memory, mask, k);
    return jscc::greedy_decode(knowledge_decoder->params, knowledge_decoder->cfg,
                               knowledge_decoder->vocab_size, memory, mask);
}

void dump_embeddings(const UnifiedSpace& space, const KnowledgeBase& kb,
                     const std::vector<DumpSample>& samples, const std::string& path) {
    std::set<std::string> related;
    for (const auto& s : samples)
        for (const auto& g : s.gold_entities) related.insert(normalize_surface(g));

    std::ostringstream out;
    out << "tag,name";
    for (int i = 0; i < space.d; ++i) out << ",c" << i;
    out << "\n";
    auto write_row = [&](const std::string& tag, const std::string& name, const Vec& v) {
        if (v.size() != space.d)
            throw std::invalid_argument("dump_embeddings: vector width does not match the space");
        out << tag << "," << name;
        for (Eigen::Index i = 0; i < v.size(); ++i) out << "," << format_fixed(v(i), 6);
        out << "\n";
    };
    for (const auto& s : samples) write_row("sample", s.name, s.v_h);
    for (const auto& e : kb.entities())
        write_row(related.count(e) ? "related" : "irrelevant", e, embed_entity(e, space, kb));
    write_file(path, out.str());
}

void UnifiedSpace::save(const std::string& dir) const {
    nlohmann::json meta;
    meta["kind"] = "unified_space";
    meta["d"] = d;
    meta["lambda"] = lambda;
    meta["distance"] = to_string(kind);
    meta["vocab_hash"] = hex64(vocab_hash);
    meta["kb_hash"] = hex64(kb_hash);
    meta["entities"] = entity_names;
    meta["vocab_tokens"] = std::vector<std::string>(vocab.tokens().begin() + 4, vocab.tokens().end());
    nn::save_checkpoint(dir, params, meta);
}

UnifiedSpace UnifiedSpace::load(const std::string& dir) {
    UnifiedSpace s;
    nlohmann::json manifest = nn::load_checkpoint(dir, s.params);
    const auto& meta = manifest.at("meta");
    if (meta.value("kind", "") != "unified_space")
        throw std::runtime_error("checkpoint at " + dir + " is not a unified-space checkpoint");
    s.d = meta.at("d").get<int>();
    s.lambda = meta.at("lambda").get<double>();
    s.kind = distance_kind_from_string(meta.at("distance").get<std::string>());
    s.vocab_hash = std::stoull(meta.at("vocab_hash").get<std::string>(), nullptr, 16);
    s.kb_hash = std::stoull(meta.at("kb_hash").get<std::string>(), nullptr, 16);
    s.entity_names = meta.at("entities").get<std::vector<std::string>>();
    for (const auto& tok : meta.at("vocab_tokens").get<std::vector<std::string>>())
        s.vocab.add(tok);
    if (s.vocab.hash() != s.vocab_hash)
        throw std::runtime_error("unified-space checkpoint vocabulary is corrupt");
    if (static_cast<Eigen::Index>(s.entity_names.size()) != s.params.get("etable").rows())
        throw std::runtime_error("unified-space checkpoint entity list does not match the table");
    s.rebuild_row_index();
    return s;
}

void RelationPredictor::save(const std::string& dir) const {
    nlohmann::json meta;
    meta["kind"] = "relation_predictor";
    meta["d"] = d;
    meta["hidden"] = hidden;
    meta["relations"] = relation_names;
    nn::save_checkpoint(dir, params, meta);
}

RelationPredictor RelationPredictor::load(const std::string& dir) {
    RelationPredictor p;
    nlohmann::json manifest = nn::load_checkpoint(dir, p.params);
    const auto& meta = manifest.at("meta");
    if (meta.value("kind", "") != "relation_predictor")
        throw std::runtime_error("checkpoint at " + dir + " is not a relation-predictor checkpoint");
    p.d = meta.at("d").get<int>();
    p.hidden = meta.at("hidden").get<int>();
    p.relation_names = meta.at("relations").get<std::vector<std::string>>();
    return p;
}

}  // namespace semcom::unified
