#include "semcom/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "semcom/util.hpp"

namespace semcom::eval {

using nlohmann::json;

ReceiverKind receiver_kind_from_string(const std::string& s) {
    if (s == "baseline") return ReceiverKind::baseline;
    if (s == "kg_static") return ReceiverKind::kg_static;
    if (s == "kg_evolving") return ReceiverKind::kg_evolving;
    throw std::invalid_argument("unknown receiver kind: " + s);
}

std::string to_string(ReceiverKind k) {
    switch (k) {
        case ReceiverKind::baseline: return "baseline";
        case ReceiverKind::kg_static: return "kg_static";
        case ReceiverKind::kg_evolving: return "kg_evolving";
    }
    throw std::logic_error("bad receiver kind");
}

namespace {

template <typename T>
double bleu1_impl(const std::vector<T>& ref, const std::vector<T>& hyp) {
    if (ref.empty()) throw std::invalid_argument("bleu1: empty reference");
    if (hyp.empty()) return 0.0;
    std::map<T, int> budget;
    for (const T& t : ref) ++budget[t];
    int clipped = 0;
    for (const T& t : hyp) {
        auto it = budget.find(t);
        if (it != budget.end() && it->second > 0) {
            ++clipped;
            --it->second;
        }
    }
    double precision = static_cast<double>(clipped) / static_cast<double>(hyp.size());
    double bp = std::exp(std::min(
        0.0, 1.0 - static_cast<double>(ref.size()) / static_cast<double>(hyp.size())));
    return precision * bp;
}

}  // namespace

double bleu1(const std::vector<int>& reference, const std::vector<int>& hypothesis) {
    return bleu1_impl(reference, hypothesis);
}

double bleu1(const std::vector<std::string>& reference,
             const std::vector<std::string>& hypothesis) {
    return bleu1_impl(reference, hypothesis);
}

double TfCosineScorer::score(const std::string& reference, const std::string& hypothesis) const {
    std::map<std::string, std::pair<double, double>> tf;
    for (const auto& t : tokenize(reference)) tf[t].first += 1.0;
    for (const auto& t : tokenize(hypothesis)) tf[t].second += 1.0;
    double dot = 0.0, nr = 0.0, nh = 0.0;
    for (const auto& [tok, c] : tf) {
        dot += c.first * c.second;
        nr += c.first * c.first;
        nh += c.second * c.second;
    }
    if (nr == 0.0 || nh == 0.0) return 0.0;
    return dot / (std::sqrt(nr) * std::sqrt(nh));
}

std::unique_ptr<SimilarityScorer> make_scorer(const std::string& name) {
    if (name == "tf") return std::make_unique<TfCosineScorer>();
    throw std::runtime_error("similarity scorer '" + name +
                             "' is not available in this build; set sweep.scorer=tf for the "
                             "offline term-frequency fallback");
}

PrecisionRecall precision_recall(const std::vector<FactTriple>& predicted,
                                 const std::vector<FactTriple>& gold) {
    auto keyset = [](const std::vector<FactTriple>& ts) {
        std::set<std::string> out;
        for (const auto& t : ts) {
            FactTriple n{normalize_surface(t.head), normalize_surface(t.relation),
                         normalize_surface(t.tail)};
            out.insert(n.key());
        }
        return out;
    };
    std::set<std::string> p = keyset(predicted), g = keyset(gold);
    std::vector<std::string> both;
    std::set_intersection(p.begin(), p.end(), g.begin(), g.end(), std::back_inserter(both));

    PrecisionRecall r;
    r.empty_prediction = p.empty();
    r.empty_gold = g.empty();
    if (!p.empty()) r.precision = static_cast<double>(both.size()) / static_cast<double>(p.size());
    if (!g.empty()) r.recall = static_cast<double>(both.size()) / static_cast<double>(g.size());
    return r;
}

namespace {

struct SentenceTrace {
    std::string decoded;
    double bleu = 0.0, sim = 0.0, prec = 0.0, rec = 0.0;
};

// One (receiver, snr point) aggregation over the eval sentences.
MetricsRow run_cell(const SweepConfig& cfg, const SweepModels& models, ReceiverKind kind,
                    size_t point_idx, const std::vector<const DataPair*>& sentences,
                    const CorpusSplit& corpus, const KnowledgeBase& kb,
                    const SimilarityScorer& scorer, std::vector<SentenceTrace>* traces) {
    const double snr = cfg.snr_points[point_idx];
    jscc::JsccModel& codec = *models.codec;
    extractor::ExtractorModel* ext = models.ext;
    if (kind == ReceiverKind::kg_static && cfg.snr_specific) ext = models.ext_by_snr.at(snr);

    KnowledgeBase live = kb;  // evolving receivers mutate a private clone
    ChannelConfig chan;
    chan.kind = cfg.channel;
    chan.snr_db = snr;

    MetricsRow row;
    row.receiver = kind;
    row.snr_db = snr;
    double sum_bleu = 0.0, sum_sim = 0.0, sum_prec = 0.0, sum_rec = 0.0;

    for (size_t si = 0; si < sentences.size(); ++si) {
        const DataPair& pair = *sentences[si];
        auto rng = make_rng(cfg.seed, {label("sweep-noise"), point_idx, si});
        SymbolBlock x = jscc::channel_encode(codec, jscc::semantic_encode(codec, pair.tokens));
        TransmitResult tr = transmit(x, chan, rng);
        SymbolBlock y = equalize(tr.received, tr.coeff);

        TokenSequence out;
        std::vector<FactTriple> predicted;
        switch (kind) {
            case ReceiverKind::baseline:
                out = jscc::semantic_decode(codec, jscc::channel_decode(codec, y));
                break;
            case ReceiverKind::kg_static: {
                out = extractor::receive_with_kg(y, codec, *ext, live, corpus.vocab);
                ad::Mat h_hat = jscc::channel_decode(codec, y);
                auto scores = extractor::score_triples(h_hat, *ext, live);
                predicted = extractor::select_triples(scores, live, 0.5);
                break;
            }
            case ReceiverKind::kg_evolving: {
                out = unified::receive_with_evolving_kg(y, codec, *models.space, *models.relpred,
                                                        live, corpus.vocab, models.ext);
                ad::Mat h_hat = jscc::channel_decode(codec, y);
                auto v_h = unified::map_received(h_hat, *models.space);
                auto ents = unified::retrieve_entities(v_h, live, *models.space);
                if (ents.size() >= 2) {
                    auto asm_res =
                        unified::assemble_triples(ents, live, *models.relpred, *models.space);
                    predicted = asm_res.m;
                }
                break;
            }
        }

        double b = bleu1(content_ids(pair.tokens), content_ids(out));
        std::string decoded = decode_tokens(out, corpus.vocab);
        double s = scorer.score(decode_tokens(pair.tokens, corpus.vocab), decoded);
        PrecisionRecall pr = precision_recall(predicted, pair.gold_triples);
        sum_bleu += b;
        sum_sim += s;
        sum_prec += pr.precision;
        sum_rec += pr.recall;
        if (traces) (*traces)[si] = {decoded, b, s, pr.precision, pr.recall};
    }

    row.n_sentences = static_cast<int>(sentences.size());
    if (row.n_sentences > 0) {
        row.bleu1 = sum_bleu / row.n_sentences;
        row.similarity = sum_sim / row.n_sentences;
        row.precision = sum_prec / row.n_sentences;
        row.recall = sum_rec / row.n_sentences;
    }
    return row;
}

}  // namespace

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
    std::ostringstream out;
    out << "receiver_kind,snr_db,bleu1,similarity,precision,recall,n_sentences\n";
    for (const auto& r : rows)
        out << to_string(r.receiver) << ',' << format_fixed(r.snr_db, 1) << ','
            << format_fixed(r.bleu1) << ',' << format_fixed(r.similarity) << ','
            << format_fixed(r.precision) << ',' << format_fixed(r.recall) << ','
            << r.n_sentences << '\n';
    return out.str();
}

std::vector<MetricsRow> run_snr_sweep(const SweepConfig& cfg, const SweepModels& models,
                                      const CorpusSplit& corpus, const KnowledgeBase& kb) {
    if (cfg.snr_points.empty()) throw std::invalid_argument("sweep needs at least one SNR point");
    if (cfg.receivers.empty()) throw std::invalid_argument("sweep needs at least one receiver");
    if (!models.codec) throw std::invalid_argument("sweep: no codec model");
    for (ReceiverKind k : cfg.receivers) {
        if (k == ReceiverKind::kg_static) {
            if (cfg.snr_specific) {
                for (double snr : cfg.snr_points)
                    if (!models.ext_by_snr.count(snr) || !models.ext_by_snr.at(snr))
                        throw std::invalid_argument(
                            "sweep: no SNR-specific extractor for " + format_fixed(snr, 1) +
                            " dB");
            } else if (!models.ext) {
                throw std::invalid_argument("sweep: kg_static requested without an extractor");
            }
        }
        if (k == ReceiverKind::kg_evolving && (!models.space || !models.relpred))
            throw std::invalid_argument(
                "sweep: kg_evolving requested without a unified space and relation predictor");
    }
    if (corpus.test.empty()) throw std::invalid_argument("sweep: empty test split");

    auto scorer = make_scorer(cfg.scorer);
    std::vector<const DataPair*> sentences;
    for (const auto& p : corpus.test) {
        sentences.push_back(&p);
        if (cfg.max_sentences > 0 && static_cast<int>(sentences.size()) >= cfg.max_sentences)
            break;
    }

    struct Cell {
        ReceiverKind kind;
        size_t point;
    };
    std::vector<Cell> cells;
    for (ReceiverKind k : cfg.receivers)
        for (size_t p = 0; p < cfg.snr_points.size(); ++p) cells.push_back({k, p});

    std::vector<MetricsRow> rows(cells.size());
    bool tracing = !cfg.trace_jsonl.empty();
    std::vector<std::vector<SentenceTrace>> traces;
    if (tracing) traces.assign(cells.size(), std::vector<SentenceTrace>(sentences.size()));

    unsigned budget = cfg.threads > 0 ? static_cast<unsigned>(cfg.threads)
                                      : std::max(1u, std::thread::hardware_concurrency());
    std::vector<std::thread> pool;
    std::atomic<size_t> next{0};
    auto worker = [&]() {
        for (size_t i = next.fetch_add(1); i < cells.size(); i = next.fetch_add(1))
            rows[i] = run_cell(cfg, models, cells[i].kind, cells[i].point, sentences, corpus, kb,
                               *scorer, tracing ? &traces[i] : nullptr);
    };
    unsigned n_workers = std::min<size_t>(budget, cells.size());
    if (n_workers <= 1) {
        worker();
    } else {
        for (unsigned t = 0; t < n_workers; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    if (!cfg.csv_path.empty()) write_file(cfg.csv_path, metrics_csv(rows));
    if (tracing) {
        std::ostringstream out;
        for (size_t i = 0; i < cells.size(); ++i) {
            for (size_t si = 0; si < sentences.size(); ++si) {
                const SentenceTrace& t = traces[i][si];
                json j{{"receiver", to_string(cells[i].kind)},
                       {"snr_db", cfg.snr_points[cells[i].point]},
                       {"sentence", si},
                       {"text", sentences[si]->text},
                       {"decoded", t.decoded},
                       {"bleu1", t.bleu},
                       {"similarity", t.sim},
                       {"precision", t.prec},
                       {"recall", t.rec}};
                out << j.dump() << '\n';
            }
        }
        write_file(cfg.trace_jsonl, out.str());
    }
    return rows;
}

}  // namespace semcom::eval
