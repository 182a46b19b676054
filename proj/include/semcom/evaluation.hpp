#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "semcom/corpus.hpp"
#include "semcom/extractor.hpp"
#include "semcom/jscc.hpp"
#include "semcom/unified_space.hpp"

namespace semcom::eval {

enum class ReceiverKind { baseline, kg_static, kg_evolving };

ReceiverKind receiver_kind_from_string(const std::string& s);
std::string to_string(ReceiverKind k);

// One aggregated line of an SNR sweep.
struct MetricsRow {
    ReceiverKind receiver = ReceiverKind::baseline;
    double snr_db = 0.0;
    double bleu1 = 0.0;
    double similarity = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    int n_sentences = 0;
};

// Unigram precision with per-token clipping times the brevity penalty
// exp(min(0, 1 - |ref|/|hyp|)). Empty hypothesis scores 0; empty reference
// is rejected.
double bleu1(const std::vector<int>& reference, const std::vector<int>& hypothesis);
double bleu1(const std::vector<std::string>& reference, const std::vector<std::string>& hypothesis);

class SimilarityScorer {
public:
    virtual ~SimilarityScorer() = default;
    virtual double score(const std::string& reference, const std::string& hypothesis) const = 0;
};

// Cosine over term-frequency vectors: the deterministic offline stand-in for
// an external sentence-embedding service.
class TfCosineScorer final : public SimilarityScorer {
public:
    double score(const std::string& reference, const std::string& hypothesis) const override;
};

// "tf" is the only built-in; other names raise an error telling the caller
// how to fall back.
std::unique_ptr<SimilarityScorer> make_scorer(const std::string& name);

struct PrecisionRecall {
    double precision = 1.0;
    double recall = 1.0;
    bool empty_prediction = false;  // precision pinned to 1.0 by convention
    bool empty_gold = false;        // recall pinned to 1.0 by convention
};

// Set semantics after surface normalization; duplicates collapse.
PrecisionRecall precision_recall(const std::vector<FactTriple>& predicted,
                                 const std::vector<FactTriple>& gold);

struct SweepConfig {
    std::vector<double> snr_points{-4, -2, 0, 2, 4};
    ChannelKind channel = ChannelKind::awgn;
    std::vector<ReceiverKind> receivers{ReceiverKind::baseline};
    // When set, kg_static picks the extractor trained for the sweep point
    // from SweepModels::ext_by_snr instead of the fixed one.
    bool snr_specific = false;
    uint64_t seed = 1;
    std::string scorer = "tf";
    int max_sentences = 0;  // 0: the whole test split
    int threads = 0;        // 0: one task per (receiver, snr) up to hardware
    std::string csv_path;     // empty: no CSV written
    std::string trace_jsonl;  // empty: no per-sentence trace
};

// Non-owning handles to whatever the requested receivers need.
struct SweepModels {
    jscc::JsccModel* codec = nullptr;
    extractor::ExtractorModel* ext = nullptr;
    std::map<double, extractor::ExtractorModel*> ext_by_snr;
    unified::UnifiedSpace* space = nullptr;
    unified::RelationPredictor* relpred = nullptr;
};

// Decodes the test split once per (receiver, SNR) pair under paired noise:
// the channel draw for sentence i at sweep point p is identical for every
// receiver. Evolving receivers run on a private kb clone per pair. Rows come
// back receiver-major in config order; CSV bytes are deterministic given the
// seed. Missing models for a requested receiver fail before any transmission.
std::vector<MetricsRow> run_snr_sweep(const SweepConfig& cfg, const SweepModels& models,
                                      const CorpusSplit& corpus, const KnowledgeBase& kb);

std::string metrics_csv(const std::vector<MetricsRow>& rows);

}  // namespace semcom::eval
