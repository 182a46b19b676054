#pragma once

#include <string>
#include <vector>

#include "semcom/jscc.hpp"

namespace semcom::extractor {

using ad::Mat;
using ad::Var;

// Static knowledge receiver: its own encoder stack over the channel-decoded
// vectors, a multi-label classifier over the bound kb's triples, a knowledge
// projection, and receiver-side copies of the codec decoder tuned to read the
// knowledge row. Parameter names: xenc{i}.*, cls.*, kproj.*, embed, dec{i}.*,
// out.*.
struct ExtractorModel {
    nn::ModelConfig cfg;
    int vocab_size = 0;
    int n_t = 0;            // classifier width, bound to the kb
    uint64_t kb_hash = 0;   // kb identity at training time
    uint64_t vocab_hash = 0;
    bool adapted = false;   // decoder copies tuned to use knowledge
    nn::ParamStore params;

    // Fresh scorer parameters plus receiver-side copies of the codec's
    // embed/decoder/output parameters.
    ExtractorModel(const jscc::JsccModel& codec, const KnowledgeBase& kb, uint64_t init_seed);
    // All parameters freshly initialized (checkpoint loading path).
    ExtractorModel(const nn::ModelConfig& cfg, int vocab_size, int n_t, uint64_t init_seed);

    void save(const std::string& dir) const;
    static ExtractorModel load(const std::string& dir);
};

struct ExtractorTrainConfig {
    double w = 0.02;             // weighted BCE negative-class weight
    double train_snr_db = 0.0;
    ChannelKind channel = ChannelKind::awgn;
    int batch_size = 32;
    double lr = 1e-4;
    int epochs = 10;
    int adapt_epochs = 10;       // decoder-adaptation stage; 0 disables
    uint64_t seed = 1;
    std::string checkpoint_dir;
    std::string log_csv;
};

struct ExtractorTrainResult {
    ExtractorModel model;
    std::vector<double> epoch_losses;
    std::vector<double> epoch_precision;  // train split, threshold 0.5
    std::vector<double> epoch_recall;
    std::vector<double> adapt_losses;     // decoder-adaptation stage
};

// Weighted BCE on clamped probabilities; w_i = w for negative labels, 1-w
// for positives, normalized by the weight sum.
double weighted_bce(const std::vector<double>& labels, const std::vector<double>& scores, double w);

// Relevancy scores for every kb triple: encoder stack over h_hat, mean pool,
// sigmoid classifier. Throws when the kb no longer matches the classifier.
std::vector<double> score_triples(const Mat& h_hat, ExtractorModel& model, const KnowledgeBase& kb);

// kb triples whose score clears the threshold (inclusive), kb order.
std::vector<FactTriple> select_triples(const std::vector<double>& scores, const KnowledgeBase& kb,
                                       double threshold);

// Each triple rendered "head relation tail", token-embedded, mean-pooled per
// triple, mean-pooled across triples, then affine-projected to d_model.
// Empty list yields the zero matrix (the canonical no-knowledge value).
Mat knowledge_embed(const std::vector<FactTriple>& triples, const Vocabulary& vocab,
                    const Mat& embed_table, const Mat& proj_w, const Mat& proj_b);

// Convenience path through a model's own embed/kproj parameters.
Mat knowledge_embed(const std::vector<FactTriple>& triples, const Vocabulary& vocab,
                    ExtractorModel& model);

// Stage 1 trains the scorer through the frozen codec and channel (weighted
// BCE); stage 2 tunes the receiver-side decoder copies plus the
// knowledge projection against the scorer's own threshold-0.5 selections.
// The codec is never mutated.
ExtractorTrainResult train_extractor(jscc::JsccModel& codec, const CorpusSplit& corpus,
                                     const KnowledgeBase& kb, const ExtractorTrainConfig& cfg);

// Algorithm-style static receive: channel decode, score, select at 0.5,
// embed knowledge, decode with the extractor's receiver-side decoder.
TokenSequence receive_with_kg(const SymbolBlock& y, jscc::JsccModel& codec,
                              ExtractorModel& model, const KnowledgeBase& kb,
                              const Vocabulary& vocab);

}  // namespace semcom::extractor
