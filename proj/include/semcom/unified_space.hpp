#pragma once

#include <optional>
#include <unordered_map>
#include <string>
#include <utility>
#include <vector>

#include "semcom/extractor.hpp"
#include "semcom/jscc.hpp"

namespace semcom::unified {

using ad::Mat;
using Vec = Eigen::RowVectorXd;

enum class DistanceKind { euclidean, cosine };

DistanceKind distance_kind_from_string(const std::string& s);
std::string to_string(DistanceKind k);

// Shared embedding space for kb entities and channel-decoded signals.
// Entities seen at construction live in an embedding table initialized from
// the mean token embedding of their name; entities added to the kb later fall
// back to that same compositional embedding, so the space keeps working while
// the kb evolves. Parameter names: etable, eproj.*, wh.*, embed (frozen copy).
struct UnifiedSpace {
    int d = 128;
    DistanceKind kind = DistanceKind::euclidean;
    double lambda = 1.16;  // retrieval threshold, inclusive
    uint64_t vocab_hash = 0;
    uint64_t kb_hash = 0;  // kb identity at construction
    std::vector<std::string> entity_names;  // etable row order
    Vocabulary vocab;  // stored so the compositional fallback works standalone
    nn::ParamStore params;

    UnifiedSpace() : params(1) {}
    UnifiedSpace(const jscc::JsccModel& codec, const Vocabulary& vocab, const KnowledgeBase& kb,
                 int d, uint64_t init_seed);

    std::optional<int> table_row(const std::string& entity) const;
    void rebuild_row_index();

    void save(const std::string& dir) const;
    static UnifiedSpace load(const std::string& dir);

private:
    std::unordered_map<std::string, int> entity_row_;
};

// Relation classifier over ordered entity-embedding pairs; the last label is
// the dedicated no-relation class. Parameter names: rel.w1/b1/w2/b2.
struct RelationPredictor {
    int d = 128;       // entity embedding width (input is 2d)
    int hidden = 128;
    std::vector<std::string> relation_names;  // no-relation label sits at index size()
    nn::ParamStore params;

    RelationPredictor() : params(1) {}
    RelationPredictor(const KnowledgeBase& kb, int d, int hidden, uint64_t init_seed);

    int no_relation_index() const { return static_cast<int>(relation_names.size()); }

    void save(const std::string& dir) const;
    static RelationPredictor load(const std::string& dir);
};

struct ContrastiveConfig {
    int d = 128;         // space dimension
    int K = 63;          // negatives per sample
    double tau = 0.2;    // temperature
    double lr = 1e-3;
    int epochs = 10;
    uint64_t seed = 1;
    double train_snr_db = 0.0;
    ChannelKind channel = ChannelKind::awgn;
    double norm_reg = 0.01;  // (|v|^2 - 1)^2 penalty keeping lambda calibrated
    std::string checkpoint_dir;
    std::string log_csv;
};

struct ContrastiveTrainResult {
    UnifiedSpace space;
    std::vector<double> epoch_losses;
};

struct RelPredConfig {
    int hidden = 128;
    double lr = 1e-3;
    int epochs = 50;
    int batch_size = 32;
    int neg_ratio = 1;  // sampled non-edges per positive; higher favors "no relation"
    uint64_t seed = 1;
    std::string checkpoint_dir;
    std::string log_csv;
};

struct RelPredTrainResult {
    RelationPredictor predictor;
    std::vector<double> epoch_losses;
};

// Entity embedding v_e: table row (training-time entities) or compositional
// fallback (later additions), projected to R^d. Unknown to the kb: error.
Vec embed_entity(const std::string& entity, const UnifiedSpace& space, const KnowledgeBase& kb);

// v_h = W_h . mean(h_hat rows) + b_h.
Vec map_received(const Mat& h_hat, const UnifiedSpace& space);

double distance(const Vec& u, const Vec& v, DistanceKind kind);

// Every kb entity within lambda of v_h (inclusive), kb entity order.
std::vector<std::string> retrieve_entities(const Vec& v_h, const KnowledgeBase& kb,
                                           const UnifiedSpace& space);

// Softmax over relation labels plus no-relation, ordered (head, tail).
std::vector<double> relation_probs(const std::string& e_p, const std::string& e_q,
                                   const RelationPredictor& pred, const UnifiedSpace& space,
                                   const KnowledgeBase& kb);

// Argmax label; none when no-relation wins. Ties resolve to the lowest index.
std::optional<std::string> predict_relation(const std::string& e_p, const std::string& e_q,
                                            const RelationPredictor& pred,
                                            const UnifiedSpace& space, const KnowledgeBase& kb);

// Ordered entity pairs in kb order: existing triples join {m}; missing pairs
// with a predicted relation are added to the kb, {m}, and new_triples.
struct AssembledTriples {
    std::vector<FactTriple> m;
    std::vector<FactTriple> new_triples;
};
AssembledTriples assemble_triples(const std::vector<std::string>& entities, KnowledgeBase& kb,
                                  const RelationPredictor& pred, const UnifiedSpace& space);

// -log of the positive's share among K+1 tempered similarities.
double infonce_loss(const Vec& v_h, const Vec& v_pos, const std::vector<Vec>& v_negs, double tau);

// Algorithm-style contrastive training through the frozen codec and channel.
// Pairs without gold entities are skipped with a warning.
ContrastiveTrainResult train_unified_space(jscc::JsccModel& codec, const CorpusSplit& corpus,
                                           const KnowledgeBase& kb, const ContrastiveConfig& cfg);

// Mean InfoNCE over a pair list under fixed noise/sampling streams.
double eval_contrastive_loss(jscc::JsccModel& codec, const UnifiedSpace& space,
                             const std::vector<DataPair>& pairs, const Vocabulary& vocab,
                             const KnowledgeBase& kb, const ContrastiveConfig& cfg,
                             uint64_t eval_seed);

// Relation predictor training: kb triples as positives, uniformly sampled
// non-edges as no-relation negatives (1:1), CE loss, frozen space.
RelPredTrainResult train_relation_predictor(const UnifiedSpace& space, const KnowledgeBase& kb,
                                            const RelPredConfig& cfg);

// Evolving receive: map the decoded signal into the space, retrieve nearby
// entities, assemble (and grow) kb triples, then decode with the knowledge
// row. knowledge_decoder supplies the knowledge projection and the tuned
// receiver decoder; without one the decode falls back to the plain codec.
TokenSequence receive_with_evolving_kg(const SymbolBlock& y, jscc::JsccModel& codec,
                                       const UnifiedSpace& space, const RelationPredictor& pred,
                                       KnowledgeBase& kb, const Vocabulary& vocab,
                                       extractor::ExtractorModel* knowledge_decoder = nullptr);

// CSV dump of sample signals (tag "sample") and entity embeddings (tag
// "related" when the entity is gold for any dumped sample, else
// "irrelevant"). Header: tag,name,c0..c{d-1}.
struct DumpSample {
    std::string name;
    Vec v_h;
    std::vector<std::string> gold_entities;
};
void dump_embeddings(const UnifiedSpace& space, const KnowledgeBase& kb,
                     const std::vector<DumpSample>& samples, const std::string& path);

}  // namespace semcom::unified
