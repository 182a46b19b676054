#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace semcom {

// Word-level vocabulary with reserved special ids.
class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kStart = 1;
    static constexpr int kEnd = 2;
    static constexpr int kUnknown = 3;

    Vocabulary();

    // Adds a token if absent, returns its id.
    int add(const std::string& token);
    // Returns the token id or kUnknown.
    int id_of(const std::string& token) const;
    bool contains(const std::string& token) const { return token_to_id_.count(token) > 0; }
    const std::string& token_of(int id) const;

    int size() const { return static_cast<int>(id_to_token_.size()); }
    uint64_t hash() const;

    const std::vector<std::string>& tokens() const { return id_to_token_; }

private:
    std::unordered_map<std::string, int> token_to_id_;
    std::vector<std::string> id_to_token_;
};

// Fixed-length (N) padded token rendering of one sentence.
struct TokenSequence {
    std::vector<int> ids;  // length N, pad-filled past true_length
    int true_length = 0;   // count of non-pad ids

    int capacity() const { return static_cast<int>(ids.size()); }
};

struct FactTriple {
    std::string head;
    std::string relation;
    std::string tail;

    bool operator==(const FactTriple& o) const = default;
    std::string key() const;
};

// Trim, collapse whitespace runs, and unify '_' with ' '. Triple fields and
// entity names are always stored in this normalized form.
std::string normalize_surface(const std::string& s);

// Indexed store of unique triples. Triple position i is the label index of
// the multi-label classifier, so insertion order is part of the contract.
class KnowledgeBase {
public:
    // Appends if absent; returns the (existing or new) index.
    int add(const FactTriple& raw);
    std::optional<int> find(const FactTriple& raw) const;
    bool has_entity(const std::string& name) const;
    std::optional<int> entity_index(const std::string& name) const;
    std::optional<int> relation_index(const std::string& name) const;
    // All triples with the given ordered (head, tail) pair, any relation.
    std::vector<int> triples_between(const std::string& head, const std::string& tail) const;

    int size() const { return static_cast<int>(triples_.size()); }  // n_t
    const std::vector<FactTriple>& triples() const { return triples_; }
    const std::vector<std::string>& entities() const { return entities_; }
    const std::vector<std::string>& relations() const { return relations_; }

    uint64_t hash() const;

    void save_jsonl(const std::string& path) const;
    static KnowledgeBase load_jsonl(const std::string& path);

private:
    std::vector<FactTriple> triples_;
    std::vector<std::string> entities_;
    std::vector<std::string> relations_;
    std::unordered_map<std::string, int> triple_index_;
    std::unordered_map<std::string, int> entity_index_;
    std::unordered_map<std::string, int> relation_index_;
};

struct DataPair {
    std::string text;
    TokenSequence tokens;
    std::vector<FactTriple> gold_triples;
    std::vector<std::string> gold_entities;  // heads + tails, first-seen order
};

struct CorpusSplit {
    std::vector<DataPair> train;
    std::vector<DataPair> test;
    Vocabulary vocab;  // built from the train split only
};

struct VocabPolicy {
    int max_len = 32;           // N
    double test_fraction = 0.1; // used only when loading a single file
    uint64_t split_seed = 1;
};

// Lowercase, split on whitespace/underscores; punctuation becomes single-char tokens.
std::vector<std::string> tokenize(const std::string& text);

// start + tokens + end, padded/truncated to N. N >= 3 required.
TokenSequence encode_text(const std::string& text, const Vocabulary& vocab, int max_len);

// Strips start/end/pad, joins with single spaces.
std::string decode_tokens(const TokenSequence& seq, const Vocabulary& vocab);

// Token list with start/end/pad stripped (the unit BLEU operates on).
std::vector<int> content_ids(const TokenSequence& seq);

// `path` is either a directory holding train.jsonl/test.jsonl or a single
// JSONL file split deterministically by policy. Each record:
//   {"text": "...", "triples": [["head","relation","tail"], ...]}
CorpusSplit load_corpus(const std::string& path, const VocabPolicy& policy);

// Union of all gold triples across pairs, first-seen order.
KnowledgeBase kb_build(const std::vector<DataPair>& pairs);

int kb_add(KnowledgeBase& kb, const FactTriple& triple);

// 0/1 vector of length kb.size(); throws if a gold triple is missing (stale kb).
std::vector<double> labels_for(const DataPair& pair, const KnowledgeBase& kb);

}  // namespace semcom
