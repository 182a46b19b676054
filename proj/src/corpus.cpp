#include "semcom/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

#include "semcom/util.hpp"

namespace semcom {

using nlohmann::json;

Vocabulary::Vocabulary() {
    // Reserved ids must stay stable across runs; everything else is appended.
    add("<pad>");
    add("<start>");
    add("<end>");
    add("<unk>");
}

int Vocabulary::add(const std::string& token) {
    auto it = token_to_id_.find(token);
    if (it != token_to_id_.end()) return it->second;
    int id = static_cast<int>(id_to_token_.size());
    token_to_id_.emplace(token, id);
    id_to_token_.push_back(token);
    return id;
}

int Vocabulary::id_of(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnknown : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of size " + std::to_string(size()));
    return id_to_token_[id];
}

uint64_t Vocabulary::hash() const {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& t : id_to_token_) {
        h = fnv1a(t, h);
        h = fnv1a("\n", h);
    }
    return h;
}

std::string normalize_surface(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (char c : s) {
        if (c == '_' || std::isspace(static_cast<unsigned char>(c))) {
            pending_space = !out.empty();
        } else {
            if (pending_space) out.push_back(' ');
            pending_space = false;
            out.push_back(c);
        }
    }
    return out;
}

std::string FactTriple::key() const {
    return normalize_surface(head) + '\x1f' + normalize_surface(relation) + '\x1f' + normalize_surface(tail);
}

int KnowledgeBase::add(const FactTriple& raw) {
    FactTriple t{normalize_surface(raw.head), normalize_surface(raw.relation), normalize_surface(raw.tail)};
    if (t.head.empty() || t.relation.empty() || t.tail.empty())
        throw std::invalid_argument("triple with empty field: (" + raw.head + ", " + raw.relation + ", " + raw.tail + ")");
    auto it = triple_index_.find(t.key());
    if (it != triple_index_.end()) return it->second;

    int index = static_cast<int>(triples_.size());
    triple_index_.emplace(t.key(), index);
    for (const auto* e : {&t.head, &t.tail}) {
        if (!entity_index_.count(*e)) {
            entity_index_.emplace(*e, static_cast<int>(entities_.size()));
            entities_.push_back(*e);
        }
    }
    if (!relation_index_.count(t.relation)) {
        relation_index_.emplace(t.relation, static_cast<int>(relations_.size()));
        relations_.push_back(t.relation);
    }
    triples_.push_back(std::move(t));
    return index;
}

std::optional<int> KnowledgeBase::find(const FactTriple& raw) const {
    auto it = triple_index_.find(raw.key());
    if (it == triple_index_.end()) return std::nullopt;
    return it->second;
}

bool KnowledgeBase::has_entity(const std::string& name) const {
    return entity_index_.count(normalize_surface(name)) > 0;
}

std::optional<int> KnowledgeBase::entity_index(const std::string& name) const {
    auto it = entity_index_.find(normalize_surface(name));
    if (it == entity_index_.end()) return std::nullopt;
    return it->second;
}

std::optional<int> KnowledgeBase::relation_index(const std::string& name) const {
    auto it = relation_index_.find(normalize_surface(name));
    if (it == relation_index_.end()) return std::nullopt;
    return it->second;
}

std::vector<int> KnowledgeBase::triples_between(const std::string& head, const std::string& tail) const {
    std::string h = normalize_surface(head), t = normalize_surface(tail);
    std::vector<int> out;
    for (int i = 0; i < size(); ++i) {
        if (triples_[i].head == h && triples_[i].tail == t) out.push_back(i);
    }
    return out;
}

uint64_t KnowledgeBase::hash() const {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& t : triples_) {
        h = fnv1a(t.key(), h);
        h = fnv1a("\n", h);
    }
    return h;
}

void KnowledgeBase::save_jsonl(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    for (const auto& t : triples_) {
        json j = json::array({t.head, t.relation, t.tail});
        out << j.dump() << '\n';
    }
}

KnowledgeBase KnowledgeBase::load_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open knowledge base file " + path);
    KnowledgeBase kb;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (!j.is_array() || j.size() != 3)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": triple must be a 3-element array");
        kb.add({j[0].get<std::string>(), j[1].get<std::string>(), j[2].get<std::string>()});
    }
    return kb;
}

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            tokens.push_back(cur);
            cur.clear();
        }
    };
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (std::isspace(c) || c == '_') {
            flush();
        } else {
            flush();
            tokens.push_back(std::string(1, static_cast<char>(c)));
        }
    }
    flush();
    return tokens;
}

TokenSequence encode_text(const std::string& text, const Vocabulary& vocab, int max_len) {
    if (max_len < 3) throw std::invalid_argument("max_len must be >= 3, got " + std::to_string(max_len));
    auto words = tokenize(text);
    if (words.empty()) throw std::invalid_argument("cannot encode empty text");
    if (static_cast<int>(words.size()) > max_len - 2) words.resize(max_len - 2);

    TokenSequence seq;
    seq.ids.assign(max_len, Vocabulary::kPad);
    int pos = 0;
    seq.ids[pos++] = Vocabulary::kStart;
    for (const auto& w : words) seq.ids[pos++] = vocab.id_of(w);
    seq.ids[pos++] = Vocabulary::kEnd;
    seq.true_length = pos;
    return seq;
}

std::string decode_tokens(const TokenSequence& seq, const Vocabulary& vocab) {
    std::string out;
    for (int id : seq.ids) {
        if (id == Vocabulary::kPad || id == Vocabulary::kStart || id == Vocabulary::kEnd) continue;
        if (id >= vocab.size()) throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of size " + std::to_string(vocab.size()));
        if (!out.empty()) out.push_back(' ');
        out += vocab.token_of(id);
    }
    return out;
}

std::vector<int> content_ids(const TokenSequence& seq) {
    std::vector<int> out;
    for (int id : seq.ids) {
        if (id == Vocabulary::kPad || id == Vocabulary::kStart || id == Vocabulary::kEnd) continue;
        out.push_back(id);
    }
    return out;
}

namespace {

struct RawPair {
    std::string text;
    std::vector<FactTriple> triples;
};

std::vector<RawPair> parse_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open corpus file " + path);
    std::vector<RawPair> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed JSON: " + e.what());
        }
        if (!j.contains("text") || !j["text"].is_string())
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": record is missing a \"text\" string field");
        RawPair p;
        p.text = j["text"].get<std::string>();
        if (j.contains("triples")) {
            if (!j["triples"].is_array())
                throw std::runtime_error(path + ":" + std::to_string(lineno) + ": \"triples\" must be an array");
            for (const auto& t : j["triples"]) {
                if (!t.is_array() || t.size() != 3)
                    throw std::runtime_error(path + ":" + std::to_string(lineno) + ": triple must have exactly 3 elements");
                p.triples.push_back({t[0].get<std::string>(), t[1].get<std::string>(), t[2].get<std::string>()});
            }
        }
        out.push_back(std::move(p));
    }
    return out;
}

DataPair make_pair(const RawPair& raw, const Vocabulary& vocab, int max_len) {
    DataPair p;
    p.text = raw.text;
    p.tokens = encode_text(raw.text, vocab, max_len);
    std::unordered_set<std::string> seen;
    for (const auto& t : raw.triples) {
        FactTriple norm{normalize_surface(t.head), normalize_surface(t.relation), normalize_surface(t.tail)};
        if (norm.head.empty() || norm.relation.empty() || norm.tail.empty())
            throw std::runtime_error("triple with empty field in record: " + raw.text);
        p.gold_triples.push_back(norm);
        for (const auto* e : {&norm.head, &norm.tail}) {
            if (seen.insert(*e).second) p.gold_entities.push_back(*e);
        }
    }
    return p;
}

}  // namespace

CorpusSplit load_corpus(const std::string& path, const VocabPolicy& policy) {
    namespace fs = std::filesystem;
    if (!fs::exists(path)) throw std::runtime_error("corpus path does not exist: " + path);

    std::vector<RawPair> train_raw, test_raw;
    if (fs::is_directory(path)) {
        train_raw = parse_jsonl((fs::path(path) / "train.jsonl").string());
        test_raw = parse_jsonl((fs::path(path) / "test.jsonl").string());
    } else {
        auto all = parse_jsonl(path);
        // Deterministic shuffled split; test records drawn from the tail.
        std::vector<size_t> order(all.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        auto rng = make_rng(policy.split_seed, {label("corpus-split")});
        std::shuffle(order.begin(), order.end(), rng);
        size_t n_test = static_cast<size_t>(all.size() * policy.test_fraction);
        for (size_t i = 0; i < order.size(); ++i) {
            (i + n_test < order.size() ? train_raw : test_raw).push_back(std::move(all[order[i]]));
        }
    }
    if (train_raw.empty()) throw std::runtime_error("corpus has no training records: " + path);

    // Train/test must stay disjoint by text.
    std::unordered_set<std::string> train_texts;
    for (const auto& r : train_raw) train_texts.insert(r.text);
    std::erase_if(test_raw, [&](const RawPair& r) { return train_texts.count(r.text) > 0; });

    CorpusSplit split;
    for (const auto& r : train_raw)
        for (const auto& w : tokenize(r.text)) split.vocab.add(w);

    for (const auto& r : train_raw) split.train.push_back(make_pair(r, split.vocab, policy.max_len));
    for (const auto& r : test_raw) split.test.push_back(make_pair(r, split.vocab, policy.max_len));
    return split;
}

KnowledgeBase kb_build(const std::vector<DataPair>& pairs) {
    if (pairs.empty()) throw std::invalid_argument("kb_build needs a nonempty pair list");
    KnowledgeBase kb;
    for (const auto& p : pairs)
        for (const auto& t : p.gold_triples) kb.add(t);
    return kb;
}

int kb_add(KnowledgeBase& kb, const FactTriple& triple) { return kb.add(triple); }

std::vector<double> labels_for(const DataPair& pair, const KnowledgeBase& kb) {
    std::vector<double> labels(kb.size(), 0.0);
    for (const auto& t : pair.gold_triples) {
        auto idx = kb.find(t);
        if (!idx) throw std::runtime_error("gold triple (" + t.head + ", " + t.relation + ", " + t.tail + ") missing from knowledge base; stale kb");
        labels[*idx] = 1.0;
    }
    return labels;
}

}  // namespace semcom
