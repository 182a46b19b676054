#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semcom/corpus.hpp"

namespace semcom::datagen {

// Deterministic synthetic cuisine world. Every sentence verbalizes one to
// three facts about a dish (ingredients, origin, flavor, drink pairing) or a
// country (capital, region), so the gold triples fully explain the text.
//
//   micro: 32 train sentences over 10 dishes, kb of exactly 50 triples
//   desk:  2000 train + 200 test sentences over 90 dishes, kb ~460 triples
struct GenSpec {
    std::string kind = "micro";  // micro | desk
    uint64_t seed = 1;
    int fixture_texts = 1000;  // augmentation fixture budget (desk only)
};

struct GeneratedCorpus {
    std::vector<DataPair> train;  // tokens left empty; encode at load time
    std::vector<DataPair> test;
};

GeneratedCorpus generate(const GenSpec& spec);

// Writes train.jsonl / test.jsonl / kb.jsonl and, for desk corpora,
// fixtures.jsonl (mock LLM responses covering every kb triple, padded with
// further train texts up to spec.fixture_texts entries).
void write_corpus(const std::string& out_dir, const GenSpec& spec);

}  // namespace semcom::datagen
