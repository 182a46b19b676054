#include "semcom/datagen.hpp"

#include <filesystem>
#include <set>

#include "doctest.h"
#include "semcom/augment.hpp"
#include "semcom/util.hpp"

using namespace semcom;

TEST_CASE("micro corpus: fixed sizes, derived entities, deterministic") {
    datagen::GenSpec spec;
    spec.kind = "micro";
    auto g1 = datagen::generate(spec);
    auto g2 = datagen::generate(spec);

    CHECK(g1.train.size() == 32);
    CHECK(g1.test.size() == 4);
    CHECK(kb_build(g1.train).size() == 50);

    std::set<std::string> train_texts;
    for (const auto& p : g1.train) train_texts.insert(p.text);
    CHECK(train_texts.size() == 32);  // unique
    for (const auto& p : g1.test) CHECK(train_texts.count(p.text) == 0);

    for (size_t i = 0; i < g1.train.size(); ++i) {
        CHECK(g1.train[i].text == g2.train[i].text);
        CHECK(g1.train[i].gold_triples == g2.train[i].gold_triples);
    }

    for (const auto& p : g1.train) {
        REQUIRE_FALSE(p.gold_triples.empty());
        std::set<std::string> expect;
        for (const auto& t : p.gold_triples) {
            expect.insert(t.head);
            expect.insert(t.tail);
        }
        std::set<std::string> got(p.gold_entities.begin(), p.gold_entities.end());
        CHECK(got == expect);
        CHECK(tokenize(p.text).size() <= 14);  // start/end still fit N=16
    }
}

TEST_CASE("desk corpus: split sizes, disjointness, seed sensitivity") {
    datagen::GenSpec spec;
    spec.kind = "desk";
    spec.seed = 1;
    auto g = datagen::generate(spec);
    CHECK(g.train.size() == 2000);
    CHECK(g.test.size() == 200);

    std::set<std::string> texts;
    for (const auto& p : g.train) texts.insert(p.text);
    CHECK(texts.size() == 2000);
    for (const auto& p : g.test) CHECK(texts.count(p.text) == 0);

    auto same = datagen::generate(spec);
    CHECK(same.train[0].text == g.train[0].text);
    spec.seed = 2;
    auto other = datagen::generate(spec);
    bool any_differs = false;
    for (size_t i = 0; i < 50; ++i) any_differs = any_differs || other.train[i].text != g.train[i].text;
    CHECK(any_differs);

    CHECK_THROWS_AS(datagen::generate({"galactic", 1, 0}), std::invalid_argument);
}

TEST_CASE("written corpus round-trips through the loader") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "semcom_datagen_micro";
    fs::remove_all(dir);
    datagen::GenSpec spec;
    spec.kind = "micro";
    datagen::write_corpus(dir.string(), spec);

    VocabPolicy policy;
    policy.max_len = 16;
    auto split = load_corpus(dir.string(), policy);
    CHECK(split.train.size() == 32);
    CHECK(split.test.size() == 4);

    auto kb = KnowledgeBase::load_jsonl((dir / "kb.jsonl").string());
    CHECK(kb.size() == 50);
    for (const auto& p : split.train) CHECK_NOTHROW(labels_for(p, kb));

    // Tokens decode back to the normalized text (all-in-vocabulary corpus).
    for (const auto& p : split.train) {
        std::string back = decode_tokens(p.tokens, split.vocab);
        std::string norm;
        for (const auto& t : tokenize(p.text)) norm += (norm.empty() ? "" : " ") + t;
        CHECK(back == norm);
    }
}

TEST_CASE("desk fixtures cover the whole kb and stay parseable") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "semcom_datagen_desk";
    fs::remove_all(dir);
    datagen::GenSpec spec;
    spec.kind = "desk";
    datagen::write_corpus(dir.string(), spec);

    auto kb = KnowledgeBase::load_jsonl((dir / "kb.jsonl").string());
    auto mock = augment::MockLlmClient::from_jsonl((dir / "fixtures.jsonl").string());
    CHECK(mock.fixture_count() == 1000);

    KnowledgeBase seen;
    for (const auto& f : mock.fixtures()) {
        auto parsed = augment::parse_triples(f.response);
        CHECK(parsed.failures == 0);
        CHECK_FALSE(parsed.triples.empty());
        for (const auto& t : parsed.triples) seen.add(t);
    }
    for (const auto& t : kb.triples()) CHECK(seen.find(t).has_value());
}
