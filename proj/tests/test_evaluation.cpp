#include "semcom/evaluation.hpp"

#include <cmath>
#include <filesystem>
#include <random>
#include <set>

#include "doctest.h"
#include "semcom/util.hpp"

using namespace semcom;

namespace {

std::vector<std::string> words(std::initializer_list<const char*> ws) {
    return std::vector<std::string>(ws.begin(), ws.end());
}

nn::ModelConfig tiny_cfg() {
    nn::ModelConfig cfg;
    cfg.layers = 1;
    cfg.d_model = 8;
    cfg.heads = 2;
    cfg.d_ff = 16;
    cfg.channel_dim = 4;
    cfg.max_len = 8;
    cfg.dropout = 0.0;
    return cfg;
}

CorpusSplit labeled_split() {
    struct Row {
        const char* text;
        FactTriple triple;
    };
    const std::vector<Row> rows{
        {"alpha likes red wine", {"alpha", "likes", "red wine"}},
        {"beta likes blue tea", {"beta", "likes", "blue tea"}},
        {"gamma hates red wine", {"gamma", "hates", "red wine"}},
        {"delta hates blue tea", {"delta", "hates", "blue tea"}},
        {"alpha visits narnia", {"alpha", "visits", "narnia"}},
        {"beta visits oz", {"beta", "visits", "oz"}},
    };
    CorpusSplit split;
    for (const auto& r : rows)
        for (const auto& w : tokenize(r.text)) split.vocab.add(w);
    for (const auto& r : rows) {
        DataPair p;
        p.text = r.text;
        p.tokens = encode_text(r.text, split.vocab, 8);
        p.gold_triples.push_back(r.triple);
        p.gold_entities = {r.triple.head, r.triple.tail};
        split.train.push_back(std::move(p));
    }
    split.test = split.train;
    for (auto& p : split.test) p.text += " ";  // keep split-disjointness honest
    return split;
}

jscc::JsccModel make_codec(const CorpusSplit& split, uint64_t seed) {
    jscc::JsccModel m(tiny_cfg(), split.vocab.size(), seed);
    m.vocab_hash = split.vocab.hash();
    return m;
}

}  // namespace

TEST_CASE("bleu1 hand oracles") {
    CHECK(eval::bleu1(words({"a", "b", "c"}), words({"a", "b", "c"})) == doctest::Approx(1.0));
    CHECK(eval::bleu1(words({"a", "b", "c", "d"}), words({"a", "b", "x", "y"})) ==
          doctest::Approx(0.5));
    CHECK(eval::bleu1(words({"a", "b"}), words({"x", "y"})) == doctest::Approx(0.0));
    CHECK(eval::bleu1(words({"a", "b"}), {}) == 0.0);
    CHECK_THROWS_AS(eval::bleu1(std::vector<std::string>{}, words({"a"})),
                    std::invalid_argument);

    // Clipping: only one 'a' in the reference budget.
    CHECK(eval::bleu1(words({"a", "b"}), words({"a", "a", "a"})) ==
          doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    // Brevity penalty for a short hypothesis.
    CHECK(eval::bleu1(words({"a", "b", "c", "d"}), words({"a", "b"})) ==
          doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("bleu1 is invariant under consistent token relabeling") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 25; ++trial) {
        std::vector<int> ref, hyp;
        for (int i = 0; i < 8; ++i) ref.push_back(static_cast<int>(rng() % 6));
        for (int i = 0; i < 6; ++i) hyp.push_back(static_cast<int>(rng() % 6));
        auto remap = [](const std::vector<int>& v) {
            std::vector<int> out;
            for (int x : v) out.push_back(100 + 7 * x);  // injective relabel
            return out;
        };
        CHECK(eval::bleu1(ref, hyp) ==
              doctest::Approx(eval::bleu1(remap(ref), remap(hyp))).epsilon(1e-12));
    }
}

TEST_CASE("term-frequency cosine scorer") {
    eval::TfCosineScorer s;
    CHECK(s.score("red wine and tea", "red wine and tea") == doctest::Approx(1.0));
    CHECK(s.score("alpha beta", "gamma delta") == doctest::Approx(0.0));
    CHECK(s.score("a b", "a c") == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(s.score("anything", "") == 0.0);

    CHECK(eval::make_scorer("tf") != nullptr);
    CHECK_THROWS_WITH_AS(eval::make_scorer("sbert"), doctest::Contains("sweep.scorer=tf"),
                         std::runtime_error);
}

TEST_CASE("precision and recall over triple sets") {
    FactTriple a{"a", "r", "x"}, b{"b", "r", "y"}, c{"c", "r", "z"};
    auto pr = eval::precision_recall({a, b}, {b, c});
    CHECK(pr.precision == doctest::Approx(0.5));
    CHECK(pr.recall == doctest::Approx(0.5));
    CHECK_FALSE(pr.empty_prediction);

    pr = eval::precision_recall({a, b}, {a, b});
    CHECK(pr.precision == 1.0);
    CHECK(pr.recall == 1.0);

    pr = eval::precision_recall({}, {a});
    CHECK(pr.precision == 1.0);
    CHECK(pr.empty_prediction);
    CHECK(pr.recall == 0.0);

    pr = eval::precision_recall({a}, {});
    CHECK(pr.recall == 1.0);
    CHECK(pr.empty_gold);

    // Duplicates collapse; surface normalization unifies separators.
    pr = eval::precision_recall({a, a}, {{"A", "r", "x"}});
    CHECK(pr.precision == 0.0);  // case differs, no match
    pr = eval::precision_recall({{"ayam_penyet", "r", "x"}}, {{"ayam penyet", "r", "x"}});
    CHECK(pr.precision == 1.0);
    CHECK(pr.recall == 1.0);
}

TEST_CASE("precision == recall == 1 iff sets are equal and nonempty") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 40; ++trial) {
        auto draw = [&](int n) {
            std::vector<FactTriple> out;
            for (int i = 0; i < n; ++i)
                out.push_back({"e" + std::to_string(rng() % 4), "r",
                               "f" + std::to_string(rng() % 4)});
            return out;
        };
        auto pred = draw(1 + static_cast<int>(rng() % 4));
        auto gold = draw(1 + static_cast<int>(rng() % 4));
        auto keyset = [](const std::vector<FactTriple>& ts) {
            std::set<std::string> s;
            for (const auto& t : ts) s.insert(t.key());
            return s;
        };
        auto pr = eval::precision_recall(pred, gold);
        bool both_one = pr.precision == 1.0 && pr.recall == 1.0;
        CHECK(both_one == (keyset(pred) == keyset(gold)));
    }
}

TEST_CASE("sweep: row layout, validation, reproducibility") {
    auto split = labeled_split();
    auto kb = kb_build(split.train);
    auto codec = make_codec(split, 3);

    eval::SweepModels models;
    models.codec = &codec;

    eval::SweepConfig cfg;
    cfg.snr_points = {-4, 0, 2};
    cfg.receivers = {eval::ReceiverKind::baseline};
    cfg.max_sentences = 2;
    cfg.seed = 17;

    SUBCASE("receiver-major cross product") {
        extractor::ExtractorModel ext(codec, kb, 4);
        models.ext = &ext;
        cfg.receivers = {eval::ReceiverKind::baseline, eval::ReceiverKind::kg_static};
        auto rows = eval::run_snr_sweep(cfg, models, split, kb);
        REQUIRE(rows.size() == 6);
        CHECK(rows[0].receiver == eval::ReceiverKind::baseline);
        CHECK(rows[0].snr_db == -4);
        CHECK(rows[2].snr_db == 2);
        CHECK(rows[3].receiver == eval::ReceiverKind::kg_static);
        for (const auto& r : rows) {
            CHECK(r.n_sentences == 2);
            CHECK(r.bleu1 >= 0.0);
            CHECK(r.bleu1 <= 1.0);
            CHECK(r.similarity >= -1.0);
            CHECK(r.similarity <= 1.0);
        }
    }
    SUBCASE("same seed twice gives byte-identical CSV") {
        namespace fs = std::filesystem;
        fs::path p1 = fs::temp_directory_path() / "semcom_sweep1.csv";
        fs::path p2 = fs::temp_directory_path() / "semcom_sweep2.csv";
        cfg.csv_path = p1.string();
        eval::run_snr_sweep(cfg, models, split, kb);
        cfg.csv_path = p2.string();
        eval::run_snr_sweep(cfg, models, split, kb);
        CHECK(read_file(p1.string()) == read_file(p2.string()));
        CHECK(read_file(p1.string()).rfind(
                  "receiver_kind,snr_db,bleu1,similarity,precision,recall,n_sentences\n", 0) == 0);
    }
    SUBCASE("trace JSONL has one record per cell and sentence") {
        namespace fs = std::filesystem;
        fs::path tr = fs::temp_directory_path() / "semcom_trace.jsonl";
        cfg.trace_jsonl = tr.string();
        eval::run_snr_sweep(cfg, models, split, kb);
        auto text = read_file(tr.string());
        size_t lines = 0;
        for (char c : text) lines += c == '\n';
        CHECK(lines == cfg.snr_points.size() * 2);  // 3 points x 2 sentences, 1 receiver
    }
    SUBCASE("missing models fail before any transmission") {
        cfg.receivers = {eval::ReceiverKind::kg_static};
        CHECK_THROWS_WITH_AS(eval::run_snr_sweep(cfg, models, split, kb),
                             doctest::Contains("extractor"), std::invalid_argument);
        cfg.receivers = {eval::ReceiverKind::kg_evolving};
        CHECK_THROWS_AS(eval::run_snr_sweep(cfg, models, split, kb), std::invalid_argument);

        extractor::ExtractorModel ext(codec, kb, 4);
        models.ext = &ext;
        cfg.receivers = {eval::ReceiverKind::kg_static};
        cfg.snr_specific = true;  // no per-SNR extractors registered
        CHECK_THROWS_WITH_AS(eval::run_snr_sweep(cfg, models, split, kb),
                             doctest::Contains("SNR-specific"), std::invalid_argument);
    }
    SUBCASE("input validation") {
        cfg.snr_points.clear();
        CHECK_THROWS_AS(eval::run_snr_sweep(cfg, models, split, kb), std::invalid_argument);
        cfg.snr_points = {0};
        cfg.receivers.clear();
        CHECK_THROWS_AS(eval::run_snr_sweep(cfg, models, split, kb), std::invalid_argument);
        cfg.receivers = {eval::ReceiverKind::baseline};
        CorpusSplit empty_test = split;
        empty_test.test.clear();
        CHECK_THROWS_AS(eval::run_snr_sweep(cfg, models, empty_test, kb),
                        std::invalid_argument);
    }
}

TEST_CASE("sweep BLEU trends upward in SNR for a trained codec") {
    auto split = labeled_split();
    auto kb = kb_build(split.train);

    jscc::TrainConfig tc;
    tc.batch_size = 6;
    tc.lr = 5e-3;
    tc.epochs = 60;
    tc.train_snr_db = 300.0;
    tc.seed = 7;
    auto trained = jscc::train_jscc(split, tiny_cfg(), tc);

    eval::SweepModels models;
    models.codec = &trained.model;
    eval::SweepConfig cfg;
    cfg.snr_points = {-4, 4};
    cfg.receivers = {eval::ReceiverKind::baseline};
    cfg.seed = 29;
    auto rows = eval::run_snr_sweep(cfg, models, split, kb);
    REQUIRE(rows.size() == 2);
    CHECK(rows[1].bleu1 >= rows[0].bleu1);
    CHECK(rows[1].bleu1 > 0.5);  // trained system decodes cleanly at +4 dB
}
