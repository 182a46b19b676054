#include "semcom/cli.hpp"

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "semcom/augment.hpp"
#include "semcom/config.hpp"
#include "semcom/corpus.hpp"
#include "semcom/datagen.hpp"
#include "semcom/evaluation.hpp"
#include "semcom/extractor.hpp"
#include "semcom/jscc.hpp"
#include "semcom/unified_space.hpp"
#include "semcom/util.hpp"

namespace semcom::cli {

namespace {

namespace fs = std::filesystem;

std::string require(const Config& cfg, const std::string& key, const std::string& cmd) {
    if (!cfg.has_value(key))
        throw std::runtime_error(cmd + " requires the config key '" + key + "'");
    return cfg.str(key);
}

std::string kb_path(const Config& cfg) {
    return cfg.has_value("io.kb") ? cfg.str("io.kb") : cfg.str("corpus.dir") + "/kb.jsonl";
}

VocabPolicy vocab_policy(const Config& cfg) {
    VocabPolicy p;
    p.max_len = cfg.integer("corpus.max_len");
    p.split_seed = cfg.u64("seed");
    return p;
}

nn::ModelConfig model_config(const Config& cfg) {
    nn::ModelConfig m;
    m.layers = cfg.integer("model.layers");
    m.d_model = cfg.integer("model.d_model");
    m.heads = cfg.integer("model.heads");
    m.d_ff = cfg.integer("model.d_ff");
    m.channel_dim = cfg.integer("model.channel_dim");
    m.max_len = cfg.integer("corpus.max_len");
    m.dropout = cfg.num("model.dropout");
    return m;
}

void write_run_manifest(const std::string& path, const Config& cfg,
                        const std::vector<std::pair<std::string, std::string>>& artifacts) {
    fs::create_directories(fs::path(path).parent_path().empty()
                               ? fs::path(".")
                               : fs::path(path).parent_path());
    write_file(path, run_manifest(cfg, artifacts));
}

int cmd_prepare_data(const Config& cfg) {
    datagen::GenSpec spec;
    spec.kind = cfg.str("corpus.kind");
    spec.seed = cfg.u64("seed");
    spec.fixture_texts = cfg.integer("corpus.fixture_texts");
    const std::string dir = cfg.str("corpus.dir");
    datagen::write_corpus(dir, spec);
    write_run_manifest(dir + "/manifest.txt", cfg, {{"corpus", dir + "/train.jsonl"}});

    auto split = load_corpus(dir, vocab_policy(cfg));
    auto kb = KnowledgeBase::load_jsonl(dir + "/kb.jsonl");
    std::cout << "wrote " << dir << ": train=" << split.train.size()
              << " test=" << split.test.size() << " vocab=" << split.vocab.size()
              << " kb=" << kb.size() << "\n";
    return 0;
}

int cmd_train_jscc(const Config& cfg) {
    auto split = load_corpus(cfg.str("corpus.dir"), vocab_policy(cfg));
    const std::string out = cfg.str("io.out_dir");
    fs::create_directories(out);

    jscc::TrainConfig tc;
    tc.batch_size = cfg.integer("train.batch_size");
    tc.lr = cfg.num("train.lr");
    tc.epochs = cfg.integer("train.epochs");
    tc.train_snr_db = cfg.num("train.snr_db");
    tc.channel = channel_kind_from_string(cfg.str("channel.kind"));
    tc.seed = cfg.u64("seed");
    tc.checkpoint_dir = out + "/codec";
    tc.log_csv = out + "/jscc_loss.csv";

    auto res = jscc::train_jscc(split, model_config(cfg), tc);
    write_run_manifest(out + "/manifest.txt", cfg,
                       {{"corpus", cfg.str("corpus.dir")}, {"codec", tc.checkpoint_dir}});
    std::cout << "trained codec: epochs=" << res.epoch_losses.size()
              << " final_loss=" << format_fixed(res.epoch_losses.back()) << "\n";
    return 0;
}

int cmd_train_extractor(const Config& cfg) {
    auto split = load_corpus(cfg.str("corpus.dir"), vocab_policy(cfg));
    auto kb = KnowledgeBase::load_jsonl(kb_path(cfg));
    auto codec = jscc::JsccModel::load(require(cfg, "io.codec_dir", "train-extractor"));
    const std::string out = cfg.str("io.out_dir");
    fs::create_directories(out);

    extractor::ExtractorTrainConfig ec;
    ec.w = cfg.num("extractor.w");
    ec.train_snr_db = cfg.num("extractor.snr_db");
    ec.channel = channel_kind_from_string(cfg.str("channel.kind"));
    ec.batch_size = cfg.integer("extractor.batch_size");
    ec.lr = cfg.num("extractor.lr");
    ec.epochs = cfg.integer("extractor.epochs");
    ec.adapt_epochs = cfg.integer("extractor.adapt_epochs");
    ec.seed = cfg.u64("seed");
    ec.checkpoint_dir = out + "/extractor";
    ec.log_csv = out + "/extractor_log.csv";

    auto res = extractor::train_extractor(codec, split, kb, ec);
    write_run_manifest(out + "/manifest.txt", cfg,
                       {{"corpus", cfg.str("corpus.dir")},
                        {"kb", kb_path(cfg)},
                        {"codec", cfg.str("io.codec_dir")},
                        {"extractor", ec.checkpoint_dir}});
    std::cout << "trained extractor: epochs=" << res.epoch_losses.size()
              << " precision=" << format_fixed(res.epoch_precision.back())
              << " recall=" << format_fixed(res.epoch_recall.back()) << "\n";
    return 0;
}

int cmd_train_space(const Config& cfg) {
    auto split = load_corpus(cfg.str("corpus.dir"), vocab_policy(cfg));
    auto kb = KnowledgeBase::load_jsonl(kb_path(cfg));
    auto codec = jscc::JsccModel::load(require(cfg, "io.codec_dir", "train-unified-space"));
    const std::string out = cfg.str("io.out_dir");
    fs::create_directories(out);

    unified::ContrastiveConfig sc;
    sc.d = cfg.integer("space.d");
    sc.K = cfg.integer("space.K");
    sc.tau = cfg.num("space.tau");
    sc.lr = cfg.num("space.lr");
    sc.epochs = cfg.integer("space.epochs");
    sc.seed = cfg.u64("seed");
    sc.train_snr_db = cfg.num("space.snr_db");
    sc.channel = channel_kind_from_string(cfg.str("channel.kind"));
    sc.norm_reg = cfg.num("space.norm_reg");
    sc.log_csv = out + "/space_loss.csv";

    auto res = unified::train_unified_space(codec, split, kb, sc);
    res.space.lambda = cfg.num("space.lambda");
    res.space.kind = unified::distance_kind_from_string(cfg.str("space.distance"));
    res.space.save(out + "/space");
    write_run_manifest(out + "/manifest.txt", cfg,
                       {{"corpus", cfg.str("corpus.dir")},
                        {"kb", kb_path(cfg)},
                        {"codec", cfg.str("io.codec_dir")},
                        {"space", out + "/space"}});
    std::cout << "trained unified space: epochs=" << res.epoch_losses.size()
              << " final_loss=" << format_fixed(res.epoch_losses.back()) << "\n";
    return 0;
}

int cmd_train_relpred(const Config& cfg) {
    auto kb = KnowledgeBase::load_jsonl(kb_path(cfg));
    auto space = unified::UnifiedSpace::load(require(cfg, "io.space_dir", "train-relpred"));
    const std::string out = cfg.str("io.out_dir");
    fs::create_directories(out);

    unified::RelPredConfig rc;
    rc.hidden = cfg.integer("relpred.hidden");
    rc.lr = cfg.num("relpred.lr");
    rc.epochs = cfg.integer("relpred.epochs");
    rc.batch_size = cfg.integer("relpred.batch_size");
    rc.neg_ratio = cfg.integer("relpred.neg_ratio");
    rc.seed = cfg.u64("seed");
    rc.checkpoint_dir = out + "/relpred";
    rc.log_csv = out + "/relpred_loss.csv";

    auto res = unified::train_relation_predictor(space, kb, rc);
    write_run_manifest(out + "/manifest.txt", cfg,
                       {{"kb", kb_path(cfg)},
                        {"space", cfg.str("io.space_dir")},
                        {"relpred", rc.checkpoint_dir}});
    std::cout << "trained relation predictor: epochs=" << res.epoch_losses.size()
              << " final_loss=" << format_fixed(res.epoch_losses.back()) << "\n";
    return 0;
}

int cmd_evaluate(const Config& cfg) {
    auto split = load_corpus(cfg.str("corpus.dir"), vocab_policy(cfg));
    auto kb = KnowledgeBase::load_jsonl(kb_path(cfg));
    auto codec = jscc::JsccModel::load(require(cfg, "io.codec_dir", "evaluate"));
    const std::string out = cfg.str("io.out_dir");
    fs::create_directories(out);

    eval::SweepConfig sc;
    sc.snr_points = cfg.num_list("sweep.snr_points");
    sc.channel = channel_kind_from_string(cfg.str("channel.kind"));
    sc.receivers.clear();
    for (const auto& r : cfg.str_list("sweep.receivers"))
        sc.receivers.push_back(eval::receiver_kind_from_string(r));
    sc.snr_specific = cfg.flag("sweep.snr_specific");
    sc.seed = cfg.u64("seed");
    sc.scorer = cfg.str("sweep.scorer");
    sc.max_sentences = cfg.integer("sweep.max_sentences");
    sc.threads = cfg.integer("sweep.threads");
    sc.csv_path = cfg.has_value("io.csv") ? cfg.str("io.csv") : out + "/metrics.csv";
    if (cfg.flag("sweep.trace"))
        sc.trace_jsonl = cfg.has_value("io.trace") ? cfg.str("io.trace") : out + "/trace.jsonl";

    eval::SweepModels models;
    models.codec = &codec;
    std::vector<std::pair<std::string, std::string>> artifacts{
        {"corpus", cfg.str("corpus.dir")}, {"kb", kb_path(cfg)},
        {"codec", cfg.str("io.codec_dir")}};

    std::optional<extractor::ExtractorModel> ext;
    if (cfg.has_value("io.extractor_dir")) {
        ext = extractor::ExtractorModel::load(cfg.str("io.extractor_dir"));
        models.ext = &*ext;
        artifacts.push_back({"extractor", cfg.str("io.extractor_dir")});
    }
    std::map<double, extractor::ExtractorModel> specific;
    for (const auto& entry : cfg.str_list("sweep.specific_dirs")) {
        size_t eq = entry.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("sweep.specific_dirs entry '" + entry +
                                     "' is not of the form snr=dir");
        double snr = std::stod(entry.substr(0, eq));
        std::string dir = entry.substr(eq + 1);
        specific.emplace(snr, extractor::ExtractorModel::load(dir));
        artifacts.push_back({"extractor@" + format_fixed(snr, 1), dir});
    }
    for (auto& [snr, model] : specific) models.ext_by_snr[snr] = &model;

    std::optional<unified::UnifiedSpace> space;
    std::optional<unified::RelationPredictor> relpred;
    if (cfg.has_value("io.space_dir")) {
        space = unified::UnifiedSpace::load(cfg.str("io.space_dir"));
        models.space = &*space;
        artifacts.push_back({"space", cfg.str("io.space_dir")});
    }
    if (cfg.has_value("io.relpred_dir")) {
        relpred = unified::RelationPredictor::load(cfg.str("io.relpred_dir"));
        models.relpred = &*relpred;
        artifacts.push_back({"relpred", cfg.str("io.relpred_dir")});
    }

    auto rows = eval::run_snr_sweep(sc, models, split, kb);
    write_run_manifest(sc.csv_path + ".manifest", cfg, artifacts);
    std::cout << eval::metrics_csv(rows);
    return 0;
}

int cmd_augment(const Config& cfg) {
    auto kb_full = KnowledgeBase::load_jsonl(kb_path(cfg));
    const std::string out = cfg.str("io.out_dir");
    fs::create_directories(out);

    KnowledgeBase kb = kb_full;
    std::vector<FactTriple> dropped;
    double frac = cfg.num("augment.omit_fraction");
    if (frac > 0.0) {
        auto omitted = augment::omit_fraction(kb_full, frac, cfg.u64("seed"));
        kb = std::move(omitted.kept);
        dropped = std::move(omitted.dropped);
    }

    const int n_texts = cfg.integer("augment.n_texts");
    std::vector<std::string> texts;
    std::unique_ptr<augment::LlmClient> client;
    if (cfg.has_value("augment.mock_fixtures")) {
        auto mock = std::make_unique<augment::MockLlmClient>(
            augment::MockLlmClient::from_jsonl(cfg.str("augment.mock_fixtures")));
        for (const auto& f : mock->fixtures()) {
            texts.push_back(f.prompt_contains);
            if (n_texts > 0 && static_cast<int>(texts.size()) >= n_texts) break;
        }
        client = std::move(mock);
    } else if (cfg.has_value("augment.endpoint")) {
        augment::HttpLlmClient::Options opt;
        opt.endpoint = cfg.str("augment.endpoint");
        opt.model_name = cfg.str("augment.model_name");
        opt.timeout_s = cfg.num("augment.timeout_s");
        client = std::make_unique<augment::HttpLlmClient>(opt);
        auto split = load_corpus(cfg.str("corpus.dir"), vocab_policy(cfg));
        for (const auto& p : split.train) {
            texts.push_back(p.text);
            if (n_texts > 0 && static_cast<int>(texts.size()) >= n_texts) break;
        }
    } else {
        throw std::runtime_error(
            "augment requires augment.mock_fixtures (offline) or augment.endpoint (remote)");
    }

    auto report =
        augment::augment_knowledge_base(texts, *client, kb, augment::PromptTemplate::standard());
    const std::string kb_out =
        cfg.has_value("io.kb_out") ? cfg.str("io.kb_out") : out + "/kb_augmented.jsonl";
    kb.save_jsonl(kb_out);
    write_run_manifest(kb_out + ".manifest", cfg,
                       {{"kb_in", kb_path(cfg)}, {"kb_out", kb_out}});

    std::cout << "augment: texts=" << report.n_texts << " ok=" << report.n_responses_ok
              << " parse_failures=" << report.n_parse_failures
              << " new=" << report.n_new_triples << " duplicate=" << report.n_duplicate_triples
              << "\n";
    if (!dropped.empty())
        std::cout << "omitted=" << dropped.size()
                  << " recovery=" << format_fixed(augment::recovery_rate(kb, dropped)) << "\n";
    std::cout << "kb: " << kb_full.size() << " -> " << kb.size() << " triples (" << kb_out
              << ")\n";
    return 0;
}

int cmd_dump_embeddings(const Config& cfg) {
    auto split = load_corpus(cfg.str("corpus.dir"), vocab_policy(cfg));
    auto kb = KnowledgeBase::load_jsonl(kb_path(cfg));
    auto codec = jscc::JsccModel::load(require(cfg, "io.codec_dir", "dump-embeddings"));
    auto space = unified::UnifiedSpace::load(require(cfg, "io.space_dir", "dump-embeddings"));
    const std::string out = cfg.str("io.out_dir");
    fs::create_directories(out);

    ChannelConfig chan;
    chan.kind = channel_kind_from_string(cfg.str("channel.kind"));
    chan.snr_db = cfg.num("dump.snr_db");

    std::vector<unified::DumpSample> samples;
    int budget = cfg.integer("dump.samples");
    for (size_t i = 0; i < split.test.size() && static_cast<int>(i) < budget; ++i) {
        const DataPair& p = split.test[i];
        auto rng = make_rng(cfg.u64("seed"), {label("dump-noise"), i});
        SymbolBlock x = jscc::channel_encode(codec, jscc::semantic_encode(codec, p.tokens));
        TransmitResult tr = transmit(x, chan, rng);
        ad::Mat h_hat = jscc::channel_decode(codec, equalize(tr.received, tr.coeff));
        unified::DumpSample s;
        s.name = "s" + std::to_string(i);
        s.v_h = unified::map_received(h_hat, space);
        s.gold_entities = p.gold_entities;
        samples.push_back(std::move(s));
    }

    const std::string csv =
        cfg.has_value("io.dump_csv") ? cfg.str("io.dump_csv") : out + "/embeddings.csv";
    unified::dump_embeddings(space, kb, samples, csv);
    write_run_manifest(csv + ".manifest", cfg,
                       {{"codec", cfg.str("io.codec_dir")}, {"space", cfg.str("io.space_dir")}});
    std::cout << "wrote " << csv << " (" << samples.size() << " samples, " << kb.entities().size()
              << " entities)\n";
    return 0;
}

struct Subcommand {
    const char* name;
    const char* help;
    int (*fn)(const Config&);
};

const Subcommand kSubcommands[] = {
    {"prepare-data", "generate a deterministic synthetic corpus, kb, and llm fixtures",
     cmd_prepare_data},
    {"train-jscc", "train the joint source-channel codec", cmd_train_jscc},
    {"train-extractor", "train the static knowledge extractor on a frozen codec",
     cmd_train_extractor},
    {"train-unified-space", "contrastively train the unified embedding space", cmd_train_space},
    {"train-relpred", "train the relation predictor over a frozen space", cmd_train_relpred},
    {"evaluate", "run an SNR sweep and write metrics CSV", cmd_evaluate},
    {"augment", "extract triples from text via an LLM client and merge into the kb",
     cmd_augment},
    {"dump-embeddings", "export entity and signal embeddings for inspection",
     cmd_dump_embeddings},
};

}  // namespace

int run(int argc, const char* const* argv) {
    if (argc >= 2 && argv[1][0] != '-') {
        bool known = false;
        for (const auto& sc : kSubcommands) known = known || std::string(argv[1]) == sc.name;
        if (!known) {
            std::cerr << "unknown subcommand '" << argv[1] << "'\n";
            return 2;
        }
    }

    CLI::App app{"desk-scale laboratory for knowledge-enhanced semantic communication"};
    app.require_subcommand(1);

    int rc = 0;
    struct Args {
        std::string config_path;
        std::vector<std::string> sets;
    };
    std::vector<Args> args(std::size(kSubcommands));
    for (size_t i = 0; i < std::size(kSubcommands); ++i) {
        const Subcommand& sub = kSubcommands[i];
        CLI::App* sc = app.add_subcommand(sub.name, sub.help);
        sc->add_option("--config", args[i].config_path, "layered config file");
        sc->add_option("--set", args[i].sets, "override KEY=VALUE (repeatable)");
        sc->callback([&, i]() {
            Config cfg = Config::defaults();
            if (!args[i].config_path.empty()) cfg.load_file(args[i].config_path);
            cfg.apply_overrides(args[i].sets);
            rc = kSubcommands[i].fn(cfg);
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);  // prints help or the parse problem
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}

}  // namespace semcom::cli
