#include "semcom/datagen.hpp"

#include <algorithm>
#include <filesystem>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "semcom/util.hpp"

namespace semcom::datagen {

namespace {

using nlohmann::json;

const std::vector<std::string> kFirst = {"ayam", "nasi", "mie",  "sate",  "soto",
                                         "bakso", "gado", "roti", "bubur", "es"};
const std::vector<std::string> kSecond = {"penyet", "goreng", "bakar",   "kuah",  "manis",
                                          "pedas",  "campur", "special", "klasik"};
const std::vector<std::string> kIngredients = {
    "chicken", "rice",    "noodle", "beef", "peanut", "egg",  "tofu", "shrimp",
    "coconut", "chili",   "garlic", "onion", "fish",  "pork", "lamb", "corn"};
const std::vector<std::string> kCountries = {"indonesia", "malaysia", "thailand", "vietnam",
                                             "japan",     "korea",    "india",    "china"};
const std::vector<std::string> kFlavors = {"spicy", "sweet", "savory", "sour", "mild", "rich"};
const std::vector<std::string> kDrinks = {"tea",   "coffee", "juice", "soda",
                                          "water", "milk",   "cocoa", "cider"};
const std::vector<std::string> kRegions = {"asia pacific", "southeast asia", "east asia",
                                           "south asia"};
const std::vector<std::string> kCapitals = {"jakarta", "kuala lumpur", "bangkok", "hanoi",
                                            "tokyo",   "seoul",        "delhi",   "beijing"};
const std::vector<std::string> kStarters = {"", "indeed ", "locals say ", "travelers report "};

struct DishFacts {
    std::string name, ing1, ing2, country, flavor, drink;
    FactTriple t_ing1, t_ing2, t_origin, t_flavor, t_drink;
};

DishFacts dish_facts(int k) {
    DishFacts f;
    f.name = kFirst[static_cast<size_t>(k % 10)] + " " + kSecond[static_cast<size_t>(k / 10)];
    f.ing1 = kIngredients[static_cast<size_t>(k % 16)];
    int j = (k * 7 + 3) % 16;
    if (kIngredients[static_cast<size_t>(j)] == f.ing1) j = (j + 1) % 16;
    f.ing2 = kIngredients[static_cast<size_t>(j)];
    f.country = kCountries[static_cast<size_t>(k % 8)];
    f.flavor = kFlavors[static_cast<size_t>(k % 6)];
    f.drink = kDrinks[static_cast<size_t>((k * 5 + 1) % 8)];
    f.t_ing1 = {f.name, "ingredient", f.ing1};
    f.t_ing2 = {f.name, "ingredient", f.ing2};
    f.t_origin = {f.name, "origin", f.country};
    f.t_flavor = {f.name, "flavor", f.flavor};
    f.t_drink = {f.name, "drink", f.drink};
    return f;
}

DataPair make_pair(std::string text, std::vector<FactTriple> triples) {
    DataPair p;
    p.text = std::move(text);
    p.gold_triples = std::move(triples);
    std::set<std::string> seen;
    for (const auto& t : p.gold_triples)
        for (const auto& e : {t.head, t.tail})
            if (seen.insert(e).second) p.gold_entities.push_back(e);
    return p;
}

// Dish sentence templates; index is part of the deterministic enumeration.
DataPair dish_sentence(int k, int tmpl) {
    DishFacts f = dish_facts(k);
    switch (tmpl) {
        case 0:
            return make_pair(f.name + " is a " + f.flavor + " dish from " + f.country,
                             {f.t_flavor, f.t_origin});
        case 1:
            return make_pair(f.name + " contains " + f.ing1 + " and " + f.ing2,
                             {f.t_ing1, f.t_ing2});
        case 2:
            return make_pair("people enjoy " + f.drink + " with " + f.name, {f.t_drink});
        case 3:
            return make_pair("the " + f.flavor + " dish " + f.name + " comes from " + f.country,
                             {f.t_flavor, f.t_origin});
        case 4:
            return make_pair(f.name + " is made with " + f.ing1 + " and pairs with " + f.drink,
                             {f.t_ing1, f.t_drink});
        case 5:
            return make_pair(f.country + " serves " + f.name + " with " + f.ing2,
                             {f.t_origin, f.t_ing2});
        case 6:
            return make_pair(f.name + " from " + f.country + " tastes " + f.flavor,
                             {f.t_origin, f.t_flavor});
        case 7:
            return make_pair(
                f.name + " blends " + f.ing1 + " with " + f.ing2 + " and " + f.drink,
                {f.t_ing1, f.t_ing2, f.t_drink});
        default:
            throw std::logic_error("bad dish template");
    }
}

DataPair country_sentence(int i, int tmpl) {
    const std::string& c = kCountries[static_cast<size_t>(i)];
    if (tmpl == 0)
        return make_pair("the capital of " + c + " is " + kCapitals[static_cast<size_t>(i)],
                         {{c, "capital", kCapitals[static_cast<size_t>(i)]}});
    return make_pair(c + " lies in " + kRegions[static_cast<size_t>(i % 4)],
                     {{c, "region", kRegions[static_cast<size_t>(i % 4)]}});
}

int micro_dish(int i) { return i < 9 ? i * 11 : 9; }

GeneratedCorpus generate_micro() {
    GeneratedCorpus g;
    for (int i = 0; i < 10; ++i) {
        g.train.push_back(dish_sentence(micro_dish(i), 0));
        g.train.push_back(dish_sentence(micro_dish(i), 1));
    }
    for (int i = 0; i < 10; ++i) g.train.push_back(dish_sentence(micro_dish(i), 2));
    g.train.push_back(dish_sentence(micro_dish(0), 4));
    g.train.push_back(dish_sentence(micro_dish(1), 4));
    for (int i = 0; i < 4; ++i) g.test.push_back(dish_sentence(micro_dish(i), 6));
    return g;
}

GeneratedCorpus generate_desk(uint64_t seed) {
    std::vector<DataPair> all;
    for (int s = 0; s < static_cast<int>(kStarters.size()); ++s) {
        for (int k = 0; k < 90; ++k)
            for (int t = 0; t < 8; ++t) {
                DataPair p = dish_sentence(k, t);
                p.text = kStarters[static_cast<size_t>(s)] + p.text;
                all.push_back(std::move(p));
            }
        for (int i = 0; i < 8; ++i)
            for (int t = 0; t < 2; ++t) {
                DataPair p = country_sentence(i, t);
                p.text = kStarters[static_cast<size_t>(s)] + p.text;
                all.push_back(std::move(p));
            }
    }
    auto rng = make_rng(seed, {label("datagen-shuffle")});
    std::shuffle(all.begin(), all.end(), rng);

    GeneratedCorpus g;
    g.train.assign(all.begin(), all.begin() + 2000);
    g.test.assign(all.begin() + 2000, all.begin() + 2200);
    return g;
}

std::string corpus_jsonl(const std::vector<DataPair>& pairs) {
    std::ostringstream out;
    for (const auto& p : pairs) {
        json rec;
        rec["text"] = p.text;
        json triples = json::array();
        for (const auto& t : p.gold_triples)
            triples.push_back(json::array({t.head, t.relation, t.tail}));
        rec["triples"] = triples;
        out << rec.dump() << '\n';
    }
    return out.str();
}

std::string render_response(const std::vector<FactTriple>& triples) {
    std::ostringstream out;
    for (const auto& t : triples)
        out << "(" << t.head << " | " << t.relation << " | " << t.tail << ")\n";
    return out.str();
}

// Coverage-first fixture selection: every kb triple shows up in some fixture
// before the budget is spent on repeats.
std::string fixtures_jsonl(const std::vector<DataPair>& train, int budget) {
    KnowledgeBase kb = kb_build(train);
    std::set<std::string> covered;
    std::vector<const DataPair*> picked;
    std::set<const DataPair*> used;
    for (const auto& p : train) {
        bool fresh = false;
        for (const auto& t : p.gold_triples) {
            FactTriple n{normalize_surface(t.head), normalize_surface(t.relation),
                         normalize_surface(t.tail)};
            if (!covered.count(n.key())) fresh = true;
        }
        if (!fresh) continue;
        for (const auto& t : p.gold_triples) {
            FactTriple n{normalize_surface(t.head), normalize_surface(t.relation),
                         normalize_surface(t.tail)};
            covered.insert(n.key());
        }
        picked.push_back(&p);
        used.insert(&p);
        if (static_cast<int>(picked.size()) >= budget) break;
    }
    for (const auto& p : train) {
        if (static_cast<int>(picked.size()) >= budget) break;
        if (!used.count(&p)) picked.push_back(&p);
    }

    std::ostringstream out;
    for (const DataPair* p : picked) {
        json rec;
        rec["prompt_contains"] = p->text;
        rec["response"] = render_response(p->gold_triples);
        out << rec.dump() << '\n';
    }
    return out.str();
}

}  // namespace

GeneratedCorpus generate(const GenSpec& spec) {
    if (spec.kind == "micro") return generate_micro();
    if (spec.kind == "desk") return generate_desk(spec.seed);
    throw std::invalid_argument("unknown corpus kind: " + spec.kind);
}

void write_corpus(const std::string& out_dir, const GenSpec& spec) {
    GeneratedCorpus g = generate(spec);
    std::filesystem::create_directories(out_dir);
    write_file(out_dir + "/train.jsonl", corpus_jsonl(g.train));
    write_file(out_dir + "/test.jsonl", corpus_jsonl(g.test));
    kb_build(g.train).save_jsonl(out_dir + "/kb.jsonl");
    if (spec.kind == "desk")
        write_file(out_dir + "/fixtures.jsonl", fixtures_jsonl(g.train, spec.fixture_texts));
}

}  // namespace semcom::datagen
