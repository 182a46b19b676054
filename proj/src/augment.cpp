#include "semcom/augment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "semcom/util.hpp"

namespace semcom::augment {

using nlohmann::json;

namespace {
constexpr const char* kSlot = "{SENTENCE}";
}

PromptTemplate PromptTemplate::standard() {
    PromptTemplate t;
    t.text =
        "Identify the named entities in the sentence below and predict the relations "
        "between them. Reply with one factual triple per line, formatted exactly as "
        "(head | relation | tail), and nothing else.\n"
        "Sentence: {SENTENCE}\n";
    return t;
}

std::string build_prompt(const std::string& text, const PromptTemplate& tmpl) {
    if (text.empty()) throw std::invalid_argument("build_prompt: empty text");
    size_t pos = tmpl.text.find(kSlot);
    if (pos == std::string::npos)
        throw std::invalid_argument("prompt template is missing the {SENTENCE} slot");
    if (tmpl.text.find(kSlot, pos + 1) != std::string::npos)
        throw std::invalid_argument("prompt template has more than one {SENTENCE} slot");
    std::string out = tmpl.text;
    out.replace(pos, std::string(kSlot).size(), text);
    return out;
}

ParseOutcome parse_triples(const std::string& response) {
    ParseOutcome out;
    std::istringstream lines(response);
    std::string line;
    bool any_line = false;
    while (std::getline(lines, line)) {
        std::string t = normalize_surface(line);
        if (t.empty()) continue;
        any_line = true;
        if (t.front() != '(' || t.back() != ')') {
            ++out.failures;
            continue;
        }
        t = t.substr(1, t.size() - 2);
        std::vector<std::string> fields;
        size_t start = 0;
        while (true) {
            size_t bar = t.find('|', start);
            fields.push_back(normalize_surface(
                t.substr(start, bar == std::string::npos ? std::string::npos : bar - start)));
            if (bar == std::string::npos) break;
            start = bar + 1;
        }
        if (fields.size() != 3 || fields[0].empty() || fields[1].empty() || fields[2].empty()) {
            ++out.failures;
            continue;
        }
        out.triples.push_back({fields[0], fields[1], fields[2]});
    }
    if (!any_line) out.failures = 1;  // empty response is itself a failure
    return out;
}

MockLlmClient::MockLlmClient(std::vector<Fixture> fixtures) : fixtures_(std::move(fixtures)) {}

MockLlmClient MockLlmClient::from_jsonl(const std::string& path) {
    std::istringstream lines(read_file(path));
    std::string line;
    std::vector<Fixture> fixtures;
    int lineno = 0;
    while (std::getline(lines, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("prompt_contains") || !j.contains("response"))
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": bad fixture record");
        fixtures.push_back({j["prompt_contains"].get<std::string>(),
                            j["response"].get<std::string>()});
    }
    return MockLlmClient(std::move(fixtures));
}

std::string MockLlmClient::complete(const std::string& prompt) {
    for (const auto& f : fixtures_)
        if (prompt.find(f.prompt_contains) != std::string::npos) return f.response;
    return "";
}

HttpLlmClient::HttpLlmClient(Options opt) : opt_(std::move(opt)) {
    if (opt_.endpoint.empty()) throw std::invalid_argument("HttpLlmClient: empty endpoint");
    if (opt_.max_attempts < 1) throw std::invalid_argument("HttpLlmClient: max_attempts < 1");
}

std::string HttpLlmClient::complete(const std::string& prompt) {
    httplib::Client cli(opt_.endpoint);
    cli.set_connection_timeout(std::chrono::milliseconds(
        static_cast<int>(opt_.timeout_s * 1000)));
    cli.set_read_timeout(std::chrono::milliseconds(static_cast<int>(opt_.timeout_s * 1000)));
    if (const char* token = std::getenv("SEMCOM_LLM_TOKEN"))
        cli.set_bearer_token_auth(token);

    json body{{"model", opt_.model_name}, {"prompt", prompt}};
    std::string payload = body.dump();
    std::string last_error = "no attempt made";
    for (int attempt = 0; attempt < opt_.max_attempts; ++attempt) {
        if (attempt > 0)
            std::this_thread::sleep_for(
                std::chrono::milliseconds(opt_.backoff_ms << (attempt - 1)));
        auto res = cli.Post("/complete", payload, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status < 200 || res->status >= 300) {
            last_error = "status " + std::to_string(res->status);
            continue;
        }
        json j = json::parse(res->body, nullptr, false);
        if (j.is_discarded() || !j.contains("text")) {
            last_error = "malformed completion body";
            continue;
        }
        return j["text"].get<std::string>();
    }
    throw std::runtime_error("llm request failed after " + std::to_string(opt_.max_attempts) +
                             " attempts: " + last_error);
}

AugmentReport augment_knowledge_base(const std::vector<std::string>& texts, LlmClient& client,
                                     KnowledgeBase& kb, const PromptTemplate& tmpl) {
    AugmentReport report;
    report.n_texts = static_cast<int>(texts.size());
    for (const auto& text : texts) {
        std::string response;
        try {
            response = client.complete(build_prompt(text, tmpl));
        } catch (const std::runtime_error&) {
            continue;  // failed text; move on
        }
        ++report.n_responses_ok;
        ParseOutcome parsed = parse_triples(response);
        report.n_parse_failures += parsed.failures;
        for (const auto& t : parsed.triples) {
            int before = kb.size();
            kb_add(kb, t);
            if (kb.size() > before)
                ++report.n_new_triples;
            else
                ++report.n_duplicate_triples;
        }
    }
    return report;
}

OmissionResult omit_fraction(const KnowledgeBase& kb, double fraction, uint64_t seed) {
    if (fraction < 0.0 || fraction >= 1.0)
        throw std::invalid_argument("omit_fraction: fraction must be in [0, 1)");
    int n_drop = static_cast<int>(std::ceil(fraction * kb.size()));
    std::vector<int> order(static_cast<size_t>(kb.size()));
    std::iota(order.begin(), order.end(), 0);
    auto rng = make_rng(seed, {label("omit")});
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<bool> drop(static_cast<size_t>(kb.size()), false);
    for (int i = 0; i < n_drop; ++i) drop[static_cast<size_t>(order[static_cast<size_t>(i)])] = true;

    OmissionResult out;
    for (int i = 0; i < kb.size(); ++i) {
        const FactTriple& t = kb.triples()[static_cast<size_t>(i)];
        if (drop[static_cast<size_t>(i)])
            out.dropped.push_back(t);
        else
            out.kept.add(t);
    }
    return out;
}

double recovery_rate(const KnowledgeBase& recovered, const std::vector<FactTriple>& dropped) {
    if (dropped.empty()) return 1.0;
    int hit = 0;
    for (const auto& t : dropped)
        if (recovered.find(t)) ++hit;
    return static_cast<double>(hit) / static_cast<double>(dropped.size());
}

}  // namespace semcom::augment
