#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "semcom/corpus.hpp"

namespace semcom::augment {

// Prompt with a {SENTENCE} slot plus the fixed output-grammar instruction.
struct PromptTemplate {
    std::string text;
    static PromptTemplate standard();
};

// Rendered prompt contains the input sentence exactly once.
std::string build_prompt(const std::string& text, const PromptTemplate& tmpl);

struct ParseOutcome {
    std::vector<FactTriple> triples;  // in response order
    int failures = 0;                 // malformed non-blank lines
};

// Accepts lines of the form "(head | relation | tail)"; blank lines are
// skipped, anything else counts as a failure for that line only. An empty or
// fully unparseable response yields no triples and failures > 0.
ParseOutcome parse_triples(const std::string& response);

class LlmClient {
public:
    virtual ~LlmClient() = default;
    // Throws std::runtime_error on transport failure (after retries).
    virtual std::string complete(const std::string& prompt) = 0;
};

// Offline stand-in: replies with the response of the first fixture whose
// prompt_contains string occurs in the prompt; otherwise an empty string.
class MockLlmClient final : public LlmClient {
public:
    struct Fixture {
        std::string prompt_contains;
        std::string response;
    };

    explicit MockLlmClient(std::vector<Fixture> fixtures);
    // JSON-lines of {"prompt_contains": ..., "response": ...}.
    static MockLlmClient from_jsonl(const std::string& path);

    std::string complete(const std::string& prompt) override;
    size_t fixture_count() const { return fixtures_.size(); }
    const std::vector<Fixture>& fixtures() const { return fixtures_; }

private:
    std::vector<Fixture> fixtures_;
};

// POSTs {"model", "prompt"} as JSON to <endpoint>/complete and expects
// {"text": ...} back. The bearer token comes from the SEMCOM_LLM_TOKEN
// environment variable; it is never read from configuration files.
class HttpLlmClient final : public LlmClient {
public:
    struct Options {
        std::string endpoint;  // e.g. http://127.0.0.1:8089
        std::string model_name = "gpt-3.5-turbo";
        double timeout_s = 30.0;
        int max_attempts = 3;
        int backoff_ms = 250;  // doubles per retry
    };

    explicit HttpLlmClient(Options opt);
    std::string complete(const std::string& prompt) override;

private:
    Options opt_;
};

struct AugmentReport {
    int n_texts = 0;
    int n_responses_ok = 0;     // completions that returned without error
    int n_parse_failures = 0;   // malformed lines across all responses
    int n_new_triples = 0;
    int n_duplicate_triples = 0;
};

// Prompt, complete, parse, merge. Client errors mark the text failed and
// processing continues; the kb only ever grows.
AugmentReport augment_knowledge_base(const std::vector<std::string>& texts, LlmClient& client,
                                     KnowledgeBase& kb, const PromptTemplate& tmpl);

// Deterministically drops ceil(fraction * n_t) triples (rebuilding the kb
// from the survivors) for omission-then-recovery experiments.
struct OmissionResult {
    KnowledgeBase kept;
    std::vector<FactTriple> dropped;
};
OmissionResult omit_fraction(const KnowledgeBase& kb, double fraction, uint64_t seed);

// Share of dropped triples present in the recovered kb; 1.0 when none dropped.
double recovery_rate(const KnowledgeBase& recovered, const std::vector<FactTriple>& dropped);

}  // namespace semcom::augment
