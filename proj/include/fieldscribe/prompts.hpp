#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace fieldscribe::gateway {
class GatewayClient;
}

namespace fieldscribe::prompts {

enum class ExtractionMode { Heuristic, GatewayPos };

ExtractionMode parse_mode(const std::string& text);

inline constexpr std::size_t kDefaultPromptCap = 12;

// Plain-text token list: one token per line, '#' starts a comment.
class WordList {
public:
    WordList() = default;
    static WordList parse(std::string_view text);
    static WordList load(const std::filesystem::path& file);

    bool contains(const std::string& word) const { return words_.contains(word); }
    std::size_t size() const { return words_.size(); }

private:
    std::set<std::string> words_;
};

// Lists compiled into the binary from data/.
std::string_view bundled_stopwords();
std::string_view bundled_verbs();

struct PromptSet {
    std::vector<std::string> nouns;  // lower case, unique, first-occurrence order

    std::string joined() const;
};

// Lower-cased alphanumeric tokens; apostrophes and hyphens split words.
std::vector<std::string> tokenize(std::string_view text);

// s / es / ies plural rule. Idempotent.
std::string singularize(std::string_view word);

class NounExtractor {
public:
    NounExtractor();
    NounExtractor(WordList stopwords, WordList verbs, std::size_t cap = kDefaultPromptCap);

    PromptSet extract(std::string_view text) const;
    PromptSet extract(std::string_view text, ExtractionMode mode, gateway::GatewayClient* client) const;

    std::size_t cap() const { return cap_; }

private:
    bool excluded(const std::string& word) const;
    PromptSet finish(const std::vector<std::string>& candidates) const;

    WordList stopwords_;
    WordList verbs_;
    std::size_t cap_;
};

}  // namespace fieldscribe::prompts
