#include "fieldscribe/prompts.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "fieldscribe/error.hpp"
#include "fieldscribe/gateway.hpp"
#include "fieldscribe/session.hpp"

namespace fieldscribe::prompts {

ExtractionMode parse_mode(const std::string& text) {
    if (text == "heuristic") return ExtractionMode::Heuristic;
    if (text == "gateway_pos") return ExtractionMode::GatewayPos;
    throw Error(Errc::SchemaViolation, "unknown prompt mode '" + text + "'");
}

WordList WordList::parse(std::string_view text) {
    WordList list;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::string word = session::trim(line);
        if (!word.empty()) list.words_.insert(std::move(word));
    }
    return list;
}

WordList WordList::load(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw Error(Errc::IoError, "cannot read word list " + file.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

std::string PromptSet::joined() const {
    std::string out;
    for (const std::string& n : nouns) {
        if (!out.empty()) out += ' ';
        out += n;
    }
    return out;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char c : text) {
        const auto u = static_cast<unsigned char>(c);
        if (std::isalnum(u)) {
            current += static_cast<char>(std::tolower(u));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

namespace {

std::string strip_plural(const std::string& w) {
    const auto ends = [&](std::string_view suffix) { return w.size() > suffix.size() && w.ends_with(suffix); };
    if (w.size() > 4 && ends("ies")) return w.substr(0, w.size() - 3) + "y";
    for (std::string_view suffix : {"sses", "xes", "ches", "shes", "zzes"}) {
        if (ends(suffix)) return w.substr(0, w.size() - 2);
    }
    if (w.size() > 3 && ends("s") && !ends("ss") && !ends("us") && !ends("is")) return w.substr(0, w.size() - 1);
    return w;
}

}  // namespace

// Every rule shortens the word, so the fixpoint exists and makes the result idempotent.
std::string singularize(std::string_view word) {
    std::string w(word);
    for (std::string next = strip_plural(w); next != w; next = strip_plural(w)) w = std::move(next);
    return w;
}

NounExtractor::NounExtractor()
    : NounExtractor(WordList::parse(bundled_stopwords()), WordList::parse(bundled_verbs())) {}

NounExtractor::NounExtractor(WordList stopwords, WordList verbs, std::size_t cap)
    : stopwords_(std::move(stopwords)), verbs_(std::move(verbs)), cap_(cap) {}

bool NounExtractor::excluded(const std::string& word) const {
    return stopwords_.contains(word) || verbs_.contains(word);
}

PromptSet NounExtractor::finish(const std::vector<std::string>& candidates) const {
    PromptSet out;
    for (const std::string& c : candidates) {
        if (out.nouns.size() >= cap_) break;
        if (std::find(out.nouns.begin(), out.nouns.end(), c) == out.nouns.end()) out.nouns.push_back(c);
    }
    if (out.nouns.empty()) throw Error(Errc::EmptyPromptSet, "no nouns left after filtering");
    return out;
}

PromptSet NounExtractor::extract(std::string_view text) const {
    if (session::trim(text).empty()) throw Error(Errc::EmptyText, "cannot extract nouns from empty text");
    std::vector<std::string> candidates;
    for (const std::string& token : tokenize(text)) {
        if (token.size() < 2) continue;
        if (std::all_of(token.begin(), token.end(), [](unsigned char c) { return std::isdigit(c); })) continue;
        if (excluded(token)) continue;
        std::string singular = singularize(token);
        if (excluded(singular)) continue;
        candidates.push_back(std::move(singular));
    }
    return finish(candidates);
}

PromptSet NounExtractor::extract(std::string_view text, ExtractionMode mode, gateway::GatewayClient* client) const {
    if (mode == ExtractionMode::Heuristic) return extract(text);
    if (session::trim(text).empty()) throw Error(Errc::EmptyText, "cannot extract nouns from empty text");
    if (!client) throw Error(Errc::Precondition, "gateway POS mode needs a gateway client");
    std::vector<std::string> candidates;
    for (const gateway::PosToken& t : client->pos_tags(std::string(text))) {
        if (t.tag != "NOUN" && t.tag != "PROPN") continue;
        for (const std::string& token : tokenize(t.text)) {
            if (token.size() >= 2) candidates.push_back(singularize(token));
        }
    }
    return finish(candidates);
}

}  // namespace fieldscribe::prompts
