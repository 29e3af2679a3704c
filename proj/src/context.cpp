#include "persona/context.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace persona {

const std::unordered_set<std::string>* Lexicon::subtype(const std::string& label) const {
    for (const auto& [sub, words] : subtypes) {
        if (sub == label) return &words;
    }
    return nullptr;
}

Lexicon load_lexicon(const std::string& path, const std::string& name) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open lexicon: " + path);
    Lexicon lex;
    lex.name = name;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw Error("lexicon " + path + " line " + std::to_string(line_no) + ": missing tab");
        std::string sub = to_lower(trim(line.substr(0, tab)));
        std::string word = to_lower(trim(line.substr(tab + 1)));
        if (sub.empty() || word.empty())
            throw Error("lexicon " + path + " line " + std::to_string(line_no) + ": empty entry");
        auto it = std::find_if(lex.subtypes.begin(), lex.subtypes.end(),
                               [&](const auto& p) { return p.first == sub; });
        if (it == lex.subtypes.end()) {
            lex.subtypes.push_back({sub, {word}});
        } else {
            it->second.insert(word);
        }
    }
    return lex;
}

ValenceLexicon load_valence(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open valence table: " + path);
    ValenceLexicon v;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw Error("valence table line " + std::to_string(line_no) + ": missing tab");
        std::string word = to_lower(trim(line.substr(0, tab)));
        double score = parse_double(trim(line.substr(tab + 1)), "valence score");
        if (!std::isfinite(score) || score < -4.0 || score > 4.0)
            throw Error("valence table line " + std::to_string(line_no) +
                        ": score out of [-4,4]");
        v.scores[word] = score;
    }
    return v;
}

bool HourWindow::contains(int hour) const {
    if (start_hour <= end_hour) return hour >= start_hour && hour < end_hour;
    return hour >= start_hour || hour < end_hour;
}

bool is_late_night(const DateTime& timestamp, const HourWindow& window) {
    return window.contains(timestamp.hour);
}

WordCounts count_tokens(const std::string& normalized_text) {
    WordCounts counts;
    for (const auto& tok : split_ws(normalized_text)) counts[tok]++;
    return counts;
}

std::map<std::string, int> lexicon_score(const WordCounts& tokens, const Lexicon& lexicon) {
    std::map<std::string, int> out;
    for (const auto& [sub, words] : lexicon.subtypes) {
        int hits = 0;
        for (const auto& [word, count] : tokens) {
            if (words.count(word)) hits += count;
        }
        out[sub] = hits;
    }
    return out;
}

double compound_sentiment(const WordCounts& word_counts, const ValenceLexicon& valence,
                          double alpha) {
    if (!(alpha > 0.0)) throw Error("compound_sentiment: alpha must be positive");
    double s = 0.0;
    for (const auto& [word, count] : word_counts) {
        auto it = valence.scores.find(word);
        if (it != valence.scores.end()) s += static_cast<double>(count) * it->second;
    }
    return s / std::sqrt(s * s + alpha);
}

PostContext make_post_context(const std::string& normalized_text, const DateTime& timestamp,
                              const std::vector<const Lexicon*>& lexicons,
                              const HourWindow& window) {
    PostContext ctx;
    ctx.is_late_night = is_late_night(timestamp, window);
    ctx.token_counts = count_tokens(normalized_text);
    for (const Lexicon* lex : lexicons) {
        for (const auto& [sub, hits] : lexicon_score(ctx.token_counts, *lex)) {
            if (hits > 0) ctx.lexicon_hits[lex->name + ":" + sub] = hits;
        }
    }
    return ctx;
}

}  // namespace persona
