#pragma once
// Per-post contextual signals: temporal late-night flag, lexicon-subtype hit
// counts from two domain lexicons, and compound sentiment over word
// multisets.

#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "persona/common.hpp"
#include "persona/corpus.hpp"

namespace persona {

// Named word sets per subtype; subtype sets may overlap.
struct Lexicon {
    std::string name;
    // Ordered so derived features and serializations are deterministic.
    std::vector<std::pair<std::string, std::unordered_set<std::string>>> subtypes;

    const std::unordered_set<std::string>* subtype(const std::string& label) const;
};

// File format: one entry per line, "subtype<TAB>word".
Lexicon load_lexicon(const std::string& path, const std::string& name);

// word -> valence score in [-4, 4].
struct ValenceLexicon {
    std::unordered_map<std::string, double> scores;
};

// File format: "word<TAB>score".
ValenceLexicon load_valence(const std::string& path);

using WordCounts = std::map<std::string, int>;

struct PostContext {
    bool is_late_night = false;
    // key "<lexicon>:<subtype>", only non-zero counts stored.
    std::map<std::string, int> lexicon_hits;
    WordCounts token_counts;
};

// Hour-of-day window, half-open [start, end); wraps past midnight when
// start > end.
struct HourWindow {
    int start_hour = 1;
    int end_hour = 6;
    bool contains(int hour) const;
};

bool is_late_night(const DateTime& timestamp, const HourWindow& window = {});

WordCounts count_tokens(const std::string& normalized_text);

// Per-subtype raw hit counts with multiset semantics: a word occurring twice
// counts twice, and a word in two subtypes counts in both.
std::map<std::string, int> lexicon_score(const WordCounts& tokens, const Lexicon& lexicon);

// Bounded odd normalization of the summed word valences:
//   S = sum count(w) * valence(w)  over words in the valence lexicon
//   score = S / sqrt(S^2 + alpha)
double compound_sentiment(const WordCounts& word_counts, const ValenceLexicon& valence,
                          double alpha = 15.0);

PostContext make_post_context(const std::string& normalized_text, const DateTime& timestamp,
                              const std::vector<const Lexicon*>& lexicons,
                              const HourWindow& window = {});

}  // namespace persona
