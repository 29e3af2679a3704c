#pragma once
// Seeded synthetic corpus generator. The label signal is split between two
// channels: class-specific word choice (visible to the text encoder) and
// late-night posting habits plus lexicon-word usage (visible to the
// contextual features). `signal_ratio` moves signal from text to context.

#include <cstdint>
#include <vector>

#include "persona/corpus.hpp"

namespace persona {

struct SynthParams {
    int n_users = 120;
    int min_posts = 10;
    int max_posts = 14;
    double positive_fraction = 0.5;
    // 0 = all signal in text, 1 = all signal in context.
    double signal_ratio = 0.5;
    double text_strength = 0.3;     // per-word probability scale of class words
    double context_strength = 0.9;  // late-night separation scale
    double label_noise = 0.0;       // per-post label flip probability
    int words_min = 6;
    int words_max = 12;
    // Fraction of users generated with fewer than min_posts posts (these form
    // the balancing candidate pool); their class mix mirrors the complement
    // of positive_fraction so re-admitting them can rebalance the corpus.
    double small_user_fraction = 0.0;
    int small_min = 3;
    int small_max = 9;
    std::uint64_t seed = 1;
};

std::vector<RawPost> synth_corpus(const SynthParams& params);

Corpus synth_corpus_as_corpus(const SynthParams& params);

}  // namespace persona
