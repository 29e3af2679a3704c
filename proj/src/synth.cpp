#include "persona/synth.hpp"

#include <algorithm>
#include <cstdio>

namespace persona {

namespace {

// Two separate signal channels share one text stream:
//   - the text channel uses plain topic words that appear in no lexicon and
//     carry no valence, so only the trainable encoder can exploit them;
//   - the context channel drives late-night timestamps plus valence- and
//     lexicon-bearing words, which is what the profile features aggregate.
// A text-only dataset (signal_ratio = 0) therefore leaves every tabular
// feature uninformative, and a context-heavy dataset keeps per-post text
// weak while user-level aggregates separate cleanly.

const char* kNeutralWords[] = {
    "table",  "window",  "coffee", "street", "train",   "paper",  "river",  "garden",
    "phone",  "meeting", "lunch",  "cloud",  "keyboard","shoes",  "market", "ticket",
    "bridge", "letter",  "bottle", "jacket", "museum",  "corner", "engine", "pocket",
    "branch", "signal",  "harbor", "stairs", "camera",  "wallet", "dinner", "station",
    "pencil", "mirror",  "plant",  "screen", "basket",  "button", "candle", "carpet",
    "floor",  "garage",  "hammer", "island", "jungle",  "kitchen","ladder", "magnet",
    "napkin", "orange",  "pillow", "quarter","rocket",  "saddle", "tunnel", "umbrella",
    "valley", "wagon",   "yard",   "zipper"};

const char* kPositiveTopicWords[] = {"vacation", "concert",  "picnic",  "festival", "melody",
                                     "blossom",  "sunrise",  "holiday", "treasure", "rainbow",
                                     "parade",   "carnival", "bouquet", "trophy",   "lagoon",
                                     "orchard",  "banquet",  "regatta", "summit",   "meadow"};

const char* kNegativeTopicWords[] = {"deadline", "traffic", "repair",  "invoice", "queue",
                                     "detour",   "outage",  "clutter", "overdraft","audit",
                                     "backlog",  "pothole", "leakage", "gridlock", "paperwork",
                                     "downtime", "lawsuit", "eviction","blizzard", "landfill"};

const char* kPositiveValenceWords[] = {"good", "love",  "thanks", "happy", "great",
                                       "wonderful", "smile", "laugh", "glad", "hope"};

const char* kNegativeValenceWords[] = {"sad",  "bad",  "tired", "cry",  "hate",
                                       "awful", "lonely", "hurt", "pain", "worst"};

const char* kLexiconWords[] = {"depressed", "hopeless", "insomnia", "empty",  "worthless",
                               "anxious",   "panic",    "numb",     "gloomy", "restless"};

const char* kNegationStarts[] = {"don't", "can't", "isn't", "won't"};

template <std::size_t N>
const char* pick(const char* const (&pool)[N], Rng& rng) {
    return pool[rng.index(N)];
}

}  // namespace

std::vector<RawPost> synth_corpus(const SynthParams& params) {
    if (params.n_users < 1) throw Error("synth: n_users must be >= 1");
    if (params.min_posts < 1 || params.max_posts < params.min_posts)
        throw Error("synth: bad posts-per-user range");
    if (params.signal_ratio < 0.0 || params.signal_ratio > 1.0)
        throw Error("synth: signal_ratio must be in [0,1]");
    if (params.words_min < 1 || params.words_max < params.words_min)
        throw Error("synth: bad words-per-post range");

    Rng rng(params.seed);
    double text_rate = params.text_strength * (1.0 - params.signal_ratio);
    double context_gamma = params.context_strength * params.signal_ratio;
    double p_late_neg = std::min(0.9, 0.12 + 0.68 * context_gamma);
    double p_late_pos = std::max(0.02, 0.12 - 0.10 * context_gamma);
    double valence_rate = 0.35 * context_gamma;
    double lexicon_rate = 0.35 * context_gamma;

    std::vector<RawPost> posts;
    for (int u = 0; u < params.n_users; ++u) {
        char uid[16];
        std::snprintf(uid, sizeof(uid), "u%05d", u);
        bool small = rng.uniform() < params.small_user_fraction;
        // Small users mirror the complement of the class mix so the balancer
        // has a minority-rich candidate pool.
        double pos_frac =
            small ? 1.0 - params.positive_fraction : params.positive_fraction;
        int user_label = rng.uniform() < pos_frac ? 1 : 0;
        int lo = small ? params.small_min : params.min_posts;
        int hi = small ? params.small_max : params.max_posts;
        int n_posts = lo + static_cast<int>(rng.index(static_cast<std::size_t>(hi - lo + 1)));

        for (int i = 0; i < n_posts; ++i) {
            RawPost post;
            post.user_id = uid;
            post.label = user_label;
            if (params.label_noise > 0.0 && rng.uniform() < params.label_noise)
                post.label = 1 - post.label;

            bool late = rng.uniform() < (post.label == 0 ? p_late_neg : p_late_pos);
            DateTime ts;
            ts.year = 2009;
            ts.month = 1 + (i / 28) % 12;
            ts.day = 1 + i % 28;
            ts.hour = late ? 1 + static_cast<int>(rng.index(5))
                           : 7 + static_cast<int>(rng.index(17));
            ts.minute = static_cast<int>(rng.index(60));
            ts.second = static_cast<int>(rng.index(60));
            post.timestamp = ts;

            int n_words =
                params.words_min +
                static_cast<int>(rng.index(
                    static_cast<std::size_t>(params.words_max - params.words_min + 1)));
            std::vector<std::string> words;
            for (int w = 0; w < n_words; ++w) {
                if (rng.uniform() < text_rate) {
                    words.push_back(post.label == 1 ? pick(kPositiveTopicWords, rng)
                                                    : pick(kNegativeTopicWords, rng));
                } else {
                    words.push_back(pick(kNeutralWords, rng));
                }
            }
            if (rng.uniform() < valence_rate) {
                words.push_back(post.label == 1 ? pick(kPositiveValenceWords, rng)
                                                : pick(kNegativeValenceWords, rng));
            }
            if (rng.uniform() < valence_rate * 0.5) {
                if (post.label == 0) {
                    words.push_back(pick(kNegationStarts, rng));
                    words.push_back("feel");
                    words.push_back(pick(kPositiveValenceWords, rng));
                } else {
                    words.push_back(":)");
                }
            }
            if (post.label == 0 && rng.uniform() < lexicon_rate) {
                words.push_back(pick(kLexiconWords, rng));
            }
            if (rng.uniform() < 0.04) words.push_back("http://t.co/x1y2z3");
            if (rng.uniform() < 0.04) words.push_back(std::to_string(rng.index(99999)));

            post.text = join(words, " ");
            posts.push_back(std::move(post));
        }
    }
    return posts;
}

Corpus synth_corpus_as_corpus(const SynthParams& params) {
    Corpus corpus;
    for (auto& post : synth_corpus(params)) corpus.add(std::move(post));
    return corpus;
}

}  // namespace persona
