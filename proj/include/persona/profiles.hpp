#pragma once
// User-centred contextualized profile store: post nodes attached to user
// nodes, time-aware aggregation into profile features, and append-only
// persona annotation history written back after each classification cycle.

#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "persona/common.hpp"
#include "persona/context.hpp"
#include "persona/corpus.hpp"

namespace persona {

struct ProfilePost {
    DateTime timestamp;
    int label = -1;  // -1 = unlabeled (test-split posts)
    std::string text_norm;
    PostContext ctx;
};

struct PersonaAnnotation {
    int cycle_id = 0;
    std::string label;
    std::string timestamp;  // "-" when not supplied
};

struct ProfileNode {
    std::string user_id;
    std::vector<ProfilePost> posts;  // time-ordered
    std::vector<PersonaAnnotation> annotations;
};

// Aggregated per-user behavioural state. `named()` flattens everything the
// tabular schema can reference: night_ratio, avg_top_sent, lexicon_based,
// junyeop_lex, and one mean per primary-lexicon subtype.
struct ProfileFeatures {
    double night_ratio = 0.0;
    std::map<std::string, double> avg_lex;
    double avg_top_sent = 0.0;
    std::vector<std::pair<std::string, int>> top_words;

    std::map<std::string, double> named() const;
};

class ProfileStore {
public:
    void upsert_posts(const std::string& user_id,
                      const std::vector<ProfilePost>& posts);

    // Requires the user to exist with at least one post.
    ProfileFeatures aggregate_features(const std::string& user_id, std::size_t top_k,
                                       const std::unordered_set<std::string>& stopwords,
                                       const ValenceLexicon& valence, const Lexicon& primary,
                                       const Lexicon& secondary, double alpha = 15.0) const;

    void annotate_persona(const std::string& user_id, const std::string& persona_label,
                          int cycle_id, const std::string& timestamp = "-");

    bool has_user(const std::string& user_id) const { return nodes_.count(user_id) > 0; }
    const ProfileNode& node(const std::string& user_id) const;
    const std::vector<std::string>& users() const { return user_order_; }
    std::size_t post_count() const;

    int cycle_counter() const { return cycle_counter_; }
    int next_cycle() { return ++cycle_counter_; }

    // Line-delimited store file: header with schema version / cycle counter /
    // record count, then POST and ANNOT records (see README for the layout).
    void save(const std::string& path, const std::string& header_extras) const;
    static ProfileStore load(const std::string& path,
                             std::map<std::string, std::string>* header_kv = nullptr);

private:
    std::vector<std::string> user_order_;
    std::unordered_map<std::string, ProfileNode> nodes_;
    std::unordered_map<std::string, std::set<std::string>> seen_;  // dedup keys per user
    int cycle_counter_ = 0;
};

std::unordered_set<std::string> load_stopwords(const std::string& path);

}  // namespace persona
