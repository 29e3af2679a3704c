#pragma once
// Raw post ingestion: delimiter-separated parsing with a column schema,
// per-user minimum-post filtering, greedy user-level class balancing, and
// user-disjoint train/test splitting.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "persona/common.hpp"

namespace persona {

// Wall-clock date-time at second resolution, kept exactly as stored in the
// source data (no timezone conversion).
struct DateTime {
    int year = 1970;
    int month = 1;
    int day = 1;
    int hour = 0;
    int minute = 0;
    int second = 0;

    bool valid() const;
    std::string iso() const;  // YYYY-MM-DDTHH:MM:SS

    auto key() const { return std::tuple(year, month, day, hour, minute, second); }
    friend bool operator<(const DateTime& a, const DateTime& b) { return a.key() < b.key(); }
    friend bool operator==(const DateTime& a, const DateTime& b) { return a.key() == b.key(); }

    // "2009-04-06T22:19:45" (a space also accepted as separator)
    static bool parse_iso(const std::string& s, DateTime* out);
    // "Mon Apr 06 22:19:45 PDT 2009" (timezone token ignored)
    static bool parse_sentiment140(const std::string& s, DateTime* out);
};

struct RawPost {
    std::string user_id;
    DateTime timestamp;
    int label = 0;  // 0 = negative, 1 = positive
    std::string text;
};

// Ordered post collection with a user index. Iteration order is insertion
// order; users() lists user ids by first appearance.
class Corpus {
public:
    void add(RawPost post);

    const std::vector<RawPost>& posts() const { return posts_; }
    const std::vector<std::string>& users() const { return user_order_; }
    bool has_user(const std::string& user_id) const { return index_.count(user_id) > 0; }
    const std::vector<std::size_t>& posts_of(const std::string& user_id) const;

    std::size_t size() const { return posts_.size(); }
    bool empty() const { return posts_.empty(); }
    // (negative, positive) post counts.
    std::pair<std::size_t, std::size_t> class_counts() const;

private:
    std::vector<RawPost> posts_;
    std::vector<std::string> user_order_;
    std::unordered_map<std::string, std::vector<std::size_t>> index_;
};

enum class TimestampFormat { iso8601, sentiment140 };

// Column layout and value mappings for a delimiter-separated source.
struct CorpusSchema {
    char delimiter = ',';
    bool quoted = true;  // RFC-4180 style quoting with "" escapes
    int col_user = 4;
    int col_timestamp = 2;
    int col_label = 0;
    int col_text = 5;
    std::map<std::string, int> label_map = {{"0", 0}, {"4", 1}};
    TimestampFormat timestamp_format = TimestampFormat::sentiment140;

    int max_column() const;
};

struct ParseStats {
    std::size_t rows_read = 0;
    std::size_t skipped = 0;  // total malformed rows
    std::size_t bad_label = 0;
    std::size_t bad_timestamp = 0;
    std::size_t bad_row = 0;     // too few columns
    std::size_t empty_text = 0;  // empty after trimming
};

// Reads every well-formed row into a Corpus; malformed rows are skipped and
// counted. Throws on an unreadable stream.
Corpus parse_corpus(std::istream& source, const CorpusSchema& schema, ParseStats* stats = nullptr);

// Keeps only users with at least `min_posts` posts, preserving post order.
Corpus filter_min_posts(const Corpus& corpus, std::size_t min_posts);

struct BalanceReport {
    std::size_t pos_count = 0;
    std::size_t neg_count = 0;
    double imbalance = 0.0;  // |pos-neg| / (pos+neg)
    double threshold = 0.0;
    std::vector<std::string> users_added;
    std::size_t posts_added = 0;
    // Set when the loop stopped with imbalance still above threshold
    // (candidate pool exhausted, no useful candidate, or budget hit).
    bool threshold_unmet = false;
};

// Greedy user-atomic balancing: while imbalance exceeds the threshold and the
// budget allows, admit the candidate user with the largest net count of
// minority-class posts (ties by user id). Candidates whose addition would not
// strictly shrink |pos-neg| are never admitted, so every step makes progress.
std::pair<Corpus, BalanceReport> balance_classes(const Corpus& core, const Corpus& candidates,
                                                 double threshold, std::size_t budget);

// Seeded user-level split; no user appears in both halves.
// Throws if the corpus has fewer than two users.
std::pair<Corpus, Corpus> split_by_user(const Corpus& corpus, double train_fraction,
                                        std::uint64_t seed);

double imbalance_of(std::size_t pos, std::size_t neg);

// Canonical on-disk corpus: header line, then one post per line as
// user_id <TAB> ISO-8601 timestamp <TAB> label <TAB> escaped text.
void write_canonical(std::ostream& out, const Corpus& corpus,
                     const std::string& header_extras);
void write_canonical_file(const std::string& path, const Corpus& corpus,
                          const std::string& header_extras);
Corpus read_canonical(std::istream& in, std::map<std::string, std::string>* header_kv = nullptr);
Corpus read_canonical_file(const std::string& path,
                           std::map<std::string, std::string>* header_kv = nullptr);

}  // namespace persona
