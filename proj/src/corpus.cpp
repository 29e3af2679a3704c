#include "persona/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace persona {

namespace {

const char* kMonthNames[12] = {"jan", "feb", "mar", "apr", "may", "jun",
                               "jul", "aug", "sep", "oct", "nov", "dec"};

int month_from_name(const std::string& name) {
    std::string m = to_lower(name);
    for (int i = 0; i < 12; ++i) {
        if (m == kMonthNames[i]) return i + 1;
    }
    return 0;
}

bool parse_int_field(const std::string& s, int* out) {
    if (s.empty()) return false;
    int v = 0;
    for (char c : s) {
        if (c < '0' || c > '9') return false;
        v = v * 10 + (c - '0');
    }
    *out = v;
    return true;
}

// "HH:MM:SS"
bool parse_clock(const std::string& s, DateTime* dt) {
    auto parts = split(s, ':');
    if (parts.size() != 3) return false;
    return parse_int_field(parts[0], &dt->hour) && parse_int_field(parts[1], &dt->minute) &&
           parse_int_field(parts[2], &dt->second) && dt->hour < 24 && dt->minute < 60 &&
           dt->second < 60;
}

}  // namespace

bool DateTime::valid() const {
    return year >= 1 && month >= 1 && month <= 12 && day >= 1 && day <= 31 && hour >= 0 &&
           hour < 24 && minute >= 0 && minute < 60 && second >= 0 && second < 60;
}

std::string DateTime::iso() const {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d", year, month, day, hour,
                  minute, second);
    return buf;
}

bool DateTime::parse_iso(const std::string& s, DateTime* out) {
    if (s.size() < 19) return false;
    if (s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != ' ') || s[13] != ':' ||
        s[16] != ':')
        return false;
    DateTime dt;
    if (!parse_int_field(s.substr(0, 4), &dt.year) || !parse_int_field(s.substr(5, 2), &dt.month) ||
        !parse_int_field(s.substr(8, 2), &dt.day) || !parse_int_field(s.substr(11, 2), &dt.hour) ||
        !parse_int_field(s.substr(14, 2), &dt.minute) ||
        !parse_int_field(s.substr(17, 2), &dt.second))
        return false;
    if (!dt.valid()) return false;
    *out = dt;
    return true;
}

bool DateTime::parse_sentiment140(const std::string& s, DateTime* out) {
    // "Mon Apr 06 22:19:45 PDT 2009" — weekday and timezone tokens ignored.
    auto parts = split_ws(s);
    if (parts.size() != 6) return false;
    DateTime dt;
    dt.month = month_from_name(parts[1]);
    if (dt.month == 0) return false;
    if (!parse_int_field(parts[2], &dt.day)) return false;
    if (!parse_clock(parts[3], &dt)) return false;
    if (!parse_int_field(parts[5], &dt.year)) return false;
    if (!dt.valid()) return false;
    *out = dt;
    return true;
}

void Corpus::add(RawPost post) {
    auto it = index_.find(post.user_id);
    if (it == index_.end()) {
        user_order_.push_back(post.user_id);
        it = index_.emplace(post.user_id, std::vector<std::size_t>{}).first;
    }
    it->second.push_back(posts_.size());
    posts_.push_back(std::move(post));
}

const std::vector<std::size_t>& Corpus::posts_of(const std::string& user_id) const {
    auto it = index_.find(user_id);
    if (it == index_.end()) throw Error("unknown user: " + user_id);
    return it->second;
}

std::pair<std::size_t, std::size_t> Corpus::class_counts() const {
    std::size_t neg = 0, pos = 0;
    for (const auto& p : posts_) {
        (p.label == 1 ? pos : neg)++;
    }
    return {neg, pos};
}

int CorpusSchema::max_column() const {
    return std::max(std::max(col_user, col_timestamp), std::max(col_label, col_text));
}

namespace {

// Streaming record reader: splits on newlines outside quotes, fields on the
// delimiter outside quotes, "" inside a quoted field is a literal quote.
bool read_record(std::istream& in, const CorpusSchema& schema, std::vector<std::string>* fields) {
    fields->clear();
    std::string cur;
    bool in_quotes = false;
    bool saw_any = false;
    int ch;
    while ((ch = in.get()) != std::char_traits<char>::eof()) {
        char c = static_cast<char>(ch);
        saw_any = true;
        if (in_quotes) {
            if (c == '"') {
                if (in.peek() == '"') {
                    cur.push_back('"');
                    in.get();
                } else {
                    in_quotes = false;
                }
            } else {
                cur.push_back(c);
            }
            continue;
        }
        if (schema.quoted && c == '"' && cur.empty()) {
            in_quotes = true;
        } else if (c == schema.delimiter) {
            fields->push_back(cur);
            cur.clear();
        } else if (c == '\n') {
            break;
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    if (!saw_any) return false;
    fields->push_back(cur);
    return true;
}

}  // namespace

Corpus parse_corpus(std::istream& source, const CorpusSchema& schema, ParseStats* stats) {
    if (!source.good()) throw Error("unreadable corpus source");
    Corpus corpus;
    ParseStats local;
    ParseStats& st = stats ? *stats : local;
    std::vector<std::string> fields;
    while (read_record(source, schema, &fields)) {
        if (fields.size() == 1 && trim(fields[0]).empty()) continue;  // blank line
        st.rows_read++;
        if (static_cast<int>(fields.size()) <= schema.max_column()) {
            st.bad_row++;
            st.skipped++;
            continue;
        }
        auto label_it = schema.label_map.find(trim(fields[schema.col_label]));
        if (label_it == schema.label_map.end()) {
            st.bad_label++;
            st.skipped++;
            continue;
        }
        DateTime ts;
        const std::string& raw_ts = fields[schema.col_timestamp];
        bool ok = schema.timestamp_format == TimestampFormat::iso8601
                      ? DateTime::parse_iso(trim(raw_ts), &ts)
                      : DateTime::parse_sentiment140(raw_ts, &ts);
        if (!ok) {
            st.bad_timestamp++;
            st.skipped++;
            continue;
        }
        std::string text = trim(fields[schema.col_text]);
        if (text.empty()) {
            st.empty_text++;
            st.skipped++;
            continue;
        }
        RawPost post;
        post.user_id = trim(fields[schema.col_user]);
        post.timestamp = ts;
        post.label = label_it->second;
        post.text = std::move(text);
        corpus.add(std::move(post));
    }
    return corpus;
}

Corpus filter_min_posts(const Corpus& corpus, std::size_t min_posts) {
    if (min_posts < 1) throw Error("min_posts must be >= 1");
    Corpus out;
    for (const auto& post : corpus.posts()) {
        if (corpus.posts_of(post.user_id).size() >= min_posts) out.add(post);
    }
    return out;
}

double imbalance_of(std::size_t pos, std::size_t neg) {
    std::size_t total = pos + neg;
    if (total == 0) return 0.0;
    std::size_t diff = pos > neg ? pos - neg : neg - pos;
    return static_cast<double>(diff) / static_cast<double>(total);
}

std::pair<Corpus, BalanceReport> balance_classes(const Corpus& core, const Corpus& candidates,
                                                 double threshold, std::size_t budget) {
    if (!(threshold > 0.0 && threshold <= 1.0)) throw Error("balance threshold must be in (0,1]");
    for (const auto& u : candidates.users()) {
        if (core.has_user(u)) throw Error("candidate user overlaps core corpus: " + u);
    }

    auto [neg, pos] = core.class_counts();
    struct Cand {
        std::string user;
        long long pos = 0;
        long long neg = 0;
        std::size_t n_posts = 0;
    };
    std::vector<Cand> pool;
    for (const auto& u : candidates.users()) {
        Cand c;
        c.user = u;
        for (std::size_t idx : candidates.posts_of(u)) {
            (candidates.posts()[idx].label == 1 ? c.pos : c.neg)++;
            c.n_posts++;
        }
        pool.push_back(std::move(c));
    }

    BalanceReport report;
    report.threshold = threshold;
    std::vector<std::string> added_users;

    while (imbalance_of(pos, neg) > threshold) {
        long long diff = static_cast<long long>(pos > neg ? pos - neg : neg - pos);
        bool pos_minority = pos < neg;
        // Largest net minority contribution that still strictly shrinks the
        // gap; overshooting candidates (net >= 2*diff) are skipped.
        std::size_t best = pool.size();
        long long best_net = 0;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            long long net = pos_minority ? pool[i].pos - pool[i].neg : pool[i].neg - pool[i].pos;
            if (net <= 0 || net >= 2 * diff) continue;
            if (best == pool.size() || net > best_net ||
                (net == best_net && pool[i].user < pool[best].user)) {
                best = i;
                best_net = net;
            }
        }
        if (best == pool.size()) break;  // pool exhausted or nothing useful
        if (report.posts_added + pool[best].n_posts > budget) break;
        pos += static_cast<std::size_t>(pool[best].pos);
        neg += static_cast<std::size_t>(pool[best].neg);
        report.posts_added += pool[best].n_posts;
        added_users.push_back(pool[best].user);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(best));
    }

    report.pos_count = pos;
    report.neg_count = neg;
    report.imbalance = imbalance_of(pos, neg);
    report.threshold_unmet = report.imbalance > threshold;
    report.users_added = added_users;

    Corpus out;
    for (const auto& p : core.posts()) out.add(p);
    for (const auto& u : added_users) {
        for (std::size_t idx : candidates.posts_of(u)) out.add(candidates.posts()[idx]);
    }
    return {std::move(out), std::move(report)};
}

std::pair<Corpus, Corpus> split_by_user(const Corpus& corpus, double train_fraction,
                                        std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw Error("train_fraction must be in (0,1)");
    std::vector<std::string> users = corpus.users();
    if (users.size() < 2) throw Error("need at least 2 users to split by user");
    Rng rng(seed);
    rng.shuffle(users);
    auto n = static_cast<std::size_t>(
        std::llround(train_fraction * static_cast<double>(users.size())));
    n = std::clamp<std::size_t>(n, 1, users.size() - 1);
    std::unordered_map<std::string, bool> in_train;
    for (std::size_t i = 0; i < users.size(); ++i) in_train[users[i]] = i < n;
    Corpus train, test;
    for (const auto& p : corpus.posts()) {
        (in_train[p.user_id] ? train : test).add(p);
    }
    return {std::move(train), std::move(test)};
}

void write_canonical(std::ostream& out, const Corpus& corpus, const std::string& header_extras) {
    out << "# persona-corpus v1";
    if (!header_extras.empty()) out << ' ' << header_extras;
    out << '\n';
    for (const auto& p : corpus.posts()) {
        out << p.user_id << '\t' << p.timestamp.iso() << '\t' << p.label << '\t'
            << escape_field(p.text) << '\n';
    }
}

void write_canonical_file(const std::string& path, const Corpus& corpus,
                          const std::string& header_extras) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write corpus file: " + path);
    write_canonical(out, corpus, header_extras);
    if (!out) throw Error("corpus write failed: " + path);
}

Corpus read_canonical(std::istream& in, std::map<std::string, std::string>* header_kv) {
    Corpus corpus;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (line_no == 1 && !starts_with(line, "# persona-corpus"))
                throw Error("not a canonical corpus file");
            if (header_kv && line_no == 1) *header_kv = parse_header_kv(line);
            continue;
        }
        auto fields = split(line, '\t');
        if (fields.size() != 4)
            throw Error("corpus line " + std::to_string(line_no) + ": expected 4 fields, got " +
                        std::to_string(fields.size()));
        RawPost p;
        p.user_id = fields[0];
        if (!DateTime::parse_iso(fields[1], &p.timestamp))
            throw Error("corpus line " + std::to_string(line_no) + ": bad timestamp");
        long long label = parse_int(fields[2], "label");
        if (label != 0 && label != 1)
            throw Error("corpus line " + std::to_string(line_no) + ": label must be 0 or 1");
        p.label = static_cast<int>(label);
        p.text = unescape_field(fields[3]);
        corpus.add(std::move(p));
    }
    return corpus;
}

Corpus read_canonical_file(const std::string& path, std::map<std::string, std::string>* header_kv) {
    if (!file_exists(path)) throw MissingArtifactError("missing corpus file: " + path);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open corpus file: " + path);
    return read_canonical(in, header_kv);
}

}  // namespace persona
