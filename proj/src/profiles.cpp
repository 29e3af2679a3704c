#include "persona/profiles.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace persona {

namespace {

std::string dedup_key(const DateTime& ts, const std::string& text) {
    return ts.iso() + "\x01" + text;
}

// "lex:sub=3;lex:sub2=1" or "-" when empty.
std::string format_hits(const std::map<std::string, int>& hits) {
    if (hits.empty()) return "-";
    std::string out;
    for (const auto& [key, count] : hits) {
        if (!out.empty()) out.push_back(';');
        out += key + "=" + std::to_string(count);
    }
    return out;
}

std::map<std::string, int> parse_hits(const std::string& field, std::size_t line_no) {
    std::map<std::string, int> hits;
    if (field == "-") return hits;
    for (const auto& part : split(field, ';')) {
        auto eq = part.find('=');
        if (eq == std::string::npos)
            throw Error("store line " + std::to_string(line_no) + ": bad hits field");
        hits[part.substr(0, eq)] =
            static_cast<int>(parse_int(part.substr(eq + 1), "lexicon hit count"));
    }
    return hits;
}

}  // namespace

std::map<std::string, double> ProfileFeatures::named() const {
    std::map<std::string, double> out;
    out["night_ratio"] = night_ratio;
    out["avg_top_sent"] = avg_top_sent;
    for (const auto& [key, value] : avg_lex) out[key] = value;
    return out;
}

void ProfileStore::upsert_posts(const std::string& user_id,
                                const std::vector<ProfilePost>& posts) {
    auto it = nodes_.find(user_id);
    if (it == nodes_.end()) {
        user_order_.push_back(user_id);
        it = nodes_.emplace(user_id, ProfileNode{user_id, {}, {}}).first;
    }
    ProfileNode& node = it->second;
    auto& seen = seen_[user_id];
    for (const auto& post : posts) {
        std::string key = dedup_key(post.timestamp, post.text_norm);
        if (!seen.insert(key).second) continue;  // duplicate (user, timestamp, text)
        auto pos = std::upper_bound(
            node.posts.begin(), node.posts.end(), post,
            [](const ProfilePost& a, const ProfilePost& b) { return a.timestamp < b.timestamp; });
        node.posts.insert(pos, post);
    }
}

const ProfileNode& ProfileStore::node(const std::string& user_id) const {
    auto it = nodes_.find(user_id);
    if (it == nodes_.end()) throw Error("unknown user in profile store: " + user_id);
    return it->second;
}

std::size_t ProfileStore::post_count() const {
    std::size_t n = 0;
    for (const auto& [_, node] : nodes_) n += node.posts.size();
    return n;
}

ProfileFeatures ProfileStore::aggregate_features(const std::string& user_id, std::size_t top_k,
                                                 const std::unordered_set<std::string>& stopwords,
                                                 const ValenceLexicon& valence,
                                                 const Lexicon& primary, const Lexicon& secondary,
                                                 double alpha) const {
    const ProfileNode& n = node(user_id);
    if (n.posts.empty()) throw Error("user has no posts: " + user_id);
    double total = static_cast<double>(n.posts.size());

    ProfileFeatures feats;
    std::size_t late = 0;
    WordCounts merged;
    double primary_total = 0.0;
    double secondary_total = 0.0;
    std::map<std::string, double> subtype_sums;
    for (const auto& [sub, _] : primary.subtypes) subtype_sums[sub] = 0.0;

    for (const auto& post : n.posts) {
        if (post.ctx.is_late_night) ++late;
        for (const auto& [word, count] : post.ctx.token_counts) merged[word] += count;
        for (const auto& [key, count] : post.ctx.lexicon_hits) {
            auto colon = key.find(':');
            std::string lex = key.substr(0, colon);
            std::string sub = colon == std::string::npos ? "" : key.substr(colon + 1);
            if (lex == primary.name) {
                primary_total += count;
                if (subtype_sums.count(sub)) subtype_sums[sub] += count;
            } else if (lex == secondary.name) {
                secondary_total += count;
            }
        }
    }

    feats.night_ratio = static_cast<double>(late) / total;
    for (const auto& [sub, sum] : subtype_sums) feats.avg_lex[sub] = sum / total;
    feats.avg_lex["lexicon_based"] = primary_total / total;
    feats.avg_lex["junyeop_lex"] = secondary_total / total;

    // Top-K most frequent non-stopword tokens, ties lexicographic.
    std::vector<std::pair<std::string, int>> ranked;
    for (const auto& [word, count] : merged) {
        if (!stopwords.count(word)) ranked.push_back({word, count});
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (ranked.size() > top_k) ranked.resize(top_k);
    feats.top_words = ranked;

    WordCounts top_counts;
    for (const auto& [word, count] : ranked) top_counts[word] = count;
    feats.avg_top_sent = compound_sentiment(top_counts, valence, alpha);
    return feats;
}

void ProfileStore::annotate_persona(const std::string& user_id, const std::string& persona_label,
                                    int cycle_id, const std::string& timestamp) {
    auto it = nodes_.find(user_id);
    if (it == nodes_.end()) throw Error("unknown user in profile store: " + user_id);
    it->second.annotations.push_back(
        {cycle_id, persona_label, timestamp.empty() ? "-" : timestamp});
}

void ProfileStore::save(const std::string& path, const std::string& header_extras) const {
    std::size_t records = 0;
    for (const auto& u : user_order_) {
        const ProfileNode& n = nodes_.at(u);
        records += n.posts.size() + n.annotations.size();
    }
    std::ostringstream out;
    out << "# persona-store v1 cycle=" << cycle_counter_ << " records=" << records;
    if (!header_extras.empty()) out << ' ' << header_extras;
    out << '\n';
    for (const auto& u : user_order_) {
        const ProfileNode& n = nodes_.at(u);
        for (const auto& p : n.posts) {
            out << "POST\t" << u << '\t' << p.timestamp.iso() << '\t'
                << (p.label < 0 ? std::string("-") : std::to_string(p.label)) << '\t'
                << (p.ctx.is_late_night ? 1 : 0) << '\t' << format_hits(p.ctx.lexicon_hits)
                << '\t' << escape_field(p.text_norm) << '\n';
        }
        for (const auto& a : n.annotations) {
            out << "ANNOT\t" << u << '\t' << a.cycle_id << '\t' << a.label << '\t' << a.timestamp
                << '\n';
        }
    }
    write_text_file(path, out.str());
}

ProfileStore ProfileStore::load(const std::string& path,
                                std::map<std::string, std::string>* header_kv) {
    if (!file_exists(path)) throw MissingArtifactError("missing profile store: " + path);
    std::ifstream in(path);
    if (!in) throw Error("cannot open profile store: " + path);

    ProfileStore store;
    std::string line;
    if (!std::getline(in, line) || !starts_with(line, "# persona-store v1"))
        throw Error("store line 1: missing 'persona-store v1' header");
    auto header = parse_header_kv(line);
    if (header_kv) *header_kv = header;
    store.cycle_counter_ = header.count("cycle")
                               ? static_cast<int>(parse_int(header["cycle"], "cycle"))
                               : 0;
    if (!header.count("records")) throw Error("store line 1: missing record count");
    auto expected = static_cast<std::size_t>(parse_int(header["records"], "records"));

    std::size_t line_no = 1;
    std::size_t records = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = split(line, '\t');
        if (fields[0] == "POST") {
            if (fields.size() != 7)
                throw Error("store line " + std::to_string(line_no) + ": POST needs 7 fields");
            ProfilePost p;
            if (!DateTime::parse_iso(fields[2], &p.timestamp))
                throw Error("store line " + std::to_string(line_no) + ": bad timestamp");
            p.label = fields[3] == "-" ? -1 : static_cast<int>(parse_int(fields[3], "label"));
            p.ctx.is_late_night = fields[4] == "1";
            p.ctx.lexicon_hits = parse_hits(fields[5], line_no);
            p.text_norm = unescape_field(fields[6]);
            p.ctx.token_counts = count_tokens(p.text_norm);
            store.upsert_posts(fields[1], {p});
        } else if (fields[0] == "ANNOT") {
            if (fields.size() != 5)
                throw Error("store line " + std::to_string(line_no) + ": ANNOT needs 5 fields");
            if (!store.has_user(fields[1])) {
                // Annotation may precede posts only if the user node exists.
                store.user_order_.push_back(fields[1]);
                store.nodes_.emplace(fields[1], ProfileNode{fields[1], {}, {}});
            }
            store.annotate_persona(fields[1], fields[3],
                                   static_cast<int>(parse_int(fields[2], "cycle id")), fields[4]);
        } else {
            throw Error("store line " + std::to_string(line_no) + ": unknown record kind '" +
                        fields[0] + "'");
        }
        ++records;
    }
    if (records != expected)
        throw Error("store line " + std::to_string(line_no) + ": expected " +
                    std::to_string(expected) + " records, found " + std::to_string(records) +
                    " (file truncated?)");
    return store;
}

std::unordered_set<std::string> load_stopwords(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open stopword list: " + path);
    std::unordered_set<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        std::string w = to_lower(trim(line));
        if (!w.empty() && w[0] != '#') words.insert(w);
    }
    return words;
}

}  // namespace persona
