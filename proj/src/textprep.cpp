#include "persona/textprep.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace persona {

ExpansionTable load_expansion_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open expansion table: " + path);
    ExpansionTable table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw Error("expansion table line " + std::to_string(line_no) + ": missing tab");
        std::string key = to_lower(trim(line.substr(0, tab)));
        std::string phrase = to_lower(trim(line.substr(tab + 1)));
        if (key.empty() || phrase.empty())
            throw Error("expansion table line " + std::to_string(line_no) + ": empty entry");
        table[key] = phrase;
    }
    return table;
}

namespace {

bool is_url(const std::string& tok) {
    return starts_with(tok, "http://") || starts_with(tok, "https://") ||
           starts_with(tok, "www.");
}

bool is_ascii_punct(char c) {
    return std::ispunct(static_cast<unsigned char>(c)) != 0;
}

bool all_digits(const std::string& s) {
    if (s.empty()) return false;
    return std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() &&
           s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// don't / isn't / won't ... -> "not"
bool is_negation_contraction(const std::string& tok) {
    if (tok == "cannot") return true;
    if (tok.size() < 4 || !ends_with(tok, "n't")) return false;
    for (std::size_t i = 0; i + 3 < tok.size(); ++i) {
        char c = tok[i];
        if (!(c >= 'a' && c <= 'z')) return false;
    }
    return true;
}

void emit_word(const std::string& word, bool stem, std::string* out) {
    std::string w = stem ? strip_suffix(word) : word;
    if (w.empty()) return;
    if (!out->empty()) out->push_back(' ');
    *out += w;
}

}  // namespace

std::string strip_suffix(const std::string& word) {
    // Minimal stemmer: strip one inflectional suffix, never below 3 chars,
    // and never re-strippable (output is a fixed point of this function).
    auto cut = [&](std::size_t n) { return word.substr(0, word.size() - n); };
    std::size_t len = word.size();
    auto has = [&](const char* suf) { return ends_with(word, suf); };
    if (len >= 6 && has("ingly")) return cut(5);
    if (len >= 6 && has("edly")) return cut(4);
    if (len >= 6 && has("ing")) return cut(3);
    if (len >= 5 && has("ied")) return cut(3) + "y";
    if (len >= 5 && has("ies")) return cut(3) + "y";
    if (len >= 5 && has("ed") && word[len - 3] != 'e') return cut(2);
    if (len >= 5 && has("es") && word[len - 3] != 's' && word[len - 3] != 'e') return cut(2);
    if (len >= 4 && has("s") && word[len - 2] != 's' && word[len - 2] != 'e') return cut(1);
    return word;
}

std::string normalize_text(const std::string& raw, const ExpansionTable& expansion, bool stem) {
    std::string lowered = to_lower(raw);
    // Unicode right single quote -> ASCII apostrophe so contractions match.
    for (std::size_t pos = 0; (pos = lowered.find("\xe2\x80\x99", pos)) != std::string::npos;) {
        lowered.replace(pos, 3, "'");
    }

    std::string out;
    for (const std::string& tok : split_ws(lowered)) {
        auto exp = expansion.find(tok);
        if (exp != expansion.end()) {
            for (const auto& w : split_ws(exp->second)) emit_word(w, stem, &out);
            continue;
        }
        if (is_url(tok)) continue;
        if (is_negation_contraction(tok)) {
            emit_word("not", stem, &out);
            continue;
        }
        std::string bare;
        for (char c : tok) {
            if (!is_ascii_punct(c)) bare.push_back(c);
        }
        if (bare.empty() || all_digits(bare)) continue;
        // Punctuation may have hidden an expansion key ("gr8!!!" -> "gr8").
        auto bare_exp = expansion.find(bare);
        if (bare_exp != expansion.end()) {
            for (const auto& w : split_ws(bare_exp->second)) emit_word(w, stem, &out);
            continue;
        }
        emit_word(bare, stem, &out);
    }
    return out;
}

int Vocabulary::id_of(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kOovId : it->second;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& training_texts,
                             std::size_t max_size) {
    if (max_size < 2) throw Error("vocabulary max_size must be >= 2");
    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& text : training_texts) {
        for (const auto& tok : split_ws(text)) counts[tok]++;
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocabulary vocab;
    vocab.max_size_ = max_size;
    vocab.id_to_token_ = {"<pad>", "<oov>"};
    std::size_t keep = std::min(ranked.size(), max_size - 2);
    for (std::size_t i = 0; i < keep; ++i) {
        vocab.token_to_id_[ranked[i].first] = static_cast<int>(vocab.id_to_token_.size());
        vocab.id_to_token_.push_back(ranked[i].first);
    }
    return vocab;
}

void Vocabulary::save(const std::string& path, const std::string& header_extras) const {
    std::ostringstream out;
    out << "# persona-vocab v1 max_size=" << max_size_;
    if (!header_extras.empty()) out << ' ' << header_extras;
    out << '\n';
    for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
        out << id_to_token_[i] << '\t' << i << '\n';
    }
    write_text_file(path, out.str());
}

Vocabulary Vocabulary::load(const std::string& path) {
    if (!file_exists(path)) throw MissingArtifactError("missing vocabulary file: " + path);
    std::ifstream in(path);
    if (!in) throw Error("cannot open vocabulary file: " + path);
    Vocabulary vocab;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line[0] == '#') {
            auto kv = parse_header_kv(line);
            if (kv.count("max_size"))
                vocab.max_size_ = static_cast<std::size_t>(parse_int(kv["max_size"], "max_size"));
            continue;
        }
        auto fields = split(line, '\t');
        if (fields.size() != 2)
            throw Error("vocab line " + std::to_string(line_no) + ": expected 2 fields");
        long long id = parse_int(fields[1], "vocab id");
        if (id != static_cast<long long>(vocab.id_to_token_.size()))
            throw Error("vocab line " + std::to_string(line_no) + ": ids must be dense");
        vocab.id_to_token_.push_back(fields[0]);
        if (id >= 2) vocab.token_to_id_[fields[0]] = static_cast<int>(id);
    }
    if (vocab.id_to_token_.size() < 2) throw Error("vocabulary file missing reserved tokens");
    if (vocab.max_size_ == 0) vocab.max_size_ = vocab.id_to_token_.size();
    return vocab;
}

TokenSequence tokenize_pad(const std::string& text, const Vocabulary& vocab,
                           std::size_t capacity) {
    if (capacity < 1) throw Error("tokenizer capacity must be >= 1");
    TokenSequence seq;
    seq.ids.assign(capacity, Vocabulary::kPadId);
    for (const auto& tok : split_ws(text)) {
        if (seq.length >= capacity) break;
        seq.ids[seq.length++] = vocab.id_of(tok);
    }
    return seq;
}

}  // namespace persona
