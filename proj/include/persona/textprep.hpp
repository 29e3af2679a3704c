#pragma once
// Text normalization (negation emphasis, emoticon/slang expansion, noise
// removal), bounded vocabulary construction, and fixed-length token ids.

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "persona/common.hpp"

namespace persona {

// token -> replacement phrase (already-normalized lowercase words).
using ExpansionTable = std::unordered_map<std::string, std::string>;

// File format: one mapping per line, "token<TAB>replacement phrase".
ExpansionTable load_expansion_table(const std::string& path);

// Lowercases, drops URLs / standalone numbers / punctuation, rewrites
// contracted negations to the bare token "not", expands emoticons and slang
// via the table, and collapses whitespace. Idempotent for tables whose
// replacement phrases contain no table keys.
std::string normalize_text(const std::string& raw, const ExpansionTable& expansion,
                           bool stem = false);

// Rule-based suffix stripper (off by default; see normalize_text's flag).
std::string strip_suffix(const std::string& word);

class Vocabulary {
public:
    static constexpr int kPadId = 0;
    static constexpr int kOovId = 1;

    Vocabulary() = default;

    int id_of(const std::string& token) const;  // kOovId when unknown
    std::size_t size() const { return id_to_token_.size(); }
    std::size_t max_size() const { return max_size_; }
    const std::vector<std::string>& tokens() const { return id_to_token_; }

    void save(const std::string& path, const std::string& header_extras) const;
    static Vocabulary load(const std::string& path);

    // Top (max_size - 2) tokens by frequency over the training texts, ties
    // broken lexicographically; ids 0 and 1 are reserved for pad and oov.
    static Vocabulary build(const std::vector<std::string>& training_texts,
                            std::size_t max_size);

private:
    std::unordered_map<std::string, int> token_to_id_;
    std::vector<std::string> id_to_token_;
    std::size_t max_size_ = 0;
};

struct TokenSequence {
    std::vector<int> ids;      // size == capacity, post-padded with pad ids
    std::size_t length = 0;    // count of non-pad tokens
};

// Whitespace-split, mapped to ids (oov for unknown), truncated to capacity,
// post-padded. Expects already-normalized text.
TokenSequence tokenize_pad(const std::string& text, const Vocabulary& vocab,
                           std::size_t capacity);

}  // namespace persona
