#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace recodiff {

// A sequence of token ids. The decoded form of a sequence ends at the first
// eos; helpers below implement that convention.
struct TokenSeq {
    std::vector<int> ids;

    TokenSeq() = default;
    explicit TokenSeq(std::vector<int> v) : ids(std::move(v)) {}

    int length() const { return static_cast<int>(ids.size()); }
    bool empty() const { return ids.empty(); }
    bool operator==(const TokenSeq& o) const { return ids == o.ids; }
};

// Ids before the first eos (eos itself excluded).
TokenSeq decoded_form(const TokenSeq& seq, int eos_id);

// Ids with trailing pads removed.
TokenSeq strip_padding(const TokenSeq& seq, int pad_id);

// Token list with the four specials pinned to the first slots, in file order.
struct Vocabulary {
    std::vector<std::string> tokens;
    int pad_id = 0;
    int bos_id = 1;
    int eos_id = 2;
    int unk_id = 3;

    static constexpr int n_special = 4;

    Vocabulary() = default;
    // content tokens only; specials are prepended
    explicit Vocabulary(const std::vector<std::string>& content);

    int size() const { return static_cast<int>(tokens.size()); }
    const std::string& token(int id) const { return tokens[static_cast<size_t>(id)]; }

    // unk_id for unknown tokens
    int lookup(const std::string& tok) const;
    bool contains(const std::string& tok) const;

    std::string to_string(const TokenSeq& seq, const std::string& sep = " ") const;
    TokenSeq encode(const std::vector<std::string>& toks) const;

    // Plain text, one token per line, specials first in fixed order
    // (pad, bos, eos, unk).
    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

  private:
    std::unordered_map<std::string, int> index_;
    void rebuild_index();
    void validate() const;

    friend Vocabulary vocabulary_from_full_token_list(std::vector<std::string> tokens);
};

// tokens must already start with the four specials
Vocabulary vocabulary_from_full_token_list(std::vector<std::string> tokens);

}  // namespace recodiff
