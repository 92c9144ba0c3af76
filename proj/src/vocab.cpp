#include "recodiff/vocab.hpp"

#include <fstream>
#include <stdexcept>
#include <unordered_set>

namespace recodiff {

TokenSeq decoded_form(const TokenSeq& seq, int eos_id) {
    TokenSeq out;
    for (int id : seq.ids) {
        if (id == eos_id) break;
        out.ids.push_back(id);
    }
    return out;
}

TokenSeq strip_padding(const TokenSeq& seq, int pad_id) {
    TokenSeq out = seq;
    while (!out.ids.empty() && out.ids.back() == pad_id) out.ids.pop_back();
    return out;
}

static const char* kSpecialNames[] = {"<pad>", "<bos>", "<eos>", "<unk>"};

Vocabulary::Vocabulary(const std::vector<std::string>& content) {
    for (const char* s : kSpecialNames) tokens.emplace_back(s);
    tokens.insert(tokens.end(), content.begin(), content.end());
    rebuild_index();
    validate();
}

void Vocabulary::rebuild_index() {
    index_.clear();
    for (int i = 0; i < size(); ++i) index_.emplace(tokens[static_cast<size_t>(i)], i);
}

void Vocabulary::validate() const {
    if (size() < n_special) throw std::invalid_argument("Vocabulary: missing special tokens");
    std::unordered_set<std::string> seen;
    for (const auto& t : tokens) {
        if (!seen.insert(t).second) throw std::invalid_argument("Vocabulary: duplicate token " + t);
    }
}

int Vocabulary::lookup(const std::string& tok) const {
    auto it = index_.find(tok);
    return it == index_.end() ? unk_id : it->second;
}

bool Vocabulary::contains(const std::string& tok) const { return index_.count(tok) > 0; }

std::string Vocabulary::to_string(const TokenSeq& seq, const std::string& sep) const {
    std::string out;
    for (size_t i = 0; i < seq.ids.size(); ++i) {
        if (i) out += sep;
        out += token(seq.ids[i]);
    }
    return out;
}

TokenSeq Vocabulary::encode(const std::vector<std::string>& toks) const {
    TokenSeq seq;
    seq.ids.reserve(toks.size());
    for (const auto& t : toks) seq.ids.push_back(lookup(t));
    return seq;
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("Vocabulary::save: cannot open " + path);
    for (const auto& t : tokens) f << t << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("Vocabulary::load: cannot open " + path);
    std::vector<std::string> toks;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty()) toks.push_back(line);
    }
    return vocabulary_from_full_token_list(std::move(toks));
}

Vocabulary vocabulary_from_full_token_list(std::vector<std::string> tokens) {
    Vocabulary v;
    v.tokens = std::move(tokens);
    v.rebuild_index();
    v.validate();
    return v;
}

}  // namespace recodiff
