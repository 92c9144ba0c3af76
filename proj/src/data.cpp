#include "recodiff/data.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace recodiff {

std::string task_kind_name(TaskKind kind) {
    switch (kind) {
        case TaskKind::copy: return "copy";
        case TaskKind::reverse: return "reverse";
        case TaskKind::template_paraphrase: return "template_paraphrase";
        case TaskKind::file: return "file";
    }
    return "copy";
}

TaskKind task_kind_from_name(const std::string& name) {
    if (name == "copy") return TaskKind::copy;
    if (name == "reverse") return TaskKind::reverse;
    if (name == "template_paraphrase") return TaskKind::template_paraphrase;
    if (name == "file") return TaskKind::file;
    throw std::invalid_argument("unknown task kind: " + name);
}

void TaskSpec::validate() const {
    if (vocab_size < Vocabulary::n_special + 2) {
        throw std::invalid_argument("TaskSpec: vocab_size must cover specials plus two tokens");
    }
    if (min_len < 1 || min_len > max_len) {
        throw std::invalid_argument("TaskSpec: need 1 <= min_len <= max_len");
    }
    if (n_train < 1 || n_valid < 0) throw std::invalid_argument("TaskSpec: bad split sizes");
    if (kind == TaskKind::file && path.empty()) {
        throw std::invalid_argument("TaskSpec: file task needs a path");
    }
}

namespace {

// Fixed rewrite rule for the paraphrase task: tokens collapse onto the
// canonical member of their 3-token synonym class, then adjacent positions
// swap. Many sources map to one target, and near-miss decodes keep partial
// n-gram overlap.
struct ParaphraseRule {
    std::vector<int> canonical;  // by content index

    explicit ParaphraseRule(int n_content) : canonical(static_cast<size_t>(n_content)) {
        for (int i = 0; i < n_content; ++i) canonical[static_cast<size_t>(i)] = (i / 3) * 3;
    }

    std::vector<int> apply(const std::vector<int>& content) const {
        std::vector<int> out(content.size());
        for (size_t i = 0; i < content.size(); ++i) {
            out[i] = canonical[static_cast<size_t>(content[i])];
        }
        for (size_t i = 0; i + 1 < out.size(); i += 2) std::swap(out[i], out[i + 1]);
        return out;
    }
};

}  // namespace

TaskData generate_task(const TaskSpec& spec) {
    spec.validate();
    if (spec.kind == TaskKind::file) {
        throw std::invalid_argument("generate_task: use load_corpus for file tasks");
    }

    const int n_content = spec.vocab_size - Vocabulary::n_special;
    std::vector<std::string> content;
    for (int i = 0; i < n_content; ++i) content.push_back("w" + std::to_string(i));

    TaskData data;
    data.vocab = Vocabulary(content);

    Rng rng(derive_seed(spec.seed, 0xda7a));
    const int total = spec.n_train + spec.n_valid;

    std::set<std::vector<int>> seen;
    std::vector<std::vector<int>> sources;  // content indices, 0..n_content-1
    long attempts = 0;
    const long max_attempts = 200L * total + 10000L;
    while (static_cast<int>(sources.size()) < total) {
        if (++attempts > max_attempts) {
            throw std::runtime_error(
                "generate_task: sequence space too small for requested dataset size");
        }
        const int len = rng.uniform_int(spec.min_len, spec.max_len);
        std::vector<int> seq(static_cast<size_t>(len));
        for (int i = 0; i < len; ++i) seq[static_cast<size_t>(i)] = rng.uniform_int(0, n_content - 1);
        if (seen.insert(seq).second) sources.push_back(std::move(seq));
    }

    const ParaphraseRule rule(n_content);
    auto build_pair = [&](const std::vector<int>& content_ids) {
        std::vector<int> tgt;
        switch (spec.kind) {
            case TaskKind::copy: tgt = content_ids; break;
            case TaskKind::reverse:
                tgt.assign(content_ids.rbegin(), content_ids.rend());
                break;
            case TaskKind::template_paraphrase: tgt = rule.apply(content_ids); break;
            case TaskKind::file: break;
        }
        ParallelPair pair;
        for (int c : content_ids) pair.source.ids.push_back(Vocabulary::n_special + c);
        pair.source.ids.push_back(data.vocab.eos_id);
        for (int c : tgt) pair.target.ids.push_back(Vocabulary::n_special + c);
        pair.target.ids.push_back(data.vocab.eos_id);
        return pair;
    };

    for (int i = 0; i < total; ++i) {
        ParallelPair pair = build_pair(sources[static_cast<size_t>(i)]);
        if (i < spec.n_train) {
            data.train.push_back(std::move(pair));
        } else {
            data.valid.push_back(std::move(pair));
        }
    }
    return data;
}

std::vector<ParallelPair> load_corpus(const std::string& path, const Vocabulary& vocab,
                                      int max_len, CorpusLoadStats* stats) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_corpus: cannot open " + path);

    CorpusLoadStats local;
    std::vector<ParallelPair> pairs;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        const size_t tab = line.find('\t');
        if (tab == std::string::npos) {
            throw std::runtime_error("load_corpus: line " + std::to_string(line_no) +
                                     ": missing TAB separator");
        }
        auto encode_side = [&](const std::string& text) {
            TokenSeq seq;
            std::istringstream ss(text);
            std::string tok;
            while (ss >> tok) {
                if (!vocab.contains(tok)) ++local.n_unk_tokens;
                seq.ids.push_back(vocab.lookup(tok));
            }
            seq.ids.push_back(vocab.eos_id);
            return seq;
        };
        ParallelPair pair;
        pair.source = encode_side(line.substr(0, tab));
        pair.target = encode_side(line.substr(tab + 1));
        if (pair.source.length() <= 1 || pair.target.length() <= 1) {
            throw std::runtime_error("load_corpus: line " + std::to_string(line_no) +
                                     ": empty side");
        }
        if (pair.source.length() > max_len || pair.target.length() > max_len) {
            ++local.n_dropped_overlong;
            continue;
        }
        ++local.n_loaded;
        pairs.push_back(std::move(pair));
    }
    if (stats) *stats = local;
    return pairs;
}

void save_corpus(const std::string& path, const std::vector<ParallelPair>& pairs,
                 const Vocabulary& vocab) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_corpus: cannot open " + path);
    for (const ParallelPair& p : pairs) {
        f << vocab.to_string(decoded_form(p.source, vocab.eos_id)) << "\t"
          << vocab.to_string(decoded_form(p.target, vocab.eos_id)) << "\n";
    }
}

std::vector<Batch> make_batches(const std::vector<ParallelPair>& pairs, int batch_size, Rng& rng,
                                int pad_id) {
    if (batch_size < 1) throw std::invalid_argument("make_batches: batch_size must be >= 1");
    std::vector<int> order(pairs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    rng.shuffle(order);

    std::vector<Batch> batches;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(batch_size)) {
        Batch b;
        const size_t end = std::min(order.size(), start + static_cast<size_t>(batch_size));
        int max_src = 0, max_tgt = 0;
        for (size_t i = start; i < end; ++i) {
            const ParallelPair& p = pairs[static_cast<size_t>(order[i])];
            b.pairs.push_back(p);
            max_src = std::max(max_src, p.source.length());
            max_tgt = std::max(max_tgt, p.target.length());
        }
        for (const ParallelPair& p : b.pairs) {
            std::vector<int> src = p.source.ids;
            std::vector<int> tgt = p.target.ids;
            std::vector<uint8_t> sm(src.size(), 1), tm(tgt.size(), 1);
            src.resize(static_cast<size_t>(max_src), pad_id);
            tgt.resize(static_cast<size_t>(max_tgt), pad_id);
            sm.resize(static_cast<size_t>(max_src), 0);
            tm.resize(static_cast<size_t>(max_tgt), 0);
            b.src_ids.push_back(std::move(src));
            b.tgt_ids.push_back(std::move(tgt));
            b.src_mask.push_back(std::move(sm));
            b.tgt_mask.push_back(std::move(tm));
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

}  // namespace recodiff
