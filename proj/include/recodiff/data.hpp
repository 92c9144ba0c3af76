#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "recodiff/rng.hpp"
#include "recodiff/vocab.hpp"

namespace recodiff {

struct ParallelPair {
    TokenSeq source;
    TokenSeq target;
};

enum class TaskKind { copy, reverse, template_paraphrase, file };

std::string task_kind_name(TaskKind kind);
TaskKind task_kind_from_name(const std::string& name);

struct TaskSpec {
    TaskKind kind = TaskKind::copy;
    int vocab_size = 16;  // specials included
    int min_len = 2;
    int max_len = 12;
    int n_train = 5000;
    int n_valid = 500;
    uint64_t seed = 1;
    std::string path;  // kind == file only

    void validate() const;
};

struct TaskData {
    std::vector<ParallelPair> train;
    std::vector<ParallelPair> valid;
    Vocabulary vocab;
};

// Deterministic given spec.seed. Sources are distinct across the whole
// dataset, so train and valid never share a source sequence. Sequences carry
// a trailing eos on both sides.
TaskData generate_task(const TaskSpec& spec);

struct CorpusLoadStats {
    int n_loaded = 0;
    int n_unk_tokens = 0;
    int n_dropped_overlong = 0;
};

// One pair per line: source TAB target, tokens space-separated. Unknown
// tokens map to unk and are counted; pairs longer than max_len (after the
// eos is appended) are dropped and counted.
std::vector<ParallelPair> load_corpus(const std::string& path, const Vocabulary& vocab,
                                      int max_len, CorpusLoadStats* stats = nullptr);

// Inverse of load_corpus for generated data.
void save_corpus(const std::string& path, const std::vector<ParallelPair>& pairs,
                 const Vocabulary& vocab);

struct Batch {
    std::vector<ParallelPair> pairs;  // unpadded
    // padded views, one row per pair
    std::vector<std::vector<int>> src_ids;
    std::vector<std::vector<int>> tgt_ids;
    std::vector<std::vector<uint8_t>> src_mask;
    std::vector<std::vector<uint8_t>> tgt_mask;
    int size() const { return static_cast<int>(pairs.size()); }
};

// One epoch of shuffled batches, padded to the per-batch max length with the
// pad id. Deterministic given rng state.
std::vector<Batch> make_batches(const std::vector<ParallelPair>& pairs, int batch_size, Rng& rng,
                                int pad_id);

}  // namespace recodiff
