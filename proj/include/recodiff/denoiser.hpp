#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "recodiff/codec.hpp"
#include "recodiff/rng.hpp"
#include "recodiff/schedule.hpp"
#include "recodiff/tape.hpp"
#include "recodiff/vocab.hpp"

namespace recodiff {

struct DenoiserConfig {
    int n_layers = 2;  // encoder and decoder stack depth, each
    int n_heads = 4;
    int d_model = 64;
    int d_ffn = 128;
    int d = 16;  // latent / embedding dim
    int max_len = 32;
    bool sc_enabled = true;
    int len_offset_max = 8;      // length head classifies offsets in [-8, +8]
    bool use_positional = true;  // test hook: disables positional encodings

    int len_classes() const { return 2 * len_offset_max + 1; }
    void validate() const;
};

// untested at desk scale; kept as a named preset
DenoiserConfig paper_scale_config();

// Named parameter registry. Order is fixed at construction and shared by the
// optimizer state and checkpoints.
struct ParamStore {
    std::vector<std::string> names;
    std::vector<Mat> values;

    int add(const std::string& name, Mat init);
    int find(const std::string& name) const;  // -1 if absent
    Mat& at(const std::string& name);
    const Mat& at(const std::string& name) const;
    int count() const { return static_cast<int>(values.size()); }
    bool finite() const;

  private:
    std::unordered_map<std::string, int> index_;
};

// All learnable state of the denoiser, embedding table included (tied with
// the reconstruction head).
struct DenoiserParams {
    DenoiserConfig config;
    int vocab_size = 0;
    ParamStore store;

    EmbeddingTable table_view() const {
        EmbeddingTable t;
        t.weights = store.at("embed.table");
        return t;
    }
};

DenoiserParams init_denoiser_params(const DenoiserConfig& config, int vocab_size, Rng& rng);

// Maps param indices to tape nodes, binding each parameter once per tape.
struct ParamBind {
    Tape* tape = nullptr;
    const ParamStore* store = nullptr;
    std::vector<int> node_of;

    ParamBind(Tape& t, const ParamStore& s)
        : tape(&t), store(&s), node_of(static_cast<size_t>(s.count()), -1) {}

    int operator()(int param_index);
    int operator()(const std::string& name);
};

// sinusoidal features, shared by positions and diffusion times
Mat sinusoid_features(double pos, int dim);
Mat positional_encoding(int len, int dim);

// Encoder states for one source sequence plus its padding mask.
struct SourceMemory {
    Mat states;  // src_len x d_model
    std::vector<uint8_t> mask;
};

// ---- tape-level builders (training path; gradients flow) ----
int encode_source_node(Tape& t, ParamBind& pb, const DenoiserParams& params, const TokenSeq& x,
                       std::vector<uint8_t>& mask_out);
int time_embedding_node(Tape& t, ParamBind& pb, const DenoiserParams& params, int time);
// sc_node < 0 means "no self-condition" (a zero latent is substituted)
int denoise_node(Tape& t, ParamBind& pb, const DenoiserParams& params, int z_t_node, int sc_node,
                 int memory_node, const std::vector<uint8_t>& src_mask, int time);
int length_logits_node(Tape& t, ParamBind& pb, const DenoiserParams& params, int memory_node,
                       const std::vector<uint8_t>& src_mask);

// ---- no-grad wrappers (sampling, probes) ----
SourceMemory encode_source(const TokenSeq& x, const DenoiserParams& params);
Latent denoise(const Latent& z_t, const Latent* self_cond, const SourceMemory& memory, int time,
               const DenoiserParams& params);
// probability vector over length offsets [-len_offset_max, +len_offset_max]
std::vector<double> predict_length(const SourceMemory& memory, const DenoiserParams& params);
// k distinct offsets in decreasing probability order (ties: smaller offset first)
std::vector<int> top_k_length_offsets(const std::vector<double>& probs, int k,
                                      int len_offset_max);
Mat time_embedding(int time, const DenoiserParams& params);

}  // namespace recodiff
