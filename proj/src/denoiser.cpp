#include "recodiff/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace recodiff {

void DenoiserConfig::validate() const {
    if (d_model % n_heads != 0) {
        throw std::invalid_argument("DenoiserConfig: d_model must be divisible by n_heads");
    }
    if (n_layers < 1 || d_model < 1 || d_ffn < 1 || d < 1 || max_len < 1) {
        throw std::invalid_argument("DenoiserConfig: dimensions must be positive");
    }
    if (len_offset_max < 0) throw std::invalid_argument("DenoiserConfig: len_offset_max < 0");
}

DenoiserConfig paper_scale_config() {
    DenoiserConfig c;
    c.n_layers = 12;
    c.n_heads = 8;
    c.d_model = 512;
    c.d_ffn = 2048;
    c.d = 128;
    c.max_len = 128;
    return c;
}

int ParamStore::add(const std::string& name, Mat init) {
    if (index_.count(name)) throw std::invalid_argument("ParamStore: duplicate " + name);
    index_.emplace(name, count());
    names.push_back(name);
    values.push_back(std::move(init));
    return count() - 1;
}

int ParamStore::find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? -1 : it->second;
}

Mat& ParamStore::at(const std::string& name) {
    const int i = find(name);
    if (i < 0) throw std::out_of_range("ParamStore: no param " + name);
    return values[static_cast<size_t>(i)];
}

const Mat& ParamStore::at(const std::string& name) const {
    const int i = find(name);
    if (i < 0) throw std::out_of_range("ParamStore: no param " + name);
    return values[static_cast<size_t>(i)];
}

bool ParamStore::finite() const {
    for (const Mat& m : values) {
        if (!m.finite()) return false;
    }
    return true;
}

int ParamBind::operator()(int param_index) {
    int& node = node_of[static_cast<size_t>(param_index)];
    if (node < 0) node = tape->param(store->values[static_cast<size_t>(param_index)], param_index);
    return node;
}

int ParamBind::operator()(const std::string& name) {
    const int i = store->find(name);
    if (i < 0) throw std::out_of_range("ParamBind: no param " + name);
    return (*this)(i);
}

namespace {

// fan-in scaled uniform
Mat init_linear(int in, int out, Rng& rng) {
    Mat m(in, out);
    const double limit = std::sqrt(3.0 / in);
    rng.fill_uniform(m, -limit, limit);
    return m;
}

Mat init_ones(int n) {
    Mat m(1, n);
    m.fill(1.0);
    return m;
}

void add_attention(ParamStore& s, const std::string& prefix, int d_model, Rng& rng) {
    for (const char* nm : {"wq", "wk", "wv", "wo"}) {
        s.add(prefix + "." + nm, init_linear(d_model, d_model, rng));
    }
    for (const char* nm : {"bq", "bk", "bv", "bo"}) {
        s.add(prefix + "." + nm, Mat(1, d_model));
    }
}

void add_ffn(ParamStore& s, const std::string& prefix, int d_model, int d_ffn, Rng& rng) {
    s.add(prefix + ".w1", init_linear(d_model, d_ffn, rng));
    s.add(prefix + ".b1", Mat(1, d_ffn));
    s.add(prefix + ".w2", init_linear(d_ffn, d_model, rng));
    s.add(prefix + ".b2", Mat(1, d_model));
}

void add_layer_norm(ParamStore& s, const std::string& prefix, int d_model) {
    s.add(prefix + ".g", init_ones(d_model));
    s.add(prefix + ".b", Mat(1, d_model));
}

}  // namespace

DenoiserParams init_denoiser_params(const DenoiserConfig& config, int vocab_size, Rng& rng) {
    config.validate();
    if (vocab_size < 1) throw std::invalid_argument("init_denoiser_params: empty vocabulary");

    DenoiserParams p;
    p.config = config;
    p.vocab_size = vocab_size;
    ParamStore& s = p.store;

    Mat table(vocab_size, config.d);
    rng.fill_normal(table, 1.0);
    s.add("embed.table", std::move(table));

    s.add("src_in.w", init_linear(config.d, config.d_model, rng));
    s.add("src_in.b", Mat(1, config.d_model));

    for (int l = 0; l < config.n_layers; ++l) {
        const std::string pre = "enc." + std::to_string(l);
        add_layer_norm(s, pre + ".ln1", config.d_model);
        add_attention(s, pre + ".attn", config.d_model, rng);
        add_layer_norm(s, pre + ".ln2", config.d_model);
        add_ffn(s, pre + ".ffn", config.d_model, config.d_ffn, rng);
    }
    add_layer_norm(s, "enc.final_ln", config.d_model);

    s.add("len.w", init_linear(config.d_model, config.len_classes(), rng));
    s.add("len.b", Mat(1, config.len_classes()));

    s.add("dec_in.w", init_linear(2 * config.d, config.d_model, rng));
    s.add("dec_in.b", Mat(1, config.d_model));

    // residual time MLP; zero-init last layer so the sinusoid base passes
    // through unchanged at init
    s.add("time.w1", init_linear(config.d_model, config.d_model, rng));
    s.add("time.b1", Mat(1, config.d_model));
    s.add("time.w2", Mat(config.d_model, config.d_model));
    s.add("time.b2", Mat(1, config.d_model));

    for (int l = 0; l < config.n_layers; ++l) {
        const std::string pre = "dec." + std::to_string(l);
        add_layer_norm(s, pre + ".ln1", config.d_model);
        add_attention(s, pre + ".self", config.d_model, rng);
        add_layer_norm(s, pre + ".ln2", config.d_model);
        add_attention(s, pre + ".cross", config.d_model, rng);
        add_layer_norm(s, pre + ".ln3", config.d_model);
        add_ffn(s, pre + ".ffn", config.d_model, config.d_ffn, rng);
    }
    add_layer_norm(s, "dec.final_ln", config.d_model);

    s.add("out.w", init_linear(config.d_model, config.d, rng));
    s.add("out.b", Mat(1, config.d));

    return p;
}

Mat sinusoid_features(double pos, int dim) {
    Mat out(1, dim);
    for (int i = 0; i < dim / 2; ++i) {
        const double freq = std::pow(10000.0, -2.0 * i / dim);
        out.a[static_cast<size_t>(2 * i)] = std::sin(pos * freq);
        out.a[static_cast<size_t>(2 * i + 1)] = std::cos(pos * freq);
    }
    if (dim % 2 == 1) {
        const double freq = std::pow(10000.0, -static_cast<double>(dim - 1) / dim);
        out.a[static_cast<size_t>(dim - 1)] = std::sin(pos * freq);
    }
    return out;
}

Mat positional_encoding(int len, int dim) {
    Mat out(len, dim);
    for (int p = 0; p < len; ++p) {
        const Mat row = sinusoid_features(p, dim);
        for (int j = 0; j < dim; ++j) out.at(p, j) = row.a[static_cast<size_t>(j)];
    }
    return out;
}

namespace {

int linear_node(Tape& t, ParamBind& pb, int x, const std::string& w, const std::string& b) {
    return op_add_rowvec(t, op_matmul(t, x, pb(w)), pb(b));
}

int attention_node(Tape& t, ParamBind& pb, const std::string& prefix, int queries, int keys,
                   int n_heads, const std::vector<uint8_t>& key_mask) {
    const int q = linear_node(t, pb, queries, prefix + ".wq", prefix + ".bq");
    const int k = linear_node(t, pb, keys, prefix + ".wk", prefix + ".bk");
    const int v = linear_node(t, pb, keys, prefix + ".wv", prefix + ".bv");
    const int attn = op_multi_head_attention(t, q, k, v, n_heads, key_mask);
    return linear_node(t, pb, attn, prefix + ".wo", prefix + ".bo");
}

int ffn_node(Tape& t, ParamBind& pb, const std::string& prefix, int x) {
    const int h = op_relu(t, linear_node(t, pb, x, prefix + ".w1", prefix + ".b1"));
    return linear_node(t, pb, h, prefix + ".w2", prefix + ".b2");
}

int layer_norm_node(Tape& t, ParamBind& pb, const std::string& prefix, int x) {
    return op_layer_norm(t, x, pb(prefix + ".g"), pb(prefix + ".b"));
}

}  // namespace

int encode_source_node(Tape& t, ParamBind& pb, const DenoiserParams& params, const TokenSeq& x,
                       std::vector<uint8_t>& mask_out) {
    const DenoiserConfig& cfg = params.config;
    if (x.empty()) throw std::invalid_argument("encode_source: empty source");
    if (x.length() > cfg.max_len) {
        throw std::invalid_argument("encode_source: sequence longer than max_len");
    }
    mask_out.assign(static_cast<size_t>(x.length()), 1);
    // pad positions are masked out of attention and pooling
    for (int i = 0; i < x.length(); ++i) {
        if (x.ids[static_cast<size_t>(i)] == 0) mask_out[static_cast<size_t>(i)] = 0;
    }

    int h = op_gather_rows(t, pb("embed.table"), x.ids);
    h = linear_node(t, pb, h, "src_in.w", "src_in.b");
    if (cfg.use_positional) h = op_add_const(t, h, positional_encoding(x.length(), cfg.d_model));

    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string pre = "enc." + std::to_string(l);
        const int n1 = layer_norm_node(t, pb, pre + ".ln1", h);
        h = op_add(t, h, attention_node(t, pb, pre + ".attn", n1, n1, cfg.n_heads, mask_out));
        const int n2 = layer_norm_node(t, pb, pre + ".ln2", h);
        h = op_add(t, h, ffn_node(t, pb, pre + ".ffn", n2));
    }
    return layer_norm_node(t, pb, "enc.final_ln", h);
}

int time_embedding_node(Tape& t, ParamBind& pb, const DenoiserParams& params, int time) {
    const int base = t.leaf(sinusoid_features(time, params.config.d_model));
    const int h = op_relu(t, linear_node(t, pb, base, "time.w1", "time.b1"));
    const int proj = linear_node(t, pb, h, "time.w2", "time.b2");
    return op_add(t, base, proj);
}

int denoise_node(Tape& t, ParamBind& pb, const DenoiserParams& params, int z_t_node, int sc_node,
                 int memory_node, const std::vector<uint8_t>& src_mask, int time) {
    const DenoiserConfig& cfg = params.config;
    const Mat& z = t.val(z_t_node);
    if (z.cols != cfg.d) throw std::invalid_argument("denoise: latent width mismatch");

    int sc = sc_node;
    if (sc < 0 || !cfg.sc_enabled) {
        sc = t.leaf(Mat(z.rows, cfg.d));
    } else {
        check_same_shape(z, t.val(sc), "denoise self_cond");
    }

    int h = linear_node(t, pb, op_concat_cols(t, z_t_node, sc), "dec_in.w", "dec_in.b");
    if (cfg.use_positional) h = op_add_const(t, h, positional_encoding(z.rows, cfg.d_model));

    const int time_vec = time_embedding_node(t, pb, params, time);
    const std::vector<uint8_t> self_mask(static_cast<size_t>(z.rows), 1);

    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string pre = "dec." + std::to_string(l);
        h = op_add_rowvec(t, h, time_vec);
        const int n1 = layer_norm_node(t, pb, pre + ".ln1", h);
        h = op_add(t, h, attention_node(t, pb, pre + ".self", n1, n1, cfg.n_heads, self_mask));
        const int n2 = layer_norm_node(t, pb, pre + ".ln2", h);
        h = op_add(t, h,
                   attention_node(t, pb, pre + ".cross", n2, memory_node, cfg.n_heads, src_mask));
        const int n3 = layer_norm_node(t, pb, pre + ".ln3", h);
        h = op_add(t, h, ffn_node(t, pb, pre + ".ffn", n3));
    }
    h = layer_norm_node(t, pb, "dec.final_ln", h);
    return linear_node(t, pb, h, "out.w", "out.b");
}

int length_logits_node(Tape& t, ParamBind& pb, const DenoiserParams& params, int memory_node,
                       const std::vector<uint8_t>& src_mask) {
    const int pooled = op_mean_rows_masked(t, memory_node, src_mask);
    (void)params;
    return linear_node(t, pb, pooled, "len.w", "len.b");
}

SourceMemory encode_source(const TokenSeq& x, const DenoiserParams& params) {
    Tape t;
    ParamBind pb(t, params.store);
    SourceMemory mem;
    const int node = encode_source_node(t, pb, params, x, mem.mask);
    mem.states = t.val(node);
    return mem;
}

Latent denoise(const Latent& z_t, const Latent* self_cond, const SourceMemory& memory, int time,
               const DenoiserParams& params) {
    Tape t;
    ParamBind pb(t, params.store);
    const int mem_node = t.leaf(memory.states);
    const int z_node = t.leaf(z_t.values);
    const int sc_node = self_cond ? t.leaf(self_cond->values) : -1;
    const int out = denoise_node(t, pb, params, z_node, sc_node, mem_node, memory.mask, time);
    return Latent(t.val(out), time);
}

std::vector<double> predict_length(const SourceMemory& memory, const DenoiserParams& params) {
    Tape t;
    ParamBind pb(t, params.store);
    const int mem_node = t.leaf(memory.states);
    const int logits = length_logits_node(t, pb, params, mem_node, memory.mask);
    const Mat probs = softmax_rows(t.val(logits));
    return probs.a;
}

std::vector<int> top_k_length_offsets(const std::vector<double>& probs, int k,
                                      int len_offset_max) {
    std::vector<int> order(probs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return probs[static_cast<size_t>(a)] > probs[static_cast<size_t>(b)]; });
    std::vector<int> offsets;
    for (int i = 0; i < k && i < static_cast<int>(order.size()); ++i) {
        offsets.push_back(order[static_cast<size_t>(i)] - len_offset_max);
    }
    return offsets;
}

Mat time_embedding(int time, const DenoiserParams& params) {
    Tape t;
    ParamBind pb(t, params.store);
    return t.val(time_embedding_node(t, pb, params, time));
}

}  // namespace recodiff
