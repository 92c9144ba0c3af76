#include "recodiff/scorer.hpp"

#include <cmath>
#include <stdexcept>

namespace recodiff {

void ScorerConfig::validate() const {
    if (d_model % n_heads != 0) {
        throw std::invalid_argument("ScorerConfig: d_model must be divisible by n_heads");
    }
    if (n_layers < 1 || d_model < 1 || d_ffn < 1 || max_len < 1) {
        throw std::invalid_argument("ScorerConfig: dimensions must be positive");
    }
}

namespace {

constexpr int kPadId = 0;
constexpr int kBosId = 1;

Mat init_linear(int in, int out, Rng& rng) {
    Mat m(in, out);
    const double limit = std::sqrt(3.0 / in);
    rng.fill_uniform(m, -limit, limit);
    return m;
}

void add_attention(ParamStore& s, const std::string& prefix, int d_model, Rng& rng) {
    for (const char* nm : {"wq", "wk", "wv", "wo"}) {
        s.add(prefix + "." + nm, init_linear(d_model, d_model, rng));
    }
    for (const char* nm : {"bq", "bk", "bv", "bo"}) s.add(prefix + "." + nm, Mat(1, d_model));
}

void add_ffn(ParamStore& s, const std::string& prefix, int d_model, int d_ffn, Rng& rng) {
    s.add(prefix + ".w1", init_linear(d_model, d_ffn, rng));
    s.add(prefix + ".b1", Mat(1, d_ffn));
    s.add(prefix + ".w2", init_linear(d_ffn, d_model, rng));
    s.add(prefix + ".b2", Mat(1, d_model));
}

void add_layer_norm(ParamStore& s, const std::string& prefix, int d_model) {
    Mat ones(1, d_model);
    ones.fill(1.0);
    s.add(prefix + ".g", std::move(ones));
    s.add(prefix + ".b", Mat(1, d_model));
}

int linear_node(Tape& t, ParamBind& pb, int x, const std::string& w, const std::string& b) {
    return op_add_rowvec(t, op_matmul(t, x, pb(w)), pb(b));
}

int attention_node(Tape& t, ParamBind& pb, const std::string& prefix, int queries, int keys,
                   int n_heads, const std::vector<uint8_t>& key_mask, bool causal) {
    const int q = linear_node(t, pb, queries, prefix + ".wq", prefix + ".bq");
    const int k = linear_node(t, pb, keys, prefix + ".wk", prefix + ".bk");
    const int v = linear_node(t, pb, keys, prefix + ".wv", prefix + ".bv");
    const int attn = op_multi_head_attention(t, q, k, v, n_heads, key_mask, causal);
    return linear_node(t, pb, attn, prefix + ".wo", prefix + ".bo");
}

int ffn_node(Tape& t, ParamBind& pb, const std::string& prefix, int x) {
    const int h = op_relu(t, linear_node(t, pb, x, prefix + ".w1", prefix + ".b1"));
    return linear_node(t, pb, h, prefix + ".w2", prefix + ".b2");
}

int ln_node(Tape& t, ParamBind& pb, const std::string& prefix, int x) {
    return op_layer_norm(t, x, pb(prefix + ".g"), pb(prefix + ".b"));
}

struct ScorerGraph {
    int logits = -1;  // |y| x V
};

// teacher-forced decoder logits for targets y given source x
ScorerGraph build_scorer_graph(Tape& t, ParamBind& pb, const ScorerParams& params,
                               const TokenSeq& y, const TokenSeq& x) {
    const ScorerConfig& cfg = params.config;
    if (x.empty() || y.empty()) throw std::invalid_argument("scorer: empty sequence");
    if (x.length() > cfg.max_len || y.length() > cfg.max_len) {
        throw std::invalid_argument("scorer: sequence longer than max_len");
    }

    std::vector<uint8_t> src_mask(static_cast<size_t>(x.length()), 1);
    for (int i = 0; i < x.length(); ++i) {
        if (x.ids[static_cast<size_t>(i)] == kPadId) src_mask[static_cast<size_t>(i)] = 0;
    }

    int h = op_gather_rows(t, pb("embed.table"), x.ids);
    h = op_add_const(t, h, positional_encoding(x.length(), cfg.d_model));
    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string pre = "enc." + std::to_string(l);
        const int n1 = ln_node(t, pb, pre + ".ln1", h);
        h = op_add(t, h, attention_node(t, pb, pre + ".attn", n1, n1, cfg.n_heads, src_mask, false));
        const int n2 = ln_node(t, pb, pre + ".ln2", h);
        h = op_add(t, h, ffn_node(t, pb, pre + ".ffn", n2));
    }
    const int memory = ln_node(t, pb, "enc.final_ln", h);

    // decoder input: bos followed by y shifted right
    std::vector<int> dec_in(static_cast<size_t>(y.length()));
    dec_in[0] = kBosId;
    for (int i = 1; i < y.length(); ++i) dec_in[static_cast<size_t>(i)] = y.ids[static_cast<size_t>(i) - 1];
    const std::vector<uint8_t> tgt_mask(static_cast<size_t>(y.length()), 1);

    int d = op_gather_rows(t, pb("embed.table"), dec_in);
    d = op_add_const(t, d, positional_encoding(y.length(), cfg.d_model));
    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string pre = "dec." + std::to_string(l);
        const int n1 = ln_node(t, pb, pre + ".ln1", d);
        d = op_add(t, d, attention_node(t, pb, pre + ".self", n1, n1, cfg.n_heads, tgt_mask, true));
        const int n2 = ln_node(t, pb, pre + ".ln2", d);
        d = op_add(t, d,
                   attention_node(t, pb, pre + ".cross", n2, memory, cfg.n_heads, src_mask, false));
        const int n3 = ln_node(t, pb, pre + ".ln3", d);
        d = op_add(t, d, ffn_node(t, pb, pre + ".ffn", n3));
    }
    d = ln_node(t, pb, "dec.final_ln", d);

    ScorerGraph g;
    g.logits = op_matmul_nt(t, d, pb("embed.table"));
    return g;
}

std::vector<uint8_t> non_pad(const TokenSeq& y) {
    std::vector<uint8_t> used(y.ids.size());
    for (size_t i = 0; i < y.ids.size(); ++i) used[i] = y.ids[i] == kPadId ? 0 : 1;
    return used;
}

}  // namespace

ScorerParams init_scorer_params(const ScorerConfig& config, int vocab_size, Rng& rng) {
    config.validate();
    ScorerParams p;
    p.config = config;
    p.vocab_size = vocab_size;
    ParamStore& s = p.store;

    Mat table(vocab_size, config.d_model);
    rng.fill_normal(table, 0.1);
    s.add("embed.table", std::move(table));

    for (int l = 0; l < config.n_layers; ++l) {
        const std::string pre = "enc." + std::to_string(l);
        add_layer_norm(s, pre + ".ln1", config.d_model);
        add_attention(s, pre + ".attn", config.d_model, rng);
        add_layer_norm(s, pre + ".ln2", config.d_model);
        add_ffn(s, pre + ".ffn", config.d_model, config.d_ffn, rng);
    }
    add_layer_norm(s, "enc.final_ln", config.d_model);

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
    return p;
}

double scorer_nll(const ScorerParams& params, const TokenSeq& y, const TokenSeq& x) {
    Tape t;
    ParamBind pb(t, params.store);
    const ScorerGraph g = build_scorer_graph(t, pb, params, y, x);
    const int ce = op_cross_entropy(t, g.logits, y.ids, non_pad(y));
    return t.scalar(ce);
}

double scorer_perplexity(const ScorerParams& params, const TokenSeq& y, const TokenSeq& x) {
    return std::exp(scorer_nll(params, y, x));
}

void train_scorer(ScorerParams& params, const std::vector<ParallelPair>& train_set,
                  long target_steps, int batch_size, double lr, uint64_t seed,
                  const std::function<void(const ScorerTrainReport&)>& on_step) {
    if (train_set.empty()) throw std::invalid_argument("train_scorer: empty training set");

    AdamState adam;
    for (const Mat& p : params.store.values) {
        adam.m.emplace_back(p.rows, p.cols);
        adam.v.emplace_back(p.rows, p.cols);
    }

    long step = 0;
    const long per_epoch = (static_cast<long>(train_set.size()) + batch_size - 1) / batch_size;
    while (step < target_steps) {
        const long epoch = step / per_epoch;
        Rng rng(derive_seed(seed, static_cast<uint64_t>(epoch), 0xa4c0));
        std::vector<Batch> batches = make_batches(train_set, batch_size, rng, kPadId);
        for (const Batch& b : batches) {
            ++step;
            std::vector<Mat> grads;
            for (const Mat& p : params.store.values) grads.emplace_back(p.rows, p.cols);
            double loss_sum = 0.0;
            const double inv_b = 1.0 / b.size();
            for (const ParallelPair& pair : b.pairs) {
                Tape tape;
                ParamBind pb(tape, params.store);
                const ScorerGraph g = build_scorer_graph(tape, pb, params, pair.target, pair.source);
                const int ce = op_cross_entropy(tape, g.logits, pair.target.ids,
                                                non_pad(pair.target));
                loss_sum += inv_b * tape.scalar(ce);
                tape.backward(ce, inv_b);
                tape.export_param_grads([&grads](int idx, const Mat& gm) {
                    axpy(1.0, gm, grads[static_cast<size_t>(idx)]);
                });
            }
            adam.updates += 1;
            const double b1 = 0.9, b2 = 0.98, eps = 1e-8;
            const double warm = std::min(1.0, static_cast<double>(step) / 200.0);
            const double bc1 = 1.0 - std::pow(b1, static_cast<double>(adam.updates));
            const double bc2 = 1.0 - std::pow(b2, static_cast<double>(adam.updates));
            for (int p = 0; p < params.store.count(); ++p) {
                Mat& value = params.store.values[static_cast<size_t>(p)];
                Mat& m = adam.m[static_cast<size_t>(p)];
                Mat& v = adam.v[static_cast<size_t>(p)];
                const Mat& gm = grads[static_cast<size_t>(p)];
                for (size_t j = 0; j < value.size(); ++j) {
                    m.a[j] = b1 * m.a[j] + (1.0 - b1) * gm.a[j];
                    v.a[j] = b2 * v.a[j] + (1.0 - b2) * gm.a[j] * gm.a[j];
                    value.a[j] -= warm * lr * (m.a[j] / bc1) / (std::sqrt(v.a[j] / bc2) + eps);
                }
            }
            if (on_step) on_step(ScorerTrainReport{step, loss_sum});
            if (step >= target_steps) return;
        }
    }
}

}  // namespace recodiff
