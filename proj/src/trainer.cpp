#include "recodiff/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "recodiff/bleu.hpp"

namespace recodiff {

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be > 0");
    if (warmup_steps < 1) throw std::invalid_argument("TrainConfig: warmup_steps must be >= 1");
    if (sc_rate < 0.0 || sc_rate > 1.0) {
        throw std::invalid_argument("TrainConfig: sc_rate must be in [0, 1]");
    }
    if (!(clip_eps > 0.0)) throw std::invalid_argument("TrainConfig: clip_eps must be > 0");
    if (rl_weight < 0.0) throw std::invalid_argument("TrainConfig: rl_weight must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (max_steps < 1) throw std::invalid_argument("TrainConfig: max_steps must be >= 1");
}

double diffusion_loss(const Latent& pred, const Latent& z0) {
    check_same_shape(pred.values, z0.values, "diffusion_loss");
    double sum = 0.0;
    for (size_t i = 0; i < pred.values.size(); ++i) {
        const double d = pred.values.a[i] - z0.values.a[i];
        sum += d * d;
    }
    return sum / static_cast<double>(pred.values.size());
}

namespace {

constexpr int kPadId = 0;
constexpr int kEosId = 2;

std::vector<uint8_t> non_pad_mask(const TokenSeq& y) {
    std::vector<uint8_t> used(y.ids.size());
    for (size_t i = 0; i < y.ids.size(); ++i) used[i] = y.ids[i] == kPadId ? 0 : 1;
    return used;
}

}  // namespace

double reconstruction_loss(const Latent& pred, const TokenSeq& y, const EmbeddingTable& table) {
    if (pred.length() < y.length()) {
        throw std::invalid_argument("reconstruction_loss: prediction shorter than target");
    }
    for (int id : y.ids) {
        if (id < 0 || id >= table.vocab_size()) {
            throw std::out_of_range("reconstruction_loss: token id out of range");
        }
    }
    const Mat scores = logits(pred.values, table);
    const Mat probs = softmax_rows(scores);
    double loss = 0.0;
    int n_used = 0;
    for (int i = 0; i < y.length(); ++i) {
        const int id = y.ids[static_cast<size_t>(i)];
        if (id == kPadId) continue;
        loss -= std::log(probs.at(i, id));
        ++n_used;
    }
    if (n_used == 0) throw std::invalid_argument("reconstruction_loss: only pad positions");
    return loss / n_used;
}

double reward(const Latent& pred, const TokenSeq& y, const EmbeddingTable& table) {
    const TokenSeq decoded = round_to_tokens(pred.values, table, kEosId);
    const TokenSeq ref = decoded_form(strip_padding(y, kPadId), kEosId);
    if (ref.empty()) return 0.0;
    return bleu(decoded, ref);
}

double advantage(const Latent& z0_sc, const Latent& z0_hat, const TokenSeq& y,
                 const EmbeddingTable& table, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("advantage: eps must be > 0");
    const double gap = reward(z0_sc, y, table) - reward(z0_hat, y, table);
    return std::clamp(gap, -eps, eps);
}

double rl_loss(const Latent& z0_sc, double advantage_value, const TokenSeq& y,
               const EmbeddingTable& table) {
    // mean log p = -reconstruction CE, so the REINFORCE term equals A * CE
    return advantage_value * reconstruction_loss(z0_sc, y, table);
}

namespace {
constexpr uint64_t kTagScDecision = 0x5c5c;
constexpr uint64_t kTagExample = 0xe7a3;
constexpr uint64_t kTagEpoch = 0xe90c;

Rng example_rng(uint64_t seed, long step, int example_index) {
    return Rng(derive_seed(seed,
                           static_cast<uint64_t>(step) * 4096 + static_cast<uint64_t>(example_index),
                           kTagExample));
}
}  // namespace

bool sc_decision(uint64_t seed, long step, double sc_rate) {
    if (sc_rate <= 0.0) return false;
    if (sc_rate >= 1.0) return true;
    Rng rng(derive_seed(seed, static_cast<uint64_t>(step), kTagScDecision));
    return rng.uniform() < sc_rate;
}

int sample_time(uint64_t seed, long step, int example_index, int T) {
    Rng rng = example_rng(seed, step, example_index);
    return rng.uniform_int(1, T);
}

Mat sample_noise(uint64_t seed, long step, int example_index, int rows, int cols) {
    Rng rng = example_rng(seed, step, example_index);
    rng.next_u64();  // the time draw comes first in this stream
    Mat m(rows, cols);
    rng.fill_normal(m);
    return m;
}

double lr_at(const TrainConfig& config, long step) {
    const double s = static_cast<double>(std::max(step, 1L));
    const double w = static_cast<double>(config.warmup_steps);
    return config.lr * std::min(s / w, std::sqrt(w / s));
}

namespace {

// Shared graph pieces for one example: prediction plus the three loss nodes.
struct ExampleGraph {
    int pred = -1;
    int diffusion = -1;
    int ce = -1;
    int length = -1;
};

ExampleGraph build_example_graph(Tape& tape, ParamBind& pb, const DenoiserParams& params,
                                 const ParallelPair& pair, int t, const Mat& z_t, const Mat& z0,
                                 const Mat* z0_hat, int len_offset_max) {
    std::vector<uint8_t> src_mask;
    const int mem = encode_source_node(tape, pb, params, pair.source, src_mask);

    const int z_node = tape.leaf(z_t);
    const int sc_node = z0_hat ? tape.leaf(*z0_hat) : -1;

    ExampleGraph g;
    g.pred = denoise_node(tape, pb, params, z_node, sc_node, mem, src_mask, t);
    g.diffusion = op_mse_to_const(tape, g.pred, z0);

    const int scores = op_matmul_nt(tape, g.pred, pb("embed.table"));
    g.ce = op_cross_entropy(tape, scores, pair.target.ids, non_pad_mask(pair.target));

    const int len_logits = length_logits_node(tape, pb, params, mem, src_mask);
    const int offset =
        std::clamp(pair.target.length() - pair.source.length(), -len_offset_max, len_offset_max);
    g.length = op_cross_entropy(tape, len_logits, {offset + len_offset_max}, {1});
    return g;
}

}  // namespace

ExampleLossValues example_loss_on_tape(Tape& tape, ParamBind& pb, const DenoiserParams& params,
                                       const ParallelPair& pair, int t, const Mat& z_t,
                                       const Mat& z0, const Mat* z0_hat, double ce_coeff,
                                       int len_offset_max, int* total_node_out) {
    const ExampleGraph g =
        build_example_graph(tape, pb, params, pair, t, z_t, z0, z0_hat, len_offset_max);
    const int total = op_linear_comb(tape, {g.diffusion, g.ce, g.length}, {1.0, ce_coeff, 1.0});
    if (total_node_out) *total_node_out = total;

    ExampleLossValues out;
    out.diffusion = tape.scalar(g.diffusion);
    out.ce = tape.scalar(g.ce);
    out.length = tape.scalar(g.length);
    out.total = tape.scalar(total);
    return out;
}

Trainer::Trainer(DenoiserParams* params, NoiseSchedule schedule, ScalingPolicy policy,
                 TrainConfig config)
    : params_(params), schedule_(std::move(schedule)), policy_(policy), config_(config) {
    config_.validate();
    adam_.m.reserve(static_cast<size_t>(params_->store.count()));
    for (const Mat& p : params_->store.values) {
        adam_.m.emplace_back(p.rows, p.cols);
        adam_.v.emplace_back(p.rows, p.cols);
    }
}

TrainStepReport Trainer::train_step(const Batch& batch) {
    if (batch.size() == 0) throw std::invalid_argument("train_step: empty batch");
    const long step = step_ + 1;
    const bool use_sc =
        params_->config.sc_enabled && sc_decision(config_.seed, step, config_.sc_rate);
    const EmbeddingTable table = params_->table_view();

    std::vector<Mat> grads;
    grads.reserve(static_cast<size_t>(params_->store.count()));
    for (const Mat& p : params_->store.values) grads.emplace_back(p.rows, p.cols);

    TrainStepReport report;
    report.step = step;
    report.used_sc = use_sc;

    const double inv_b = 1.0 / batch.size();
    for (int i = 0; i < batch.size(); ++i) {
        const ParallelPair& pair = batch.pairs[static_cast<size_t>(i)];

        Rng ex_rng = example_rng(config_.seed, step, i);
        const int t = ex_rng.uniform_int(1, schedule_.T);
        report.t_sampled += inv_b * t;
        Mat noise(pair.target.length(), params_->config.d);
        ex_rng.fill_normal(noise);

        const double anchor_std =
            config_.anchor_noise ? std::sqrt(schedule_.beta_bar_at(0)) : 0.0;
        const Latent z0 = embed(pair.target, table, anchor_std, &ex_rng);
        const Latent z_t =
            forward_sample(z0, t, Latent(noise, t), schedule_, policy_, ForwardMode::train);

        Mat z0_hat_value;
        if (use_sc) {
            const SourceMemory memory = encode_source(pair.source, *params_);
            z0_hat_value = denoise(z_t, nullptr, memory, t, *params_).values;
        }

        Tape tape;
        ParamBind pb(tape, params_->store);
        const ExampleGraph graph =
            build_example_graph(tape, pb, *params_, pair, t, z_t.values, z0.values,
                                use_sc ? &z0_hat_value : nullptr, params_->config.len_offset_max);

        double ce_coeff = 1.0;
        if (use_sc) {
            const Latent z0_sc(tape.val(graph.pred), t);
            const double adv =
                advantage(z0_sc, Latent(z0_hat_value, t), pair.target, table, config_.clip_eps);
            // REINFORCE term -A * mean log p folds into the CE coefficient
            ce_coeff = 1.0 + config_.rl_weight * adv;
            report.advantage += inv_b * adv;
            report.loss_rl += inv_b * adv * tape.scalar(graph.ce);
        }

        int total_node = op_linear_comb(tape, {graph.diffusion, graph.ce, graph.length},
                                        {1.0, ce_coeff, 1.0});
        const double total = tape.scalar(total_node);
        if (!std::isfinite(total)) {
            std::ostringstream oss;
            oss << "train_step: non-finite loss at step " << step << ", example " << i
                << ", t=" << t << ", source=[";
            for (int id : pair.source.ids) oss << id << " ";
            oss << "], target=[";
            for (int id : pair.target.ids) oss << id << " ";
            oss << "], diffusion=" << tape.scalar(graph.diffusion)
                << " ce=" << tape.scalar(graph.ce);
            throw TrainDivergedError(oss.str());
        }

        tape.backward(total_node, inv_b);
        tape.export_param_grads(
            [&grads](int idx, const Mat& g) { axpy(1.0, g, grads[static_cast<size_t>(idx)]); });

        report.loss_diffusion += inv_b * tape.scalar(graph.diffusion);
        report.loss_ce += inv_b * tape.scalar(graph.ce);
        report.loss_length += inv_b * tape.scalar(graph.length);
    }

    double sq = 0.0;
    for (const Mat& g : grads) sq += dot_all(g, g);
    report.grad_norm = std::sqrt(sq);

    const double lr = lr_at(config_, step);
    adam_.updates += 1;
    const double b1 = config_.adam_beta1, b2 = config_.adam_beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(adam_.updates));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(adam_.updates));
    for (int p = 0; p < params_->store.count(); ++p) {
        Mat& value = params_->store.values[static_cast<size_t>(p)];
        Mat& m = adam_.m[static_cast<size_t>(p)];
        Mat& v = adam_.v[static_cast<size_t>(p)];
        const Mat& g = grads[static_cast<size_t>(p)];
        for (size_t j = 0; j < value.size(); ++j) {
            m.a[j] = b1 * m.a[j] + (1.0 - b1) * g.a[j];
            v.a[j] = b2 * v.a[j] + (1.0 - b2) * g.a[j] * g.a[j];
            value.a[j] -= lr * (m.a[j] / bc1) / (std::sqrt(v.a[j] / bc2) + config_.adam_eps);
        }
    }
    if (!params_->store.finite()) {
        throw TrainDivergedError("train_step: non-finite parameters after update at step " +
                                 std::to_string(step));
    }

    step_ = step;
    return report;
}

void run_training(Trainer& trainer, const std::vector<ParallelPair>& train_set, long target_steps,
                  const std::function<void(const TrainStepReport&)>& on_step) {
    if (train_set.empty()) throw std::invalid_argument("run_training: empty training set");
    const int batch_size = trainer.config().batch_size;
    const long per_epoch = (static_cast<long>(train_set.size()) + batch_size - 1) / batch_size;

    while (trainer.step() < target_steps) {
        const long epoch = trainer.step() / per_epoch;
        Rng rng(derive_seed(trainer.config().seed, static_cast<uint64_t>(epoch), kTagEpoch));
        std::vector<Batch> batches = make_batches(train_set, batch_size, rng, kPadId);
        long skip = trainer.step() % per_epoch;  // mid-epoch resume
        for (const Batch& b : batches) {
            if (skip > 0) {
                --skip;
                continue;
            }
            const TrainStepReport report = trainer.train_step(b);
            if (on_step) on_step(report);
            if (trainer.step() >= target_steps) return;
        }
    }
}

}  // namespace recodiff
