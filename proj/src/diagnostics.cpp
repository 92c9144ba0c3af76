#include "recodiff/diagnostics.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace recodiff {

namespace {
constexpr int kPadId = 0;
constexpr int kEosId = 2;
constexpr uint64_t kTagProbe = 0x9a0b;
}  // namespace

DenoiseFn model_denoise_fn(const DenoiserParams& params) {
    return [&params](const ParallelPair& ex, const Mat& z_t, const Mat* sc, int t) {
        const SourceMemory memory = encode_source(ex.source, params);
        Latent z(z_t, t);
        if (sc) {
            Latent sc_latent(*sc, t);
            return denoise(z, &sc_latent, memory, t, params).values;
        }
        return denoise(z, nullptr, memory, t, params).values;
    };
}

std::vector<int> default_probe_time_grid(int T) {
    return {std::max(1, T / 4), std::max(1, T / 2), std::max(1, 3 * T / 4)};
}

double delta_bleu_probe(const DenoiseFn& denoise_fn, const EmbeddingTable& table,
                        const std::vector<ParallelPair>& valid_set, const NoiseSchedule& schedule,
                        const ScalingPolicy& policy, const std::vector<int>& t_grid,
                        uint64_t seed) {
    if (valid_set.empty()) throw std::invalid_argument("delta_bleu_probe: empty valid set");
    if (t_grid.empty()) throw std::invalid_argument("delta_bleu_probe: empty time grid");

    double sum = 0.0;
    long count = 0;
    for (size_t e = 0; e < valid_set.size(); ++e) {
        const ParallelPair& ex = valid_set[e];
        const TokenSeq ref = decoded_form(strip_padding(ex.target, kPadId), kEosId);
        if (ref.empty()) continue;
        const Latent z0 = embed(ex.target, table);
        for (int t : t_grid) {
            Rng rng(derive_seed(seed, (static_cast<uint64_t>(e) << 20) ^ static_cast<uint64_t>(t),
                                kTagProbe));
            const Latent noise(random_normal(z0.length(), z0.dim(), rng), t);
            const Latent z_t = forward_sample(z0, t, noise, schedule, policy, ForwardMode::train);

            const Mat z0_hat = denoise_fn(ex, z_t.values, nullptr, t);
            const Mat z0_sc = denoise_fn(ex, z_t.values, &z0_hat, t);

            const double b_hat = bleu(round_to_tokens(z0_hat, table, kEosId), ref);
            const double b_sc = bleu(round_to_tokens(z0_sc, table, kEosId), ref);
            sum += b_sc - b_hat;
            ++count;
        }
    }
    if (count == 0) throw std::invalid_argument("delta_bleu_probe: no usable examples");
    return sum / static_cast<double>(count);
}

double delta_bleu_probe(const DenoiserParams& params, const std::vector<ParallelPair>& valid_set,
                        const NoiseSchedule& schedule, const ScalingPolicy& policy,
                        const std::vector<int>& t_grid, uint64_t seed) {
    return delta_bleu_probe(model_denoise_fn(params), params.table_view(), valid_set, schedule,
                            policy, t_grid, seed);
}

const char* const kComboKeys[6] = {"sc=0,zt=z0",  "sc=z0,zt=z0", "sc=zT,zt=z0",
                                   "sc=0,zt=zT",  "sc=z0,zt=zT", "sc=zT,zt=zT"};

ProbeReport combo_probe(const DenoiseFn& denoise_fn, const EmbeddingTable& table,
                        const std::vector<ParallelPair>& valid_set, const NoiseSchedule& schedule,
                        uint64_t seed) {
    if (valid_set.empty()) throw std::invalid_argument("combo_probe: empty valid set");

    std::map<std::string, double> sums;
    std::map<std::string, long> counts;
    for (size_t e = 0; e < valid_set.size(); ++e) {
        const ParallelPair& ex = valid_set[e];
        const TokenSeq ref = decoded_form(strip_padding(ex.target, kPadId), kEosId);
        if (ref.empty()) continue;
        const Latent z0 = embed(ex.target, table);
        Rng rng(derive_seed(seed, static_cast<uint64_t>(e), kTagProbe));
        const Mat zT = random_normal(z0.length(), z0.dim(), rng);
        const Mat zT_sc = random_normal(z0.length(), z0.dim(), rng);
        const Mat zero(z0.length(), z0.dim());

        struct Combo {
            const char* key;
            const Mat* sc;  // null = zero latent
            const Mat* zt;
            int t;
        };
        const Combo combos[6] = {
            {kComboKeys[0], nullptr, &z0.values, 0},  {kComboKeys[1], &z0.values, &z0.values, 0},
            {kComboKeys[2], &zT_sc, &z0.values, 0},   {kComboKeys[3], nullptr, &zT, schedule.T},
            {kComboKeys[4], &z0.values, &zT, schedule.T}, {kComboKeys[5], &zT_sc, &zT, schedule.T},
        };
        for (const Combo& c : combos) {
            const Mat* sc = c.sc ? c.sc : &zero;
            const Mat out = denoise_fn(ex, *c.zt, sc, c.t);
            sums[c.key] += bleu(round_to_tokens(out, table, kEosId), ref);
            counts[c.key] += 1;
        }
    }

    ProbeReport report;
    for (const char* key : kComboKeys) {
        const long n = counts[key];
        report.combo_bleu[key] = n > 0 ? sums[key] / static_cast<double>(n) : 0.0;
    }
    return report;
}

ProbeReport combo_probe(const DenoiserParams& params, const std::vector<ParallelPair>& valid_set,
                        const NoiseSchedule& schedule, uint64_t seed) {
    return combo_probe(model_denoise_fn(params), params.table_view(), valid_set, schedule, seed);
}

std::vector<std::pair<int, double>> measure_step_deviation(
    const DenoiserParams& params, const NoiseSchedule& schedule,
    const std::vector<ParallelPair>& examples, const SamplerConfig& config) {
    const EmbeddingTable table = params.table_view();
    std::map<int, double> sq_sum;
    std::map<int, long> n;

    for (const ParallelPair& ex : examples) {
        const Latent z0 = embed(ex.target, table);
        StepObserver observer = [&](int, int t, const Mat& z) {
            if (t <= 0 || z.rows != z0.length()) return;  // off-beam lengths skipped
            const double signal = std::sqrt(1.0 - schedule.beta_bar_at(t));
            for (size_t i = 0; i < z.size(); ++i) {
                const double dev = z.a[i] - signal * z0.values.a[i];
                sq_sum[t] += dev * dev;
            }
            n[t] += static_cast<long>(z.size());
        };
        generate(ex.source, params, schedule, config, nullptr, &observer);
    }

    std::vector<std::pair<int, double>> out;
    for (const auto& [t, s] : sq_sum) {
        if (n[t] > 0) out.emplace_back(t, std::sqrt(s / static_cast<double>(n[t])));
    }
    return out;
}

namespace {

void accumulate_window(std::vector<DynamicsRow>& rows, const std::string& run, long window_end,
                       std::map<std::string, std::vector<double>>& window_values) {
    for (auto& [field, vals] : window_values) {
        if (vals.empty()) continue;
        double mean = 0.0;
        for (double v : vals) mean += v;
        mean /= static_cast<double>(vals.size());
        double var = 0.0;
        for (double v : vals) var += (v - mean) * (v - mean);
        var /= static_cast<double>(vals.size());
        rows.push_back(DynamicsRow{run, window_end, field, mean, std::sqrt(var),
                                   static_cast<int>(vals.size())});
        vals.clear();
    }
}

}  // namespace

DynamicsSummary dynamics_summary_lines(const std::vector<std::string>& lines, long window) {
    if (window < 1) throw std::invalid_argument("dynamics_summary: window must be >= 1");
    DynamicsSummary summary;

    // per run: window start and field -> values
    struct RunAcc {
        long window_index = -1;
        std::map<std::string, std::vector<double>> values;
    };
    std::map<std::string, RunAcc> runs;

    for (const std::string& line : lines) {
        if (line.empty()) continue;
        nlohmann::json rec = nlohmann::json::parse(line, nullptr, false);
        if (rec.is_discarded() || !rec.is_object() || !rec.contains("step") ||
            !rec["step"].is_number()) {
            ++summary.skipped_lines;
            continue;
        }
        const long step = rec["step"].get<long>();
        const std::string run = rec.contains("run") && rec["run"].is_string()
                                    ? rec["run"].get<std::string>()
                                    : std::string("default");
        RunAcc& acc = runs[run];
        const long widx = (step - 1) / window;
        if (acc.window_index >= 0 && widx != acc.window_index) {
            accumulate_window(summary.rows, run, (acc.window_index + 1) * window, acc.values);
        }
        acc.window_index = widx;
        for (const auto& [key, value] : rec.items()) {
            if (key == "step" || key == "run") continue;
            if (value.is_number()) acc.values[key].push_back(value.get<double>());
            if (value.is_boolean()) acc.values[key].push_back(value.get<bool>() ? 1.0 : 0.0);
        }
    }
    for (auto& [run, acc] : runs) {
        if (acc.window_index >= 0) {
            accumulate_window(summary.rows, run, (acc.window_index + 1) * window, acc.values);
        }
    }
    return summary;
}

DynamicsSummary dynamics_summary(const std::string& log_path, long window) {
    std::ifstream f(log_path);
    if (!f) throw std::runtime_error("dynamics_summary: cannot open " + log_path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(f, line)) lines.push_back(line);
    return dynamics_summary_lines(lines, window);
}

void write_dynamics_csv(const DynamicsSummary& summary, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_dynamics_csv: cannot open " + path);
    f << "step,series,value\n";
    for (const DynamicsRow& row : summary.rows) {
        f << row.window_end_step << "," << row.run << "." << row.field << ".mean," << row.mean
          << "\n";
        f << row.window_end_step << "," << row.run << "." << row.field << ".std," << row.stddev
          << "\n";
    }
}

}  // namespace recodiff
