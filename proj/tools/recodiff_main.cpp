// Command-line front end: train / sample / probe / eval.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "recodiff/bleu.hpp"
#include "recodiff/checkpoint.hpp"
#include "recodiff/diagnostics.hpp"
#include "recodiff/runconfig.hpp"
#include "recodiff/sampler.hpp"
#include "recodiff/scorer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace recodiff;

namespace {

struct UsageError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

json report_to_json(const std::string& run_id, const TrainStepReport& r) {
    json j{{"run", run_id},
           {"step", r.step},
           {"t_sampled", r.t_sampled},
           {"used_sc", r.used_sc},
           {"loss_diffusion", r.loss_diffusion},
           {"loss_ce", r.loss_ce},
           {"loss_length", r.loss_length},
           {"grad_norm", r.grad_norm}};
    if (r.used_sc) {
        j["loss_rl"] = r.loss_rl;
        j["advantage"] = r.advantage;
    }
    return j;
}

TaskData load_task_data(const TaskSpec& task, const Vocabulary* vocab_hint) {
    if (task.kind == TaskKind::file) {
        if (!vocab_hint) throw UsageError("file task needs a vocabulary");
        TaskData data;
        data.vocab = *vocab_hint;
        CorpusLoadStats stats;
        std::vector<ParallelPair> pairs =
            load_corpus(task.path, data.vocab, task.max_len + 1, &stats);
        if (stats.n_dropped_overlong > 0) {
            std::cerr << "note: dropped " << stats.n_dropped_overlong << " overlong pairs\n";
        }
        const int n_valid = std::min<int>(task.n_valid, static_cast<int>(pairs.size()) / 10);
        data.valid.assign(pairs.end() - n_valid, pairs.end());
        data.train.assign(pairs.begin(), pairs.end() - n_valid);
        return data;
    }
    return generate_task(task);
}

TokenSeq encode_source_line(const std::string& line, const Vocabulary& vocab) {
    std::istringstream ss(line);
    std::vector<std::string> toks;
    std::string tok;
    while (ss >> tok) toks.push_back(tok);
    TokenSeq seq = vocab.encode(toks);
    seq.ids.push_back(vocab.eos_id);
    return seq;
}

json candidates_to_json(const std::vector<Candidate>& cands, const Vocabulary& vocab) {
    json arr = json::array();
    for (const Candidate& c : cands) {
        arr.push_back(json{{"tokens", vocab.to_string(c.tokens)}, {"score", c.score}});
    }
    return arr;
}

// ---- train ----

int cmd_train(const RunConfig& config_in, bool force, bool resume, bool ar_scorer) {
    RunConfig config = config_in;
    config.validate();

    const std::string run_dir = prepare_run_dir(config, force, resume);
    save_run_config(config, run_dir + "/config.resolved.ini");

    TaskData data = load_task_data(config.task, nullptr);
    data.vocab.save(run_dir + "/vocab.txt");

    if (ar_scorer) {
        ScorerConfig scfg;
        scfg.max_len = config.model.max_len;
        Rng rng(derive_seed(config.train.seed, 0x5c02e2));
        ScorerParams scorer = init_scorer_params(scfg, data.vocab.size(), rng);
        std::ofstream log(run_dir + "/scorer_metrics.jsonl");
        train_scorer(scorer, data.train, config.train.max_steps, config.train.batch_size,
                     config.train.lr, config.train.seed, [&](const ScorerTrainReport& r) {
                         if (r.step % config.log_every == 0) {
                             log << json{{"step", r.step}, {"loss", r.loss}}.dump() << "\n";
                         }
                     });
        const std::string path = run_dir + "/scorer.bin";
        save_scorer_checkpoint(path, scorer, data.vocab);
        std::cout << "scorer checkpoint: " << path << "\n";
        return 0;
    }

    const NoiseSchedule schedule = config.make_noise_schedule();
    const ScalingPolicy policy = config.make_policy();
    const AlignmentReport alignment = check_alignment(schedule, policy);
    if (!alignment.aligned) {
        std::cerr << "warning: lambda(t) <= 1 at " << alignment.violations.size()
                  << " step(s); sampling variance is not strictly below training variance\n";
    }

    Rng init_rng(derive_seed(config.train.seed, 0x1417));
    DenoiserParams params = init_denoiser_params(config.model, data.vocab.size(), init_rng);
    Trainer trainer(&params, schedule, policy, config.train);

    if (resume) {
        const std::string ckpt = latest_checkpoint(run_dir);
        if (!ckpt.empty()) {
            Checkpoint loaded = load_checkpoint(ckpt);
            params.store = std::move(loaded.params.store);
            trainer.adam() = std::move(loaded.adam);
            trainer.set_step(loaded.step);
            std::cout << "resumed from " << ckpt << " at step " << loaded.step << "\n";
        }
    }

    std::ofstream metrics(run_dir + "/metrics.jsonl", std::ios::app);
    std::ofstream probes(run_dir + "/probes.jsonl", std::ios::app);
    std::vector<ParallelPair> probe_set(
        data.valid.begin(),
        data.valid.begin() + std::min<size_t>(data.valid.size(),
                                              static_cast<size_t>(config.probe_examples)));

    auto save_at = [&](long step) {
        const std::string path = run_dir + "/ckpt_step_" + std::to_string(step) + ".bin";
        save_checkpoint(path, params, &trainer.adam(), step, schedule, policy, config.train,
                        config.task, data.vocab);
        return path;
    };

    run_training(trainer, data.train, config.train.max_steps, [&](const TrainStepReport& r) {
        if (r.step % config.log_every == 0) {
            metrics << report_to_json(config.run_id, r).dump() << "\n";
        }
        if (config.train.checkpoint_every > 0 && r.step % config.train.checkpoint_every == 0) {
            save_at(r.step);
        }
        if (config.probe_every > 0 && r.step % config.probe_every == 0 && !probe_set.empty()) {
            const double delta = delta_bleu_probe(params, probe_set, schedule, policy,
                                                  default_probe_time_grid(schedule.T),
                                                  config.train.seed ^ static_cast<uint64_t>(r.step));
            probes << json{{"run", config.run_id}, {"step", r.step}, {"delta_bleu", delta}}.dump()
                   << "\n";
        }
    });

    const std::string final_path = save_at(trainer.step());
    std::cout << "final checkpoint: " << final_path << "\n"
              << "metrics log: " << run_dir << "/metrics.jsonl\n";
    return 0;
}

// ---- sample ----

int cmd_sample(const std::string& ckpt_path, const std::string& input_file,
               const std::string& inline_source, SamplerConfig sampler,
               const std::string& scorer_path, const std::string& out_path) {
    Checkpoint ck = load_checkpoint(ckpt_path);
    sampler.validate(ck.schedule.T);

    std::optional<ScorerParams> scorer_params;
    PerplexityScorer scorer_fn;
    const PerplexityScorer* scorer = nullptr;
    if (sampler.metric == MbrMetric::perplexity) {
        if (scorer_path.empty()) {
            throw UsageError("--mbr perplexity requires --scorer <checkpoint>");
        }
        scorer_params = load_scorer_checkpoint(scorer_path);
        scorer_fn = [&scorer_params](const TokenSeq& tokens, const TokenSeq& source) {
            TokenSeq with_eos = tokens;
            with_eos.ids.push_back(2);
            return scorer_perplexity(*scorer_params, with_eos, source);
        };
        scorer = &scorer_fn;
    }

    std::vector<std::string> lines;
    if (!inline_source.empty()) {
        lines.push_back(inline_source);
    } else if (!input_file.empty()) {
        std::ifstream f(input_file);
        if (!f) throw std::runtime_error("cannot open input file " + input_file);
        std::string line;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            const size_t tab = line.find('\t');
            lines.push_back(tab == std::string::npos ? line : line.substr(0, tab));
        }
    } else {
        throw UsageError("sample: provide --source or --input");
    }

    std::ostream* out = &std::cout;
    std::ofstream out_file;
    if (!out_path.empty()) {
        out_file.open(out_path);
        if (!out_file) throw std::runtime_error("cannot open output file " + out_path);
        out = &out_file;
    }

    const json config_json{{"n_steps", sampler.n_steps},
                           {"delta", sampler.delta},
                           {"b", sampler.n_candidates},
                           {"length_beams", sampler.effective_length_beams()},
                           {"metric", mbr_metric_name(sampler.metric)}};
    for (const std::string& line : lines) {
        const TokenSeq x = encode_source_line(line, ck.vocab);
        const std::vector<Candidate> cands = generate(x, ck.params, ck.schedule, sampler, scorer);
        const Candidate best = mbr_select(cands, sampler.metric, scorer, x);
        (*out) << json{{"source", line},
                       {"candidates", candidates_to_json(cands, ck.vocab)},
                       {"selected", ck.vocab.to_string(best.tokens)},
                       {"seed", sampler.seed},
                       {"config", config_json}}
                      .dump()
               << "\n";
    }
    return 0;
}

// ---- probe ----

int cmd_probe(const std::string& ckpt_path, const std::string& which, const std::string& out_dir,
              int n_examples, uint64_t seed, const std::string& log_path, long window) {
    fs::create_directories(out_dir);
    if (which == "dynamics") {
        if (log_path.empty()) throw UsageError("probe dynamics requires --log <metrics.jsonl>");
        const DynamicsSummary summary = dynamics_summary(log_path, window);
        write_dynamics_csv(summary, out_dir + "/dynamics.csv");
        std::cout << "rows: " << summary.rows.size() << ", skipped lines: " << summary.skipped_lines
                  << "\n"
                  << out_dir << "/dynamics.csv\n";
        return 0;
    }

    Checkpoint ck = load_checkpoint(ckpt_path);
    TaskData data = load_task_data(ck.task, &ck.vocab);
    std::vector<ParallelPair> valid(
        data.valid.begin(),
        data.valid.begin() +
            std::min<size_t>(data.valid.size(), static_cast<size_t>(n_examples)));
    if (valid.empty()) throw std::runtime_error("probe: empty valid set");

    if (which == "delta_bleu") {
        const double delta = delta_bleu_probe(ck.params, valid, ck.schedule, ck.policy,
                                              default_probe_time_grid(ck.schedule.T), seed);
        std::ofstream jf(out_dir + "/delta_bleu.json");
        jf << json{{"step", ck.step}, {"delta_bleu", delta}, {"n_examples", valid.size()}}.dump(2)
           << "\n";
        std::ofstream cf(out_dir + "/delta_bleu.csv");
        cf << "step,series,value\n" << ck.step << ",delta_bleu," << delta << "\n";
        std::cout << "delta_bleu: " << delta << "\n" << out_dir << "/delta_bleu.json\n";
        return 0;
    }
    if (which == "combos") {
        const ProbeReport report = combo_probe(ck.params, valid, ck.schedule, seed);
        json jc;
        for (const auto& [key, value] : report.combo_bleu) jc[key] = value;
        std::ofstream jf(out_dir + "/combos.json");
        jf << json{{"step", ck.step}, {"combo_bleu", jc}}.dump(2) << "\n";
        std::ofstream cf(out_dir + "/combos.csv");
        cf << "step,series,value\n";
        for (const auto& [key, value] : report.combo_bleu) {
            cf << ck.step << "," << key << "," << value << "\n";
        }
        std::cout << out_dir << "/combos.json\n";
        return 0;
    }
    throw UsageError("unknown probe: " + which + " (expected delta_bleu, combos or dynamics)");
}

// ---- eval ----

struct EvalResult {
    double mean_bleu = 0.0;
    int n = 0;
};

EvalResult eval_checkpoint(const Checkpoint& ck, const std::vector<ParallelPair>& pairs,
                           SamplerConfig sampler, std::ostream* per_example) {
    sampler.validate(ck.schedule.T);
    EvalResult result;
    for (const ParallelPair& pair : pairs) {
        const std::vector<Candidate> cands = generate(pair.source, ck.params, ck.schedule, sampler);
        const Candidate best = mbr_select(cands, MbrMetric::bleu, nullptr, pair.source);
        const TokenSeq ref = decoded_form(pair.target, ck.vocab.eos_id);
        const double score = ref.empty() ? 0.0 : bleu(best.tokens, ref);
        result.mean_bleu += score;
        result.n += 1;
        if (per_example) {
            (*per_example) << json{{"source", ck.vocab.to_string(decoded_form(pair.source,
                                                                              ck.vocab.eos_id))},
                                   {"reference", ck.vocab.to_string(ref)},
                                   {"selected", ck.vocab.to_string(best.tokens)},
                                   {"bleu", score}}
                                  .dump()
                           << "\n";
        }
    }
    if (result.n == 0) throw std::runtime_error("eval: empty corpus");
    result.mean_bleu /= result.n;
    return result;
}

int cmd_eval(const std::string& ckpt_path, const std::string& corpus_path, SamplerConfig sampler,
             const std::string& out_path, int limit,
             const std::vector<std::string>& ablation_entries) {
    if (!ablation_entries.empty()) {
        std::cout << "ablation eval (mean sentence BLEU of MBR-selected outputs)\n";
        for (const std::string& entry : ablation_entries) {
            const size_t eq = entry.find('=');
            if (eq == std::string::npos) throw UsageError("--ablation expects label=checkpoint");
            const std::string label = entry.substr(0, eq);
            Checkpoint ck = load_checkpoint(entry.substr(eq + 1));
            TaskData data = load_task_data(ck.task, &ck.vocab);
            std::vector<ParallelPair> pairs = data.valid;
            if (limit > 0 && static_cast<int>(pairs.size()) > limit) pairs.resize(limit);
            const EvalResult r = eval_checkpoint(ck, pairs, sampler, nullptr);
            std::cout << "  " << label << ": " << r.mean_bleu << " (" << r.n << " pairs)\n";
        }
        return 0;
    }

    Checkpoint ck = load_checkpoint(ckpt_path);
    std::vector<ParallelPair> pairs;
    if (!corpus_path.empty()) {
        pairs = load_corpus(corpus_path, ck.vocab, ck.params.config.max_len);
    } else {
        TaskData data = load_task_data(ck.task, &ck.vocab);
        pairs = data.valid;
    }
    if (limit > 0 && static_cast<int>(pairs.size()) > limit) pairs.resize(limit);
    if (pairs.empty()) throw std::runtime_error("eval: empty corpus");

    std::ofstream out_file;
    std::ostream* per_example = nullptr;
    if (!out_path.empty()) {
        out_file.open(out_path);
        if (!out_file) throw std::runtime_error("cannot open output file " + out_path);
        per_example = &out_file;
    }
    const EvalResult r = eval_checkpoint(ck, pairs, sampler, per_example);
    std::cout << "corpus BLEU (mean sentence): " << r.mean_bleu << " over " << r.n << " pairs\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string(kVersionString) +
                 " - continuous text diffusion with reinforced self-conditioning"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "train a model (or an AR scorer)");
    std::string config_path;
    std::vector<std::string> overrides;
    bool force = false, resume = false, ar_scorer = false;
    train->add_option("--config", config_path, "INI config file");
    train->add_option("--set", overrides, "override, e.g. --set train.max_steps=100");
    train->add_flag("--force", force, "overwrite an existing run directory");
    train->add_flag("--resume", resume, "resume from the latest checkpoint in the run dir");
    train->add_flag("--ar-scorer", ar_scorer, "train the autoregressive perplexity scorer");

    // sample
    auto* sample = app.add_subcommand("sample", "generate from a checkpoint");
    std::string ckpt, input_file, inline_source, scorer_path, out_path;
    SamplerConfig sampler;
    sample->add_option("--ckpt", ckpt, "checkpoint path")->required();
    sample->add_option("--input", input_file, "source file (one source per line; TAB splits off references)");
    sample->add_option("--source", inline_source, "inline source tokens");
    sample->add_option("--steps", sampler.n_steps, "sampling steps");
    sample->add_option("--delta", sampler.delta, "asymmetric time offset (grid units)");
    sample->add_option("--b", sampler.n_candidates, "candidate count for MBR");
    sample->add_option("--length-beams", sampler.length_beams, "distinct length beams");
    std::string metric = "bleu";
    sample->add_option("--mbr", metric, "bleu or perplexity");
    sample->add_option("--scorer", scorer_path, "AR scorer checkpoint (perplexity metric)");
    sample->add_option("--seed", sampler.seed, "sampling seed");
    sample->add_option("--out", out_path, "output JSONL path (default stdout)");

    // probe
    auto* probe = app.add_subcommand("probe", "run diagnostics probes");
    std::string which = "delta_bleu", probe_out = "probe_out", log_path;
    int probe_n = 64;
    uint64_t probe_seed = 1;
    long window = 100;
    probe->add_option("--ckpt", ckpt, "checkpoint path");
    probe->add_option("--which", which, "delta_bleu, combos or dynamics")->required();
    probe->add_option("--out", probe_out, "output directory");
    probe->add_option("--n", probe_n, "number of validation examples");
    probe->add_option("--seed", probe_seed, "probe seed");
    probe->add_option("--log", log_path, "metrics.jsonl (dynamics probe)");
    probe->add_option("--window", window, "dynamics window size in steps");

    // eval
    auto* eval = app.add_subcommand("eval", "corpus BLEU of MBR-selected outputs");
    std::string corpus_path, eval_out;
    int limit = 0;
    std::vector<std::string> ablation;
    eval->add_option("--ckpt", ckpt, "checkpoint path");
    eval->add_option("--corpus", corpus_path, "TSV corpus (default: the task's valid split)");
    eval->add_option("--b", sampler.n_candidates, "candidate count");
    eval->add_option("--steps", sampler.n_steps, "sampling steps");
    eval->add_option("--delta", sampler.delta, "asymmetric time offset");
    eval->add_option("--length-beams", sampler.length_beams, "distinct length beams");
    eval->add_option("--seed", sampler.seed, "sampling seed");
    eval->add_option("--limit", limit, "evaluate at most this many pairs");
    eval->add_option("--out", eval_out, "per-example JSONL output");
    eval->add_option("--ablation", ablation, "label=checkpoint (repeatable); prints a table");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // usage errors map to 1, --help to 0
    }

    try {
        if (train->parsed()) {
            RunConfig config;
            if (!config_path.empty()) config = load_run_config(config_path);
            for (const std::string& kv : overrides) {
                const size_t eq = kv.find('=');
                if (eq == std::string::npos) throw UsageError("--set expects key=value");
                apply_override(config, kv.substr(0, eq), kv.substr(eq + 1));
            }
            return cmd_train(config, force, resume, ar_scorer);
        }
        if (sample->parsed()) {
            sampler.metric = mbr_metric_from_name(metric);
            return cmd_sample(ckpt, input_file, inline_source, sampler, scorer_path, out_path);
        }
        if (probe->parsed()) {
            return cmd_probe(ckpt, which, probe_out, probe_n, probe_seed, log_path, window);
        }
        if (eval->parsed()) {
            return cmd_eval(ckpt, corpus_path, sampler, eval_out, limit, ablation);
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
