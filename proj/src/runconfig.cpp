#include "recodiff/runconfig.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace recodiff {

const char* const kVersionString = "recodiff 0.1.0";

void RunConfig::validate() const {
    std::vector<std::string> problems;
    auto check = [&](bool ok, const std::string& msg) {
        if (!ok) problems.push_back(msg);
    };

    try {
        task.validate();
    } catch (const std::exception& e) {
        problems.push_back(e.what());
    }
    try {
        model.validate();
    } catch (const std::exception& e) {
        problems.push_back(e.what());
    }
    try {
        train.validate();
    } catch (const std::exception& e) {
        problems.push_back(e.what());
    }
    try {
        sampler.validate(T);
    } catch (const std::exception& e) {
        problems.push_back(e.what());
    }

    check(T >= 1, "schedule.T: must be >= 1");
    check(s >= 0.0 && s < 1.0, "schedule.s: must be in [0, 1)");
    check(k1 > 0.0, "schedule.k1: must be > 0");
    check(k2 >= 0.0, "schedule.k2: must be >= 0");
    // sequences carry a trailing eos
    check(task.max_len + 1 <= model.max_len,
          "task.max_len: sequences (with eos) exceed model.max_len");
    check(run_id.find('/') == std::string::npos, "run.run_id: must not contain '/'");
    check(log_every >= 1, "run.log_every: must be >= 1");
    check(probe_every >= 0, "run.probe_every: must be >= 0");
    check(probe_examples >= 1, "run.probe_examples: must be >= 1");

    if (!problems.empty()) {
        std::string msg = "invalid configuration:";
        for (const std::string& p : problems) msg += "\n  - " + p;
        throw std::invalid_argument(msg);
    }
}

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    size_t e = s.find_last_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw std::invalid_argument("expected boolean, got '" + v + "'");
}

}  // namespace

void apply_override(RunConfig& c, const std::string& key, const std::string& value) {
    const std::string v = trim(value);
    auto as_int = [&] { return std::stoi(v); };
    auto as_long = [&] { return std::stol(v); };
    auto as_u64 = [&] { return static_cast<uint64_t>(std::stoull(v)); };
    auto as_double = [&] { return std::stod(v); };

    if (key == "task.kind") c.task.kind = task_kind_from_name(v);
    else if (key == "task.vocab_size") c.task.vocab_size = as_int();
    else if (key == "task.min_len") c.task.min_len = as_int();
    else if (key == "task.max_len") c.task.max_len = as_int();
    else if (key == "task.n_train") c.task.n_train = as_int();
    else if (key == "task.n_valid") c.task.n_valid = as_int();
    else if (key == "task.seed") c.task.seed = as_u64();
    else if (key == "task.path") c.task.path = v;
    else if (key == "model.n_layers") c.model.n_layers = as_int();
    else if (key == "model.n_heads") c.model.n_heads = as_int();
    else if (key == "model.d_model") c.model.d_model = as_int();
    else if (key == "model.d_ffn") c.model.d_ffn = as_int();
    else if (key == "model.d") c.model.d = as_int();
    else if (key == "model.max_len") c.model.max_len = as_int();
    else if (key == "model.sc_enabled") c.model.sc_enabled = parse_bool(v);
    else if (key == "model.len_offset_max") c.model.len_offset_max = as_int();
    else if (key == "model.preset") {
        if (v == "paper") {
            const bool sc = c.model.sc_enabled;
            c.model = paper_scale_config();
            c.model.sc_enabled = sc;
        } else if (v != "desk") {
            throw std::invalid_argument("model.preset: unknown preset '" + v + "'");
        }
    } else if (key == "train.lr") c.train.lr = as_double();
    else if (key == "train.warmup_steps") c.train.warmup_steps = as_int();
    else if (key == "train.sc_rate") c.train.sc_rate = as_double();
    else if (key == "train.clip_eps") c.train.clip_eps = as_double();
    else if (key == "train.rl_weight") c.train.rl_weight = as_double();
    else if (key == "train.batch_size") c.train.batch_size = as_int();
    else if (key == "train.max_steps") c.train.max_steps = as_long();
    else if (key == "train.seed") c.train.seed = as_u64();
    else if (key == "train.anchor_noise") c.train.anchor_noise = parse_bool(v);
    else if (key == "train.checkpoint_every") c.train.checkpoint_every = as_long();
    else if (key == "schedule.kind") c.sched_kind = schedule_kind_from_name(v);
    else if (key == "schedule.T") c.T = as_int();
    else if (key == "schedule.s") c.s = as_double();
    else if (key == "schedule.k1") c.k1 = as_double();
    else if (key == "schedule.k2") c.k2 = as_double();
    else if (key == "sampler.n_steps") c.sampler.n_steps = as_int();
    else if (key == "sampler.delta") c.sampler.delta = as_int();
    else if (key == "sampler.n_candidates") c.sampler.n_candidates = as_int();
    else if (key == "sampler.length_beams") c.sampler.length_beams = as_int();
    else if (key == "sampler.metric") c.sampler.metric = mbr_metric_from_name(v);
    else if (key == "sampler.seed") c.sampler.seed = as_u64();
    else if (key == "run.out_dir") c.out_dir = v;
    else if (key == "run.run_id") c.run_id = v;
    else if (key == "run.log_every") c.log_every = as_long();
    else if (key == "run.probe_every") c.probe_every = as_long();
    else if (key == "run.probe_examples") c.probe_examples = as_int();
    else throw std::invalid_argument("unknown config key: " + key);
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file " + path);
    RunConfig config;
    std::string line, section;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[' && t.back() == ']') {
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        const size_t eq = t.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": expected key = value");
        }
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        try {
            apply_override(config, section.empty() ? key : section + "." + key, value);
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return config;
}

void save_run_config(const RunConfig& c, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write config file " + path);
    f << "# " << kVersionString << "\n";
    f << "[task]\n";
    f << "kind = " << task_kind_name(c.task.kind) << "\n";
    f << "vocab_size = " << c.task.vocab_size << "\n";
    f << "min_len = " << c.task.min_len << "\n";
    f << "max_len = " << c.task.max_len << "\n";
    f << "n_train = " << c.task.n_train << "\n";
    f << "n_valid = " << c.task.n_valid << "\n";
    f << "seed = " << c.task.seed << "\n";
    if (!c.task.path.empty()) f << "path = " << c.task.path << "\n";
    f << "\n[model]\n";
    f << "n_layers = " << c.model.n_layers << "\n";
    f << "n_heads = " << c.model.n_heads << "\n";
    f << "d_model = " << c.model.d_model << "\n";
    f << "d_ffn = " << c.model.d_ffn << "\n";
    f << "d = " << c.model.d << "\n";
    f << "max_len = " << c.model.max_len << "\n";
    f << "sc_enabled = " << (c.model.sc_enabled ? "true" : "false") << "\n";
    f << "len_offset_max = " << c.model.len_offset_max << "\n";
    f << "\n[train]\n";
    f << "lr = " << c.train.lr << "\n";
    f << "warmup_steps = " << c.train.warmup_steps << "\n";
    f << "sc_rate = " << c.train.sc_rate << "\n";
    f << "clip_eps = " << c.train.clip_eps << "\n";
    f << "rl_weight = " << c.train.rl_weight << "\n";
    f << "batch_size = " << c.train.batch_size << "\n";
    f << "max_steps = " << c.train.max_steps << "\n";
    f << "seed = " << c.train.seed << "\n";
    f << "anchor_noise = " << (c.train.anchor_noise ? "true" : "false") << "\n";
    f << "checkpoint_every = " << c.train.checkpoint_every << "\n";
    f << "\n[schedule]\n";
    f << "kind = " << schedule_kind_name(c.sched_kind) << "\n";
    f << "T = " << c.T << "\n";
    f << "s = " << c.s << "\n";
    f << "k1 = " << c.k1 << "\n";
    f << "k2 = " << c.k2 << "\n";
    f << "\n[sampler]\n";
    f << "n_steps = " << c.sampler.n_steps << "\n";
    f << "delta = " << c.sampler.delta << "\n";
    f << "n_candidates = " << c.sampler.n_candidates << "\n";
    f << "length_beams = " << c.sampler.length_beams << "\n";
    f << "metric = " << mbr_metric_name(c.sampler.metric) << "\n";
    f << "seed = " << c.sampler.seed << "\n";
    f << "\n[run]\n";
    f << "out_dir = " << c.out_dir << "\n";
    f << "run_id = " << c.run_id << "\n";
    f << "log_every = " << c.log_every << "\n";
    f << "probe_every = " << c.probe_every << "\n";
    f << "probe_examples = " << c.probe_examples << "\n";
}

std::string prepare_run_dir(const RunConfig& config, bool force, bool resume) {
    const fs::path dir = fs::path(config.out_dir) / config.run_id;
    const fs::path marker = dir / "run.marker";
    if (fs::exists(marker)) {
        if (resume) return dir.string();
        if (!force) {
            throw std::runtime_error("run directory " + dir.string() +
                                     " already exists; pass --force to overwrite or --resume");
        }
        fs::remove_all(dir);
    }
    fs::create_directories(dir);
    std::ofstream m(marker);
    m << kVersionString << "\n";
    return dir.string();
}

std::string latest_checkpoint(const std::string& run_dir) {
    std::string best;
    long best_step = -1;
    for (const auto& entry : fs::directory_iterator(run_dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("ckpt_step_", 0) == 0 && name.size() > 14) {
            const long step = std::stol(name.substr(10, name.size() - 14));
            if (step > best_step) {
                best_step = step;
                best = entry.path().string();
            }
        }
    }
    return best;
}

}  // namespace recodiff
