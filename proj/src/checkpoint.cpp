#include "recodiff/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace recodiff {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'R', 'E', 'C', 'O', 'D', 'I', 'F', '1'};
constexpr int kVersion = 1;

json denoiser_config_to_json(const DenoiserConfig& c) {
    return json{{"n_layers", c.n_layers},   {"n_heads", c.n_heads},
                {"d_model", c.d_model},     {"d_ffn", c.d_ffn},
                {"d", c.d},                 {"max_len", c.max_len},
                {"sc_enabled", c.sc_enabled}, {"len_offset_max", c.len_offset_max},
                {"use_positional", c.use_positional}};
}

DenoiserConfig denoiser_config_from_json(const json& j) {
    DenoiserConfig c;
    c.n_layers = j.at("n_layers").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.d_ffn = j.at("d_ffn").get<int>();
    c.d = j.at("d").get<int>();
    c.max_len = j.at("max_len").get<int>();
    c.sc_enabled = j.at("sc_enabled").get<bool>();
    c.len_offset_max = j.at("len_offset_max").get<int>();
    c.use_positional = j.value("use_positional", true);
    return c;
}

json train_config_to_json(const TrainConfig& c) {
    return json{{"lr", c.lr},
                {"warmup_steps", c.warmup_steps},
                {"sc_rate", c.sc_rate},
                {"clip_eps", c.clip_eps},
                {"rl_weight", c.rl_weight},
                {"batch_size", c.batch_size},
                {"max_steps", c.max_steps},
                {"seed", c.seed},
                {"adam_beta1", c.adam_beta1},
                {"adam_beta2", c.adam_beta2},
                {"adam_eps", c.adam_eps},
                {"anchor_noise", c.anchor_noise},
                {"checkpoint_every", c.checkpoint_every}};
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    c.lr = j.at("lr").get<double>();
    c.warmup_steps = j.at("warmup_steps").get<int>();
    c.sc_rate = j.at("sc_rate").get<double>();
    c.clip_eps = j.at("clip_eps").get<double>();
    c.rl_weight = j.at("rl_weight").get<double>();
    c.batch_size = j.at("batch_size").get<int>();
    c.max_steps = j.at("max_steps").get<long>();
    c.seed = j.at("seed").get<uint64_t>();
    c.adam_beta1 = j.at("adam_beta1").get<double>();
    c.adam_beta2 = j.at("adam_beta2").get<double>();
    c.adam_eps = j.at("adam_eps").get<double>();
    c.anchor_noise = j.at("anchor_noise").get<bool>();
    c.checkpoint_every = j.value("checkpoint_every", 0L);
    return c;
}

json task_spec_to_json(const TaskSpec& t) {
    return json{{"kind", task_kind_name(t.kind)}, {"vocab_size", t.vocab_size},
                {"min_len", t.min_len},           {"max_len", t.max_len},
                {"n_train", t.n_train},           {"n_valid", t.n_valid},
                {"seed", t.seed},                 {"path", t.path}};
}

TaskSpec task_spec_from_json(const json& j) {
    TaskSpec t;
    t.kind = task_kind_from_name(j.at("kind").get<std::string>());
    t.vocab_size = j.at("vocab_size").get<int>();
    t.min_len = j.at("min_len").get<int>();
    t.max_len = j.at("max_len").get<int>();
    t.n_train = j.at("n_train").get<int>();
    t.n_valid = j.at("n_valid").get<int>();
    t.seed = j.at("seed").get<uint64_t>();
    t.path = j.value("path", std::string());
    return t;
}

void write_tensor_manifest(json& header, const std::string& prefix,
                           const std::vector<std::string>& names, const std::vector<Mat>& mats) {
    for (size_t i = 0; i < mats.size(); ++i) {
        header["tensors"].push_back(json{{"name", prefix + names[i]},
                                         {"rows", mats[i].rows},
                                         {"cols", mats[i].cols}});
    }
}

void write_payload(std::ofstream& f, const Mat& m) {
    f.write(reinterpret_cast<const char*>(m.a.data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
}

Mat read_payload(std::ifstream& f, int rows, int cols) {
    Mat m(rows, cols);
    f.read(reinterpret_cast<char*>(m.a.data()),
           static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!f) throw std::runtime_error("checkpoint: truncated tensor payload");
    return m;
}

void write_container(const std::string& path, const json& header,
                     const std::function<void(std::ofstream&)>& payload_writer) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    const std::string htext = header.dump();
    const uint64_t hlen = htext.size();
    f.write(kMagic, sizeof(kMagic));
    f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    f.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    payload_writer(f);
    if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

json read_header(std::ifstream& f, const std::string& path) {
    char magic[8];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw std::runtime_error("checkpoint: " + path + " is not a recodiff checkpoint");
    }
    uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    if (!f) throw std::runtime_error("checkpoint: truncated header length");
    std::string htext(hlen, '\0');
    f.read(htext.data(), static_cast<std::streamsize>(hlen));
    if (!f) throw std::runtime_error("checkpoint: truncated header");
    json header = json::parse(htext, nullptr, false);
    if (header.is_discarded()) throw std::runtime_error("checkpoint: corrupt header JSON");
    if (header.at("version").get<int>() != kVersion) {
        throw std::runtime_error("checkpoint: unsupported version");
    }
    return header;
}

}  // namespace

void save_checkpoint(const std::string& path, const DenoiserParams& params, const AdamState* adam,
                     long step, const NoiseSchedule& schedule, const ScalingPolicy& policy,
                     const TrainConfig& train, const TaskSpec& task, const Vocabulary& vocab) {
    json header;
    header["version"] = kVersion;
    header["kind"] = "denoiser";
    header["step"] = step;
    header["model"] = denoiser_config_to_json(params.config);
    header["vocab_size"] = params.vocab_size;
    header["schedule"] = json{{"kind", schedule_kind_name(schedule.kind)},
                              {"T", schedule.T},
                              {"s", schedule.s},
                              {"k1", policy.k1},
                              {"k2", policy.k2}};
    header["train"] = train_config_to_json(train);
    header["task"] = task_spec_to_json(task);
    header["vocab"] = vocab.tokens;
    header["tensors"] = json::array();
    header["adam"] = json{{"present", adam != nullptr}, {"updates", adam ? adam->updates : 0}};

    write_tensor_manifest(header, "p:", params.store.names, params.store.values);
    if (adam) {
        write_tensor_manifest(header, "m:", params.store.names, adam->m);
        write_tensor_manifest(header, "v:", params.store.names, adam->v);
    }

    write_container(path, header, [&](std::ofstream& f) {
        for (const Mat& m : params.store.values) write_payload(f, m);
        if (adam) {
            for (const Mat& m : adam->m) write_payload(f, m);
            for (const Mat& m : adam->v) write_payload(f, m);
        }
    });
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
    const json header = read_header(f, path);
    if (header.at("kind").get<std::string>() != "denoiser") {
        throw std::runtime_error("checkpoint: " + path + " is not a denoiser checkpoint");
    }

    Checkpoint ck;
    ck.step = header.at("step").get<long>();
    ck.train = train_config_from_json(header.at("train"));
    ck.task = task_spec_from_json(header.at("task"));
    ck.vocab = vocabulary_from_full_token_list(header.at("vocab").get<std::vector<std::string>>());

    const json& sj = header.at("schedule");
    ck.schedule = make_schedule(schedule_kind_from_name(sj.at("kind").get<std::string>()),
                                sj.at("T").get<int>(), sj.at("s").get<double>());
    ck.policy = make_scaling_policy(sj.at("k1").get<double>(), sj.at("k2").get<double>());

    // rebuild the store with the same layout, then overwrite values
    Rng dummy(0);
    ck.params = init_denoiser_params(denoiser_config_from_json(header.at("model")),
                                     header.at("vocab_size").get<int>(), dummy);
    ck.has_adam = header.at("adam").at("present").get<bool>();
    if (ck.has_adam) {
        ck.adam.updates = header.at("adam").at("updates").get<long>();
        ck.adam.m.clear();
        ck.adam.v.clear();
    }

    size_t cursor = 0;
    const json& tensors = header.at("tensors");
    auto read_block = [&](const std::string& prefix, std::vector<Mat>& out,
                          const std::vector<std::string>& names) {
        for (const std::string& name : names) {
            if (cursor >= tensors.size()) throw std::runtime_error("checkpoint: manifest too short");
            const json& tj = tensors[cursor++];
            if (tj.at("name").get<std::string>() != prefix + name) {
                throw std::runtime_error("checkpoint: manifest mismatch at " + prefix + name);
            }
            Mat m = read_payload(f, tj.at("rows").get<int>(), tj.at("cols").get<int>());
            out.push_back(std::move(m));
        }
    };

    std::vector<Mat> values;
    read_block("p:", values, ck.params.store.names);
    for (size_t i = 0; i < values.size(); ++i) {
        check_same_shape(ck.params.store.values[i], values[i], "checkpoint param shape");
        ck.params.store.values[i] = std::move(values[i]);
    }
    if (ck.has_adam) {
        read_block("m:", ck.adam.m, ck.params.store.names);
        read_block("v:", ck.adam.v, ck.params.store.names);
    }
    return ck;
}

void save_scorer_checkpoint(const std::string& path, const ScorerParams& params,
                            const Vocabulary& vocab) {
    json header;
    header["version"] = kVersion;
    header["kind"] = "ar_scorer";
    header["model"] = json{{"n_layers", params.config.n_layers},
                           {"n_heads", params.config.n_heads},
                           {"d_model", params.config.d_model},
                           {"d_ffn", params.config.d_ffn},
                           {"max_len", params.config.max_len}};
    header["vocab_size"] = params.vocab_size;
    header["vocab"] = vocab.tokens;
    header["tensors"] = json::array();
    write_tensor_manifest(header, "p:", params.store.names, params.store.values);

    write_container(path, header, [&](std::ofstream& f) {
        for (const Mat& m : params.store.values) write_payload(f, m);
    });
}

ScorerParams load_scorer_checkpoint(const std::string& path, Vocabulary* vocab_out) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
    const json header = read_header(f, path);
    if (header.at("kind").get<std::string>() != "ar_scorer") {
        throw std::runtime_error("checkpoint: " + path + " is not an ar_scorer checkpoint");
    }
    ScorerConfig cfg;
    const json& mj = header.at("model");
    cfg.n_layers = mj.at("n_layers").get<int>();
    cfg.n_heads = mj.at("n_heads").get<int>();
    cfg.d_model = mj.at("d_model").get<int>();
    cfg.d_ffn = mj.at("d_ffn").get<int>();
    cfg.max_len = mj.at("max_len").get<int>();

    Rng dummy(0);
    ScorerParams params = init_scorer_params(cfg, header.at("vocab_size").get<int>(), dummy);
    const json& tensors = header.at("tensors");
    for (size_t i = 0; i < params.store.names.size(); ++i) {
        const json& tj = tensors.at(i);
        if (tj.at("name").get<std::string>() != "p:" + params.store.names[i]) {
            throw std::runtime_error("checkpoint: scorer manifest mismatch");
        }
        params.store.values[i] = read_payload(f, tj.at("rows").get<int>(), tj.at("cols").get<int>());
    }
    if (vocab_out) {
        *vocab_out =
            vocabulary_from_full_token_list(header.at("vocab").get<std::vector<std::string>>());
    }
    return params;
}

}  // namespace recodiff
