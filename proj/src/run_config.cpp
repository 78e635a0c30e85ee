#include "mcm/run_config.hpp"

#include "mcm/error.hpp"
#include "mcm/tensor_io.hpp"

#include <set>

namespace mcm::config {

namespace {

// Reads known keys from one JSON object and rejects anything else.
class Section {
public:
    Section(const Json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object()) throw ConfigError("\"" + name_ + "\" must be an object");
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        const auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->template get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError(name_ + "." + key + " has the wrong type");
        }
    }

    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (!seen_.contains(key)) throw ConfigError("unknown key \"" + name_ + "." + key + "\"");
        }
    }

private:
    const Json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

void read_net(Section& s, mwnet::MwNetConfig& c) {
    std::string layout = mwnet::to_string(c.layout);
    s.get("input_dim", c.input_dim);
    s.get("width", c.width);
    s.get("time_dim", c.time_dim);
    s.get("blocks", c.blocks);
    s.get("heads", c.heads);
    s.get("groups", c.groups);
    s.get("ff_mult", c.ff_mult);
    s.get("max_len", c.max_len);
    s.get("layout", layout);
    c.layout = mwnet::parse_layout(layout);
}

}  // namespace

Json to_json(const mwnet::MwNetConfig& c) {
    return Json{{"input_dim", c.input_dim}, {"width", c.width},     {"time_dim", c.time_dim},
                {"blocks", c.blocks},       {"heads", c.heads},     {"groups", c.groups},
                {"ff_mult", c.ff_mult},     {"max_len", c.max_len}, {"layout", mwnet::to_string(c.layout)}};
}

mwnet::MwNetConfig mwnet_config_from_json(const Json& j) {
    mwnet::MwNetConfig c;
    Section s(j, "model");
    read_net(s, c);
    s.finish();
    c.validate();
    return c;
}

void RunConfig::validate() const {
    model.net.validate();
    if (model.net.width % model.text_heads != 0) throw ConfigError("model.width must be divisible by model.text_heads");
    if (model.max_tokens < 1 || model.audio_bands < 1) throw ConfigError("model.max_tokens and model.audio_bands must be >= 1");
    if (model.control_dim < 2 || model.control_dim % 2 != 0) throw ConfigError("model.control_dim must be even and >= 2");
    if (schedule.t_diff < 1) throw ConfigError("schedule.t_diff must be >= 1");
    if (!(schedule.beta_start > 0.0) || !(schedule.beta_start <= schedule.beta_end) || !(schedule.beta_end < 1.0)) {
        throw ConfigError("schedule betas must satisfy 0 < beta_start <= beta_end < 1");
    }
    if (!(train.lr > 0.0)) throw ConfigError("train.lr must be > 0");
    if (train.batch < 1 || train.epochs_stage1 < 0 || train.epochs_stage2 < 0 || train.max_steps < 0) {
        throw ConfigError("train sizes must be non-negative (batch >= 1)");
    }
    if (data.n < 1 || data.frames < 2) throw ConfigError("data.n must be >= 1 and data.frames >= 2");
    if (data.frames > model.net.max_len) throw ConfigError("data.frames exceeds model.max_len");
    if (!(metrics.sigma > 0.0)) throw ConfigError("metrics.sigma must be > 0");
    if (metrics.smooth_window < 1 || metrics.smooth_window % 2 == 0) throw ConfigError("metrics.smooth_window must be odd");
    if (metrics.top_k < 1 || metrics.r_batch < 1 || metrics.diversity_pairs < 0) throw ConfigError("bad metrics sizes");
}

train::TrainConfig RunConfig::train_config(int stage) const {
    train::TrainConfig t;
    t.stage = stage;
    t.lr = train.lr;
    t.batch = train.batch;
    t.epochs = stage == 1 ? train.epochs_stage1 : train.epochs_stage2;
    t.max_steps = train.max_steps;
    t.target = schedule.target;
    t.seed = train.seed;
    t.t_diff = schedule.t_diff;
    t.beta_start = schedule.beta_start;
    t.beta_end = schedule.beta_end;
    return t;
}

RunConfig parse_run_config(const Json& j) {
    if (!j.is_object()) throw ConfigError("run config must be a JSON object");
    RunConfig c;
    for (const auto& [key, value] : j.items()) {
        if (key != "model" && key != "schedule" && key != "train" && key != "data" && key != "metrics") {
            throw ConfigError("unknown section \"" + key + "\"");
        }
    }
    if (j.contains("model")) {
        Section s(j["model"], "model");
        read_net(s, c.model.net);
        s.get("text_heads", c.model.text_heads);
        s.get("max_tokens", c.model.max_tokens);
        s.get("audio_bands", c.model.audio_bands);
        s.get("control_dim", c.model.control_dim);
        s.get("init_seed", c.model.init_seed);
        s.finish();
    }
    if (j.contains("schedule")) {
        Section s(j["schedule"], "schedule");
        std::string target = diffusion::to_string(c.schedule.target);
        s.get("t_diff", c.schedule.t_diff);
        s.get("beta_start", c.schedule.beta_start);
        s.get("beta_end", c.schedule.beta_end);
        s.get("target", target);
        s.finish();
        try {
            c.schedule.target = diffusion::parse_target(target);
        } catch (const ValidationError& e) {
            throw ConfigError(e.what());
        }
    }
    if (j.contains("train")) {
        Section s(j["train"], "train");
        s.get("lr", c.train.lr);
        s.get("batch", c.train.batch);
        s.get("epochs_stage1", c.train.epochs_stage1);
        s.get("epochs_stage2", c.train.epochs_stage2);
        s.get("max_steps", c.train.max_steps);
        s.get("seed", c.train.seed);
        s.finish();
    }
    if (j.contains("data")) {
        Section s(j["data"], "data");
        s.get("dir", c.data.dir);
        s.get("n", c.data.n);
        s.get("frames", c.data.frames);
        s.get("seed", c.data.seed);
        s.get("with_control", c.data.with_control);
        s.finish();
    }
    if (j.contains("metrics")) {
        Section s(j["metrics"], "metrics");
        s.get("sigma", c.metrics.sigma);
        s.get("smooth_window", c.metrics.smooth_window);
        s.get("diversity_pairs", c.metrics.diversity_pairs);
        s.get("top_k", c.metrics.top_k);
        s.get("r_batch", c.metrics.r_batch);
        s.get("seed", c.metrics.seed);
        s.finish();
    }
    c.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    const std::string text = io::read_file(path);
    Json j;
    try {
        j = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return parse_run_config(j);
}

Json to_json(const RunConfig& c) {
    Json model = to_json(c.model.net);
    model["text_heads"] = c.model.text_heads;
    model["max_tokens"] = c.model.max_tokens;
    model["audio_bands"] = c.model.audio_bands;
    model["control_dim"] = c.model.control_dim;
    model["init_seed"] = c.model.init_seed;
    return Json{
        {"model", model},
        {"schedule",
         {{"t_diff", c.schedule.t_diff},
          {"beta_start", c.schedule.beta_start},
          {"beta_end", c.schedule.beta_end},
          {"target", diffusion::to_string(c.schedule.target)}}},
        {"train",
         {{"lr", c.train.lr},
          {"batch", c.train.batch},
          {"epochs_stage1", c.train.epochs_stage1},
          {"epochs_stage2", c.train.epochs_stage2},
          {"max_steps", c.train.max_steps},
          {"seed", c.train.seed}}},
        {"data",
         {{"dir", c.data.dir},
          {"n", c.data.n},
          {"frames", c.data.frames},
          {"seed", c.data.seed},
          {"with_control", c.data.with_control}}},
        {"metrics",
         {{"sigma", c.metrics.sigma},
          {"smooth_window", c.metrics.smooth_window},
          {"diversity_pairs", c.metrics.diversity_pairs},
          {"top_k", c.metrics.top_k},
          {"r_batch", c.metrics.r_batch},
          {"seed", c.metrics.seed}}},
    };
}

bridge::McmModel build_model(const RunConfig& cfg) {
    mwnet::Rng rng(cfg.model.init_seed);
    const mwnet::MwNetModel main(cfg.model.net, rng);
    const cond::TextEncoderConfig tcfg{cfg.model.net.width, cfg.model.text_heads, cfg.model.max_tokens};
    cond::ToyTextEncoder text(cond::Vocabulary(train::toy_words()), tcfg, rng);
    cond::ToyAudioEncoder audio({cfg.model.audio_bands, cfg.model.control_dim}, rng);
    return bridge::build_mcm(main, {std::move(text), std::move(audio)}, rng);
}

}  // namespace mcm::config
