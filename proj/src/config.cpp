#include "fvdm/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fvdm {
namespace {

using json = nlohmann::json;

json defaults_json()
{
    const RunConfig d;
    json j;
    j["seed"] = d.seed;
    j["out"] = d.out;
    j["schedule"] = {{"beta_min", d.schedule.beta_min},
                     {"beta_max", d.schedule.beta_max},
                     {"horizon", d.schedule.horizon},
                     {"t_min", d.schedule.t_min}};
    j["ptss"] = {{"p", d.train.ptss.p}};
    j["model"] = {{"preset", d.model_preset}, {"patch_size", "auto"}, {"v_prediction", d.v_prediction}};
    j["train"] = {{"batch_size", d.train.batch_size},
                  {"total_steps", d.train.total_steps},
                  {"learning_rate", d.train.learning_rate},
                  {"beta1", d.train.beta1},
                  {"beta2", d.train.beta2},
                  {"adam_eps", d.train.adam_eps},
                  {"clip_norm", d.train.clip_norm},
                  {"weighting", weighting_name(d.train.weighting)},
                  {"checkpoint_interval", d.train.checkpoint_interval}};
    j["dataset"] = json::parse(dataset_spec_to_json(d.dataset));
    j["sampler"] = {{"kind", "ddim"}, {"steps", d.sampler.steps}};
    j["task"] = {{"kind", task_kind_name(d.task.kind)},
                 {"frames", d.task.frames},
                 {"overlap", d.task.overlap},
                 {"position", d.task.position},
                 {"slope", d.task.slope}};
    return j;
}

std::string join(const std::string& prefix, const std::string& key)
{
    return prefix.empty() ? key : prefix + "." + key;
}

// Copies `user` onto `base`, refusing fields the defaults do not have.
void merge(json& base, const json& user, const std::string& prefix)
{
    if (!user.is_object()) {
        throw ConfigError((prefix.empty() ? std::string("config") : prefix) + ": expected an object");
    }
    for (const auto& [key, value] : user.items()) {
        const std::string path = join(prefix, key);
        if (!base.contains(key)) throw ConfigError(path + ": unknown field");
        json& slot = base[key];
        if (slot.is_object()) merge(slot, value, path);
        else slot = value;
    }
}

void apply_override(json& root, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override '" + assignment + "': expected path=value");
    }
    const std::string path = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::exception&) {
        value = text;
    }
    json* node = &root;
    std::string walked;
    std::istringstream parts(path);
    std::string key;
    while (std::getline(parts, key, '.')) {
        walked = join(walked, key);
        if (!node->is_object() || !node->contains(key)) throw ConfigError(walked + ": unknown field");
        node = &(*node)[key];
    }
    if (node->is_object()) throw ConfigError(path + ": cannot replace a section");
    *node = value;
}

class Reader {
public:
    explicit Reader(const json& root) : root_(root) {}

    const json& at(const std::string& path) const
    {
        const json* node = &root_;
        std::istringstream parts(path);
        std::string key;
        while (std::getline(parts, key, '.')) node = &node->at(key);
        return *node;
    }

    double real(const std::string& path) const
    {
        const json& v = at(path);
        if (!v.is_number()) throw ConfigError(path + ": expected a number");
        return v.get<double>();
    }

    std::uint64_t count(const std::string& path) const
    {
        const json& v = at(path);
        if (!v.is_number_unsigned()) throw ConfigError(path + ": expected a non-negative integer");
        return v.get<std::uint64_t>();
    }

    bool flag(const std::string& path) const
    {
        const json& v = at(path);
        if (!v.is_boolean()) throw ConfigError(path + ": expected true or false");
        return v.get<bool>();
    }

    std::string text(const std::string& path) const
    {
        const json& v = at(path);
        if (!v.is_string()) throw ConfigError(path + ": expected a string");
        return v.get<std::string>();
    }

private:
    const json& root_;
};

template <class F>
auto field(const std::string& path, F&& f)
{
    try {
        return f();
    } catch (const ConfigError& e) {
        if (std::string(e.what()).rfind(path, 0) == 0) throw;
        throw ConfigError(path + ": " + e.what());
    } catch (const std::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

RunConfig decode(const json& root)
{
    const Reader r(root);
    RunConfig c;
    c.seed = r.count("seed");
    c.out = r.text("out");
    if (c.out.empty()) throw ConfigError("out: must not be empty");

    c.schedule.beta_min = r.real("schedule.beta_min");
    c.schedule.beta_max = r.real("schedule.beta_max");
    c.schedule.horizon = r.real("schedule.horizon");
    c.schedule.t_min = r.real("schedule.t_min");
    field("schedule", [&] { c.schedule.validate(); return 0; });

    c.train.ptss.p = r.real("ptss.p");
    field("ptss.p", [&] { c.train.ptss.validate(); return 0; });

    c.dataset = field("dataset", [&] {
        try {
            return dataset_spec_from_json(r.at("dataset").dump());
        } catch (const DataError& e) {
            throw ConfigError(e.what());
        }
    });

    c.model_preset = r.text("model.preset");
    const json& patch = r.at("model.patch_size");
    if (patch.is_string() && patch.get<std::string>() == "auto") {
        const bool tiles = c.dataset.is_image() && c.dataset.height % 4 == 0 && c.dataset.width % 4 == 0;
        c.patch_size = tiles ? 4 : 0;
    } else {
        c.patch_size = r.count("model.patch_size");
    }
    if (c.patch_size > 0 && !c.dataset.is_image()) {
        throw ConfigError("model.patch_size: patch tokens need an image dataset");
    }
    c.v_prediction = r.flag("model.v_prediction");
    field("model", [&] { return c.denoiser(); });

    c.train.batch_size = r.count("train.batch_size");
    c.train.total_steps = r.count("train.total_steps");
    c.train.learning_rate = r.real("train.learning_rate");
    c.train.beta1 = r.real("train.beta1");
    c.train.beta2 = r.real("train.beta2");
    c.train.adam_eps = r.real("train.adam_eps");
    c.train.clip_norm = r.real("train.clip_norm");
    c.train.weighting = field("train.weighting", [&] { return parse_weighting(r.text("train.weighting")); });
    c.train.checkpoint_interval = r.count("train.checkpoint_interval");
    c.train.seed = c.seed;
    field("train", [&] { c.train.validate(); return 0; });

    c.sampler.kind = field("sampler.kind", [&] { return parse_sampler_kind(r.text("sampler.kind")); });
    c.sampler.steps = r.count("sampler.steps");
    if (c.sampler.steps < 1) throw ConfigError("sampler.steps: must be positive");

    c.task.kind = field("task.kind", [&] { return parse_task_alias(r.text("task.kind")); });
    c.task.frames = r.count("task.frames");
    if (c.task.frames == 0) c.task.frames = c.dataset.n_frames;
    c.task.overlap = r.count("task.overlap");
    c.task.position = r.count("task.position");
    c.task.slope = r.real("task.slope");
    if (c.task.overlap < 1 || c.task.overlap >= c.task.frames) {
        throw ConfigError("task.overlap: must lie in [1, frames)");
    }
    if (c.task.position < 1 || c.task.position > c.task.frames) {
        throw ConfigError("task.position: must lie in [1, frames]");
    }
    if (!(c.task.slope > 0.0)) throw ConfigError("task.slope: must be positive");
    return c;
}

}  // namespace

DenoiserConfig RunConfig::denoiser() const
{
    DenoiserConfig d = patch_size == 0 ? DenoiserConfig::from_preset(model_preset, dataset.dim())
                                       : DenoiserConfig::from_preset(model_preset, *dataset.geometry(), patch_size);
    d.v_prediction = v_prediction;
    d.schedule = schedule;
    return d;
}

SamplerKind parse_sampler_kind(const std::string& name)
{
    if (name == "ddim" || name == "deterministic") return SamplerKind::deterministic;
    if (name == "ddpm" || name == "ancestral") return SamplerKind::ancestral;
    throw ConfigError("unknown sampler '" + name + "' (expected ddim or ddpm)");
}

TaskKind parse_task_alias(const std::string& name)
{
    if (name == "i2v") return TaskKind::image2video;
    if (name == "frame") return TaskKind::condition_on_frame;
    if (name == "next") return TaskKind::next_frame;
    return parse_task_kind(name);
}

RunConfig parse_run_config(const std::string& text, std::span<const std::string> overrides)
{
    json root = defaults_json();
    if (!text.empty()) {
        json user;
        try {
            user = json::parse(text);
        } catch (const json::exception& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
        merge(root, user, "");
    }
    for (const auto& o : overrides) apply_override(root, o);
    return decode(root);
}

RunConfig load_run_config(const std::filesystem::path& path, std::span<const std::string> overrides)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot read " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str(), overrides);
}

std::string resolved_config_json(const RunConfig& c)
{
    json j;
    j["seed"] = c.seed;
    j["out"] = c.out;
    j["schedule"] = {{"beta_min", c.schedule.beta_min},
                     {"beta_max", c.schedule.beta_max},
                     {"horizon", c.schedule.horizon},
                     {"t_min", c.schedule.t_min}};
    j["ptss"] = {{"p", c.train.ptss.p}};
    j["model"] = {{"preset", c.model_preset}, {"patch_size", c.patch_size}, {"v_prediction", c.v_prediction}};
    j["train"] = {{"batch_size", c.train.batch_size},
                  {"total_steps", c.train.total_steps},
                  {"learning_rate", c.train.learning_rate},
                  {"beta1", c.train.beta1},
                  {"beta2", c.train.beta2},
                  {"adam_eps", c.train.adam_eps},
                  {"clip_norm", c.train.clip_norm},
                  {"weighting", weighting_name(c.train.weighting)},
                  {"checkpoint_interval", c.train.checkpoint_interval}};
    j["dataset"] = json::parse(dataset_spec_to_json(c.dataset));
    j["sampler"] = {{"kind", c.sampler.kind == SamplerKind::deterministic ? "ddim" : "ddpm"},
                    {"steps", c.sampler.steps}};
    j["task"] = {{"kind", task_kind_name(c.task.kind)},
                 {"frames", c.task.frames},
                 {"overlap", c.task.overlap},
                 {"position", c.task.position},
                 {"slope", c.task.slope}};
    return j.dump(2);
}

}  // namespace fvdm
