#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>

#include "fvdm/data.hpp"
#include "fvdm/denoiser.hpp"
#include "fvdm/diffusion.hpp"
#include "fvdm/tasks.hpp"
#include "fvdm/training.hpp"

namespace fvdm {

/// Malformed run configuration; the message starts with the dotted field name.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct TaskSettings {
    TaskKind kind = TaskKind::standard;
    std::size_t frames = 0;    // 0: the dataset clip length
    std::size_t overlap = 2;   // extend
    std::size_t position = 1;  // condition_on_frame, 1-based
    double slope = 2.0;        // progressive
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::string out = "run";
    NoiseSchedule schedule;
    DatasetSpec dataset;
    std::string model_preset = "toy-S";
    std::size_t patch_size = 0;
    bool v_prediction = true;
    TrainConfig train;  // train.ptss and train.seed mirror the top-level values
    SamplerConfig sampler;
    TaskSettings task;

    DenoiserConfig denoiser() const;
};

/// Accepts ddim | deterministic and ddpm | ancestral.
SamplerKind parse_sampler_kind(const std::string& name);
/// Accepts the task kind names plus the short forms i2v, frame and next.
TaskKind parse_task_alias(const std::string& name);

/// Parses a JSON document on top of the defaults and applies `overrides`
/// ("dotted.path=value", value parsed as JSON or else taken as a string).
/// Unknown fields and type or range errors raise ConfigError naming the field.
RunConfig parse_run_config(const std::string& text, std::span<const std::string> overrides = {});
RunConfig load_run_config(const std::filesystem::path& path, std::span<const std::string> overrides = {});

/// Every field with its effective value, as pretty-printed JSON.
std::string resolved_config_json(const RunConfig& cfg);

}  // namespace fvdm
