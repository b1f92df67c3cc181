#pragma once

#include <string>

#include "pcqa/common.hpp"

namespace pcqa {

enum class MixerKind { Concatenation, DotProduct };

MixerKind parse_mixer_kind(const std::string& s);
std::string mixer_kind_name(MixerKind k);

// One run = one TrainConfig. Serialized as a flat key=value text file with
// exactly these field names; unknown keys are rejected.
struct TrainConfig {
    int epochs = 50;
    int batch_size = 16;
    double lr_max = 2e-5;
    double weight_decay = 1e-2;
    double warmup_fraction = 0.05;
    double grad_clip_norm = 1.0;
    int resolution_height = 448;
    int resolution_width = 640;
    std::uint64_t seed = 0;
    MixerKind mixer_kind = MixerKind::Concatenation;
    int max_frames = 16;
    double flip_prob = 0.5;
    double crop_scale_min = 0.9;
    double crop_scale_max = 1.0;
    double brightness_jitter = 0.1;
    double contrast_jitter = 0.1;
    bool mixed_precision = false;
    int latent_dim = 1024;
    int head_hidden_dim = 256;
    std::string vision_encoder = "toy_conv:512";
    std::string text_encoders = "toy_a:64,toy_b:48";
    bool text_trainable = false;

    void validate() const;
};

TrainConfig parse_config_text(const std::string& text);
TrainConfig load_config(const std::string& path);
std::string serialize_config(const TrainConfig& cfg);
void save_config(const TrainConfig& cfg, const std::string& path);

}  // namespace pcqa
