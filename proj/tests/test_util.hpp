#pragma once

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "pcqa/common.hpp"
#include "pcqa/config.hpp"
#include "pcqa/image.hpp"

namespace pcqa_test {

// Unique scratch directory, removed on destruction.
class TempDir {
  public:
    explicit TempDir(const std::string& label) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("pcqa_" + label + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::filesystem::path path() const { return path_; }
    std::string str(const std::string& rel = "") const { return (path_ / rel).string(); }

  private:
    std::filesystem::path path_;
};

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

inline pcqa::Image solid_image(int h, int w, double r, double g, double b) {
    pcqa::Image img(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            img.at(y, x, 0) = r;
            img.at(y, x, 1) = g;
            img.at(y, x, 2) = b;
        }
    return img;
}

inline pcqa::Image noise_image(int h, int w, std::uint64_t seed) {
    pcqa::Rng rng(seed);
    pcqa::Image img(h, w);
    for (double& v : img.data) v = rng.uniform();
    return img;
}

// Small config suitable for unit-scale models.
inline pcqa::TrainConfig toy_config() {
    pcqa::TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.lr_max = 1e-3;
    cfg.warmup_fraction = 0.2;  // tiny runs: keep the warmup window >= 1 step
    cfg.resolution_height = 32;
    cfg.resolution_width = 48;
    cfg.seed = 7;
    cfg.latent_dim = 16;
    cfg.head_hidden_dim = 8;
    cfg.vision_encoder = "toy_conv:12:4";
    cfg.text_encoders = "toy_a:10,toy_b:6";
    cfg.max_frames = 4;
    return cfg;
}

}  // namespace pcqa_test
