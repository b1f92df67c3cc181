#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "pcqa/config.hpp"
#include "pcqa/fusion.hpp"

namespace pcqa {

// Single-file archive: JSON manifest of named parameter tensors (shape,
// dtype, offset) + the TrainConfig + MosStats, followed by raw little-endian
// float32 row-major tensor data.
void save_checkpoint(const std::string& path, PCQAModel& model, const TrainConfig& cfg);

struct LoadedModel {
    std::unique_ptr<PCQAModel> model;
    TrainConfig config;
};

LoadedModel load_checkpoint(const std::string& path);

}  // namespace pcqa
