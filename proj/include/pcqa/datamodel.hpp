#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pcqa/common.hpp"

namespace pcqa {

enum class MediaKind { Image, FrameSequence };

struct MediaRef {
    MediaKind kind = MediaKind::Image;
    std::vector<std::string> paths;  // length 1 for images, frame order for sequences
};

struct Sample {
    std::string id;
    MediaRef media;
    std::string prompt;  // may be empty, never absent
    std::optional<double> mos;
};

// Population convention (divide by N).
struct MosStats {
    double mean = 0.0;
    double std = 1.0;

    MosStats() = default;
    MosStats(double mean_, double std_);
};

// Manifest CSV: header `id,media,prompt,mos` (or `id,media,prompt` for
// unlabeled sets), `;`-joined media paths for frame sequences, standard
// double-quote escaping for fields containing commas.
std::vector<Sample> load_manifest(const std::string& path);
void write_manifest(const std::vector<Sample>& samples, const std::string& path);

MosStats compute_mos_stats(const std::vector<Sample>& samples);

double normalize_mos(double mos, const MosStats& stats);
double denormalize_mos(double z, const MosStats& stats);

// Endpoint-inclusive uniform frame selection: indices round(i*(F-1)/(max-1)).
std::vector<std::string> sample_frames(const MediaRef& media, int max_frames);

}  // namespace pcqa
