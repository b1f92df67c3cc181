#include "pcqa/datamodel.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <unordered_set>

#include "pcqa/csv.hpp"

namespace fs = std::filesystem;

namespace pcqa {

MosStats::MosStats(double mean_, double std_) : mean(mean_), std(std_) {
    if (!(std_ > 0.0) || !std::isfinite(std_) || !std::isfinite(mean_))
        throw DataError("MosStats requires finite mean and std > 0");
}

namespace {

std::vector<std::string> split_media(const std::string& field) {
    std::vector<std::string> paths;
    std::string cur;
    for (char ch : field) {
        if (ch == ';') {
            paths.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    paths.push_back(cur);
    return paths;
}

double parse_mos(const std::string& field, const std::string& id) {
    double value = 0.0;
    const char* begin = field.data();
    const char* end = begin + field.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end || !std::isfinite(value))
        throw DataError("malformed mos value '" + field + "' for sample " + id);
    return value;
}

}  // namespace

std::vector<Sample> load_manifest(const std::string& path) {
    const auto lines = read_lines(path);
    if (lines.empty()) throw DataError("empty manifest: " + path);

    std::string header = lines[0];
    if (!header.empty() && header.back() == '\r') header.pop_back();
    bool labeled;
    if (header == "id,media,prompt,mos") labeled = true;
    else if (header == "id,media,prompt") labeled = false;
    else throw DataError("malformed manifest header in " + path + ": " + header);

    const fs::path base = fs::path(path).parent_path();
    std::vector<Sample> samples;
    std::unordered_set<std::string> seen;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty() || lines[i] == "\r") continue;
        auto fields = split_csv_line(lines[i]);
        const std::size_t expected = labeled ? 4u : 3u;
        if (fields.size() != expected)
            throw DataError("manifest row " + std::to_string(i + 1) + " has " +
                            std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(expected));
        Sample s;
        s.id = fields[0];
        if (s.id.empty()) throw DataError("empty id at manifest row " + std::to_string(i + 1));
        if (!seen.insert(s.id).second) throw DataError("duplicate id in manifest: " + s.id);

        auto paths = split_media(fields[1]);
        s.media.kind = paths.size() == 1 ? MediaKind::Image : MediaKind::FrameSequence;
        for (auto& p : paths) {
            if (p.empty()) throw DataError("empty media path for sample " + s.id);
            fs::path full = fs::path(p).is_absolute() ? fs::path(p) : base / p;
            if (!fs::exists(full)) throw DataError("media path does not resolve: " + full.string());
            s.media.paths.push_back(full.string());
        }
        s.prompt = fields[2];
        if (labeled) s.mos = parse_mos(fields[3], s.id);
        samples.push_back(std::move(s));
    }
    return samples;
}

void write_manifest(const std::vector<Sample>& samples, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write manifest: " + path);
    const bool labeled = !samples.empty() && samples.front().mos.has_value();
    out << (labeled ? "id,media,prompt,mos\n" : "id,media,prompt\n");
    char buf[64];
    for (const auto& s : samples) {
        if (s.mos.has_value() != labeled)
            throw DataError("mixed labeled/unlabeled samples in manifest write");
        std::string media;
        for (std::size_t i = 0; i < s.media.paths.size(); ++i) {
            if (i) media += ';';
            media += s.media.paths[i];
        }
        out << csv_escape(s.id) << ',' << csv_escape(media) << ',' << csv_escape(s.prompt);
        if (labeled) {
            std::snprintf(buf, sizeof(buf), "%.17g", *s.mos);
            out << ',' << buf;
        }
        out << '\n';
    }
}

MosStats compute_mos_stats(const std::vector<Sample>& samples) {
    if (samples.size() < 2) throw DataError("mos stats require at least 2 samples");
    double sum = 0.0;
    for (const auto& s : samples) {
        if (!s.mos) throw DataError("sample without mos: " + s.id);
        sum += *s.mos;
    }
    const double n = static_cast<double>(samples.size());
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto& s : samples) {
        const double d = *s.mos - mean;
        ss += d * d;
    }
    const double std = std::sqrt(ss / n);
    if (!(std > 0.0)) throw DataError("constant mos labels, std = 0");
    return MosStats(mean, std);
}

double normalize_mos(double mos, const MosStats& stats) { return (mos - stats.mean) / stats.std; }

double denormalize_mos(double z, const MosStats& stats) { return z * stats.std + stats.mean; }

std::vector<std::string> sample_frames(const MediaRef& media, int max_frames) {
    if (max_frames < 1) throw DataError("max_frames must be >= 1");
    if (media.kind != MediaKind::FrameSequence)
        throw DataError("sample_frames expects a frame sequence");
    const int total = static_cast<int>(media.paths.size());
    if (total <= max_frames) return media.paths;
    std::vector<std::string> out;
    out.reserve(max_frames);
    if (max_frames == 1) {
        out.push_back(media.paths.front());
        return out;
    }
    for (int i = 0; i < max_frames; ++i) {
        const long idx = std::lround(static_cast<double>(i) * (total - 1) / (max_frames - 1));
        out.push_back(media.paths[static_cast<std::size_t>(idx)]);
    }
    return out;
}

}  // namespace pcqa
