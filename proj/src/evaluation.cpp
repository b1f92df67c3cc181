#include "pcqa/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "pcqa/csv.hpp"

namespace pcqa {

namespace {

void check_pair(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw DataError("correlation inputs have different lengths");
    if (a.size() < 2) throw DataError("correlation requires at least 2 points");
    auto constant = [](const Vec& v) {
        return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
    };
    if (constant(a) || constant(b)) throw DataError("correlation undefined for constant input");
}

double pearson_centered(const Vec& a, const Vec& b) {
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double num = 0.0, da = 0.0, db = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double xa = a[i] - ma;
        const double xb = b[i] - mb;
        num += xa * xb;
        da += xa * xa;
        db += xb * xb;
    }
    return num / std::sqrt(da * db);
}

}  // namespace

Vec fractional_ranks(const Vec& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    Vec ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        // ties share the average of ranks i+1 .. j+1
        const double r = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

double srcc(const Vec& pred, const Vec& gt) {
    check_pair(pred, gt);
    return pearson_centered(fractional_ranks(pred), fractional_ranks(gt));
}

double plcc(const Vec& pred, const Vec& gt) {
    check_pair(pred, gt);
    return pearson_centered(pred, gt);
}

double val_score(const Vec& pred, const Vec& gt) { return (srcc(pred, gt) + plcc(pred, gt)) / 2.0; }

void PredictionSet::validate() const {
    if (ids.size() != scores.size()) throw DataError("prediction set id/score length mismatch");
    std::unordered_set<std::string> seen;
    for (const auto& id : ids)
        if (!seen.insert(id).second) throw DataError("duplicate id in prediction set: " + id);
    for (double s : scores)
        if (!std::isfinite(s)) throw NumericError("non-finite score in prediction set");
}

PredictionSet normalize_predictions(const PredictionSet& p) {
    p.validate();
    if (p.size() < 2) throw DataError("normalization requires at least 2 predictions");
    const double n = static_cast<double>(p.size());
    const double mean = std::accumulate(p.scores.begin(), p.scores.end(), 0.0) / n;
    double ss = 0.0;
    for (double s : p.scores) ss += (s - mean) * (s - mean);
    const double std = std::sqrt(ss / n);
    if (!(std > 0.0)) throw NumericError("constant prediction set, sigma = 0");
    PredictionSet out;
    out.ids = p.ids;
    out.scores.reserve(p.size());
    for (double s : p.scores) out.scores.push_back((s - mean) / std);
    return out;
}

PredictionSet ensemble_blend(const std::vector<PredictionSet>& members) {
    if (members.empty()) throw DataError("ensemble requires at least one member");
    const auto& first = members.front();
    std::vector<PredictionSet> normalized;
    normalized.reserve(members.size());
    for (const auto& m : members) normalized.push_back(normalize_predictions(m));

    PredictionSet out;
    out.ids = first.ids;
    out.scores.assign(first.size(), 0.0);
    for (const auto& m : normalized) {
        if (m.size() != first.size()) throw DataError("ensemble members disagree on id universe");
        std::unordered_map<std::string, double> by_id;
        for (std::size_t i = 0; i < m.size(); ++i) by_id.emplace(m.ids[i], m.scores[i]);
        for (std::size_t i = 0; i < first.size(); ++i) {
            auto it = by_id.find(first.ids[i]);
            if (it == by_id.end())
                throw DataError("ensemble member missing id: " + first.ids[i]);
            out.scores[i] += it->second;
        }
    }
    for (double& s : out.scores) s /= static_cast<double>(members.size());
    return out;
}

double tta_flip(const PCQAModel& model, const std::vector<Image>& frames,
                const std::string& prompt) {
    std::vector<Image> flipped;
    flipped.reserve(frames.size());
    for (const auto& f : frames) flipped.push_back(hflip(f));
    return (model.forward(frames, prompt) + model.forward(flipped, prompt)) / 2.0;
}

void write_predictions(const PredictionSet& p, const std::string& path) {
    p.validate();
    std::ofstream out(path);
    if (!out) throw DataError("cannot write predictions: " + path);
    out << "id,score\n";
    char buf[48];
    for (std::size_t i = 0; i < p.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.9g", p.scores[i]);
        out << csv_escape(p.ids[i]) << ',' << buf << '\n';
    }
}

PredictionSet read_predictions(const std::string& path) {
    const auto lines = read_lines(path);
    if (lines.empty() || split_csv_line(lines[0]) != std::vector<std::string>{"id", "score"})
        throw DataError("malformed prediction file header: " + path);
    PredictionSet p;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        auto fields = split_csv_line(lines[i]);
        if (fields.size() != 2) throw DataError("malformed prediction row in " + path);
        p.ids.push_back(fields[0]);
        p.scores.push_back(std::stod(fields[1]));
    }
    p.validate();
    return p;
}

}  // namespace pcqa
