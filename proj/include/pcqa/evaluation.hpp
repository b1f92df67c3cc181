#pragma once

#include <string>
#include <vector>

#include "pcqa/common.hpp"
#include "pcqa/datamodel.hpp"
#include "pcqa/fusion.hpp"

namespace pcqa {

// Spearman rank correlation: Pearson over fractional (average-tie) ranks.
double srcc(const Vec& pred, const Vec& gt);
// Pearson linear correlation.
double plcc(const Vec& pred, const Vec& gt);
// Mean of SRCC and PLCC.
double val_score(const Vec& pred, const Vec& gt);

Vec fractional_ranks(const Vec& v);

// Ordered id -> score map; order is serialization order.
struct PredictionSet {
    std::vector<std::string> ids;
    Vec scores;

    std::size_t size() const { return ids.size(); }
    void validate() const;  // unique ids, finite scores, matching lengths
};

// Z-score by the set's own population mean/std. Errors on constant scores.
PredictionSet normalize_predictions(const PredictionSet& p);

// Per-id mean of each member's z-scores (normalized average blending).
// Members must share one id universe; output follows the first member's order.
PredictionSet ensemble_blend(const std::vector<PredictionSet>& members);

// (forward(x,t) + forward(hflip(x),t)) / 2, clip-consistent flips for video.
double tta_flip(const PCQAModel& model, const std::vector<Image>& frames, const std::string& prompt);

// Prediction CSV: header `id,score`, 9 significant digits.
void write_predictions(const PredictionSet& p, const std::string& path);
PredictionSet read_predictions(const std::string& path);

}  // namespace pcqa
