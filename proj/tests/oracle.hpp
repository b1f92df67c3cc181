#pragma once

// Definition-level brute-force oracles, kept independent of the library's
// metric implementations: O(n^2) rank counting and textbook sum formulas.

#include <cmath>
#include <cstddef>
#include <vector>

namespace pcqa_test {

inline std::vector<double> oracle_ranks(const std::vector<double>& v) {
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        double below = 0.0, equal = 0.0;
        for (std::size_t j = 0; j < v.size(); ++j) {
            if (v[j] < v[i]) below += 1.0;
            if (v[j] == v[i]) equal += 1.0;
        }
        // fractional rank: 1-based count below plus half the tie group
        ranks[i] = below + (equal + 1.0) / 2.0;
    }
    return ranks;
}

inline double oracle_pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double sa = 0, sb = 0, sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sa += a[i];
        sb += b[i];
        sab += a[i] * b[i];
        saa += a[i] * a[i];
        sbb += b[i] * b[i];
    }
    return (n * sab - sa * sb) / std::sqrt((n * saa - sa * sa) * (n * sbb - sb * sb));
}

inline double oracle_srcc(const std::vector<double>& a, const std::vector<double>& b) {
    return oracle_pearson(oracle_ranks(a), oracle_ranks(b));
}

inline double oracle_plcc(const std::vector<double>& a, const std::vector<double>& b) {
    return oracle_pearson(a, b);
}

// Hand z-score + mean blend over parallel score lists.
inline std::vector<double> oracle_blend(const std::vector<std::vector<double>>& members) {
    const std::size_t n = members.front().size();
    std::vector<double> out(n, 0.0);
    for (const auto& m : members) {
        double mean = 0;
        for (double s : m) mean += s;
        mean /= static_cast<double>(n);
        double ss = 0;
        for (double s : m) ss += (s - mean) * (s - mean);
        const double sd = std::sqrt(ss / static_cast<double>(n));
        for (std::size_t i = 0; i < n; ++i) out[i] += (m[i] - mean) / sd;
    }
    for (double& s : out) s /= static_cast<double>(members.size());
    return out;
}

}  // namespace pcqa_test
