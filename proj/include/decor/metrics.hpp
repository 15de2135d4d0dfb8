// metrics.hpp
// Ranking metrics for leave-one-out evaluation: one relevant item per
// user, so ideal DCG is 1 and NDCG@k reduces to a rank discount.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "decor/common.hpp"

namespace decor {

inline double recall_at_k(const std::vector<std::string>& ranked, const std::string& truth, int k) {
    DECOR_REQUIRE(k >= 1, ConfigError, "recall_at_k: k must be >= 1");
    size_t limit = std::min(ranked.size(), static_cast<size_t>(k));
    for (size_t i = 0; i < limit; ++i)
        if (ranked[i] == truth) return 1.0;
    return 0.0;
}

inline double ndcg_at_k(const std::vector<std::string>& ranked, const std::string& truth, int k) {
    DECOR_REQUIRE(k >= 1, ConfigError, "ndcg_at_k: k must be >= 1");
    size_t limit = std::min(ranked.size(), static_cast<size_t>(k));
    for (size_t i = 0; i < limit; ++i) {
        if (ranked[i] == truth) {
            return 1.0 / std::log2(static_cast<double>(i + 2));  // rank = i + 1
        }
    }
    return 0.0;
}

}  // namespace decor
