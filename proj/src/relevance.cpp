#include "relrec/relevance.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <utility>

#include "relrec/error.hpp"

namespace relrec {

std::string_view to_string(RelevanceKind kind) noexcept {
    switch (kind) {
        case RelevanceKind::fixed: return "fixed";
        case RelevanceKind::linear: return "linear";
        case RelevanceKind::power: return "power";
        case RelevanceKind::exponential: return "exp";
    }
    return "unknown";
}

RelevanceKind parse_relevance_kind(std::string_view name) {
    if (name == "fixed") return RelevanceKind::fixed;
    if (name == "linear") return RelevanceKind::linear;
    if (name == "power") return RelevanceKind::power;
    if (name == "exp" || name == "exponential") return RelevanceKind::exponential;
    throw Error(ErrorCode::invalid_argument, "unknown relevance kind: " + std::string(name));
}

double raw_relevance(RelevanceKind kind, std::size_t i, std::size_t k) {
    if (i < 1 || i > k) {
        throw Error(ErrorCode::invalid_argument, "relevance index out of range");
    }
    const auto distance = static_cast<double>(k - i);
    switch (kind) {
        case RelevanceKind::fixed: return 1.0;
        case RelevanceKind::linear: return distance;
        case RelevanceKind::power: return distance * distance;
        case RelevanceKind::exponential: return std::exp(distance);
    }
    return 0.0;
}

RelevanceProfile make_profile(RelevanceKind kind, std::size_t k) {
    if (k < 1) {
        throw Error(ErrorCode::invalid_argument, "relevance profile length must be >= 1");
    }
    RelevanceProfile profile;
    profile.kind = kind;
    profile.weights.resize(k);
    if (kind == RelevanceKind::exponential) {
        // e^(k-i) / sum_j e^(k-j), evaluated with the max exponent (k-1)
        // subtracted so large k cannot overflow.
        const auto top = static_cast<double>(k - 1);
        for (std::size_t i = 1; i <= k; ++i) {
            profile.weights[i - 1] = std::exp(static_cast<double>(k - i) - top);
        }
    } else {
        for (std::size_t i = 1; i <= k; ++i) {
            profile.weights[i - 1] = raw_relevance(kind, i, k);
        }
    }
    double total = 0.0;
    for (const auto w : profile.weights) {
        total += w;
    }
    if (total == 0.0) {
        std::fill(profile.weights.begin(), profile.weights.end(), 1.0 / static_cast<double>(k));
        return profile;
    }
    for (auto& w : profile.weights) {
        w /= total;
    }
    return profile;
}

const RelevanceProfile& cached_profile(RelevanceKind kind, std::size_t k) {
    static std::mutex mutex;
    static std::map<std::pair<RelevanceKind, std::size_t>, std::unique_ptr<RelevanceProfile>> cache;
    const std::lock_guard lock(mutex);
    auto& slot = cache[{kind, k}];
    if (!slot) {
        slot = std::make_unique<RelevanceProfile>(make_profile(kind, k));
    }
    return *slot;
}

}  // namespace relrec
