#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace relrec {

enum class RelevanceKind { fixed, linear, power, exponential };

std::string_view to_string(RelevanceKind kind) noexcept;
// Accepts "fixed", "linear", "power", "exp" / "exponential".
RelevanceKind parse_relevance_kind(std::string_view name);

// Normalized, non-increasing weights over K future positions; weights[0]
// belongs to the temporally nearest future item.
struct RelevanceProfile {
    RelevanceKind kind = RelevanceKind::fixed;
    std::vector<double> weights;

    std::size_t size() const noexcept { return weights.size(); }
    double operator[](std::size_t i) const { return weights[i]; }
};

// Raw relevance r(i) for i in 1..k before normalization:
//   fixed 1, linear k-i, power (k-i)^2, exponential e^(k-i).
double raw_relevance(RelevanceKind kind, std::size_t i, std::size_t k);

// Raw values divided by their sum. Linear/power at k=1 have a zero raw sum
// and fall back to the uniform profile {1}.
RelevanceProfile make_profile(RelevanceKind kind, std::size_t k);

// Memoized make_profile; returned references stay valid for the process.
const RelevanceProfile& cached_profile(RelevanceKind kind, std::size_t k);

}  // namespace relrec
