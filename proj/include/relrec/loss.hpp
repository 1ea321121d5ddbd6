#pragma once

#include <cstddef>
#include <span>

namespace relrec {

// Probabilities are clamped to [kProbEpsilon, 1 - kProbEpsilon] before logs.
inline constexpr double kProbEpsilon = 1e-7;

// How profile weights map onto positives. nearest_first gives the i-th
// nearest future item weight r(i); literal_index uses r(pos - i + 1), the
// reversed assignment, for side-by-side comparisons.
enum class WeightOrientation { nearest_first, literal_index };

struct LossBatchItem {
    std::span<const double> pos_probs;  // [0] = nearest future item
    std::span<const double> neg_probs;
    std::span<const double> weights;    // relevance profile, same length as pos_probs
};

// -sum_i w_i log p_i - sum_j log(1 - q_j)
double relevance_loss(const LossBatchItem& item,
                      WeightOrientation orientation = WeightOrientation::nearest_first);

// Plain binary cross-entropy with exactly one positive.
double baseline_loss(const LossBatchItem& item);

// The same loss taken on logits (p = sigmoid(z)). Writes dL/dz into the
// gradient spans, which must match the logit spans in length. Clamped
// probabilities contribute zero gradient.
double relevance_loss_logits(std::span<const double> pos_logits, std::span<const double> neg_logits,
                             std::span<const double> weights, std::span<double> pos_grad,
                             std::span<double> neg_grad,
                             WeightOrientation orientation = WeightOrientation::nearest_first);

double sigmoid(double z) noexcept;

}  // namespace relrec
