#include "relrec/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "relrec/error.hpp"

namespace relrec {

namespace {

double clamp_prob(double p) noexcept {
    return std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon);
}

double weight_at(std::span<const double> weights, std::size_t i, WeightOrientation orientation) {
    return orientation == WeightOrientation::nearest_first ? weights[i] : weights[weights.size() - 1 - i];
}

void check_lengths(std::size_t positives, std::size_t weights) {
    if (positives != weights) {
        throw Error(ErrorCode::invalid_argument,
                    "positive count " + std::to_string(positives) + " does not match profile length " +
                        std::to_string(weights));
    }
}

}  // namespace

double sigmoid(double z) noexcept {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double relevance_loss(const LossBatchItem& item, WeightOrientation orientation) {
    check_lengths(item.pos_probs.size(), item.weights.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < item.pos_probs.size(); ++i) {
        loss -= std::log(clamp_prob(item.pos_probs[i])) * weight_at(item.weights, i, orientation);
    }
    for (const double q : item.neg_probs) {
        loss -= std::log(1.0 - clamp_prob(q));
    }
    return loss;
}

double baseline_loss(const LossBatchItem& item) {
    if (item.pos_probs.size() != 1) {
        throw Error(ErrorCode::invalid_argument, "baseline loss takes exactly one positive");
    }
    double loss = -std::log(clamp_prob(item.pos_probs[0]));
    for (const double q : item.neg_probs) {
        loss -= std::log(1.0 - clamp_prob(q));
    }
    return loss;
}

double relevance_loss_logits(std::span<const double> pos_logits, std::span<const double> neg_logits,
                             std::span<const double> weights, std::span<double> pos_grad,
                             std::span<double> neg_grad, WeightOrientation orientation) {
    check_lengths(pos_logits.size(), weights.size());
    if (pos_grad.size() != pos_logits.size() || neg_grad.size() != neg_logits.size()) {
        throw Error(ErrorCode::invalid_argument, "gradient buffers do not match logits");
    }
    double loss = 0.0;
    for (std::size_t i = 0; i < pos_logits.size(); ++i) {
        const double p = sigmoid(pos_logits[i]);
        const double pc = clamp_prob(p);
        const double w = weight_at(weights, i, orientation);
        loss -= std::log(pc) * w;
        pos_grad[i] = (p == pc) ? -w * (1.0 - p) : 0.0;
    }
    for (std::size_t j = 0; j < neg_logits.size(); ++j) {
        const double q = sigmoid(neg_logits[j]);
        const double qc = clamp_prob(q);
        loss -= std::log(1.0 - qc);
        neg_grad[j] = (q == qc) ? q : 0.0;
    }
    if (!std::isfinite(loss)) {
        throw Error(ErrorCode::numeric, "non-finite loss from logits");
    }
    return loss;
}

}  // namespace relrec
