#include "relrec/tape.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "relrec/error.hpp"

namespace relrec {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw Error(ErrorCode::invalid_argument,
                    std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                        std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                        std::to_string(b.cols()));
    }
}

}  // namespace

Var Tape::constant(Matrix value) {
    Node node;
    node.value = std::move(value);
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
}

Var Tape::param(Parameter& p) {
    Node node;
    node.ref = &p.value;
    if (grad_enabled_) {
        node.sink = &p;
        node.needs_grad = true;
        if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) {
            p.zero_grad();
        }
    }
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
}

Var Tape::param(const Parameter& p) {
    Node node;
    node.ref = &p.value;
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
}

const Matrix& Tape::value(Var v) const {
    const auto& node = nodes_.at(v.id);
    return node.ref != nullptr ? *node.ref : node.value;
}

Var Tape::record(Matrix value, bool needs_grad, Backward backward) {
    Node node;
    node.value = std::move(value);
    node.needs_grad = grad_enabled_ && needs_grad;
    if (node.needs_grad) {
        node.backward = std::move(backward);
    }
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
}

Matrix& Tape::grad(Var v) {
    auto& node = nodes_.at(v.id);
    if (node.sink != nullptr) {
        return node.sink->grad;
    }
    const auto& val = node.ref != nullptr ? *node.ref : node.value;
    if (node.grad.rows() != val.rows() || node.grad.cols() != val.cols()) {
        node.grad.setZero(val.rows(), val.cols());
    }
    return node.grad;
}

void Tape::backward(Var out, const Matrix& seed) {
    if (!grad_enabled_) {
        throw Error(ErrorCode::invalid_argument, "backward on a tape recorded without gradients");
    }
    require_same_shape(value(out), seed, "backward seed");
    if (!seed.allFinite()) {
        throw Error(ErrorCode::numeric, "non-finite gradient seed");
    }
    if (!nodes_.at(out.id).needs_grad) {
        return;
    }
    grad(out) += seed;
    for (std::size_t i = out.id + 1; i-- > 0;) {
        auto& node = nodes_[i];
        if (!node.needs_grad || !node.backward || node.grad.size() == 0) {
            continue;
        }
        // Move the gradient out so the node's storage is released as we go.
        const Matrix g = std::move(node.grad);
        node.grad = Matrix();
        node.backward(*this, g);
    }
}

void Tape::backward(Var out) {
    const auto& v = value(out);
    if (v.rows() != 1 || v.cols() != 1) {
        throw Error(ErrorCode::invalid_argument, "scalar backward on non-scalar output");
    }
    if (!std::isfinite(v(0, 0))) {
        throw Error(ErrorCode::numeric, "non-finite loss value");
    }
    backward(out, Matrix::Constant(1, 1, 1.0));
}

Var gather_rows(Tape& tape, Var table, std::span<const std::int32_t> ids) {
    const auto& t = tape.value(table);
    Matrix out(static_cast<Eigen::Index>(ids.size()), t.cols());
    for (std::size_t r = 0; r < ids.size(); ++r) {
        if (ids[r] < 0 || ids[r] >= t.rows()) {
            throw Error(ErrorCode::out_of_range, "gather_rows: id " + std::to_string(ids[r]) +
                                                     " outside table of " + std::to_string(t.rows()) + " rows");
        }
        out.row(static_cast<Eigen::Index>(r)) = t.row(ids[r]);
    }
    std::vector<std::int32_t> saved(ids.begin(), ids.end());
    return tape.record(std::move(out), tape.needs_grad(table),
                       [table, saved = std::move(saved)](Tape& tp, const Matrix& g) {
                           auto& gt = tp.grad(table);
                           for (std::size_t r = 0; r < saved.size(); ++r) {
                               gt.row(saved[r]) += g.row(static_cast<Eigen::Index>(r));
                           }
                       });
}

Var matmul(Tape& tape, Var a, Var b) {
    const auto& av = tape.value(a);
    const auto& bv = tape.value(b);
    if (av.cols() != bv.rows()) {
        throw Error(ErrorCode::invalid_argument, "matmul: inner dimensions differ");
    }
    Matrix out;
    out.noalias() = av * bv;
    return tape.record(std::move(out), tape.needs_grad(a) || tape.needs_grad(b),
                       [a, b](Tape& tp, const Matrix& g) {
                           if (tp.needs_grad(a)) {
                               tp.grad(a).noalias() += g * tp.value(b).transpose();
                           }
                           if (tp.needs_grad(b)) {
                               tp.grad(b).noalias() += tp.value(a).transpose() * g;
                           }
                       });
}

Var linear(Tape& tape, Var x, Var w, Var b) {
    const auto& xv = tape.value(x);
    const auto& wv = tape.value(w);
    const auto& bv = tape.value(b);
    if (xv.cols() != wv.rows() || bv.rows() != 1 || bv.cols() != wv.cols()) {
        throw Error(ErrorCode::invalid_argument, "linear: incompatible shapes");
    }
    Matrix out(xv.rows(), wv.cols());
    out.noalias() = xv * wv;
    out.rowwise() += bv.row(0);
    return tape.record(std::move(out), tape.needs_grad(x) || tape.needs_grad(w) || tape.needs_grad(b),
                       [x, w, b](Tape& tp, const Matrix& g) {
                           if (tp.needs_grad(x)) {
                               tp.grad(x).noalias() += g * tp.value(w).transpose();
                           }
                           if (tp.needs_grad(w)) {
                               tp.grad(w).noalias() += tp.value(x).transpose() * g;
                           }
                           if (tp.needs_grad(b)) {
                               tp.grad(b) += g.colwise().sum();
                           }
                       });
}

Var add(Tape& tape, Var a, Var b) {
    const auto& av = tape.value(a);
    const auto& bv = tape.value(b);
    require_same_shape(av, bv, "add");
    Matrix out = av + bv;
    return tape.record(std::move(out), tape.needs_grad(a) || tape.needs_grad(b),
                       [a, b](Tape& tp, const Matrix& g) {
                           if (tp.needs_grad(a)) {
                               tp.grad(a) += g;
                           }
                           if (tp.needs_grad(b)) {
                               tp.grad(b) += g;
                           }
                       });
}

Var scale(Tape& tape, Var a, double factor) {
    Matrix out = tape.value(a) * factor;
    return tape.record(std::move(out), tape.needs_grad(a), [a, factor](Tape& tp, const Matrix& g) {
        tp.grad(a) += g * factor;
    });
}

Var mask_rows(Tape& tape, Var a, std::span<const double> row_mask) {
    const auto& av = tape.value(a);
    if (static_cast<Eigen::Index>(row_mask.size()) != av.rows()) {
        throw Error(ErrorCode::invalid_argument, "mask_rows: mask length differs from rows");
    }
    const Eigen::Map<const Eigen::VectorXd> m(row_mask.data(), static_cast<Eigen::Index>(row_mask.size()));
    Matrix out = m.asDiagonal() * av;
    Eigen::VectorXd saved = m;
    return tape.record(std::move(out), tape.needs_grad(a), [a, saved = std::move(saved)](Tape& tp, const Matrix& g) {
        tp.grad(a).noalias() += saved.asDiagonal() * g;
    });
}

Var mul_constant(Tape& tape, Var a, Matrix factor) {
    const auto& av = tape.value(a);
    require_same_shape(av, factor, "mul_constant");
    Matrix out = av.cwiseProduct(factor);
    return tape.record(std::move(out), tape.needs_grad(a), [a, factor = std::move(factor)](Tape& tp, const Matrix& g) {
        tp.grad(a) += g.cwiseProduct(factor);
    });
}

Var relu(Tape& tape, Var a) {
    Matrix out = tape.value(a).cwiseMax(0.0);
    return tape.record(std::move(out), tape.needs_grad(a), [a](Tape& tp, const Matrix& g) {
        const auto& av = tp.value(a);
        tp.grad(a) += (av.array() > 0.0).select(g, 0.0);
    });
}

Var layer_norm(Tape& tape, Var x, Var gamma, Var beta, double eps) {
    const auto& xv = tape.value(x);
    const auto& gv = tape.value(gamma);
    const auto& bv = tape.value(beta);
    const auto cols = xv.cols();
    if (gv.rows() != 1 || gv.cols() != cols || bv.rows() != 1 || bv.cols() != cols) {
        throw Error(ErrorCode::invalid_argument, "layer_norm: scale/offset shape mismatch");
    }
    Matrix xhat(xv.rows(), cols);
    Eigen::VectorXd inv_std(xv.rows());
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
        const double mean = xv.row(r).mean();
        const double var = (xv.row(r).array() - mean).square().mean();
        inv_std(r) = 1.0 / std::sqrt(var + eps);
        xhat.row(r) = (xv.row(r).array() - mean) * inv_std(r);
    }
    Matrix out = xhat.array().rowwise() * gv.row(0).array();
    out.rowwise() += bv.row(0);
    return tape.record(
        std::move(out), tape.needs_grad(x) || tape.needs_grad(gamma) || tape.needs_grad(beta),
        [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& tp, const Matrix& g) {
            if (tp.needs_grad(gamma)) {
                tp.grad(gamma) += g.cwiseProduct(xhat).colwise().sum();
            }
            if (tp.needs_grad(beta)) {
                tp.grad(beta) += g.colwise().sum();
            }
            if (tp.needs_grad(x)) {
                const auto& gv2 = tp.value(gamma);
                const Matrix dxhat = g.array().rowwise() * gv2.row(0).array();
                const auto n = static_cast<double>(dxhat.cols());
                auto& gx = tp.grad(x);
                for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
                    const double sum_d = dxhat.row(r).sum();
                    const double sum_dx = dxhat.row(r).dot(xhat.row(r));
                    gx.row(r).array() +=
                        (inv_std(r) / n) * (n * dxhat.row(r).array() - sum_d - xhat.row(r).array() * sum_dx);
                }
            }
        });
}

Var causal_attention(Tape& tape, Var q, Var k, Var v, const AttentionSpec& spec) {
    const auto& qv = tape.value(q);
    const auto& kv = tape.value(k);
    const auto& vv = tape.value(v);
    require_same_shape(qv, kv, "attention q/k");
    require_same_shape(qv, vv, "attention q/v");
    const auto rows = static_cast<std::size_t>(qv.rows());
    const auto width = static_cast<std::size_t>(qv.cols());
    const std::size_t len = spec.seq_len;
    const std::size_t heads = spec.num_heads;
    if (len == 0 || rows % len != 0 || heads == 0 || width % heads != 0 || spec.key_valid.size() != rows) {
        throw Error(ErrorCode::invalid_argument, "attention: inconsistent shapes");
    }
    const std::size_t batch = rows / len;
    const std::size_t head_dim = width / heads;
    const double scale_factor = 1.0 / std::sqrt(static_cast<double>(head_dim));
    const auto L = static_cast<Eigen::Index>(len);
    const auto D = static_cast<Eigen::Index>(head_dim);
    if (spec.dropout_masks != nullptr && spec.dropout_masks->size() != batch * heads) {
        throw Error(ErrorCode::invalid_argument, "attention: dropout mask count mismatch");
    }

    Matrix out = Matrix::Zero(qv.rows(), qv.cols());
    std::vector<Matrix> probs(batch * heads);
    for (std::size_t b = 0; b < batch; ++b) {
        const auto r0 = static_cast<Eigen::Index>(b * len);
        for (std::size_t h = 0; h < heads; ++h) {
            const auto c0 = static_cast<Eigen::Index>(h * head_dim);
            Matrix scores;
            scores.noalias() = qv.block(r0, c0, L, D) * kv.block(r0, c0, L, D).transpose();
            Matrix& p = probs[b * heads + h];
            p.setZero(L, L);
            for (Eigen::Index t = 0; t < L; ++t) {
                double row_max = -std::numeric_limits<double>::infinity();
                for (Eigen::Index s = 0; s <= t; ++s) {
                    if (spec.key_valid[static_cast<std::size_t>(r0 + s)] != 0.0) {
                        row_max = std::max(row_max, scores(t, s) * scale_factor);
                    }
                }
                if (row_max == -std::numeric_limits<double>::infinity()) {
                    continue;
                }
                double total = 0.0;
                for (Eigen::Index s = 0; s <= t; ++s) {
                    if (spec.key_valid[static_cast<std::size_t>(r0 + s)] != 0.0) {
                        const double e = std::exp(scores(t, s) * scale_factor - row_max);
                        p(t, s) = e;
                        total += e;
                    }
                }
                p.row(t).head(t + 1) /= total;
            }
            if (spec.dropout_masks != nullptr) {
                out.block(r0, c0, L, D).noalias() =
                    p.cwiseProduct((*spec.dropout_masks)[b * heads + h]) * vv.block(r0, c0, L, D);
            } else {
                out.block(r0, c0, L, D).noalias() = p * vv.block(r0, c0, L, D);
            }
        }
    }
    if (spec.probabilities_out != nullptr) {
        *spec.probabilities_out = probs;
    }
    std::vector<Matrix> masks;
    if (spec.dropout_masks != nullptr) {
        masks = *spec.dropout_masks;
    }
    const bool needs = tape.needs_grad(q) || tape.needs_grad(k) || tape.needs_grad(v);
    return tape.record(
        std::move(out), needs,
        [q, k, v, len, heads, head_dim, scale_factor, probs = std::move(probs), masks = std::move(masks)](
            Tape& tp, const Matrix& g) {
            const auto& qv2 = tp.value(q);
            const auto& kv2 = tp.value(k);
            const auto& vv2 = tp.value(v);
            const auto L2 = static_cast<Eigen::Index>(len);
            const auto D2 = static_cast<Eigen::Index>(head_dim);
            const std::size_t batch2 = static_cast<std::size_t>(qv2.rows()) / len;
            Matrix* gq = tp.needs_grad(q) ? &tp.grad(q) : nullptr;
            Matrix* gk = tp.needs_grad(k) ? &tp.grad(k) : nullptr;
            Matrix* gv = tp.needs_grad(v) ? &tp.grad(v) : nullptr;
            for (std::size_t b = 0; b < batch2; ++b) {
                const auto r0 = static_cast<Eigen::Index>(b * len);
                for (std::size_t h = 0; h < heads; ++h) {
                    const auto c0 = static_cast<Eigen::Index>(h * head_dim);
                    const Matrix& p = probs[b * heads + h];
                    const auto go = g.block(r0, c0, L2, D2);
                    Matrix dp;
                    dp.noalias() = go * vv2.block(r0, c0, L2, D2).transpose();
                    if (!masks.empty()) {
                        const Matrix& m = masks[b * heads + h];
                        if (gv != nullptr) {
                            gv->block(r0, c0, L2, D2).noalias() += p.cwiseProduct(m).transpose() * go;
                        }
                        dp = dp.cwiseProduct(m);
                    } else if (gv != nullptr) {
                        gv->block(r0, c0, L2, D2).noalias() += p.transpose() * go;
                    }
                    // softmax adjoint: ds = p * (dp - rowsum(dp * p))
                    const Eigen::VectorXd row_dot = dp.cwiseProduct(p).rowwise().sum();
                    Matrix ds = p.cwiseProduct(dp.colwise() - row_dot);
                    ds *= scale_factor;
                    if (gq != nullptr) {
                        gq->block(r0, c0, L2, D2).noalias() += ds * kv2.block(r0, c0, L2, D2);
                    }
                    if (gk != nullptr) {
                        gk->block(r0, c0, L2, D2).noalias() += ds.transpose() * qv2.block(r0, c0, L2, D2);
                    }
                }
            }
        });
}

Var gather_dot(Tape& tape, Var h, std::span<const std::size_t> rows, Var table,
               std::span<const std::int32_t> items) {
    if (rows.size() != items.size()) {
        throw Error(ErrorCode::invalid_argument, "gather_dot: rows and items differ in length");
    }
    const auto& hv = tape.value(h);
    const auto& tv = tape.value(table);
    if (hv.cols() != tv.cols()) {
        throw Error(ErrorCode::invalid_argument, "gather_dot: width mismatch");
    }
    Matrix out(static_cast<Eigen::Index>(rows.size()), 1);
    for (std::size_t j = 0; j < rows.size(); ++j) {
        if (static_cast<Eigen::Index>(rows[j]) >= hv.rows() || items[j] < 0 || items[j] >= tv.rows()) {
            throw Error(ErrorCode::out_of_range, "gather_dot: index out of range");
        }
        out(static_cast<Eigen::Index>(j), 0) =
            hv.row(static_cast<Eigen::Index>(rows[j])).dot(tv.row(items[j]));
    }
    std::vector<std::size_t> saved_rows(rows.begin(), rows.end());
    std::vector<std::int32_t> saved_items(items.begin(), items.end());
    return tape.record(std::move(out), tape.needs_grad(h) || tape.needs_grad(table),
                       [h, table, saved_rows = std::move(saved_rows), saved_items = std::move(saved_items)](
                           Tape& tp, const Matrix& g) {
                           const auto& hv2 = tp.value(h);
                           const auto& tv2 = tp.value(table);
                           Matrix* gh = tp.needs_grad(h) ? &tp.grad(h) : nullptr;
                           Matrix* gt = tp.needs_grad(table) ? &tp.grad(table) : nullptr;
                           for (std::size_t j = 0; j < saved_rows.size(); ++j) {
                               const double gj = g(static_cast<Eigen::Index>(j), 0);
                               const auto r = static_cast<Eigen::Index>(saved_rows[j]);
                               if (gh != nullptr) {
                                   gh->row(r) += gj * tv2.row(saved_items[j]);
                               }
                               if (gt != nullptr) {
                                   gt->row(saved_items[j]) += gj * hv2.row(r);
                               }
                           }
                       });
}

}  // namespace relrec
