// Reverse-mode autodiff tape over dense Eigen matrices.
//
// The tape is eager: node values are computed at op creation, so data-dependent
// decisions (argmin code selection, sampling) can read intermediate values
// while the graph is being built. backward() runs closures in reverse creation
// order and accumulates gradients into per-node grad matrices.
//
// detach() is a stop-gradient. In replay mode detach nodes return values
// recorded by an earlier build; finite-difference checks rebuild the graph in
// replay mode so the differentiated function treats stop-gradient branches as
// constants, exactly matching the analytic gradient's semantics.

#pragma once

#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gcb/common.hpp"

namespace gcb::ad {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

template <class S>
class Tape {
public:
    struct Var {
        int i = -1;
        bool valid() const { return i >= 0; }
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) = delete;
    Tape& operator=(Tape&&) = delete;

    // ---- leaves ----

    Var leaf(const Mat<S>& v) { return push(v, nullptr); }
    Var constant(const Mat<S>& v) { return push(v, nullptr); }

    // ---- elementwise / structural ----

    Var add(Var a, Var b) {
        check_same_shape(a, b, "add");
        Var out = push(value(a) + value(b));
        set_back(out, [this, a, b, out] {
            grad(a) += grad(out);
            grad(b) += grad(out);
        });
        return out;
    }

    Var sub(Var a, Var b) {
        check_same_shape(a, b, "sub");
        Var out = push(value(a) - value(b));
        set_back(out, [this, a, b, out] {
            grad(a) += grad(out);
            grad(b) -= grad(out);
        });
        return out;
    }

    Var scale(Var a, S s) {
        Var out = push(value(a) * s);
        set_back(out, [this, a, out, s] { grad(a) += grad(out) * s; });
        return out;
    }

    Var hadamard(Var a, Var b) {
        check_same_shape(a, b, "hadamard");
        Var out = push(value(a).cwiseProduct(value(b)));
        set_back(out, [this, a, b, out] {
            grad(a) += grad(out).cwiseProduct(value(b));
            grad(b) += grad(out).cwiseProduct(value(a));
        });
        return out;
    }

    // a (R x C) + bias (1 x C) broadcast over rows.
    Var add_rowvec(Var a, Var bias) {
        GCB_CHECK(value(bias).rows() == 1 && value(bias).cols() == value(a).cols(),
                  ErrorCode::ShapeMismatch, "add_rowvec bias shape");
        Mat<S> v = value(a);
        v.rowwise() += value(bias).row(0);
        Var out = push(std::move(v));
        set_back(out, [this, a, bias, out] {
            grad(a) += grad(out);
            grad(bias).row(0) += grad(out).colwise().sum();
        });
        return out;
    }

    Var cols(Var a, int start, int n) {
        Var out = push(value(a).middleCols(start, n));
        set_back(out, [this, a, out, start, n] {
            grad(a).middleCols(start, n) += grad(out);
        });
        return out;
    }

    Var hcat(const std::vector<Var>& parts) {
        GCB_CHECK(!parts.empty(), ErrorCode::ShapeMismatch, "hcat of nothing");
        Eigen::Index rows = value(parts[0]).rows();
        Eigen::Index total = 0;
        for (Var p : parts) {
            GCB_CHECK(value(p).rows() == rows, ErrorCode::ShapeMismatch, "hcat row mismatch");
            total += value(p).cols();
        }
        Mat<S> v(rows, total);
        Eigen::Index at = 0;
        for (Var p : parts) {
            v.middleCols(at, value(p).cols()) = value(p);
            at += value(p).cols();
        }
        Var out = push(std::move(v));
        std::vector<Var> ps = parts;
        set_back(out, [this, ps, out] {
            Eigen::Index at = 0;
            for (Var p : ps) {
                grad(p) += grad(out).middleCols(at, value(p).cols());
                at += value(p).cols();
            }
        });
        return out;
    }

    Var gather_rows(Var table, std::vector<int> rows) {
        Mat<S> v(static_cast<Eigen::Index>(rows.size()), value(table).cols());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            GCB_CHECK(rows[i] >= 0 && rows[i] < value(table).rows(), ErrorCode::ShapeMismatch,
                      "gather_rows index out of range");
            v.row(static_cast<Eigen::Index>(i)) = value(table).row(rows[i]);
        }
        Var out = push(std::move(v));
        set_back(out, [this, table, out, idx = std::move(rows)] {
            for (std::size_t i = 0; i < idx.size(); ++i) {
                grad(table).row(idx[i]) += grad(out).row(static_cast<Eigen::Index>(i));
            }
        });
        return out;
    }

    // ---- matrix products ----

    Var matmul(Var a, Var b) {
        GCB_CHECK(value(a).cols() == value(b).rows(), ErrorCode::ShapeMismatch, "matmul dims");
        Var out = push(value(a) * value(b));
        set_back(out, [this, a, b, out] {
            grad(a) += grad(out) * value(b).transpose();
            grad(b) += value(a).transpose() * grad(out);
        });
        return out;
    }

    // a * b^T
    Var matmul_nt(Var a, Var b) {
        GCB_CHECK(value(a).cols() == value(b).cols(), ErrorCode::ShapeMismatch, "matmul_nt dims");
        Var out = push(value(a) * value(b).transpose());
        set_back(out, [this, a, b, out] {
            grad(a) += grad(out) * value(b);
            grad(b) += grad(out).transpose() * value(a);
        });
        return out;
    }

    // ---- nonlinearities ----

    Var relu(Var a) {
        Var out = push(value(a).cwiseMax(S(0)));
        set_back(out, [this, a, out] {
            grad(a).array() +=
                (value(a).array() > S(0)).template cast<S>() * grad(out).array();
        });
        return out;
    }

    // Row-wise softmax of (a + add_mask). The mask is additive (0 / -big).
    Var softmax_rows(Var a, const Mat<S>* add_mask = nullptr) {
        Mat<S> scores = value(a);
        if (add_mask) {
            GCB_CHECK(add_mask->rows() == scores.rows() && add_mask->cols() == scores.cols(),
                      ErrorCode::ShapeMismatch, "softmax mask shape");
            scores += *add_mask;
        }
        Mat<S> probs(scores.rows(), scores.cols());
        for (Eigen::Index r = 0; r < scores.rows(); ++r) {
            const S max_v = scores.row(r).maxCoeff();
            probs.row(r) = (scores.row(r).array() - max_v).exp();
            probs.row(r) /= probs.row(r).sum();
        }
        Var out = push(std::move(probs));
        set_back(out, [this, a, out] {
            const Mat<S>& y = value(out);
            const Mat<S>& gy = grad(out);
            for (Eigen::Index r = 0; r < y.rows(); ++r) {
                const S dot = gy.row(r).dot(y.row(r));
                grad(a).row(r) += (gy.row(r).array() - dot).matrix().cwiseProduct(y.row(r));
            }
        });
        return out;
    }

    // Row-wise layer norm with learned gain/bias (1 x C each).
    Var layer_norm(Var x, Var gain, Var bias, S eps) {
        const Mat<S>& xv = value(x);
        GCB_CHECK(value(gain).rows() == 1 && value(gain).cols() == xv.cols() &&
                      value(bias).rows() == 1 && value(bias).cols() == xv.cols(),
                  ErrorCode::ShapeMismatch, "layer_norm gain/bias shape");
        Mat<S> xhat(xv.rows(), xv.cols());
        Eigen::Matrix<S, Eigen::Dynamic, 1> inv_std(xv.rows());
        const S n = static_cast<S>(xv.cols());
        for (Eigen::Index r = 0; r < xv.rows(); ++r) {
            const S mean = xv.row(r).mean();
            const S var = (xv.row(r).array() - mean).square().sum() / n;
            inv_std(r) = S(1) / std::sqrt(var + eps);
            xhat.row(r) = (xv.row(r).array() - mean).matrix() * inv_std(r);
        }
        Mat<S> v = xhat;
        v.array().rowwise() *= value(gain).row(0).array();
        v.rowwise() += value(bias).row(0);
        Var out = push(std::move(v));
        set_back(out, [this, x, gain, bias, out, xhat, inv_std] {
            const Mat<S>& gy = grad(out);
            grad(bias).row(0) += gy.colwise().sum();
            grad(gain).row(0) += gy.cwiseProduct(xhat).colwise().sum();
            const S n = static_cast<S>(gy.cols());
            for (Eigen::Index r = 0; r < gy.rows(); ++r) {
                Eigen::Matrix<S, 1, Eigen::Dynamic> dxhat =
                    gy.row(r).cwiseProduct(value(gain).row(0));
                const S m1 = dxhat.sum() / n;
                const S m2 = dxhat.cwiseProduct(xhat.row(r)).sum() / n;
                grad(x).row(r) +=
                    ((dxhat.array() - m1) - xhat.row(r).array() * m2).matrix() * inv_std(r);
            }
        });
        return out;
    }

    // ---- reductions / losses ----

    // Sum of squared entries -> 1x1.
    Var sum_sq(Var a) {
        Mat<S> v(1, 1);
        v(0, 0) = value(a).squaredNorm();
        Var out = push(std::move(v));
        set_back(out, [this, a, out] { grad(a) += S(2) * grad(out)(0, 0) * value(a); });
        return out;
    }

    // Weighted token-level negative log likelihood over rows of logits:
    // sum_t w_t * (logsumexp(logits_t) - logits_t[target_t]) -> 1x1.
    Var cross_entropy(Var logits, std::vector<int> targets, std::vector<S> weights) {
        const Mat<S>& lv = value(logits);
        GCB_CHECK(static_cast<Eigen::Index>(targets.size()) == lv.rows() &&
                      targets.size() == weights.size(),
                  ErrorCode::ShapeMismatch, "cross_entropy target count");
        Mat<S> probs(lv.rows(), lv.cols());
        S total = 0;
        for (Eigen::Index r = 0; r < lv.rows(); ++r) {
            GCB_CHECK(targets[r] >= 0 && targets[r] < lv.cols(), ErrorCode::ShapeMismatch,
                      "cross_entropy target out of vocab");
            const S max_v = lv.row(r).maxCoeff();
            probs.row(r) = (lv.row(r).array() - max_v).exp();
            const S z = probs.row(r).sum();
            probs.row(r) /= z;
            total += weights[r] * (std::log(z) + max_v - lv(r, targets[r]));
        }
        Mat<S> v(1, 1);
        v(0, 0) = total;
        Var out = push(std::move(v));
        set_back(out, [this, logits, out, probs, t = std::move(targets),
                       w = std::move(weights)] {
            const S g = grad(out)(0, 0);
            for (Eigen::Index r = 0; r < probs.rows(); ++r) {
                if (w[r] == S(0)) continue;
                grad(logits).row(r) += (g * w[r]) * probs.row(r);
                grad(logits)(r, t[r]) -= g * w[r];
            }
        });
        return out;
    }

    // ---- stop gradient ----

    Var detach(Var a) {
        if (replay_store_) {
            GCB_CHECK(replay_pos_ < replay_store_->size(), ErrorCode::InvariantViolated,
                      "detach replay underrun");
            const Mat<S>& stored = (*replay_store_)[replay_pos_++];
            GCB_CHECK(stored.rows() == value(a).rows() && stored.cols() == value(a).cols(),
                      ErrorCode::ShapeMismatch, "detach replay shape drift");
            return push(stored);
        }
        detach_log_.push_back(value(a));
        return push(value(a));
    }

    // Record/replay of stop-gradient values (for finite-difference checks).
    const std::vector<Mat<S>>& detach_log() const { return detach_log_; }
    void set_detach_replay(const std::vector<Mat<S>>* stored) {
        replay_store_ = stored;
        replay_pos_ = 0;
    }

    // ---- access / backward ----

    const Mat<S>& value(Var v) const { return nodes_[v.i].value; }
    Mat<S>& grad(Var v) { return nodes_[v.i].grad; }
    const Mat<S>& grad(Var v) const { return nodes_[v.i].grad; }

    void backward(Var root) {
        GCB_CHECK(value(root).rows() == 1 && value(root).cols() == 1, ErrorCode::ShapeMismatch,
                  "backward root must be a scalar node");
        for (Node& n : nodes_) {
            n.grad = Mat<S>::Zero(n.value.rows(), n.value.cols());
        }
        nodes_[root.i].grad(0, 0) = S(1);
        for (int i = root.i; i >= 0; --i) {
            if (nodes_[i].back) nodes_[i].back();
        }
    }

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Mat<S> value;
        Mat<S> grad;
        std::function<void()> back;
    };

    Var push(Mat<S> v, std::nullptr_t = nullptr) {
        nodes_.push_back(Node{std::move(v), {}, {}});
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    void set_back(Var v, std::function<void()> f) { nodes_[v.i].back = std::move(f); }

    void check_same_shape(Var a, Var b, const char* op) {
        GCB_CHECK(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(),
                  ErrorCode::ShapeMismatch, std::string(op) + " shape mismatch");
    }

    std::vector<Node> nodes_;
    std::vector<Mat<S>> detach_log_;
    const std::vector<Mat<S>>* replay_store_ = nullptr;
    std::size_t replay_pos_ = 0;
};

}  // namespace gcb::ad
