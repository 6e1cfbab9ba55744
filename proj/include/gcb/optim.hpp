// Adam with bias correction and optional global-norm gradient clipping.

#pragma once

#include <cmath>
#include <vector>

#include "gcb/autodiff.hpp"

namespace gcb {

template <class S>
class Adam {
public:
    Adam(std::vector<ad::Mat<S>*> params, S lr, S beta1 = S(0.9), S beta2 = S(0.999),
         S eps = S(1e-8))
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        m_.reserve(params_.size());
        v_.reserve(params_.size());
        for (const ad::Mat<S>* p : params_) {
            m_.push_back(ad::Mat<S>::Zero(p->rows(), p->cols()));
            v_.push_back(ad::Mat<S>::Zero(p->rows(), p->cols()));
        }
    }

    // grads must be in the same order as the params passed at construction.
    // max_grad_norm <= 0 disables clipping.
    void step(std::vector<ad::Mat<S>>& grads, S max_grad_norm = S(0)) {
        GCB_CHECK(grads.size() == params_.size(), ErrorCode::ShapeMismatch,
                  "Adam grads/params count mismatch");
        if (max_grad_norm > S(0)) {
            double total = 0.0;
            for (const ad::Mat<S>& g : grads) total += double(g.squaredNorm());
            const double norm = std::sqrt(total);
            if (norm > double(max_grad_norm)) {
                const S scale = S(double(max_grad_norm) / norm);
                for (ad::Mat<S>& g : grads) g *= scale;
            }
        }
        ++t_;
        const S bc1 = S(1) - std::pow(beta1_, S(t_));
        const S bc2 = S(1) - std::pow(beta2_, S(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            m_[i] = beta1_ * m_[i] + (S(1) - beta1_) * grads[i];
            v_[i] = beta2_ * v_[i] + (S(1) - beta2_) * grads[i].cwiseProduct(grads[i]);
            params_[i]->array() -=
                (lr_ / bc1) * m_[i].array() / ((v_[i].array() / bc2).sqrt() + eps_);
        }
    }

    long steps() const { return t_; }

private:
    std::vector<ad::Mat<S>*> params_;
    S lr_, beta1_, beta2_, eps_;
    std::vector<ad::Mat<S>> m_, v_;
    long t_ = 0;
};

}  // namespace gcb
