// Central finite-difference verification of analytic gradients (float64).

#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "gcb/generator.hpp"
#include "gcb/rq_codec.hpp"

namespace gcb {

struct GradCheckEntry {
    std::string tensor;
    double rel_err = 0;   // ||analytic - fd||_2 / max(||analytic||, ||fd||, tiny)
    double max_abs = 0;   // worst per-entry absolute difference
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_err = 0;
    std::string worst_tensor;
};

// Central differences per entry of every tensor; eval_loss must recompute the
// loss from current tensor contents (frozen stop-gradients, fixed code picks).
inline GradCheckReport finite_diff_check(
    const std::vector<std::pair<std::string, ad::Mat<double>*>>& tensors,
    const std::vector<ad::Mat<double>>& analytic,
    const std::function<double()>& eval_loss, double step) {
    GCB_CHECK(tensors.size() == analytic.size(), ErrorCode::ShapeMismatch,
              "gradcheck tensor/grad count mismatch");
    GradCheckReport report;
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        ad::Mat<double>& w = *tensors[i].second;
        ad::Mat<double> fd(w.rows(), w.cols());
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            for (Eigen::Index c = 0; c < w.cols(); ++c) {
                const double saved = w(r, c);
                const double h = step * std::max(1.0, std::abs(saved));
                w(r, c) = saved + h;
                const double up = eval_loss();
                w(r, c) = saved - h;
                const double down = eval_loss();
                w(r, c) = saved;
                fd(r, c) = (up - down) / (2.0 * h);
            }
        }
        GradCheckEntry entry;
        entry.tensor = tensors[i].first;
        const double denom =
            std::max({analytic[i].norm(), fd.norm(), 1e-12});
        entry.rel_err = (analytic[i] - fd).norm() / denom;
        entry.max_abs = (analytic[i] - fd).cwiseAbs().maxCoeff();
        if (entry.rel_err > report.max_rel_err) {
            report.max_rel_err = entry.rel_err;
            report.worst_tensor = entry.tensor;
        }
        report.entries.push_back(std::move(entry));
    }
    return report;
}

// ---------------------------------------------------------------------------
// RQ-VAE gradient check. Codes and stop-gradient values recorded on the first
// build are replayed during finite-difference evaluations so the checked
// function matches the one the backward pass differentiates.
// ---------------------------------------------------------------------------

inline GradCheckReport grad_check_rqvae(const RqvaeConfig& cfg, int items,
                                        std::uint64_t data_seed, double step = 1e-5) {
    RqvaeModel<double> model = init_rqvae<double>(cfg);
    ItemFeatures<double> features = random_features<double>(items, cfg.d_x, data_seed);

    ad::Tape<double> tape;
    RqvaeLeaves<double> leaves = make_rqvae_leaves(tape, model);
    RqvaeLossGraph<double> graph = build_rqvae_loss(tape, leaves, features.rows, cfg.beta);
    tape.backward(graph.total);

    std::vector<ad::Mat<double>> analytic;
    for (auto v : rqvae_leaf_list(leaves)) analytic.push_back(tape.grad(v));
    const std::vector<ad::Mat<double>> frozen = tape.detach_log();
    const std::vector<std::vector<int>> codes = graph.codes;

    auto eval_loss = [&]() {
        ad::Tape<double> t2;
        t2.set_detach_replay(&frozen);
        RqvaeLeaves<double> l2 = make_rqvae_leaves(t2, model);
        RqvaeLossGraph<double> g2 = build_rqvae_loss(t2, l2, features.rows, cfg.beta, &codes);
        return double(t2.value(g2.total)(0, 0));
    };
    return finite_diff_check(model.named_tensors(), analytic, eval_loss, step);
}

// ---------------------------------------------------------------------------
// Generator NLL gradient check on a toy model/sequence.
// ---------------------------------------------------------------------------

inline GradCheckReport grad_check_generator(const ModelConfig& cfg, int src_len, int tgt_len,
                                            std::uint64_t data_seed, double step = 1e-5) {
    TransformerModel<double> model = init_transformer<double>(cfg);
    Rng rng(data_seed);
    GenExample ex;
    for (int i = 0; i < src_len; ++i) {
        ex.src.push_back(Vocabulary::kSpecialCount +
                         static_cast<int>(rng.index(
                             std::uint64_t(cfg.vocab_size - Vocabulary::kSpecialCount))));
        ex.src_mask.push_back(1);
    }
    for (int i = 0; i < tgt_len - 1; ++i) {
        ex.tgt.push_back(Vocabulary::kSpecialCount +
                         static_cast<int>(rng.index(
                             std::uint64_t(cfg.vocab_size - Vocabulary::kSpecialCount))));
    }
    ex.tgt.push_back(Vocabulary::kEos);

    auto build = [&](ad::Tape<double>& tape) {
        GenLeaves<double> leaves = make_gen_leaves(tape, model);
        typename ad::Tape<double>::Var loss{};
        generator_train_step(tape, leaves, model.cfg, {&ex}, &loss);
        return std::make_pair(loss, std::move(leaves));
    };

    ad::Tape<double> tape;
    auto [loss, leaves] = build(tape);
    tape.backward(loss);
    std::vector<ad::Mat<double>> analytic;
    for (auto v : gen_leaf_list(leaves)) analytic.push_back(tape.grad(v));

    auto eval_loss = [&]() {
        ad::Tape<double> t2;
        auto [l2, leaves2] = build(t2);
        (void)leaves2;
        return double(t2.value(l2)(0, 0));
    };
    return finite_diff_check(model.named_tensors(), analytic, eval_loss, step);
}

// Throws GradMismatch when the worst tensor exceeds tol.
inline void require_grad_check(const GradCheckReport& report, double tol) {
    if (report.max_rel_err >= tol) {
        raise(ErrorCode::GradMismatch,
              report.worst_tensor + " rel err " + std::to_string(report.max_rel_err));
    }
}

}  // namespace gcb
