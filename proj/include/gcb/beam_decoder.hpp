// Length-synchronous beam search over the token vocabulary and conversion of
// decoded beams into per-step ranked item lists.

#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "gcb/codemap.hpp"
#include "gcb/generator.hpp"
#include "gcb/tokenizer.hpp"

namespace gcb {

struct BeamCandidate {
    std::vector<int> tokens;  // generated tokens excluding BOS (EOS kept if emitted)
    double logprob = 0.0;     // cumulative stepwise log-probability
    bool finished = false;    // EOS emitted or max length reached
};

// Log-probabilities over the vocabulary for the next token, given the tokens
// generated so far (BOS excluded).
using StepScorer = std::function<Eigen::VectorXd(const std::vector<int>& prefix)>;

// Restricts expansion to allowed tokens; sets allowed[v] = false to forbid.
using TokenFilter = std::function<void(const std::vector<int>& prefix,
                                       std::vector<char>& allowed)>;

// Expand every live beam over the full vocabulary each step, keep the top
// beam_size candidates by cumulative logprob (finished beams compete by their
// frozen score, no length normalization). Ties break toward the
// lexicographically smaller token sequence. Result is sorted best-first.
std::vector<BeamCandidate> beam_search(const StepScorer& scorer, int vocab_size,
                                       int beam_size, int max_len,
                                       int eos_token = Vocabulary::kEos,
                                       const TokenFilter* filter = nullptr);

// Stepwise argmax (first max wins). Returns generated tokens, EOS included.
std::vector<int> greedy_decode(const StepScorer& scorer, int vocab_size, int max_len,
                               int eos_token = Vocabulary::kEos);

// Scorer backed by an encoder-decoder model: encodes src once, then scores
// each prefix with a decoder pass. Log-softmax is computed in double.
template <class S>
StepScorer make_model_scorer(TransformerModel<S>& model, const std::vector<int>& src,
                             const std::vector<std::uint8_t>& src_mask) {
    auto enc = std::make_shared<ad::Mat<S>>(encode(model, src, src_mask));
    auto mask = std::make_shared<std::vector<std::uint8_t>>(src_mask);
    return [&model, enc, mask](const std::vector<int>& prefix) {
        std::vector<int> dec_in;
        dec_in.reserve(prefix.size() + 1);
        dec_in.push_back(Vocabulary::kBos);
        dec_in.insert(dec_in.end(), prefix.begin(), prefix.end());
        const ad::Mat<S> logits = decode_logits(model, *enc, *mask, dec_in);
        const Eigen::Index last = logits.rows() - 1;
        Eigen::VectorXd row(logits.cols());
        double max_v = -std::numeric_limits<double>::infinity();
        for (Eigen::Index c = 0; c < logits.cols(); ++c) {
            row(c) = double(logits(last, c));
            max_v = std::max(max_v, row(c));
        }
        double z = 0;
        for (Eigen::Index c = 0; c < row.size(); ++c) z += std::exp(row(c) - max_v);
        const double log_z = std::log(z) + max_v;
        for (Eigen::Index c = 0; c < row.size(); ++c) row(c) -= log_z;
        return row;
    };
}

template <class S>
std::vector<BeamCandidate> beam_search(TransformerModel<S>& model, const std::vector<int>& src,
                                       const std::vector<std::uint8_t>& src_mask,
                                       int beam_size, int max_len,
                                       const TokenFilter* filter = nullptr) {
    GCB_CHECK(beam_size >= 1, ErrorCode::ConfigError, "beam size must be >= 1");
    const StepScorer scorer = make_model_scorer(model, src, src_mask);
    return beam_search(scorer, model.cfg.vocab_size, beam_size, max_len, Vocabulary::kEos,
                       filter);
}

// Constrains generation to prefixes of valid Semantic-IDs: inside a block only
// codes extending some item are allowed; at block boundaries level-1 starts or
// EOS. Built once per CodeMap; optional ablation mode for beam_search.
class SemanticTrieFilter {
public:
    SemanticTrieFilter(const CodeMap& map, const Vocabulary& vocab);

    TokenFilter filter() const;

private:
    struct Node {
        std::map<int, int> children;  // code -> node index
    };
    std::vector<Node> nodes_;
    const Vocabulary* vocab_;
};

struct TrajectoryPrediction {
    std::vector<RankedStepList> steps;   // one per future position, 1-based step
    std::vector<double> beam_logprobs;   // of the input beams, best-first
};

// A beam contributes its j-th item to step j iff its first j blocks all decode
// to items; duplicates are skipped; each list is cut at top_k. Steps with no
// valid beam stay empty (metrics treat them as misses).
TrajectoryPrediction beams_to_trajectories(const std::vector<BeamCandidate>& beams,
                                           const CodeMap& map, const Vocabulary& vocab,
                                           int horizon, int top_k);

}  // namespace gcb
