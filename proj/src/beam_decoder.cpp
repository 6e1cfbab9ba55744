#include "gcb/beam_decoder.hpp"

#include <algorithm>
#include <unordered_set>

namespace gcb {

namespace {

bool better_candidate(const BeamCandidate& a, const BeamCandidate& b) {
    if (a.logprob != b.logprob) return a.logprob > b.logprob;
    return a.tokens < b.tokens;  // deterministic tie-break
}

}  // namespace

std::vector<BeamCandidate> beam_search(const StepScorer& scorer, int vocab_size,
                                       int beam_size, int max_len, int eos_token,
                                       const TokenFilter* filter) {
    GCB_CHECK(beam_size >= 1, ErrorCode::ConfigError, "beam size must be >= 1");
    GCB_CHECK(max_len >= 1, ErrorCode::ConfigError, "max_len must be >= 1");

    std::vector<BeamCandidate> beams{BeamCandidate{}};
    for (int step = 0; step < max_len; ++step) {
        bool any_live = false;
        std::vector<BeamCandidate> expanded;
        expanded.reserve(beams.size() * std::size_t(vocab_size));
        for (const BeamCandidate& beam : beams) {
            if (beam.finished) {
                expanded.push_back(beam);
                continue;
            }
            any_live = true;
            const Eigen::VectorXd scores = scorer(beam.tokens);
            GCB_CHECK(scores.size() == vocab_size, ErrorCode::ShapeMismatch,
                      "scorer returned wrong vocabulary size");
            std::vector<char> allowed(std::size_t(vocab_size), 1);
            if (filter && *filter) (*filter)(beam.tokens, allowed);
            for (int v = 0; v < vocab_size; ++v) {
                if (!allowed[std::size_t(v)]) continue;
                BeamCandidate next = beam;
                next.tokens.push_back(v);
                next.logprob += scores(v);
                next.finished = v == eos_token ||
                                static_cast<int>(next.tokens.size()) >= max_len;
                expanded.push_back(std::move(next));
            }
        }
        if (!any_live) break;
        std::sort(expanded.begin(), expanded.end(), better_candidate);
        if (static_cast<int>(expanded.size()) > beam_size) {
            expanded.resize(std::size_t(beam_size));
        }
        beams = std::move(expanded);
    }
    for (BeamCandidate& beam : beams) beam.finished = true;  // max length reached
    std::sort(beams.begin(), beams.end(), better_candidate);
    return beams;
}

std::vector<int> greedy_decode(const StepScorer& scorer, int vocab_size, int max_len,
                               int eos_token) {
    std::vector<int> tokens;
    for (int step = 0; step < max_len; ++step) {
        const Eigen::VectorXd scores = scorer(tokens);
        GCB_CHECK(scores.size() == vocab_size, ErrorCode::ShapeMismatch,
                  "scorer returned wrong vocabulary size");
        int best = 0;
        for (int v = 1; v < vocab_size; ++v) {
            if (scores(v) > scores(best)) best = v;
        }
        tokens.push_back(best);
        if (best == eos_token) break;
    }
    return tokens;
}

SemanticTrieFilter::SemanticTrieFilter(const CodeMap& map, const Vocabulary& vocab)
    : vocab_(&vocab) {
    nodes_.emplace_back();  // root
    for (ItemId id = 1; id <= map.item_count(); ++id) {
        int at = 0;
        for (int code : map.semantic_id(id)) {
            auto [it, inserted] = nodes_[std::size_t(at)].children.emplace(code, 0);
            if (inserted) {
                it->second = static_cast<int>(nodes_.size());
                nodes_.emplace_back();
            }
            at = it->second;
        }
    }
}

TokenFilter SemanticTrieFilter::filter() const {
    return [this](const std::vector<int>& prefix, std::vector<char>& allowed) {
        std::fill(allowed.begin(), allowed.end(), 0);
        const int block = vocab_->positions();
        const int pos = static_cast<int>(prefix.size()) % block;
        int at = 0;  // walk the current partial block
        bool valid = true;
        for (std::size_t i = prefix.size() - std::size_t(pos); i < prefix.size(); ++i) {
            const auto decoded = vocab_->decode(prefix[i]);
            if (!decoded) {
                valid = false;
                break;
            }
            auto it = nodes_[std::size_t(at)].children.find(decoded->second);
            if (it == nodes_[std::size_t(at)].children.end()) {
                valid = false;
                break;
            }
            at = it->second;
        }
        if (!valid) {
            // Dead prefix (possible only when the filter was not applied from
            // the start); fall back to EOS so the beam can terminate.
            allowed[Vocabulary::kEos] = 1;
            return;
        }
        if (pos == 0) allowed[Vocabulary::kEos] = 1;
        for (const auto& [code, child] : nodes_[std::size_t(at)].children) {
            allowed[std::size_t(vocab_->encode(pos, code))] = 1;
        }
    };
}

TrajectoryPrediction beams_to_trajectories(const std::vector<BeamCandidate>& beams,
                                           const CodeMap& map, const Vocabulary& vocab,
                                           int horizon, int top_k) {
    GCB_CHECK(horizon >= 1, ErrorCode::ConfigError, "horizon must be >= 1");
    GCB_CHECK(top_k >= 1, ErrorCode::ConfigError, "top_k must be >= 1");

    TrajectoryPrediction pred;
    pred.beam_logprobs.reserve(beams.size());
    for (const BeamCandidate& beam : beams) pred.beam_logprobs.push_back(beam.logprob);

    std::vector<std::vector<DecodedBlock>> decoded;
    decoded.reserve(beams.size());
    for (const BeamCandidate& beam : beams) {
        decoded.push_back(detokenize_blocks(beam.tokens, map, vocab));
    }

    for (int j = 1; j <= horizon; ++j) {
        RankedStepList list;
        list.step = j;
        std::unordered_set<ItemId> seen;
        for (const auto& blocks : decoded) {
            if (static_cast<int>(blocks.size()) < j) continue;
            // Valid for step j iff the first j blocks all map to items.
            bool valid = true;
            for (int b = 0; b < j; ++b) {
                if (!std::holds_alternative<ItemId>(blocks[std::size_t(b)])) {
                    valid = false;
                    break;
                }
            }
            if (!valid) continue;
            const ItemId item = std::get<ItemId>(blocks[std::size_t(j) - 1]);
            if (!seen.insert(item).second) continue;
            list.candidates.push_back(item);
            if (static_cast<int>(list.candidates.size()) >= top_k) break;
        }
        pred.steps.push_back(std::move(list));
    }
    return pred;
}

}  // namespace gcb
