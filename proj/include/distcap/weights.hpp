#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "distcap/common.hpp"
#include "distcap/corpus.hpp"
#include "distcap/distinct.hpp"
#include "distcap/ngram.hpp"
#include "distcap/simset.hpp"

namespace distcap {

struct CaptionWeight {
    int index = 0;   // caption index within the image
    double v = 0.0;  // CIDErBtw of the caption, in [0, 10]
    double w = 0.0;  // lambda_w - alpha_w * v / max(v)
};

struct CaptionWeights {
    ImageId image_id = 0;
    std::vector<CaptionWeight> weights;  // by caption index
};

// Linear long-tail ramp over frequency ranks: 1 up to f_begin, rising to
// 1 + amplitude at f_end, clamped beyond.
struct LtwParams {
    std::uint32_t f_begin = 5000;
    std::uint32_t f_end = 9487;
    double amplitude = 1.0;
};

double ltw_weight(std::uint32_t rank, const LtwParams& params);

// v_i = CIDErBtw(c_i^0) against the target's similar set; w_i per the linear
// reweighting law. Requires lambda_w > alpha_w >= 0. All-zero v gives w_i =
// lambda_w.
CaptionWeights caption_weights(ImageId target, const SimilarSet& set, const Corpus& corpus,
                               DfTable& df, double lambda_w, double alpha_w,
                               const CiderOptions& opts = {});

// Externally supplied per-token log-probabilities, keyed by (image, caption).
struct TokenLogProbs {
    std::map<std::pair<ImageId, int>, std::vector<double>> rows;

    const std::vector<double>& row(ImageId id, int caption_index) const;
};

struct LtwContext {
    const VocabStats* vocab = nullptr;
    LtwParams params;

    // Rank 0 (token outside the vocabulary) clamps to the long-tail end.
    double token_weight(const std::string& token) const;
};

// L = sum_i w_i * (-sum_t w_t^LTW * log p(d_t | .)). With ltw absent every
// token weight is 1.
double weighted_xe(const std::vector<Caption>& captions, const TokenLogProbs& logprobs,
                   const CaptionWeights& cw, const std::optional<LtwContext>& ltw = {});

struct NegativeCaption {
    int index = 0;
    double w = 0.0;  // w_i^k
};

struct NegativeBlock {
    ImageId image_id = 0;  // the k-th similar image
    std::vector<NegativeCaption> captions;
};

struct ManifestEntry {
    ImageId image_id = 0;
    std::vector<CaptionWeight> captions;
    std::vector<NegativeBlock> negatives;
};

// Positive weighted XE minus alpha_ns times the weighted XE of the negative
// captions drawn from the similar set.
double ns_loss(const ManifestEntry& entry, const Corpus& corpus, const TokenLogProbs& logprobs,
               double alpha_ns, const std::optional<LtwContext>& ltw = {});

// (R_tilde, R): R_tilde = (1/N) sum_i w_i g_c(c*, c_i^0);
// R = R_tilde - alpha_r * CIDErBtw(c*).
std::pair<double, double> rl_reward(const std::vector<std::string>& candidate_tokens,
                                    ImageId target, const CaptionWeights& cw,
                                    const SimilarSet& set, const Corpus& corpus, DfTable& df,
                                    double alpha_r, const CiderOptions& opts = {});

// alpha_l * l_xe + (1 - alpha_l) * l_rl, alpha_l in [0, 1].
double combine_losses(double l_xe, double l_rl, double alpha_l);

struct HyperParams {
    double lambda_w = 1.5;
    double alpha_w = 0.75;
    double alpha_r = 0.3;
    double alpha_ns = 0.05;
    LtwParams ltw;
    int k = 5;
    double sigma = 6.0;
};

// Whether w_i^k of a negative caption is computed against the similar set of
// its own image (default) or against the target's set.
enum class NegativeWeightScope { OwnSet, TargetSet };

struct WeightManifest {
    HyperParams params;
    std::vector<std::pair<std::uint32_t, double>> ltw_table;  // rank -> weight
    std::vector<ManifestEntry> entries;                       // ascending image id
};

WeightManifest build_manifest(const Corpus& corpus, Split split,
                              const std::map<ImageId, SimilarSet>& sets, DfTable& df,
                              const VocabStats& vocab, const HyperParams& params,
                              NegativeWeightScope scope = NegativeWeightScope::OwnSet,
                              const CiderOptions& opts = {}, int threads = 1);

void write_manifest(const WeightManifest& manifest, std::ostream& out);
WeightManifest load_manifest(std::istream& in);

}  // namespace distcap
