#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "distcap/common.hpp"
#include "distcap/corpus.hpp"
#include "distcap/ngram.hpp"

namespace distcap {

enum class SimStrategy { Cider, EmbedRetrieval, EmbedImage, Random };

const char* strategy_name(SimStrategy s);
std::optional<SimStrategy> parse_strategy(std::string_view name);

// Top-K most similar images of one target. Neighbors are ordered by
// descending score, ties by ascending image id; the target never appears.
struct SimilarSet {
    ImageId target = 0;
    SimStrategy strategy = SimStrategy::Cider;
    std::vector<std::pair<ImageId, double>> neighbors;
};

// Precomputed image/caption embeddings, L2-normalized on load.
class EmbeddingTable {
public:
    static EmbeddingTable load(const std::string& path);
    static EmbeddingTable from_vectors(int dim,
                                       std::map<ImageId, std::vector<double>> image_vecs,
                                       std::map<std::pair<ImageId, int>, std::vector<double>> caption_vecs);

    int dim() const { return dim_; }
    const std::vector<double>& image_vec(ImageId id) const;
    const std::vector<double>& caption_vec(ImageId id, int caption_index) const;
    bool has_image(ImageId id) const { return image_vecs_.count(id) != 0; }
    const std::map<ImageId, std::vector<double>>& image_vecs() const { return image_vecs_; }
    const std::map<std::pair<ImageId, int>, std::vector<double>>& caption_vecs() const {
        return caption_vecs_;
    }

private:
    int dim_ = 0;
    std::map<ImageId, std::vector<double>> image_vecs_;
    std::map<std::pair<ImageId, int>, std::vector<double>> caption_vecs_;
};

// Mean pairwise CIDEr over all reference caption pairs of two images (Eq. 3 form).
double cider_similarity(ImageId i, ImageId j, DfTable& df, const Corpus& corpus,
                        const CiderOptions& opts = {});

// Best caption-to-image cosine: max_k cos(phi(I_i), theta(c_k^j)).
double vse_similarity(ImageId i, ImageId j, const EmbeddingTable& emb);

// Image-feature sibling: cos(phi(I_i), phi(I_j)).
double image_feature_similarity(ImageId i, ImageId j, const EmbeddingTable& emb);

// Caption retrieval: rank all split captions by cosine to phi(target), map to
// distinct images in retrieval order, drop the target, keep the first K.
SimilarSet build_set_retrieval(ImageId target, int k, const EmbeddingTable& emb,
                               const Corpus& corpus);

std::map<ImageId, SimilarSet> build_sets_retrieval(const Corpus& corpus, Split split, int k,
                                                   const EmbeddingTable& emb, int threads = 1);

std::map<ImageId, SimilarSet> build_sets_image(const Corpus& corpus, Split split, int k,
                                               const EmbeddingTable& emb, int threads = 1);

// Uniform sample without replacement, deterministic in (seed, target id).
// Neighbors carry score 0 and are listed in ascending image id.
std::map<ImageId, SimilarSet> build_sets_random(const Corpus& corpus, Split split, int k,
                                                std::uint64_t seed);

struct SimsetBuildStats {
    std::uint64_t pairs_total = 0;   // (|I|-1) summed over targets
    std::uint64_t pairs_scored = 0;  // image pairs exactly evaluated
    double wall_seconds = 0.0;

    double pruned_fraction() const {
        return pairs_total == 0
                   ? 0.0
                   : 1.0 - static_cast<double>(pairs_scored) / static_cast<double>(pairs_total);
    }
};

// Exact top-K by CIDEr similarity for every image of the split, via an
// inverted n-gram index with an upper-bound candidate ordering. Output is
// identical to the brute-force all-pairs computation.
std::map<ImageId, SimilarSet> build_sets_cider(const Corpus& corpus, Split split, int k,
                                               DfTable& df, const CiderOptions& opts = {},
                                               int threads = 1,
                                               SimsetBuildStats* stats = nullptr);

void write_simsets_jsonl(const std::map<ImageId, SimilarSet>& sets, std::ostream& out);
std::map<ImageId, SimilarSet> load_simsets_jsonl(std::istream& in);

}  // namespace distcap
