#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "distcap/common.hpp"
#include "distcap/corpus.hpp"
#include "distcap/ngram.hpp"
#include "distcap/simset.hpp"

namespace distcap {

// One generated caption per image, tokenized on load.
struct GeneratedCaptions {
    std::map<ImageId, std::vector<std::string>> captions;

    static GeneratedCaptions load_jsonl(const std::string& path);
};

// Mean CIDEr between a caption and the reference captions of the target's
// similar images: (1/K) sum_k (1/N_k) sum_n g_c(c, c_n^k).
double cider_btw(const std::vector<std::string>& caption_tokens, const SimilarSet& set,
                 const Corpus& corpus, DfTable& df, const CiderOptions& opts = {});

struct PerImageEval {
    ImageId image_id = 0;
    double cider = 0.0;      // against the image's own references
    double cider_btw = 0.0;  // against the similar set's references
};

struct EvalReport {
    std::vector<PerImageEval> per_image;  // ascending image id
    double mean_cider = 0.0;
    double mean_cider_btw = 0.0;
    std::size_t generated_vocab_size = 0;
    std::optional<double> recall_1, recall_5, recall_10;

    void write_json(std::ostream& out) const;
    void write_tsv(std::ostream& out) const;
};

// Per-image CIDEr and CIDErBtw plus corpus means. R@{1,5,10} is included iff
// both the gallery image embeddings and the generated-caption query vectors
// are supplied.
EvalReport evaluate(const GeneratedCaptions& generated, const Corpus& corpus,
                    const std::map<ImageId, SimilarSet>& sets, DfTable& df,
                    const EmbeddingTable* emb = nullptr,
                    const std::map<ImageId, std::vector<double>>* query_vecs = nullptr,
                    const CiderOptions& opts = {}, int threads = 1);

// Fraction of queries whose own image ranks within the top k by cosine.
// Vectors must be unit length; ties break by ascending image id.
double recall_at_k(const std::map<ImageId, std::vector<double>>& queries,
                   const std::map<ImageId, std::vector<double>>& gallery, int k);

enum class CorrMethod { Pearson, Spearman, Kendall };

std::optional<CorrMethod> parse_corr_method(std::string_view name);

// Pearson, Spearman (average ranks for ties) or Kendall tau-b.
double correlate(const std::vector<double>& a, const std::vector<double>& b, CorrMethod method);

}  // namespace distcap
