#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "distcap/common.hpp"
#include "distcap/corpus.hpp"

namespace distcap {

inline constexpr int kMaxN = 4;

// Token-id tuple of length n (1..4). Unused slots are zero.
struct NGramKey {
    std::array<std::uint32_t, kMaxN> tok{};
    std::uint8_t n = 0;

    bool operator==(const NGramKey&) const = default;
};

struct NGramKeyHash {
    std::size_t operator()(const NGramKey& k) const {
        std::uint64_t h = 1469598103934665603ull;
        for (int i = 0; i < k.n; ++i) {
            h ^= k.tok[static_cast<std::size_t>(i)];
            h *= 1099511628211ull;
        }
        h ^= k.n;
        h *= 1099511628211ull;
        return static_cast<std::size_t>(h);
    }
};

// Interns tokens and n-grams to dense ids shared by df tables, tf-idf
// vectors and the similarity index. Thread-safe.
class GramSpace {
public:
    std::uint32_t intern_token(std::string_view token);
    std::optional<std::uint32_t> find_token(std::string_view token) const;
    const std::string& token(std::uint32_t id) const;

    std::uint32_t intern_gram(const NGramKey& key);
    std::optional<std::uint32_t> find_gram(const NGramKey& key) const;
    NGramKey gram_key(std::uint32_t gram_id) const;
    std::string gram_text(std::uint32_t gram_id) const;  // tokens joined by space
    std::size_t gram_count() const;

private:
    mutable std::mutex mutex_;
    std::unordered_map<std::string, std::uint32_t> token_ids_;
    std::vector<std::string> tokens_;
    std::unordered_map<NGramKey, std::uint32_t, NGramKeyHash> gram_ids_;
    std::vector<NGramKey> grams_;
};

// Sliding-window n-grams with multiplicity, keyed by readable token tuples.
std::map<std::vector<std::string>, int> extract_ngrams(const std::vector<std::string>& tokens,
                                                       int n);

// Per-image document frequencies of all 1..4-grams over a split's
// reference captions.
class DfTable {
public:
    static DfTable build(const Corpus& corpus, Split split,
                         std::shared_ptr<GramSpace> space = nullptr);

    std::uint64_t image_count() const { return image_count_; }
    Split source_split() const { return split_; }

    std::uint32_t df(std::uint32_t gram_id) const {
        return gram_id < df_.size() ? df_[gram_id] : 0;
    }
    std::uint32_t df(const NGramKey& key) const;
    // log(image_count / max(df, 1))
    double idf(std::uint32_t gram_id) const;

    GramSpace& space() { return *space_; }
    const GramSpace& space() const { return *space_; }
    std::shared_ptr<GramSpace> space_ptr() const { return space_; }

    void write_tsv(std::ostream& out) const;
    static DfTable import_tsv(std::istream& in, Split split,
                              std::shared_ptr<GramSpace> space = nullptr);

private:
    std::shared_ptr<GramSpace> space_;
    std::vector<std::uint32_t> df_;  // indexed by gram id
    std::uint64_t image_count_ = 0;
    Split split_ = Split::Train;
};

struct TfIdfEntry {
    std::uint32_t gram = 0;
    double weight = 0.0;
};

// Sparse per-n TF-IDF vectors of one caption. Entries are sorted by gram id;
// zero weights are omitted. norm caches the per-n L2 norm.
struct TfIdfVector {
    std::array<std::vector<TfIdfEntry>, kMaxN> level;
    std::array<double, kMaxN> norm{};     // per-n L2 norm
    std::array<double, kMaxN> norm_sq{};  // kept separately so identical
                                          // vectors cos to exactly 1
    int length = 0;  // token count T
};

// weight(g) = (count(g) / count of same-n grams) * idf(g). Novel grams are
// interned into the table's GramSpace and get idf = log(image_count).
TfIdfVector tfidf_vector(const std::vector<std::string>& tokens, DfTable& df);

enum class CiderVariant {
    CiderD,  // count clipping + Gaussian length penalty
    Plain,   // raw cosine, no clipping, no penalty
};

struct CiderOptions {
    CiderVariant variant = CiderVariant::CiderD;
    double sigma = 6.0;
};

// Single-reference CIDEr value g_c in [0, 10].
double cider_pair(const TfIdfVector& candidate, const TfIdfVector& reference,
                  const CiderOptions& opts = {});

// (10/|refs|) sum_r penalty(c,r) * (1/4) sum_n clipped-cosine_n(c,r).
double cider_d(const TfIdfVector& candidate, const std::vector<TfIdfVector>& references,
               const CiderOptions& opts = {});

}  // namespace distcap
