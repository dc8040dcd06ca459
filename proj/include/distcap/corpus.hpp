#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "distcap/common.hpp"

namespace distcap {

enum class Split { Train, Val, Test };

const char* split_name(Split s);
std::optional<Split> parse_split(std::string_view name);

struct Caption {
    ImageId image_id = 0;
    int index = 0;  // 0-based within its image
    std::vector<std::string> tokens;
};

// Lowercase; every character outside [a-z0-9] is a separator.
// Total function: punctuation-only input yields an empty list.
std::vector<std::string> tokenize(std::string_view raw);

// Reference captions keyed by image, plus split membership.
// Immutable after construction; image ids are kept in ascending order.
class Corpus {
public:
    Corpus() = default;

    // COCO-caption JSON annotations + one-line-per-image split TSV.
    static Corpus load(const std::string& annotations_path, const std::string& split_path);

    // Direct construction for synthetic corpora. Captions must already be
    // tokenized; indices are reassigned per image in input order.
    static Corpus from_captions(std::vector<Caption> captions,
                                std::unordered_map<ImageId, Split> split);

    const std::vector<ImageId>& image_ids() const { return ids_; }
    std::size_t image_count() const { return ids_.size(); }
    bool contains(ImageId id) const { return index_.count(id) != 0; }

    const std::vector<Caption>& captions(ImageId id) const;
    int refs_per_image(ImageId id) const;  // N for this image
    Split split_of(ImageId id) const;
    std::vector<ImageId> split_images(Split s) const;  // ascending ids
    std::size_t split_size(Split s) const;

    void save_cache(std::ostream& out) const;
    static Corpus load_cache(std::istream& in);

private:
    std::size_t index_of(ImageId id) const;

    std::vector<ImageId> ids_;  // ascending
    std::unordered_map<ImageId, std::size_t> index_;
    std::vector<std::vector<Caption>> captions_;
    std::vector<Split> splits_;
};

struct VocabEntry {
    std::string token;
    std::uint64_t count = 0;
    std::uint32_t rank = 0;  // 1-based
};

struct VocabStats {
    std::vector<VocabEntry> entries;  // in rank order, rank == i+1
    std::unordered_map<std::string, std::uint32_t> rank_of;
    std::uint64_t total_tokens = 0;

    std::size_t vocab_size() const { return entries.size(); }
    // 0 when the token is not in the vocabulary.
    std::uint32_t rank(std::string_view token) const;
};

// Counts over all reference captions of the split. Ranks descend by count,
// ties broken by ascending token. min_count drops rarer tokens before ranking.
VocabStats build_vocab_stats(const Corpus& corpus, Split split, std::uint64_t min_count = 1);

struct FreqBucket {
    std::uint64_t frequency = 0;  // distinct count value, ascending
    double log10_frequency = 0.0;
    std::uint64_t cumulative_words = 0;  // words with count <= frequency
};

// Cumulative word counts per distinct frequency; final value = vocab size.
std::vector<FreqBucket> frequency_curve(const VocabStats& stats);

void write_vocab_tsv(const VocabStats& stats, std::ostream& out);
void write_frequency_curve_tsv(const std::vector<FreqBucket>& curve, std::ostream& out);

}  // namespace distcap
