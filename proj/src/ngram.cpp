#include "distcap/ngram.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

namespace distcap {

std::uint32_t GramSpace::intern_token(std::string_view token) {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = token_ids_.find(std::string(token));
    if (it != token_ids_.end()) return it->second;
    auto id = static_cast<std::uint32_t>(tokens_.size());
    tokens_.emplace_back(token);
    token_ids_.emplace(tokens_.back(), id);
    return id;
}

std::optional<std::uint32_t> GramSpace::find_token(std::string_view token) const {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = token_ids_.find(std::string(token));
    if (it == token_ids_.end()) return std::nullopt;
    return it->second;
}

const std::string& GramSpace::token(std::uint32_t id) const {
    std::lock_guard<std::mutex> lock(mutex_);
    return tokens_.at(id);
}

std::uint32_t GramSpace::intern_gram(const NGramKey& key) {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = gram_ids_.find(key);
    if (it != gram_ids_.end()) return it->second;
    auto id = static_cast<std::uint32_t>(grams_.size());
    grams_.push_back(key);
    gram_ids_.emplace(key, id);
    return id;
}

std::optional<std::uint32_t> GramSpace::find_gram(const NGramKey& key) const {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = gram_ids_.find(key);
    if (it == gram_ids_.end()) return std::nullopt;
    return it->second;
}

NGramKey GramSpace::gram_key(std::uint32_t gram_id) const {
    std::lock_guard<std::mutex> lock(mutex_);
    return grams_.at(gram_id);
}

std::string GramSpace::gram_text(std::uint32_t gram_id) const {
    std::lock_guard<std::mutex> lock(mutex_);
    const NGramKey& key = grams_.at(gram_id);
    std::string out;
    for (int i = 0; i < key.n; ++i) {
        if (i) out.push_back(' ');
        out += tokens_.at(key.tok[static_cast<std::size_t>(i)]);
    }
    return out;
}

std::size_t GramSpace::gram_count() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return grams_.size();
}

std::map<std::vector<std::string>, int> extract_ngrams(const std::vector<std::string>& tokens,
                                                       int n) {
    if (n < 1 || n > kMaxN)
        throw ValidationError("extract_ngrams: n must be in 1..4, got " + std::to_string(n));
    std::map<std::vector<std::string>, int> out;
    if (tokens.size() < static_cast<std::size_t>(n)) return out;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) {
        std::vector<std::string> gram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(i) + n);
        ++out[std::move(gram)];
    }
    return out;
}

namespace {

// Distinct gram ids of one caption, all orders 1..4, interning as needed.
std::vector<std::uint32_t> caption_gram_ids(const std::vector<std::string>& tokens,
                                            GramSpace& space) {
    std::vector<std::uint32_t> tok_ids;
    tok_ids.reserve(tokens.size());
    for (const auto& t : tokens) tok_ids.push_back(space.intern_token(t));
    std::vector<std::uint32_t> grams;
    for (int n = 1; n <= kMaxN; ++n) {
        if (tok_ids.size() < static_cast<std::size_t>(n)) break;
        for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tok_ids.size(); ++i) {
            NGramKey key;
            key.n = static_cast<std::uint8_t>(n);
            for (int j = 0; j < n; ++j) key.tok[static_cast<std::size_t>(j)] = tok_ids[i + j];
            grams.push_back(space.intern_gram(key));
        }
    }
    std::sort(grams.begin(), grams.end());
    grams.erase(std::unique(grams.begin(), grams.end()), grams.end());
    return grams;
}

}  // namespace

DfTable DfTable::build(const Corpus& corpus, Split split, std::shared_ptr<GramSpace> space) {
    auto images = corpus.split_images(split);
    if (images.empty())
        throw ValidationError(std::string("build_df: empty split: ") + split_name(split));

    DfTable table;
    table.space_ = space ? std::move(space) : std::make_shared<GramSpace>();
    table.split_ = split;
    table.image_count_ = images.size();

    for (ImageId id : images) {
        std::vector<std::uint32_t> image_grams;
        for (const auto& cap : corpus.captions(id)) {
            auto grams = caption_gram_ids(cap.tokens, *table.space_);
            image_grams.insert(image_grams.end(), grams.begin(), grams.end());
        }
        std::sort(image_grams.begin(), image_grams.end());
        image_grams.erase(std::unique(image_grams.begin(), image_grams.end()),
                          image_grams.end());
        for (std::uint32_t g : image_grams) {
            if (g >= table.df_.size()) table.df_.resize(g + 1, 0);
            ++table.df_[g];
        }
    }
    return table;
}

std::uint32_t DfTable::df(const NGramKey& key) const {
    auto id = space_->find_gram(key);
    return id ? df(*id) : 0;
}

double DfTable::idf(std::uint32_t gram_id) const {
    std::uint32_t d = df(gram_id);
    return std::log(static_cast<double>(image_count_) / static_cast<double>(d > 0 ? d : 1));
}

void DfTable::write_tsv(std::ostream& out) const {
    out << "#images=" << image_count_ << "\n";
    std::vector<std::pair<std::string, std::uint32_t>> rows;  // (text, df), per n
    for (int n = 1; n <= kMaxN; ++n) {
        rows.clear();
        for (std::uint32_t g = 0; g < df_.size(); ++g) {
            if (df_[g] == 0) continue;
            if (space_->gram_key(g).n != n) continue;
            rows.emplace_back(space_->gram_text(g), df_[g]);
        }
        std::sort(rows.begin(), rows.end());
        for (const auto& [text, d] : rows) out << n << '\t' << text << '\t' << d << "\n";
    }
}

DfTable DfTable::import_tsv(std::istream& in, Split split, std::shared_ptr<GramSpace> space) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("#images=", 0) != 0)
        throw ParseError("df table: missing '#images=<count>' header");
    DfTable table;
    table.space_ = space ? std::move(space) : std::make_shared<GramSpace>();
    table.split_ = split;
    table.image_count_ = std::stoull(line.substr(8));

    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream row(line);
        int n = 0;
        row >> n;
        if (n < 1 || n > kMaxN)
            throw ParseError("df table line " + std::to_string(lineno) + ": bad n");
        if (row.get() != '\t')
            throw ParseError("df table line " + std::to_string(lineno) + ": expected tab");
        std::string rest;
        std::getline(row, rest);
        auto tab = rest.rfind('\t');
        if (tab == std::string::npos)
            throw ParseError("df table line " + std::to_string(lineno) + ": expected df column");
        std::string text = rest.substr(0, tab);
        auto d = static_cast<std::uint32_t>(std::stoul(rest.substr(tab + 1)));
        if (d == 0 || d > table.image_count_)
            throw ValidationError("df table line " + std::to_string(lineno) +
                                  ": df out of range");

        NGramKey key;
        key.n = static_cast<std::uint8_t>(n);
        std::istringstream toks(text);
        std::string tok;
        int i = 0;
        while (toks >> tok) {
            if (i >= n)
                throw ParseError("df table line " + std::to_string(lineno) +
                                 ": gram has more than n tokens");
            key.tok[static_cast<std::size_t>(i++)] = table.space_->intern_token(tok);
        }
        if (i != n)
            throw ParseError("df table line " + std::to_string(lineno) +
                             ": gram has fewer than n tokens");
        std::uint32_t g = table.space_->intern_gram(key);
        if (g >= table.df_.size()) table.df_.resize(g + 1, 0);
        table.df_[g] = d;
    }
    return table;
}

TfIdfVector tfidf_vector(const std::vector<std::string>& tokens, DfTable& df) {
    GramSpace& space = df.space();
    std::vector<std::uint32_t> tok_ids;
    tok_ids.reserve(tokens.size());
    for (const auto& t : tokens) tok_ids.push_back(space.intern_token(t));

    TfIdfVector vec;
    vec.length = static_cast<int>(tokens.size());
    for (int n = 1; n <= kMaxN; ++n) {
        if (tok_ids.size() < static_cast<std::size_t>(n)) break;
        std::size_t total = tok_ids.size() - static_cast<std::size_t>(n) + 1;
        // count occurrences per gram id
        std::vector<std::pair<std::uint32_t, int>> counts;
        for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tok_ids.size(); ++i) {
            NGramKey key;
            key.n = static_cast<std::uint8_t>(n);
            for (int j = 0; j < n; ++j) key.tok[static_cast<std::size_t>(j)] = tok_ids[i + j];
            counts.emplace_back(space.intern_gram(key), 1);
        }
        std::sort(counts.begin(), counts.end());
        auto& lvl = vec.level[static_cast<std::size_t>(n - 1)];
        double norm_sq = 0.0;
        for (std::size_t i = 0; i < counts.size();) {
            std::size_t j = i;
            int c = 0;
            while (j < counts.size() && counts[j].first == counts[i].first) {
                c += counts[j].second;
                ++j;
            }
            double w = (static_cast<double>(c) / static_cast<double>(total)) *
                       df.idf(counts[i].first);
            if (w > 0.0) {
                lvl.push_back(TfIdfEntry{counts[i].first, w});
                norm_sq += w * w;
            }
            i = j;
        }
        vec.norm_sq[static_cast<std::size_t>(n - 1)] = norm_sq;
        vec.norm[static_cast<std::size_t>(n - 1)] = std::sqrt(norm_sq);
    }
    return vec;
}

double cider_pair(const TfIdfVector& candidate, const TfIdfVector& reference,
                  const CiderOptions& opts) {
    bool clip = opts.variant == CiderVariant::CiderD;
    double sum = 0.0;
    for (int n = 0; n < kMaxN; ++n) {
        const auto& c = candidate.level[static_cast<std::size_t>(n)];
        const auto& r = reference.level[static_cast<std::size_t>(n)];
        double nc2 = candidate.norm_sq[static_cast<std::size_t>(n)];
        double nr2 = reference.norm_sq[static_cast<std::size_t>(n)];
        if (nc2 <= 0.0 || nr2 <= 0.0) continue;
        double dot = 0.0;
        std::size_t i = 0, j = 0;
        while (i < c.size() && j < r.size()) {
            if (c[i].gram == r[j].gram) {
                double cw = c[i].weight;
                double rw = r[j].weight;
                dot += (clip ? std::min(cw, rw) : cw) * rw;
                ++i;
                ++j;
            } else if (c[i].gram < r[j].gram) {
                ++i;
            } else {
                ++j;
            }
        }
        // sqrt of the product keeps identical vectors at cosine exactly 1
        sum += dot / std::sqrt(nc2 * nr2);
    }
    double penalty = 1.0;
    if (opts.variant == CiderVariant::CiderD) {
        double delta = static_cast<double>(candidate.length - reference.length);
        penalty = std::exp(-(delta * delta) / (2.0 * opts.sigma * opts.sigma));
    }
    return 10.0 * penalty * sum / kMaxN;
}

double cider_d(const TfIdfVector& candidate, const std::vector<TfIdfVector>& references,
               const CiderOptions& opts) {
    if (references.empty()) throw ValidationError("cider_d: empty reference list");
    double sum = 0.0;
    for (const auto& ref : references) sum += cider_pair(candidate, ref, opts);
    return sum / static_cast<double>(references.size());
}

}  // namespace distcap
