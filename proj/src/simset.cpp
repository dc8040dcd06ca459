#include "distcap/simset.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

namespace distcap {

const char* strategy_name(SimStrategy s) {
    switch (s) {
        case SimStrategy::Cider: return "cider";
        case SimStrategy::EmbedRetrieval: return "embed-retrieval";
        case SimStrategy::EmbedImage: return "embed-image";
        case SimStrategy::Random: return "random";
    }
    return "?";
}

std::optional<SimStrategy> parse_strategy(std::string_view name) {
    if (name == "cider") return SimStrategy::Cider;
    if (name == "embed-retrieval") return SimStrategy::EmbedRetrieval;
    if (name == "embed-image") return SimStrategy::EmbedImage;
    if (name == "random") return SimStrategy::Random;
    return std::nullopt;
}

namespace {

void normalize(std::vector<double>& v, const std::string& what) {
    double norm_sq = 0.0;
    for (double x : v) norm_sq += x * x;
    if (norm_sq <= 0.0) throw ValidationError("zero-norm embedding for " + what);
    double inv = 1.0 / std::sqrt(norm_sq);
    for (double& x : v) x *= inv;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

EmbeddingTable EmbeddingTable::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open embedding file: " + path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("dim=", 0) != 0)
        throw ParseError("embedding file " + path + ": missing 'dim=<d>' header");
    EmbeddingTable table;
    table.dim_ = std::stoi(line.substr(4));
    if (table.dim_ < 1) throw ValidationError("embedding file " + path + ": dim must be >= 1");

    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string kind;
        row >> kind;
        ImageId id = 0;
        int cap_index = -1;
        if (kind == "img") {
            row >> id;
        } else if (kind == "cap") {
            row >> id >> cap_index;
        } else {
            throw ParseError("embedding file " + path + " line " + std::to_string(lineno) +
                             ": unknown row type '" + kind + "'");
        }
        std::vector<double> vec;
        vec.reserve(static_cast<std::size_t>(table.dim_));
        double x;
        while (row >> x) vec.push_back(x);
        if (static_cast<int>(vec.size()) != table.dim_)
            throw ValidationError("embedding file " + path + " line " + std::to_string(lineno) +
                                  ": expected " + std::to_string(table.dim_) + " floats, got " +
                                  std::to_string(vec.size()));
        normalize(vec, "line " + std::to_string(lineno));
        if (kind == "img")
            table.image_vecs_[id] = std::move(vec);
        else
            table.caption_vecs_[{id, cap_index}] = std::move(vec);
    }
    return table;
}

EmbeddingTable EmbeddingTable::from_vectors(
    int dim, std::map<ImageId, std::vector<double>> image_vecs,
    std::map<std::pair<ImageId, int>, std::vector<double>> caption_vecs) {
    EmbeddingTable table;
    table.dim_ = dim;
    for (auto& [id, v] : image_vecs) {
        if (static_cast<int>(v.size()) != dim)
            throw ValidationError("image vector dim mismatch for id " + std::to_string(id));
        normalize(v, "image " + std::to_string(id));
    }
    for (auto& [key, v] : caption_vecs) {
        if (static_cast<int>(v.size()) != dim)
            throw ValidationError("caption vector dim mismatch for image " +
                                  std::to_string(key.first));
        normalize(v, "caption of image " + std::to_string(key.first));
    }
    table.image_vecs_ = std::move(image_vecs);
    table.caption_vecs_ = std::move(caption_vecs);
    return table;
}

const std::vector<double>& EmbeddingTable::image_vec(ImageId id) const {
    auto it = image_vecs_.find(id);
    if (it == image_vecs_.end())
        throw ValidationError("no image embedding for id " + std::to_string(id));
    return it->second;
}

const std::vector<double>& EmbeddingTable::caption_vec(ImageId id, int caption_index) const {
    auto it = caption_vecs_.find({id, caption_index});
    if (it == caption_vecs_.end())
        throw ValidationError("no caption embedding for image " + std::to_string(id) +
                              " caption " + std::to_string(caption_index));
    return it->second;
}

double cider_similarity(ImageId i, ImageId j, DfTable& df, const Corpus& corpus,
                        const CiderOptions& opts) {
    const auto& caps_i = corpus.captions(i);
    const auto& caps_j = corpus.captions(j);
    std::vector<TfIdfVector> vi, vj;
    vi.reserve(caps_i.size());
    vj.reserve(caps_j.size());
    for (const auto& c : caps_i) vi.push_back(tfidf_vector(c.tokens, df));
    for (const auto& c : caps_j) vj.push_back(tfidf_vector(c.tokens, df));
    double sum = 0.0;
    for (const auto& a : vi)
        for (const auto& b : vj) sum += cider_pair(a, b, opts);
    return sum / (static_cast<double>(vi.size()) * static_cast<double>(vj.size()));
}

double vse_similarity(ImageId i, ImageId j, const EmbeddingTable& emb) {
    const auto& phi = emb.image_vec(i);
    const auto& caps = emb.caption_vecs();
    auto it = caps.lower_bound({j, 0});
    if (it == caps.end() || it->first.first != j)
        throw ValidationError("no caption embeddings for image " + std::to_string(j));
    double best = -2.0;
    for (; it != caps.end() && it->first.first == j; ++it)
        best = std::max(best, dot(phi, it->second));
    return best;
}

double image_feature_similarity(ImageId i, ImageId j, const EmbeddingTable& emb) {
    return dot(emb.image_vec(i), emb.image_vec(j));
}

SimilarSet build_set_retrieval(ImageId target, int k, const EmbeddingTable& emb,
                               const Corpus& corpus) {
    if (k < 1) throw ValidationError("build_set_retrieval: K must be >= 1");
    Split split = corpus.split_of(target);
    auto images = corpus.split_images(split);
    if (images.size() < static_cast<std::size_t>(k) + 1)
        throw ValidationError("build_set_retrieval: split has " + std::to_string(images.size()) +
                              " images, need at least K+1 = " + std::to_string(k + 1));

    const auto& phi = emb.image_vec(target);

    struct Hit {
        double cos;
        ImageId id;
        int cap_index;
    };
    std::vector<Hit> hits;
    for (ImageId id : images) {
        int n = corpus.refs_per_image(id);
        for (int c = 0; c < n; ++c)
            hits.push_back(Hit{dot(phi, emb.caption_vec(id, c)), id, c});
    }
    std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
        if (a.cos != b.cos) return a.cos > b.cos;
        if (a.id != b.id) return a.id < b.id;
        return a.cap_index < b.cap_index;
    });

    // The paper's procedure takes the N_r = N(K+1) nearest captions and keeps
    // the first K distinct non-target images; if the window is short of K
    // distinct images it is doubled. Scanning the ranking until K are found
    // yields the same sets.
    SimilarSet set;
    set.target = target;
    set.strategy = SimStrategy::EmbedRetrieval;
    for (const auto& h : hits) {
        if (h.id == target) continue;
        bool seen = false;
        for (const auto& [id, score] : set.neighbors)
            if (id == h.id) {
                seen = true;
                break;
            }
        if (seen) continue;
        set.neighbors.emplace_back(h.id, h.cos);
        if (static_cast<int>(set.neighbors.size()) == k) break;
    }
    return set;
}

std::map<ImageId, SimilarSet> build_sets_retrieval(const Corpus& corpus, Split split, int k,
                                                   const EmbeddingTable& emb, int threads) {
    auto images = corpus.split_images(split);
    std::vector<SimilarSet> sets(images.size());
    parallel_for(images.size(), threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i)
            sets[i] = build_set_retrieval(images[i], k, emb, corpus);
    });
    std::map<ImageId, SimilarSet> out;
    for (auto& s : sets) out[s.target] = std::move(s);
    return out;
}

std::map<ImageId, SimilarSet> build_sets_image(const Corpus& corpus, Split split, int k,
                                               const EmbeddingTable& emb, int threads) {
    auto images = corpus.split_images(split);
    if (images.size() < static_cast<std::size_t>(k) + 1)
        throw ValidationError("build_sets_image: split smaller than K+1 images");
    std::vector<SimilarSet> sets(images.size());
    parallel_for(images.size(), threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t t = begin; t < end; ++t) {
            ImageId target = images[t];
            std::vector<std::pair<double, ImageId>> scored;
            for (ImageId j : images) {
                if (j == target) continue;
                scored.emplace_back(image_feature_similarity(target, j, emb), j);
            }
            std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
                if (a.first != b.first) return a.first > b.first;
                return a.second < b.second;
            });
            SimilarSet set;
            set.target = target;
            set.strategy = SimStrategy::EmbedImage;
            for (int i = 0; i < k; ++i) set.neighbors.emplace_back(scored[static_cast<std::size_t>(i)].second,
                                                                   scored[static_cast<std::size_t>(i)].first);
            sets[t] = std::move(set);
        }
    });
    std::map<ImageId, SimilarSet> out;
    for (auto& s : sets) out[s.target] = std::move(s);
    return out;
}

std::map<ImageId, SimilarSet> build_sets_random(const Corpus& corpus, Split split, int k,
                                                std::uint64_t seed) {
    auto images = corpus.split_images(split);
    if (images.size() < static_cast<std::size_t>(k) + 1)
        throw ValidationError("build_sets_random: split smaller than K+1 images");
    std::map<ImageId, SimilarSet> out;
    for (ImageId target : images) {
        std::vector<ImageId> pool;
        pool.reserve(images.size() - 1);
        for (ImageId id : images)
            if (id != target) pool.push_back(id);

        // Per-target stream keyed by (seed, target) so the draw is independent
        // of iteration order and thread count.
        std::seed_seq sseq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                           static_cast<std::uint32_t>(static_cast<std::uint64_t>(target)),
                           static_cast<std::uint32_t>(static_cast<std::uint64_t>(target) >> 32)};
        std::mt19937_64 rng(sseq);
        for (std::size_t i = 0; i < static_cast<std::size_t>(k); ++i) {
            std::size_t span = pool.size() - i;
            std::size_t j = i + static_cast<std::size_t>(rng() % span);
            std::swap(pool[i], pool[j]);
        }
        pool.resize(static_cast<std::size_t>(k));
        std::sort(pool.begin(), pool.end());

        SimilarSet set;
        set.target = target;
        set.strategy = SimStrategy::Random;
        for (ImageId id : pool) set.neighbors.emplace_back(id, 0.0);
        out[target] = std::move(set);
    }
    return out;
}

namespace {

// Inverted-index engine for exact top-K CIDEr similar sets.
//
// Per caption, the per-n tf-idf blocks are unit-normalized and scaled by 1/2
// so that dot(u_c, u_r) = (1/4) sum_n cos_n(c, r) >= s(c, r)/10 (clipping
// only lowers the dot product, the length penalty is <= 1). Averaging these
// unit-block vectors per image gives a single sparse vector U_i with
// 10 * dot(U_i, U_j) >= S_c(i, j). Candidates are exact-scored in descending
// bound order until the bound falls below the current K-th exact score.
class CiderSimsetEngine {
public:
    CiderSimsetEngine(const Corpus& corpus, Split split, DfTable& df, const CiderOptions& opts)
        : corpus_(corpus), opts_(opts) {
        image_ids_ = corpus.split_images(split);
        std::size_t n_images = image_ids_.size();
        cap_begin_.resize(n_images + 1, 0);
        for (std::size_t i = 0; i < n_images; ++i) {
            const auto& caps = corpus.captions(image_ids_[i]);
            cap_begin_[i + 1] = cap_begin_[i] + caps.size();
            for (const auto& cap : caps) cap_vecs_.push_back(tfidf_vector(cap.tokens, df));
        }

        // Per-image bound vectors and the inverted index over their entries.
        std::vector<std::pair<std::uint32_t, double>> merged;
        for (std::size_t i = 0; i < n_images; ++i) {
            merged.clear();
            double inv_n = 1.0 / static_cast<double>(cap_begin_[i + 1] - cap_begin_[i]);
            for (std::size_t c = cap_begin_[i]; c < cap_begin_[i + 1]; ++c) {
                const TfIdfVector& v = cap_vecs_[c];
                for (int n = 0; n < kMaxN; ++n) {
                    double norm = v.norm[static_cast<std::size_t>(n)];
                    if (norm <= 0.0) continue;
                    // each side carries 1/sqrt(4) so the pair dot is (1/4) sum_n cos_n
                    double scale = inv_n / (norm * 2.0);
                    for (const auto& e : v.level[static_cast<std::size_t>(n)])
                        merged.emplace_back(e.gram, e.weight * scale);
                }
            }
            std::sort(merged.begin(), merged.end());
            auto& bound = bound_vecs_.emplace_back();
            for (std::size_t p = 0; p < merged.size();) {
                std::size_t q = p;
                double w = 0.0;
                while (q < merged.size() && merged[q].first == merged[p].first) w += merged[q++].second;
                bound.emplace_back(merged[p].first, w);
                p = q;
            }
        }
        std::uint32_t max_gram = 0;
        for (const auto& bound : bound_vecs_)
            for (const auto& [g, w] : bound) max_gram = std::max(max_gram, g);
        postings_.resize(max_gram + 1);
        for (std::size_t i = 0; i < n_images; ++i)
            for (const auto& [g, w] : bound_vecs_[i])
                postings_[g].emplace_back(static_cast<std::uint32_t>(i), w);
    }

    std::size_t image_count() const { return image_ids_.size(); }
    ImageId image_id(std::size_t idx) const { return image_ids_[idx]; }

    double exact_similarity(std::size_t ti, std::size_t tj) const {
        double sum = 0.0;
        for (std::size_t a = cap_begin_[ti]; a < cap_begin_[ti + 1]; ++a)
            for (std::size_t b = cap_begin_[tj]; b < cap_begin_[tj + 1]; ++b)
                sum += cider_pair(cap_vecs_[a], cap_vecs_[b], opts_);
        return sum / static_cast<double>((cap_begin_[ti + 1] - cap_begin_[ti]) *
                                         (cap_begin_[tj + 1] - cap_begin_[tj]));
    }

    // Exact top-K for one target. acc/touched are caller-provided scratch of
    // size image_count(), acc zeroed between calls via the touched list.
    SimilarSet top_k(std::size_t target_idx, int k, std::vector<double>& acc,
                     std::vector<std::uint32_t>& touched, std::uint64_t* pairs_scored) const {
        touched.clear();
        for (const auto& [g, w] : bound_vecs_[target_idx]) {
            for (const auto& [img, w2] : postings_[g]) {
                if (acc[img] == 0.0) touched.push_back(img);
                acc[img] += w * w2;
            }
        }

        struct Candidate {
            double bound;
            std::uint32_t idx;
        };
        std::vector<Candidate> candidates;
        candidates.reserve(touched.size());
        for (std::uint32_t img : touched) {
            if (img != target_idx && acc[img] > 0.0)
                candidates.push_back(Candidate{10.0 * acc[img], img});
            acc[img] = 0.0;
        }
        std::sort(candidates.begin(), candidates.end(), [this](const Candidate& a, const Candidate& b) {
            if (a.bound != b.bound) return a.bound > b.bound;
            return image_ids_[a.idx] < image_ids_[b.idx];
        });

        auto better = [this](const std::pair<double, std::uint32_t>& a,
                             const std::pair<double, std::uint32_t>& b) {
            if (a.first != b.first) return a.first > b.first;
            return image_ids_[a.second] < image_ids_[b.second];
        };
        std::vector<std::pair<double, std::uint32_t>> best;  // positive scores only
        constexpr double kMargin = 1e-12;
        std::uint64_t scored = 0;
        for (const auto& cand : candidates) {
            double kth = static_cast<int>(best.size()) >= k ? best[static_cast<std::size_t>(k) - 1].first : 0.0;
            if (static_cast<int>(best.size()) >= k && cand.bound < kth - kMargin) break;
            double score = exact_similarity(target_idx, cand.idx);
            ++scored;
            if (score <= 0.0) continue;
            std::pair<double, std::uint32_t> entry{score, cand.idx};
            auto pos = std::lower_bound(best.begin(), best.end(), entry, better);
            best.insert(pos, entry);
            if (static_cast<int>(best.size()) > k) best.pop_back();
        }
        if (pairs_scored) *pairs_scored += scored;

        SimilarSet set;
        set.target = image_ids_[target_idx];
        set.strategy = SimStrategy::Cider;
        for (const auto& [score, idx] : best) set.neighbors.emplace_back(image_ids_[idx], score);
        if (static_cast<int>(set.neighbors.size()) < k) {
            // Everything not selected scores 0; fill by ascending image id.
            std::vector<bool> taken(image_ids_.size(), false);
            taken[target_idx] = true;
            for (const auto& [score, idx] : best) taken[idx] = true;
            for (std::size_t i = 0; i < image_ids_.size() &&
                                    static_cast<int>(set.neighbors.size()) < k;
                 ++i)
                if (!taken[i]) set.neighbors.emplace_back(image_ids_[i], 0.0);
        }
        return set;
    }

private:
    const Corpus& corpus_;
    CiderOptions opts_;
    std::vector<ImageId> image_ids_;
    std::vector<std::size_t> cap_begin_;  // image idx -> first caption vec
    std::vector<TfIdfVector> cap_vecs_;
    std::vector<std::vector<std::pair<std::uint32_t, double>>> bound_vecs_;
    std::vector<std::vector<std::pair<std::uint32_t, double>>> postings_;
};

}  // namespace

std::map<ImageId, SimilarSet> build_sets_cider(const Corpus& corpus, Split split, int k,
                                               DfTable& df, const CiderOptions& opts,
                                               int threads, SimsetBuildStats* stats) {
    auto t0 = std::chrono::steady_clock::now();
    auto images = corpus.split_images(split);
    if (images.size() < static_cast<std::size_t>(k) + 1)
        throw ValidationError("build_sets_cider: split has " + std::to_string(images.size()) +
                              " images, need more than K = " + std::to_string(k));

    CiderSimsetEngine engine(corpus, split, df, opts);
    std::size_t n = engine.image_count();
    std::vector<SimilarSet> sets(n);
    std::vector<std::uint64_t> scored_per_chunk;
    std::mutex stats_mutex;
    parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
        std::vector<double> acc(n, 0.0);
        std::vector<std::uint32_t> touched;
        std::uint64_t scored = 0;
        for (std::size_t i = begin; i < end; ++i)
            sets[i] = engine.top_k(i, k, acc, touched, &scored);
        std::lock_guard<std::mutex> lock(stats_mutex);
        scored_per_chunk.push_back(scored);
    });

    if (stats) {
        stats->pairs_total = static_cast<std::uint64_t>(n) * (n - 1);
        stats->pairs_scored = 0;
        for (auto s : scored_per_chunk) stats->pairs_scored += s;
        stats->wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }

    std::map<ImageId, SimilarSet> out;
    for (auto& s : sets) out[s.target] = std::move(s);
    return out;
}

void write_simsets_jsonl(const std::map<ImageId, SimilarSet>& sets, std::ostream& out) {
    char buf[32];
    for (const auto& [target, set] : sets) {
        out << "{\"target\":" << target << ",\"strategy\":\"" << strategy_name(set.strategy)
            << "\",\"neighbors\":[";
        for (std::size_t i = 0; i < set.neighbors.size(); ++i) {
            if (i) out << ',';
            std::snprintf(buf, sizeof(buf), "%.6f", set.neighbors[i].second);
            out << '[' << set.neighbors[i].first << ',' << buf << ']';
        }
        out << "]}\n";
    }
}

std::map<ImageId, SimilarSet> load_simsets_jsonl(std::istream& in) {
    std::map<ImageId, SimilarSet> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError("simset file line " + std::to_string(lineno) + ": " + e.what());
        }
        SimilarSet set;
        set.target = obj.at("target").get<ImageId>();
        auto strategy = parse_strategy(obj.at("strategy").get<std::string>());
        if (!strategy)
            throw ValidationError("simset file line " + std::to_string(lineno) +
                                  ": unknown strategy");
        set.strategy = *strategy;
        for (const auto& pair : obj.at("neighbors"))
            set.neighbors.emplace_back(pair.at(0).get<ImageId>(), pair.at(1).get<double>());
        out[set.target] = std::move(set);
    }
    return out;
}

}  // namespace distcap
