#include "distcap/weights.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace distcap {

double ltw_weight(std::uint32_t rank, const LtwParams& params) {
    if (params.f_begin < 1 || params.f_begin >= params.f_end)
        throw ValidationError("ltw_weight: need 1 <= f_begin < f_end");
    if (rank < 1) throw ValidationError("ltw_weight: rank must be >= 1");
    if (rank <= params.f_begin) return 1.0;
    if (rank <= params.f_end)
        return 1.0 + params.amplitude * static_cast<double>(rank - params.f_begin) /
                         static_cast<double>(params.f_end - params.f_begin);
    return 1.0 + params.amplitude;  // clamp past f_end
}

CaptionWeights caption_weights(ImageId target, const SimilarSet& set, const Corpus& corpus,
                               DfTable& df, double lambda_w, double alpha_w,
                               const CiderOptions& opts) {
    if (!(lambda_w > alpha_w) || alpha_w < 0.0)
        throw ValidationError("caption_weights: need lambda_w > alpha_w >= 0");
    CaptionWeights cw;
    cw.image_id = target;
    double max_v = 0.0;
    for (const auto& cap : corpus.captions(target)) {
        double v = cider_btw(cap.tokens, set, corpus, df, opts);
        cw.weights.push_back(CaptionWeight{cap.index, v, 0.0});
        max_v = std::max(max_v, v);
    }
    for (auto& w : cw.weights)
        // v/max first: the argmax caption divides to exactly 1 and lands on
        // lambda_w - alpha_w
        w.w = max_v > 0.0 ? lambda_w - alpha_w * (w.v / max_v) : lambda_w;
    return cw;
}

const std::vector<double>& TokenLogProbs::row(ImageId id, int caption_index) const {
    auto it = rows.find({id, caption_index});
    if (it == rows.end())
        throw ValidationError("missing log-probabilities for image " + std::to_string(id) +
                              " caption " + std::to_string(caption_index));
    return it->second;
}

double LtwContext::token_weight(const std::string& token) const {
    std::uint32_t rank = vocab->rank(token);
    if (rank == 0) return 1.0 + params.amplitude;
    return ltw_weight(rank, params);
}

namespace {

double caption_xe(const Caption& cap, const std::vector<double>& logprobs,
                  const std::optional<LtwContext>& ltw) {
    if (logprobs.size() != cap.tokens.size())
        throw ValidationError("log-probability row for image " + std::to_string(cap.image_id) +
                              " caption " + std::to_string(cap.index) + " has " +
                              std::to_string(logprobs.size()) + " entries, caption has " +
                              std::to_string(cap.tokens.size()) + " tokens");
    double loss = 0.0;
    for (std::size_t t = 0; t < logprobs.size(); ++t) {
        if (logprobs[t] > 0.0)
            throw ValidationError("positive log-probability for image " +
                                  std::to_string(cap.image_id) + " caption " +
                                  std::to_string(cap.index) + " token " + std::to_string(t));
        double wt = ltw ? ltw->token_weight(cap.tokens[t]) : 1.0;
        loss -= wt * logprobs[t];
    }
    return loss;
}

}  // namespace

double weighted_xe(const std::vector<Caption>& captions, const TokenLogProbs& logprobs,
                   const CaptionWeights& cw, const std::optional<LtwContext>& ltw) {
    double total = 0.0;
    for (const auto& cap : captions) {
        double w = 0.0;
        bool found = false;
        for (const auto& cwi : cw.weights)
            if (cwi.index == cap.index) {
                w = cwi.w;
                found = true;
                break;
            }
        if (!found)
            throw ValidationError("weighted_xe: no weight for caption index " +
                                  std::to_string(cap.index));
        total += w * caption_xe(cap, logprobs.row(cap.image_id, cap.index), ltw);
    }
    return total;
}

double ns_loss(const ManifestEntry& entry, const Corpus& corpus, const TokenLogProbs& logprobs,
               double alpha_ns, const std::optional<LtwContext>& ltw) {
    if (alpha_ns < 0.0) throw ValidationError("ns_loss: alpha_ns must be >= 0");
    double positive = 0.0;
    const auto& caps = corpus.captions(entry.image_id);
    for (const auto& cwi : entry.captions) {
        const Caption& cap = caps.at(static_cast<std::size_t>(cwi.index));
        positive += cwi.w * caption_xe(cap, logprobs.row(entry.image_id, cwi.index), ltw);
    }
    double negative = 0.0;
    for (const auto& block : entry.negatives) {
        const auto& neg_caps = corpus.captions(block.image_id);
        for (const auto& nc : block.captions) {
            const Caption& cap = neg_caps.at(static_cast<std::size_t>(nc.index));
            negative += nc.w * caption_xe(cap, logprobs.row(block.image_id, nc.index), ltw);
        }
    }
    return positive - alpha_ns * negative;
}

std::pair<double, double> rl_reward(const std::vector<std::string>& candidate_tokens,
                                    ImageId target, const CaptionWeights& cw,
                                    const SimilarSet& set, const Corpus& corpus, DfTable& df,
                                    double alpha_r, const CiderOptions& opts) {
    if (alpha_r < 0.0) throw ValidationError("rl_reward: alpha_r must be >= 0");
    TfIdfVector cand = tfidf_vector(candidate_tokens, df);
    const auto& refs = corpus.captions(target);
    if (cw.weights.size() != refs.size())
        throw ValidationError("rl_reward: caption weights do not match the target's captions");
    double weighted = 0.0;
    for (std::size_t i = 0; i < refs.size(); ++i)
        weighted += cw.weights[i].w * cider_pair(cand, tfidf_vector(refs[i].tokens, df), opts);
    double r_tilde = weighted / static_cast<double>(refs.size());
    double r = r_tilde - alpha_r * cider_btw(candidate_tokens, set, corpus, df, opts);
    return {r_tilde, r};
}

double combine_losses(double l_xe, double l_rl, double alpha_l) {
    if (alpha_l < 0.0 || alpha_l > 1.0)
        throw ValidationError("combine_losses: alpha_l must be in [0, 1]");
    return alpha_l * l_xe + (1.0 - alpha_l) * l_rl;
}

WeightManifest build_manifest(const Corpus& corpus, Split split,
                              const std::map<ImageId, SimilarSet>& sets, DfTable& df,
                              const VocabStats& vocab, const HyperParams& params,
                              NegativeWeightScope scope, const CiderOptions& opts, int threads) {
    auto images = corpus.split_images(split);
    std::vector<ImageId> missing;
    for (ImageId id : images)
        if (!sets.count(id)) missing.push_back(id);
    if (!missing.empty())
        throw ValidationError("build_manifest: no similar set for " +
                              std::to_string(missing.size()) + " images (first: " +
                              std::to_string(missing.front()) + ")");
    for (const auto& [id, set] : sets) {
        (void)set;
        if (!corpus.contains(id) || corpus.split_of(id) != split)
            throw ValidationError("build_manifest: similar set for image " + std::to_string(id) +
                                  " is not in split " + split_name(split));
    }

    WeightManifest manifest;
    manifest.params = params;
    for (std::uint32_t rank = 1; rank <= vocab.vocab_size(); ++rank)
        manifest.ltw_table.emplace_back(rank, ltw_weight(rank, params.ltw));

    // Intern every gram of the split in image order first so the parallel
    // phase never grows the GramSpace; summation order then does not depend
    // on the thread interleaving.
    for (ImageId id : images)
        for (const auto& cap : corpus.captions(id)) (void)tfidf_vector(cap.tokens, df);

    std::vector<CaptionWeights> all_weights(images.size());
    parallel_for(images.size(), threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i)
            all_weights[i] = caption_weights(images[i], sets.at(images[i]), corpus, df,
                                             params.lambda_w, params.alpha_w, opts);
    });
    std::map<ImageId, const CaptionWeights*> weights_by_id;
    for (const auto& cw : all_weights) weights_by_id[cw.image_id] = &cw;

    manifest.entries.resize(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        ImageId id = images[i];
        ManifestEntry entry;
        entry.image_id = id;
        entry.captions = all_weights[i].weights;
        for (const auto& [neighbor, score] : sets.at(id).neighbors) {
            (void)score;
            NegativeBlock block;
            block.image_id = neighbor;
            const CaptionWeights* neg_cw = nullptr;
            CaptionWeights target_scope_cw;
            if (scope == NegativeWeightScope::OwnSet) {
                auto it = weights_by_id.find(neighbor);
                if (it == weights_by_id.end())
                    throw ValidationError("build_manifest: neighbor " + std::to_string(neighbor) +
                                          " of image " + std::to_string(id) +
                                          " has no similar set in split " + split_name(split));
                neg_cw = it->second;
            } else {
                // weight the neighbor's captions against the *target's* set
                target_scope_cw = CaptionWeights{neighbor, {}};
                double max_v = 0.0;
                for (const auto& cap : corpus.captions(neighbor)) {
                    double v = cider_btw(cap.tokens, sets.at(id), corpus, df, opts);
                    target_scope_cw.weights.push_back(CaptionWeight{cap.index, v, 0.0});
                    max_v = std::max(max_v, v);
                }
                for (auto& w : target_scope_cw.weights)
                    w.w = max_v > 0.0 ? params.lambda_w - params.alpha_w * w.v / max_v
                                      : params.lambda_w;
                neg_cw = &target_scope_cw;
            }
            for (const auto& w : neg_cw->weights)
                block.captions.push_back(NegativeCaption{w.index, w.w});
            entry.negatives.push_back(std::move(block));
        }
        manifest.entries[i] = std::move(entry);
    }
    return manifest;
}

namespace {

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

void write_manifest(const WeightManifest& manifest, std::ostream& out) {
    const HyperParams& p = manifest.params;
    out << "{\"hyperparams\":{\"lambda_w\":" << fixed6(p.lambda_w)
        << ",\"alpha_w\":" << fixed6(p.alpha_w) << ",\"alpha_r\":" << fixed6(p.alpha_r)
        << ",\"alpha_ns\":" << fixed6(p.alpha_ns) << ",\"A\":" << fixed6(p.ltw.amplitude)
        << ",\"F_b\":" << p.ltw.f_begin << ",\"F_e\":" << p.ltw.f_end << ",\"K\":" << p.k
        << ",\"sigma\":" << fixed6(p.sigma) << "},\"ltw_table\":[";
    for (std::size_t i = 0; i < manifest.ltw_table.size(); ++i) {
        if (i) out << ',';
        out << '[' << manifest.ltw_table[i].first << ',' << fixed6(manifest.ltw_table[i].second)
            << ']';
    }
    out << "]}\n";
    for (const auto& entry : manifest.entries) {
        out << "{\"image_id\":" << entry.image_id << ",\"captions\":[";
        for (std::size_t i = 0; i < entry.captions.size(); ++i) {
            if (i) out << ',';
            out << "{\"index\":" << entry.captions[i].index
                << ",\"v\":" << fixed6(entry.captions[i].v)
                << ",\"w\":" << fixed6(entry.captions[i].w) << '}';
        }
        out << "],\"negatives\":[";
        for (std::size_t b = 0; b < entry.negatives.size(); ++b) {
            if (b) out << ',';
            out << "{\"image_id\":" << entry.negatives[b].image_id << ",\"captions\":[";
            for (std::size_t i = 0; i < entry.negatives[b].captions.size(); ++i) {
                if (i) out << ',';
                out << "{\"index\":" << entry.negatives[b].captions[i].index
                    << ",\"w\":" << fixed6(entry.negatives[b].captions[i].w) << '}';
            }
            out << "]}";
        }
        out << "]}\n";
    }
}

WeightManifest load_manifest(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("manifest: empty file");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("manifest header: ") + e.what());
    }
    WeightManifest manifest;
    const auto& hp = header.at("hyperparams");
    manifest.params.lambda_w = hp.at("lambda_w").get<double>();
    manifest.params.alpha_w = hp.at("alpha_w").get<double>();
    manifest.params.alpha_r = hp.at("alpha_r").get<double>();
    manifest.params.alpha_ns = hp.at("alpha_ns").get<double>();
    manifest.params.ltw.amplitude = hp.at("A").get<double>();
    manifest.params.ltw.f_begin = hp.at("F_b").get<std::uint32_t>();
    manifest.params.ltw.f_end = hp.at("F_e").get<std::uint32_t>();
    manifest.params.k = hp.at("K").get<int>();
    manifest.params.sigma = hp.at("sigma").get<double>();
    for (const auto& row : header.at("ltw_table"))
        manifest.ltw_table.emplace_back(row.at(0).get<std::uint32_t>(), row.at(1).get<double>());

    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError("manifest line " + std::to_string(lineno) + ": " + e.what());
        }
        ManifestEntry entry;
        entry.image_id = obj.at("image_id").get<ImageId>();
        for (const auto& c : obj.at("captions"))
            entry.captions.push_back(CaptionWeight{c.at("index").get<int>(),
                                                   c.at("v").get<double>(),
                                                   c.at("w").get<double>()});
        for (const auto& b : obj.at("negatives")) {
            NegativeBlock block;
            block.image_id = b.at("image_id").get<ImageId>();
            for (const auto& c : b.at("captions"))
                block.captions.push_back(
                    NegativeCaption{c.at("index").get<int>(), c.at("w").get<double>()});
            entry.negatives.push_back(std::move(block));
        }
        manifest.entries.push_back(std::move(entry));
    }
    return manifest;
}

}  // namespace distcap
