#include "distcap/distinct.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace distcap {

GeneratedCaptions GeneratedCaptions::load_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open generated-caption file: " + path);
    GeneratedCaptions gen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError("generated-caption file " + path + " line " +
                             std::to_string(lineno) + ": " + e.what());
        }
        ImageId id = obj.at("image_id").get<ImageId>();
        if (gen.captions.count(id))
            throw ValidationError("generated-caption file " + path + ": duplicate image id " +
                                  std::to_string(id));
        auto tokens = tokenize(obj.at("caption").get<std::string>());
        if (tokens.empty())
            throw ValidationError("generated-caption file " + path + ": empty caption for image " +
                                  std::to_string(id));
        gen.captions[id] = std::move(tokens);
    }
    return gen;
}

double cider_btw(const std::vector<std::string>& caption_tokens, const SimilarSet& set,
                 const Corpus& corpus, DfTable& df, const CiderOptions& opts) {
    if (set.neighbors.empty()) throw ValidationError("cider_btw: empty similar set");
    TfIdfVector cand = tfidf_vector(caption_tokens, df);
    double sum = 0.0;
    for (const auto& [neighbor, score] : set.neighbors) {
        (void)score;
        const auto& refs = corpus.captions(neighbor);
        double inner = 0.0;
        for (const auto& ref : refs) inner += cider_pair(cand, tfidf_vector(ref.tokens, df), opts);
        sum += inner / static_cast<double>(refs.size());
    }
    return sum / static_cast<double>(set.neighbors.size());
}

EvalReport evaluate(const GeneratedCaptions& generated, const Corpus& corpus,
                    const std::map<ImageId, SimilarSet>& sets, DfTable& df,
                    const EmbeddingTable* emb,
                    const std::map<ImageId, std::vector<double>>* query_vecs,
                    const CiderOptions& opts, int threads) {
    if (generated.captions.empty()) throw ValidationError("evaluate: no generated captions");
    std::vector<ImageId> missing;
    for (const auto& [id, tokens] : generated.captions) {
        (void)tokens;
        if (!sets.count(id)) missing.push_back(id);
    }
    if (!missing.empty()) {
        std::ostringstream os;
        os << "evaluate: no similar set for image ids:";
        for (std::size_t i = 0; i < missing.size() && i < 10; ++i) os << ' ' << missing[i];
        if (missing.size() > 10) os << " ... (" << missing.size() << " total)";
        throw ValidationError(os.str());
    }

    std::vector<ImageId> ids;
    ids.reserve(generated.captions.size());
    for (const auto& [id, tokens] : generated.captions) {
        (void)tokens;
        ids.push_back(id);
    }

    // Vectorization interns new grams; do it before the parallel phase.
    std::map<ImageId, TfIdfVector> cand_vecs;
    std::map<ImageId, std::vector<TfIdfVector>> own_refs;
    std::map<ImageId, std::vector<std::vector<TfIdfVector>>> set_refs;
    for (ImageId id : ids) {
        cand_vecs[id] = tfidf_vector(generated.captions.at(id), df);
        auto& own = own_refs[id];
        for (const auto& ref : corpus.captions(id)) own.push_back(tfidf_vector(ref.tokens, df));
        auto& nsets = set_refs[id];
        if (sets.at(id).neighbors.empty())
            throw ValidationError("evaluate: empty similar set for image " + std::to_string(id));
        for (const auto& [neighbor, score] : sets.at(id).neighbors) {
            (void)score;
            auto& block = nsets.emplace_back();
            for (const auto& ref : corpus.captions(neighbor))
                block.push_back(tfidf_vector(ref.tokens, df));
        }
    }

    EvalReport report;
    report.per_image.resize(ids.size());
    parallel_for(ids.size(), threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            ImageId id = ids[i];
            const TfIdfVector& cand = cand_vecs.at(id);
            PerImageEval row;
            row.image_id = id;
            row.cider = cider_d(cand, own_refs.at(id), opts);
            double sum = 0.0;
            const auto& blocks = set_refs.at(id);
            for (const auto& block : blocks) {
                double inner = 0.0;
                for (const auto& ref : block) inner += cider_pair(cand, ref, opts);
                sum += inner / static_cast<double>(block.size());
            }
            row.cider_btw = sum / static_cast<double>(blocks.size());
            report.per_image[i] = row;
        }
    });

    double cider_total = 0.0, btw_total = 0.0;
    for (const auto& row : report.per_image) {
        cider_total += row.cider;
        btw_total += row.cider_btw;
    }
    report.mean_cider = cider_total / static_cast<double>(report.per_image.size());
    report.mean_cider_btw = btw_total / static_cast<double>(report.per_image.size());

    std::set<std::string> gen_vocab;
    for (const auto& [id, tokens] : generated.captions)
        for (const auto& t : tokens) gen_vocab.insert(t);
    report.generated_vocab_size = gen_vocab.size();

    if (emb != nullptr && query_vecs != nullptr) {
        std::map<ImageId, std::vector<double>> gallery;
        for (ImageId id : ids) gallery[id] = emb->image_vec(id);
        std::size_t n = gallery.size();
        report.recall_1 = recall_at_k(*query_vecs, gallery, 1);
        if (n >= 5) report.recall_5 = recall_at_k(*query_vecs, gallery, 5);
        if (n >= 10) report.recall_10 = recall_at_k(*query_vecs, gallery, 10);
    }
    return report;
}

double recall_at_k(const std::map<ImageId, std::vector<double>>& queries,
                   const std::map<ImageId, std::vector<double>>& gallery, int k) {
    if (k < 1) throw ValidationError("recall_at_k: k must be >= 1");
    if (static_cast<std::size_t>(k) > gallery.size())
        throw ValidationError("recall_at_k: k = " + std::to_string(k) +
                              " exceeds gallery size " + std::to_string(gallery.size()));
    if (queries.empty()) throw ValidationError("recall_at_k: no queries");

    std::size_t hits = 0;
    for (const auto& [qid, qvec] : queries) {
        if (!gallery.count(qid))
            throw ValidationError("recall_at_k: query image " + std::to_string(qid) +
                                  " not in gallery");
        double own = 0.0;
        for (std::size_t d = 0; d < qvec.size(); ++d) own += qvec[d] * gallery.at(qid)[d];
        // rank of own image = 1 + number of gallery entries strictly better,
        // where better means higher cosine or equal cosine with smaller id
        std::size_t rank = 1;
        for (const auto& [gid, gvec] : gallery) {
            if (gid == qid) continue;
            double cos = 0.0;
            for (std::size_t d = 0; d < qvec.size(); ++d) cos += qvec[d] * gvec[d];
            if (cos > own || (cos == own && gid < qid)) ++rank;
        }
        if (rank <= static_cast<std::size_t>(k)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(queries.size());
}

std::optional<CorrMethod> parse_corr_method(std::string_view name) {
    if (name == "pearson") return CorrMethod::Pearson;
    if (name == "spearman") return CorrMethod::Spearman;
    if (name == "kendall") return CorrMethod::Kendall;
    return std::nullopt;
}

namespace {

bool is_constant(const std::vector<double>& v) {
    for (double x : v)
        if (x != v[0]) return false;
    return true;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

// Average ranks for ties, 1-based.
std::vector<double> average_ranks(const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
    std::vector<double> ranks(v.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
        double avg = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t p = i; p < j; ++p) ranks[order[p]] = avg;
        i = j;
    }
    return ranks;
}

double kendall_tau_b(const std::vector<double>& a, const std::vector<double>& b) {
    long long concordant = 0, discordant = 0, ties_a = 0, ties_b = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = i + 1; j < a.size(); ++j) {
            double da = a[i] - a[j];
            double db = b[i] - b[j];
            if (da == 0.0 && db == 0.0) continue;
            if (da == 0.0)
                ++ties_a;
            else if (db == 0.0)
                ++ties_b;
            else if ((da > 0) == (db > 0))
                ++concordant;
            else
                ++discordant;
        }
    }
    double denom = std::sqrt(static_cast<double>(concordant + discordant + ties_a)) *
                   std::sqrt(static_cast<double>(concordant + discordant + ties_b));
    if (denom == 0.0) throw ValidationError("correlate: kendall undefined for constant input");
    return static_cast<double>(concordant - discordant) / denom;
}

}  // namespace

double correlate(const std::vector<double>& a, const std::vector<double>& b, CorrMethod method) {
    if (a.size() != b.size()) throw ValidationError("correlate: length mismatch");
    if (a.size() < 2) throw ValidationError("correlate: need at least 2 points");
    switch (method) {
        case CorrMethod::Pearson:
            if (is_constant(a) || is_constant(b))
                throw ValidationError("correlate: pearson undefined for constant input");
            return pearson(a, b);
        case CorrMethod::Spearman: {
            if (is_constant(a) || is_constant(b))
                throw ValidationError("correlate: spearman undefined for constant input");
            return pearson(average_ranks(a), average_ranks(b));
        }
        case CorrMethod::Kendall:
            return kendall_tau_b(a, b);
    }
    throw ValidationError("correlate: unknown method");
}

namespace {

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

void EvalReport::write_json(std::ostream& out) const {
    out << "{\"per_image\":[";
    for (std::size_t i = 0; i < per_image.size(); ++i) {
        const auto& row = per_image[i];
        if (i) out << ',';
        out << "{\"image_id\":" << row.image_id << ",\"cider\":" << fixed6(row.cider)
            << ",\"cider_btw\":" << fixed6(row.cider_btw) << '}';
    }
    out << "],\"summary\":{\"images\":" << per_image.size()
        << ",\"mean_cider\":" << fixed6(mean_cider)
        << ",\"mean_cider_x10\":" << fixed6(mean_cider * 10.0)
        << ",\"mean_cider_btw\":" << fixed6(mean_cider_btw)
        << ",\"mean_cider_btw_x10\":" << fixed6(mean_cider_btw * 10.0)
        << ",\"generated_vocab_size\":" << generated_vocab_size;
    if (recall_1) out << ",\"recall_at_1\":" << fixed6(*recall_1);
    if (recall_5) out << ",\"recall_at_5\":" << fixed6(*recall_5);
    if (recall_10) out << ",\"recall_at_10\":" << fixed6(*recall_10);
    out << "}}\n";
}

void EvalReport::write_tsv(std::ostream& out) const {
    out << "metric\traw\tpaper_scale\n";
    out << "mean_cider\t" << fixed6(mean_cider) << '\t' << fixed6(mean_cider * 10.0) << "\n";
    out << "mean_cider_btw\t" << fixed6(mean_cider_btw) << '\t' << fixed6(mean_cider_btw * 10.0)
        << "\n";
    out << "generated_vocab_size\t" << generated_vocab_size << "\t" << generated_vocab_size
        << "\n";
    if (recall_1) out << "recall_at_1\t" << fixed6(*recall_1) << '\t' << fixed6(*recall_1) << "\n";
    if (recall_5) out << "recall_at_5\t" << fixed6(*recall_5) << '\t' << fixed6(*recall_5) << "\n";
    if (recall_10)
        out << "recall_at_10\t" << fixed6(*recall_10) << '\t' << fixed6(*recall_10) << "\n";
}

}  // namespace distcap
