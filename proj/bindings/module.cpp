#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <sstream>

#include "distcap/corpus.hpp"
#include "distcap/distinct.hpp"
#include "distcap/ngram.hpp"
#include "distcap/simset.hpp"
#include "distcap/weights.hpp"

namespace py = pybind11;
using namespace distcap;

namespace {

Split split_from_name(const std::string& name) {
    auto s = parse_split(name);
    if (!s) throw ValidationError("unknown split: " + name);
    return *s;
}

CiderOptions make_opts(const std::string& variant, double sigma) {
    CiderOptions opts;
    opts.sigma = sigma;
    if (variant == "cider-d")
        opts.variant = CiderVariant::CiderD;
    else if (variant == "cider")
        opts.variant = CiderVariant::Plain;
    else
        throw ValidationError("unknown cider variant: " + variant);
    return opts;
}

}  // namespace

PYBIND11_MODULE(_distcap, m) {
    m.doc() = "caption distinctiveness metrics: CIDEr-D, between-set CIDEr, "
              "similar-image sets and training weight manifests";

    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);

    py::class_<Caption>(m, "Caption")
        .def(py::init([](ImageId image_id, int index, std::vector<std::string> tokens) {
                 return Caption{image_id, index, std::move(tokens)};
             }),
             py::arg("image_id"), py::arg("index"), py::arg("tokens"))
        .def_readonly("image_id", &Caption::image_id)
        .def_readonly("index", &Caption::index)
        .def_readonly("tokens", &Caption::tokens);

    py::class_<Corpus>(m, "Corpus")
        .def_static("load", &Corpus::load, py::arg("annotations_path"), py::arg("split_path"))
        .def_static("from_captions",
                    [](std::vector<Caption> captions, std::map<ImageId, std::string> split) {
                        std::unordered_map<ImageId, Split> sp;
                        for (const auto& [id, name] : split) sp[id] = split_from_name(name);
                        return Corpus::from_captions(std::move(captions), std::move(sp));
                    },
                    py::arg("captions"), py::arg("split"))
        .def_property_readonly("image_ids", &Corpus::image_ids)
        .def("captions", &Corpus::captions, py::arg("image_id"),
             py::return_value_policy::reference_internal)
        .def("refs_per_image", &Corpus::refs_per_image, py::arg("image_id"))
        .def("split_of", [](const Corpus& c, ImageId id) { return split_name(c.split_of(id)); })
        .def("split_images",
             [](const Corpus& c, const std::string& s) { return c.split_images(split_from_name(s)); });

    m.def("tokenize", [](const std::string& raw) { return tokenize(raw); }, py::arg("raw"));

    m.def("extract_ngrams",
          [](const std::vector<std::string>& tokens, int n) {
              std::map<std::string, int> out;
              for (const auto& [gram, count] : extract_ngrams(tokens, n)) {
                  std::string key;
                  for (std::size_t i = 0; i < gram.size(); ++i) {
                      if (i) key.push_back(' ');
                      key += gram[i];
                  }
                  out[key] = count;
              }
              return out;
          },
          py::arg("tokens"), py::arg("n"));

    py::class_<VocabStats>(m, "VocabStats")
        .def_property_readonly("vocab_size", &VocabStats::vocab_size)
        .def_readonly("total_tokens", &VocabStats::total_tokens)
        .def("rank", [](const VocabStats& v, const std::string& t) { return v.rank(t); })
        .def("entries", [](const VocabStats& v) {
            py::list out;
            for (const auto& e : v.entries) out.append(py::make_tuple(e.token, e.count, e.rank));
            return out;
        });

    m.def("build_vocab_stats",
          [](const Corpus& corpus, const std::string& split, std::uint64_t min_count) {
              return build_vocab_stats(corpus, split_from_name(split), min_count);
          },
          py::arg("corpus"), py::arg("split"), py::arg("min_count") = 1);

    m.def("frequency_curve", [](const VocabStats& stats) {
        py::list out;
        for (const auto& b : frequency_curve(stats))
            out.append(py::make_tuple(b.frequency, b.log10_frequency, b.cumulative_words));
        return out;
    });

    py::class_<DfTable>(m, "DfTable")
        .def_static("build",
                    [](const Corpus& corpus, const std::string& split) {
                        return DfTable::build(corpus, split_from_name(split));
                    },
                    py::arg("corpus"), py::arg("split") = "train")
        .def_property_readonly("image_count", &DfTable::image_count)
        .def("df", [](DfTable& t, const std::vector<std::string>& gram) {
            NGramKey key;
            if (gram.empty() || gram.size() > kMaxN)
                throw ValidationError("gram length must be 1..4");
            key.n = static_cast<std::uint8_t>(gram.size());
            for (std::size_t i = 0; i < gram.size(); ++i) {
                auto tok = t.space().find_token(gram[i]);
                if (!tok) return std::uint32_t{0};
                key.tok[i] = *tok;
            }
            return t.df(key);
        });

    m.def("cider_d",
          [](const std::vector<std::string>& candidate,
             const std::vector<std::vector<std::string>>& references, DfTable& df,
             const std::string& variant, double sigma) {
              auto cand = tfidf_vector(candidate, df);
              std::vector<TfIdfVector> refs;
              for (const auto& r : references) refs.push_back(tfidf_vector(r, df));
              return cider_d(cand, refs, make_opts(variant, sigma));
          },
          py::arg("candidate"), py::arg("references"), py::arg("df"),
          py::arg("variant") = "cider-d", py::arg("sigma") = 6.0);

    py::class_<SimilarSet>(m, "SimilarSet")
        .def_readonly("target", &SimilarSet::target)
        .def_property_readonly("strategy",
                               [](const SimilarSet& s) { return strategy_name(s.strategy); })
        .def_readonly("neighbors", &SimilarSet::neighbors);

    m.def("cider_similarity",
          [](ImageId i, ImageId j, DfTable& df, const Corpus& corpus, const std::string& variant,
             double sigma) { return cider_similarity(i, j, df, corpus, make_opts(variant, sigma)); },
          py::arg("i"), py::arg("j"), py::arg("df"), py::arg("corpus"),
          py::arg("variant") = "cider-d", py::arg("sigma") = 6.0);

    py::class_<EmbeddingTable>(m, "EmbeddingTable")
        .def_static("load", &EmbeddingTable::load, py::arg("path"))
        .def_static("from_vectors", &EmbeddingTable::from_vectors, py::arg("dim"),
                    py::arg("image_vecs"), py::arg("caption_vecs"))
        .def_property_readonly("dim", &EmbeddingTable::dim);

    m.def("vse_similarity", &vse_similarity, py::arg("i"), py::arg("j"), py::arg("emb"));
    m.def("image_feature_similarity", &image_feature_similarity, py::arg("i"), py::arg("j"),
          py::arg("emb"));
    m.def("build_set_retrieval", &build_set_retrieval, py::arg("target"), py::arg("k"),
          py::arg("emb"), py::arg("corpus"));

    m.def("build_sets_cider",
          [](const Corpus& corpus, const std::string& split, int k, DfTable& df,
             const std::string& variant, double sigma, int threads) {
              return build_sets_cider(corpus, split_from_name(split), k, df,
                                      make_opts(variant, sigma), threads);
          },
          py::arg("corpus"), py::arg("split"), py::arg("k"), py::arg("df"),
          py::arg("variant") = "cider-d", py::arg("sigma") = 6.0, py::arg("threads") = 1);

    m.def("build_sets_random",
          [](const Corpus& corpus, const std::string& split, int k, std::uint64_t seed) {
              return build_sets_random(corpus, split_from_name(split), k, seed);
          },
          py::arg("corpus"), py::arg("split"), py::arg("k"), py::arg("seed") = 0);

    m.def("cider_btw",
          [](const std::vector<std::string>& tokens, const SimilarSet& set, const Corpus& corpus,
             DfTable& df, const std::string& variant, double sigma) {
              return cider_btw(tokens, set, corpus, df, make_opts(variant, sigma));
          },
          py::arg("caption_tokens"), py::arg("similar_set"), py::arg("corpus"), py::arg("df"),
          py::arg("variant") = "cider-d", py::arg("sigma") = 6.0);

    m.def("recall_at_k", &recall_at_k, py::arg("queries"), py::arg("gallery"), py::arg("k"));

    m.def("correlate",
          [](const std::vector<double>& a, const std::vector<double>& b,
             const std::string& method) {
              auto mm = parse_corr_method(method);
              if (!mm) throw ValidationError("unknown correlation method: " + method);
              return correlate(a, b, *mm);
          },
          py::arg("a"), py::arg("b"), py::arg("method"));

    py::class_<CaptionWeights>(m, "CaptionWeights")
        .def_readonly("image_id", &CaptionWeights::image_id)
        .def("weights", [](const CaptionWeights& cw) {
            py::list out;
            for (const auto& w : cw.weights) out.append(py::make_tuple(w.index, w.v, w.w));
            return out;
        });

    m.def("caption_weights",
          [](ImageId target, const SimilarSet& set, const Corpus& corpus, DfTable& df,
             double lambda_w, double alpha_w, const std::string& variant, double sigma) {
              return caption_weights(target, set, corpus, df, lambda_w, alpha_w,
                                     make_opts(variant, sigma));
          },
          py::arg("target"), py::arg("similar_set"), py::arg("corpus"), py::arg("df"),
          py::arg("lambda_w") = 1.5, py::arg("alpha_w") = 0.75, py::arg("variant") = "cider-d",
          py::arg("sigma") = 6.0);

    m.def("ltw_weight",
          [](std::uint32_t rank, std::uint32_t f_begin, std::uint32_t f_end, double amplitude) {
              return ltw_weight(rank, LtwParams{f_begin, f_end, amplitude});
          },
          py::arg("rank"), py::arg("f_begin") = 5000, py::arg("f_end") = 9487,
          py::arg("amplitude") = 1.0);

    m.def("rl_reward",
          [](const std::vector<std::string>& candidate, ImageId target, const CaptionWeights& cw,
             const SimilarSet& set, const Corpus& corpus, DfTable& df, double alpha_r,
             const std::string& variant, double sigma) {
              return rl_reward(candidate, target, cw, set, corpus, df, alpha_r,
                               make_opts(variant, sigma));
          },
          py::arg("candidate_tokens"), py::arg("target"), py::arg("caption_weights"),
          py::arg("similar_set"), py::arg("corpus"), py::arg("df"), py::arg("alpha_r") = 0.3,
          py::arg("variant") = "cider-d", py::arg("sigma") = 6.0);

    m.def("combine_losses", &combine_losses, py::arg("l_xe"), py::arg("l_rl"), py::arg("alpha_l"));
}
