// Command-line surface binding ingest, similar-set construction, evaluation,
// weight-manifest generation, benchmarking and vocabulary statistics into
// reproducible pipelines.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "distcap/corpus.hpp"
#include "distcap/distinct.hpp"
#include "distcap/ngram.hpp"
#include "distcap/simset.hpp"
#include "distcap/weights.hpp"

namespace {

using namespace distcap;

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

Corpus load_cache_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open cache file: " + path);
    return Corpus::load_cache(in);
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write output file: " + path);
    return out;
}

Split require_split(const std::string& name) {
    auto s = parse_split(name);
    if (!s) throw ValidationError("unknown split: " + name);
    return *s;
}

CiderOptions cider_options(const std::string& variant, double sigma) {
    CiderOptions opts;
    opts.sigma = sigma;
    if (variant == "cider-d")
        opts.variant = CiderVariant::CiderD;
    else if (variant == "cider")
        opts.variant = CiderVariant::Plain;
    else
        throw ValidationError("unknown cider variant: " + variant + " (use cider-d or cider)");
    return opts;
}

std::map<ImageId, SimilarSet> load_sets_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open similar-set file: " + path);
    return load_simsets_jsonl(in);
}

struct IngestArgs {
    std::string annotations, split, out, vocab_out, df_out;
    std::string df_split = "train";
    std::uint64_t min_count = 1;
};

void run_ingest(const IngestArgs& args) {
    Corpus corpus = Corpus::load(args.annotations, args.split);
    auto out = open_out(args.out);
    corpus.save_cache(out);
    if (!args.vocab_out.empty()) {
        auto stats = build_vocab_stats(corpus, require_split(args.df_split), args.min_count);
        auto vout = open_out(args.vocab_out);
        write_vocab_tsv(stats, vout);
    }
    if (!args.df_out.empty()) {
        DfTable df = DfTable::build(corpus, require_split(args.df_split));
        auto dout = open_out(args.df_out);
        df.write_tsv(dout);
    }
}

struct SimsetArgs {
    std::string cache, out, embeddings;
    std::string split = "train";
    std::string strategy = "cider";
    std::string variant = "cider-d";
    double sigma = 6.0;
    int k = 5;
    std::uint64_t seed = 0;
    int threads = 1;
};

void run_simsets(const SimsetArgs& args) {
    Corpus corpus = load_cache_file(args.cache);
    Split split = require_split(args.split);
    auto strategy = parse_strategy(args.strategy);
    if (!strategy) throw ValidationError("unknown strategy: " + args.strategy);

    std::map<ImageId, SimilarSet> sets;
    if (*strategy == SimStrategy::Cider) {
        DfTable df = DfTable::build(corpus, Split::Train);
        sets = build_sets_cider(corpus, split, args.k, df,
                                cider_options(args.variant, args.sigma), args.threads);
    } else if (*strategy == SimStrategy::Random) {
        sets = build_sets_random(corpus, split, args.k, args.seed);
    } else {
        if (args.embeddings.empty())
            throw ValidationError("strategy '" + args.strategy +
                                  "' requires an embedding file (--embeddings)");
        EmbeddingTable emb = EmbeddingTable::load(args.embeddings);
        if (*strategy == SimStrategy::EmbedRetrieval)
            sets = build_sets_retrieval(corpus, split, args.k, emb, args.threads);
        else
            sets = build_sets_image(corpus, split, args.k, emb, args.threads);
    }
    auto out = open_out(args.out);
    write_simsets_jsonl(sets, out);
}

struct EvalArgs {
    std::string cache, generated, simsets, embeddings, gen_embeddings, out;
    std::string variant = "cider-d";
    double sigma = 6.0;
    int threads = 1;
};

void run_eval(const EvalArgs& args) {
    Corpus corpus = load_cache_file(args.cache);
    DfTable df = DfTable::build(corpus, Split::Train);
    auto generated = GeneratedCaptions::load_jsonl(args.generated);
    auto sets = load_sets_file(args.simsets);

    std::optional<EmbeddingTable> emb;
    std::map<ImageId, std::vector<double>> queries;
    if (!args.embeddings.empty() && !args.gen_embeddings.empty()) {
        emb = EmbeddingTable::load(args.embeddings);
        EmbeddingTable gen_emb = EmbeddingTable::load(args.gen_embeddings);
        for (const auto& [key, vec] : gen_emb.caption_vecs()) queries[key.first] = vec;
        for (const auto& [id, vec] : gen_emb.image_vecs())
            if (!queries.count(id)) queries[id] = vec;
    }

    EvalReport report =
        evaluate(generated, corpus, sets, df, emb ? &*emb : nullptr,
                 queries.empty() ? nullptr : &queries, cider_options(args.variant, args.sigma),
                 args.threads);
    auto jout = open_out(args.out + ".json");
    report.write_json(jout);
    auto tout = open_out(args.out + ".tsv");
    report.write_tsv(tout);
}

struct WeightsArgs {
    std::string cache, simsets, out;
    std::string split = "train";
    std::string neg_scope = "own";
    std::string variant = "cider-d";
    HyperParams params;
    int threads = 1;
};

void run_weights(const WeightsArgs& args) {
    Corpus corpus = load_cache_file(args.cache);
    Split split = require_split(args.split);
    DfTable df = DfTable::build(corpus, Split::Train);
    auto sets = load_sets_file(args.simsets);
    auto vocab = build_vocab_stats(corpus, Split::Train);

    NegativeWeightScope scope;
    if (args.neg_scope == "own")
        scope = NegativeWeightScope::OwnSet;
    else if (args.neg_scope == "target")
        scope = NegativeWeightScope::TargetSet;
    else
        throw ValidationError("unknown negative weight scope: " + args.neg_scope);

    HyperParams params = args.params;
    if (!sets.empty()) params.k = static_cast<int>(sets.begin()->second.neighbors.size());

    WeightManifest manifest = build_manifest(corpus, split, sets, df, vocab, params, scope,
                                             cider_options(args.variant, params.sigma),
                                             args.threads);
    auto out = open_out(args.out);
    write_manifest(manifest, out);
}

struct BenchArgs {
    std::string cache, out;
    std::string split = "train";
    std::string variant = "cider-d";
    double sigma = 6.0;
    int k = 5;
    int threads = 1;
};

void run_bench(const BenchArgs& args) {
    Corpus corpus = load_cache_file(args.cache);
    Split split = require_split(args.split);
    DfTable df = DfTable::build(corpus, Split::Train);
    SimsetBuildStats stats;
    auto sets = build_sets_cider(corpus, split, args.k, df,
                                 cider_options(args.variant, args.sigma), args.threads, &stats);

    // order-independent checksum over the resulting sets
    std::uint64_t checksum = 1469598103934665603ull;
    for (const auto& [target, set] : sets) {
        checksum ^= static_cast<std::uint64_t>(target) * 1099511628211ull;
        for (const auto& [id, score] : set.neighbors) {
            checksum = checksum * 1099511628211ull + static_cast<std::uint64_t>(id);
            checksum ^= static_cast<std::uint64_t>(std::llround(score * 1e6));
        }
    }

    auto out = open_out(args.out);
    out << "{\"images\":" << corpus.split_size(split) << ",\"k\":" << args.k
        << ",\"pairs_total\":" << stats.pairs_total
        << ",\"pairs_scored\":" << stats.pairs_scored
        << ",\"pruned_fraction\":" << fixed6(stats.pruned_fraction())
        << ",\"sets_checksum\":" << checksum
        << ",\"wall_seconds\":" << fixed6(stats.wall_seconds) << "}\n";
    std::cerr << "bench: " << corpus.split_size(split) << " images, "
              << fixed6(stats.wall_seconds) << " s, pruned "
              << fixed6(100.0 * stats.pruned_fraction()) << "% of candidate pairs\n";
}

struct StatsArgs {
    std::string cache, out, vocab_out;
    std::string split = "train";
    std::uint64_t min_count = 1;
};

void run_stats(const StatsArgs& args) {
    Corpus corpus = load_cache_file(args.cache);
    auto stats = build_vocab_stats(corpus, require_split(args.split), args.min_count);
    auto curve = frequency_curve(stats);
    auto out = open_out(args.out);
    write_frequency_curve_tsv(curve, out);
    if (!args.vocab_out.empty()) {
        auto vout = open_out(args.vocab_out);
        write_vocab_tsv(stats, vout);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"distinctive-caption metrics toolkit"};
    app.require_subcommand(1);
    app.set_config("--config", "", "key=value config file; flags take precedence");

    IngestArgs ingest;
    auto* cmd_ingest = app.add_subcommand("ingest", "load annotations, build the corpus cache");
    cmd_ingest->add_option("--annotations", ingest.annotations, "COCO-caption JSON")->required();
    cmd_ingest->add_option("--split", ingest.split, "split TSV (<image_id>\\t<split>)")->required();
    cmd_ingest->add_option("--out", ingest.out, "corpus cache output path")->required();
    cmd_ingest->add_option("--vocab-out", ingest.vocab_out, "vocabulary TSV output");
    cmd_ingest->add_option("--df-out", ingest.df_out, "document-frequency TSV output");
    cmd_ingest->add_option("--df-split", ingest.df_split, "split for vocab/df statistics");
    cmd_ingest->add_option("--min-count", ingest.min_count, "vocabulary min count cutoff");

    SimsetArgs simsets;
    auto* cmd_simsets = app.add_subcommand("simsets", "build similar-image sets");
    cmd_simsets->add_option("--cache", simsets.cache, "corpus cache")->required();
    cmd_simsets->add_option("--out", simsets.out, "similar-set JSONL output")->required();
    cmd_simsets->add_option("--split", simsets.split, "split to build sets for");
    cmd_simsets->add_option("--strategy", simsets.strategy,
                            "cider | embed-retrieval | embed-image | random");
    cmd_simsets->add_option("--k", simsets.k, "set size K");
    cmd_simsets->add_option("--embeddings", simsets.embeddings, "embedding file");
    cmd_simsets->add_option("--seed", simsets.seed, "random strategy seed");
    cmd_simsets->add_option("--threads", simsets.threads, "worker threads");
    cmd_simsets->add_option("--cider-variant", simsets.variant, "cider-d | cider");
    cmd_simsets->add_option("--sigma", simsets.sigma, "length penalty sigma");

    EvalArgs eval;
    auto* cmd_eval = app.add_subcommand("eval", "score a generated-caption file");
    cmd_eval->add_option("--cache", eval.cache, "corpus cache")->required();
    cmd_eval->add_option("--generated", eval.generated, "generated captions JSONL")->required();
    cmd_eval->add_option("--simsets", eval.simsets, "similar-set JSONL")->required();
    cmd_eval->add_option("--out", eval.out, "report path prefix (.json/.tsv appended)")
        ->required();
    cmd_eval->add_option("--embeddings", eval.embeddings, "gallery embedding file");
    cmd_eval->add_option("--gen-embeddings", eval.gen_embeddings,
                         "generated-caption embedding file");
    cmd_eval->add_option("--threads", eval.threads, "worker threads");
    cmd_eval->add_option("--cider-variant", eval.variant, "cider-d | cider");
    cmd_eval->add_option("--sigma", eval.sigma, "length penalty sigma");

    WeightsArgs weights;
    auto* cmd_weights = app.add_subcommand("weights", "emit the training weight manifest");
    cmd_weights->add_option("--cache", weights.cache, "corpus cache")->required();
    cmd_weights->add_option("--simsets", weights.simsets, "similar-set JSONL")->required();
    cmd_weights->add_option("--out", weights.out, "manifest JSONL output")->required();
    cmd_weights->add_option("--split", weights.split, "split to build the manifest for");
    cmd_weights->add_option("--lambda-w", weights.params.lambda_w, "caption weight lambda_w");
    cmd_weights->add_option("--alpha-w", weights.params.alpha_w, "caption weight alpha_w");
    cmd_weights->add_option("--alpha-r", weights.params.alpha_r, "reward alpha_r");
    cmd_weights->add_option("--alpha-ns", weights.params.alpha_ns, "negative-sample alpha_NS");
    cmd_weights->add_option("--ltw-a", weights.params.ltw.amplitude, "long-tail amplitude A");
    cmd_weights->add_option("--f-b", weights.params.ltw.f_begin, "long-tail begin rank F_b");
    cmd_weights->add_option("--f-e", weights.params.ltw.f_end, "long-tail end rank F_e");
    cmd_weights->add_option("--neg-scope", weights.neg_scope,
                            "negative caption weight scope: own | target");
    cmd_weights->add_option("--threads", weights.threads, "worker threads");
    cmd_weights->add_option("--cider-variant", weights.variant, "cider-d | cider");
    cmd_weights->add_option("--sigma", weights.params.sigma, "length penalty sigma");

    BenchArgs bench;
    auto* cmd_bench = app.add_subcommand("bench", "time similar-set construction");
    cmd_bench->add_option("--cache", bench.cache, "corpus cache")->required();
    cmd_bench->add_option("--out", bench.out, "bench report JSON output")->required();
    cmd_bench->add_option("--split", bench.split, "split to benchmark");
    cmd_bench->add_option("--k", bench.k, "set size K");
    cmd_bench->add_option("--threads", bench.threads, "worker threads");
    cmd_bench->add_option("--cider-variant", bench.variant, "cider-d | cider");
    cmd_bench->add_option("--sigma", bench.sigma, "length penalty sigma");

    StatsArgs stats;
    auto* cmd_stats = app.add_subcommand("stats", "export word-frequency statistics");
    cmd_stats->add_option("--cache", stats.cache, "corpus cache")->required();
    cmd_stats->add_option("--out", stats.out, "frequency curve TSV output")->required();
    cmd_stats->add_option("--split", stats.split, "split to analyze");
    cmd_stats->add_option("--vocab-out", stats.vocab_out, "vocabulary TSV output");
    cmd_stats->add_option("--min-count", stats.min_count, "vocabulary min count cutoff");

    try {
        app.parse(argc, argv);
        if (cmd_ingest->parsed()) run_ingest(ingest);
        if (cmd_simsets->parsed()) run_simsets(simsets);
        if (cmd_eval->parsed()) run_eval(eval);
        if (cmd_weights->parsed()) run_weights(weights);
        if (cmd_bench->parsed()) run_bench(bench);
        if (cmd_stats->parsed()) run_stats(stats);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
