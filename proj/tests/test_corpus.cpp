#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "distcap/corpus.hpp"
#include "synth.hpp"

using namespace distcap;

TEST_CASE("tokenize lowercases and splits on non-alphanumerics") {
    CHECK(tokenize("A man, riding; a horse!") ==
          std::vector<std::string>{"a", "man", "riding", "a", "horse"});
    CHECK(tokenize("Two dogs") == std::vector<std::string>{"two", "dogs"});
    CHECK(tokenize("...!?,") == std::vector<std::string>{});
    CHECK(tokenize("") == std::vector<std::string>{});
    CHECK(tokenize("3 red cars") == std::vector<std::string>{"3", "red", "cars"});
    CHECK(tokenize("don't") == std::vector<std::string>{"don", "t"});
}

TEST_CASE("corpus load validates annotations against the split file") {
    auto dir = std::string("corpus_load_tmp");
    synth::CapsByImage caps;
    caps[1] = {{"a", "dog", "runs"}, {"a", "dog", "sits"}};
    caps[2] = {{"a", "cat", "sleeps"}};
    synth::write_coco_json(caps, "ann.json");
    synth::write_split_tsv(caps, "split.tsv");

    SUBCASE("round trip") {
        Corpus c = Corpus::load("ann.json", "split.tsv");
        CHECK(c.image_count() == 2);
        CHECK(c.refs_per_image(1) == 2);
        CHECK(c.captions(2)[0].tokens == std::vector<std::string>{"a", "cat", "sleeps"});
        CHECK(c.split_of(1) == Split::Train);
    }
    SUBCASE("missing annotation file") {
        CHECK_THROWS_AS(Corpus::load("no_such.json", "split.tsv"), ValidationError);
    }
    SUBCASE("annotation for unknown image id") {
        std::ofstream out("bad_ann.json");
        out << R"({"images":[{"id":1}],"annotations":[)"
            << R"({"id":1,"image_id":1,"caption":"a dog"},)"
            << R"({"id":2,"image_id":9,"caption":"ghost"}]})";
        out.close();
        std::ofstream sp("bad_split.tsv");
        sp << "1\ttrain\n";
        sp.close();
        try {
            Corpus::load("bad_ann.json", "bad_split.tsv");
            FAIL("expected ValidationError");
        } catch (const ValidationError& e) {
            CHECK(std::string(e.what()).find("9") != std::string::npos);
        }
    }
    SUBCASE("image with no captions") {
        std::ofstream out("nocap_ann.json");
        out << R"({"images":[{"id":1},{"id":2}],"annotations":[)"
            << R"({"id":1,"image_id":1,"caption":"a dog"}]})";
        out.close();
        std::ofstream sp("nocap_split.tsv");
        sp << "1\ttrain\n2\ttrain\n";
        sp.close();
        CHECK_THROWS_AS(Corpus::load("nocap_ann.json", "nocap_split.tsv"), ValidationError);
    }
    SUBCASE("split file not covering every image") {
        std::ofstream sp("partial_split.tsv");
        sp << "1\ttrain\n";
        sp.close();
        CHECK_THROWS_AS(Corpus::load("ann.json", "partial_split.tsv"), ValidationError);
    }
    SUBCASE("split file with unknown image") {
        std::ofstream sp("extra_split.tsv");
        sp << "1\ttrain\n2\ttrain\n7\tval\n";
        sp.close();
        CHECK_THROWS_AS(Corpus::load("ann.json", "extra_split.tsv"), ValidationError);
    }
    SUBCASE("malformed split line") {
        std::ofstream sp("garbled_split.tsv");
        sp << "1 train\n";
        sp.close();
        CHECK_THROWS_AS(Corpus::load("ann.json", "garbled_split.tsv"), ParseError);
    }
    (void)dir;
}

TEST_CASE("corpus cache round trip") {
    std::mt19937_64 rng(7);
    auto caps = synth::random_caps(rng, 20, 5, 9, 30);
    Corpus c = synth::to_corpus(caps);

    std::ostringstream buf;
    c.save_cache(buf);
    std::istringstream in(buf.str());
    Corpus back = Corpus::load_cache(in);

    REQUIRE(back.image_ids() == c.image_ids());
    for (ImageId id : c.image_ids()) {
        REQUIRE(back.refs_per_image(id) == c.refs_per_image(id));
        for (int i = 0; i < c.refs_per_image(id); ++i)
            CHECK(back.captions(id)[i].tokens == c.captions(id)[i].tokens);
        CHECK(back.split_of(id) == c.split_of(id));
    }

    std::ostringstream buf2;
    back.save_cache(buf2);
    CHECK(buf.str() == buf2.str());
}

TEST_CASE("cache load rejects malformed input") {
    std::istringstream no_header("I\t1\ttrain\t1\nC\ta\n");
    CHECK_THROWS_AS(Corpus::load_cache(no_header), ParseError);
    std::istringstream bad_row("#distcap-corpus v1 images=1\nX\t1\n");
    CHECK_THROWS_AS(Corpus::load_cache(bad_row), ParseError);
}

TEST_CASE("vocab stats rank by descending count, ties lexicographic") {
    synth::CapsByImage caps;
    caps[1] = {{"b", "b", "a", "c"}};
    caps[2] = {{"a", "b", "c", "d"}};
    Corpus c = synth::to_corpus(caps);
    auto stats = build_vocab_stats(c, Split::Train);

    REQUIRE(stats.vocab_size() == 4);
    CHECK(stats.entries[0].token == "b");  // count 3
    CHECK(stats.entries[1].token == "a");  // count 2, before c
    CHECK(stats.entries[2].token == "c");
    CHECK(stats.entries[3].token == "d");
    CHECK(stats.rank("b") == 1);
    CHECK(stats.rank("d") == 4);
    CHECK(stats.rank("zzz") == 0);
    CHECK(stats.total_tokens == 8);

    auto cut = build_vocab_stats(c, Split::Train, 2);
    CHECK(cut.vocab_size() == 3);
    CHECK(cut.rank("d") == 0);

    CHECK_THROWS_AS(build_vocab_stats(c, Split::Val), ValidationError);
}

TEST_CASE("frequency curve is cumulative and ends at the vocab size") {
    std::mt19937_64 rng(11);
    auto caps = synth::random_caps(rng, 30, 5, 9, 40);
    Corpus c = synth::to_corpus(caps);
    auto stats = build_vocab_stats(c, Split::Train);
    auto curve = frequency_curve(stats);

    REQUIRE(!curve.empty());
    CHECK(curve.back().cumulative_words == stats.vocab_size());
    for (std::size_t i = 1; i < curve.size(); ++i) {
        CHECK(curve[i].frequency > curve[i - 1].frequency);
        CHECK(curve[i].cumulative_words > curve[i - 1].cumulative_words);
    }
    std::uint64_t total = 0;
    std::map<std::uint64_t, int> words_at;
    for (const auto& e : stats.entries) ++words_at[e.count];
    for (const auto& b : curve) {
        total += words_at[b.frequency];
        CHECK(b.cumulative_words == total);
        CHECK(b.log10_frequency == doctest::Approx(std::log10(double(b.frequency))).epsilon(1e-12));
    }
}

TEST_CASE("vocab and curve TSV output is stable") {
    synth::CapsByImage caps;
    caps[1] = {{"a", "a", "b"}};
    Corpus c = synth::to_corpus(caps);
    auto stats = build_vocab_stats(c, Split::Train);

    std::ostringstream v;
    write_vocab_tsv(stats, v);
    CHECK(v.str() == "a\t2\t1\nb\t1\t2\n");

    std::ostringstream f;
    write_frequency_curve_tsv(frequency_curve(stats), f);
    CHECK(f.str() ==
          "frequency\tlog10_frequency\tcumulative_words\n"
          "1\t0.000000\t1\n"
          "2\t0.301030\t2\n");
}
