#include "distcap/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace distcap {

const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

std::optional<Split> parse_split(std::string_view name) {
    if (name == "train") return Split::Train;
    if (name == "val") return Split::Val;
    if (name == "test") return Split::Test;
    return std::nullopt;
}

std::vector<std::string> tokenize(std::string_view raw) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : raw) {
        char c = ch;
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
        if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) {
            cur.push_back(c);
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

namespace {

std::unordered_map<ImageId, Split> load_split_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open split file: " + path);
    std::unordered_map<ImageId, Split> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw ParseError("split file " + path + ": line " + std::to_string(lineno) +
                             ": expected <image_id>\\t<split>");
        ImageId id = 0;
        try {
            id = std::stoll(line.substr(0, tab));
        } catch (const std::exception&) {
            throw ParseError("split file " + path + ": line " + std::to_string(lineno) +
                             ": bad image id '" + line.substr(0, tab) + "'");
        }
        std::string name = line.substr(tab + 1);
        if (!name.empty() && name.back() == '\r') name.pop_back();
        auto split = parse_split(name);
        if (!split)
            throw ParseError("split file " + path + ": line " + std::to_string(lineno) +
                             ": unknown split '" + name + "'");
        out[id] = *split;
    }
    return out;
}

std::string join_ids(const std::vector<ImageId>& ids, std::size_t limit = 10) {
    std::ostringstream os;
    for (std::size_t i = 0; i < ids.size() && i < limit; ++i) {
        if (i) os << ", ";
        os << ids[i];
    }
    if (ids.size() > limit) os << ", ... (" << ids.size() << " total)";
    return os.str();
}

}  // namespace

Corpus Corpus::load(const std::string& annotations_path, const std::string& split_path) {
    std::ifstream in(annotations_path);
    if (!in) throw ValidationError("cannot open annotations file: " + annotations_path);
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("annotations file " + annotations_path + ": " + e.what());
    }

    std::set<ImageId> known_images;
    for (const auto& img : doc.at("images")) {
        known_images.insert(img.at("id").get<ImageId>());
    }

    std::map<ImageId, std::vector<Caption>> by_image;
    std::vector<ImageId> unknown;
    for (const auto& ann : doc.at("annotations")) {
        ImageId id = ann.at("image_id").get<ImageId>();
        if (!known_images.count(id)) {
            unknown.push_back(id);
            continue;
        }
        std::string raw = ann.at("caption").get<std::string>();
        auto tokens = tokenize(raw);
        if (tokens.empty())
            throw ValidationError("annotations file " + annotations_path + ": image " +
                                  std::to_string(id) + " has an empty caption after tokenization");
        Caption cap;
        cap.image_id = id;
        cap.index = static_cast<int>(by_image[id].size());
        cap.tokens = std::move(tokens);
        by_image[id].push_back(std::move(cap));
    }
    if (!unknown.empty()) {
        std::sort(unknown.begin(), unknown.end());
        unknown.erase(std::unique(unknown.begin(), unknown.end()), unknown.end());
        throw ValidationError("annotations reference absent image ids: " + join_ids(unknown));
    }

    std::vector<ImageId> captionless;
    for (ImageId id : known_images)
        if (!by_image.count(id)) captionless.push_back(id);
    if (!captionless.empty())
        throw ValidationError("images without captions: " + join_ids(captionless));

    auto split = load_split_file(split_path);
    std::vector<ImageId> bad_split;
    for (const auto& [id, s] : split) {
        (void)s;
        if (!known_images.count(id)) bad_split.push_back(id);
    }
    if (!bad_split.empty()) {
        std::sort(bad_split.begin(), bad_split.end());
        throw ValidationError("split file names unknown image ids: " + join_ids(bad_split));
    }
    std::vector<ImageId> missing;
    for (ImageId id : known_images)
        if (!split.count(id)) missing.push_back(id);
    if (!missing.empty())
        throw ValidationError("split file does not cover image ids: " + join_ids(missing));

    std::vector<Caption> all;
    for (auto& [id, caps] : by_image)
        for (auto& c : caps) all.push_back(std::move(c));
    return from_captions(std::move(all), std::move(split));
}

Corpus Corpus::from_captions(std::vector<Caption> captions,
                             std::unordered_map<ImageId, Split> split) {
    std::map<ImageId, std::vector<Caption>> by_image;
    for (auto& c : captions) {
        if (c.tokens.empty())
            throw ValidationError("caption with no tokens for image " + std::to_string(c.image_id));
        by_image[c.image_id].push_back(std::move(c));
    }
    if (by_image.empty()) throw ValidationError("corpus has no captions");

    Corpus corpus;
    for (auto& [id, caps] : by_image) {
        auto it = split.find(id);
        if (it == split.end())
            throw ValidationError("no split assignment for image " + std::to_string(id));
        corpus.index_[id] = corpus.ids_.size();
        corpus.ids_.push_back(id);
        for (std::size_t i = 0; i < caps.size(); ++i) caps[i].index = static_cast<int>(i);
        corpus.captions_.push_back(std::move(caps));
        corpus.splits_.push_back(it->second);
    }
    return corpus;
}

std::size_t Corpus::index_of(ImageId id) const {
    auto it = index_.find(id);
    if (it == index_.end())
        throw ValidationError("unknown image id: " + std::to_string(id));
    return it->second;
}

const std::vector<Caption>& Corpus::captions(ImageId id) const {
    return captions_[index_of(id)];
}

int Corpus::refs_per_image(ImageId id) const {
    return static_cast<int>(captions_[index_of(id)].size());
}

Split Corpus::split_of(ImageId id) const { return splits_[index_of(id)]; }

std::vector<ImageId> Corpus::split_images(Split s) const {
    std::vector<ImageId> out;
    for (std::size_t i = 0; i < ids_.size(); ++i)
        if (splits_[i] == s) out.push_back(ids_[i]);
    return out;
}

std::size_t Corpus::split_size(Split s) const {
    std::size_t n = 0;
    for (Split sp : splits_)
        if (sp == s) ++n;
    return n;
}

void Corpus::save_cache(std::ostream& out) const {
    out << "#distcap-corpus v1 images=" << ids_.size() << "\n";
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        out << "I\t" << ids_[i] << '\t' << split_name(splits_[i]) << '\t'
            << captions_[i].size() << "\n";
        for (const auto& cap : captions_[i]) {
            out << "C";
            for (const auto& t : cap.tokens) out << '\t' << t;
            out << "\n";
        }
    }
}

Corpus Corpus::load_cache(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("#distcap-corpus v1", 0) != 0)
        throw ParseError("corpus cache: missing header line");

    std::vector<Caption> captions;
    std::unordered_map<ImageId, Split> split;
    ImageId cur_id = 0;
    int expected = 0;
    int seen = 0;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            auto tab = line.find('\t', start);
            fields.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (fields[0] == "I") {
            if (fields.size() != 4)
                throw ParseError("corpus cache line " + std::to_string(lineno) + ": bad image row");
            if (seen != expected)
                throw ParseError("corpus cache line " + std::to_string(lineno) +
                                 ": caption count mismatch");
            cur_id = std::stoll(fields[1]);
            auto s = parse_split(fields[2]);
            if (!s)
                throw ParseError("corpus cache line " + std::to_string(lineno) + ": bad split");
            split[cur_id] = *s;
            expected = std::stoi(fields[3]);
            seen = 0;
        } else if (fields[0] == "C") {
            Caption cap;
            cap.image_id = cur_id;
            cap.index = seen++;
            cap.tokens.assign(fields.begin() + 1, fields.end());
            captions.push_back(std::move(cap));
        } else {
            throw ParseError("corpus cache line " + std::to_string(lineno) +
                             ": unknown row type '" + fields[0] + "'");
        }
    }
    return from_captions(std::move(captions), std::move(split));
}

std::uint32_t VocabStats::rank(std::string_view token) const {
    auto it = rank_of.find(std::string(token));
    return it == rank_of.end() ? 0 : it->second;
}

VocabStats build_vocab_stats(const Corpus& corpus, Split split, std::uint64_t min_count) {
    std::map<std::string, std::uint64_t> counts;  // ordered: lexicographic tie rule for free
    std::uint64_t total = 0;
    bool any = false;
    for (ImageId id : corpus.split_images(split)) {
        any = true;
        for (const auto& cap : corpus.captions(id)) {
            for (const auto& t : cap.tokens) {
                ++counts[t];
                ++total;
            }
        }
    }
    if (!any) throw ValidationError(std::string("empty split: ") + split_name(split));

    VocabStats stats;
    stats.total_tokens = total;
    for (auto& [token, count] : counts) {
        if (count < min_count) continue;
        stats.entries.push_back(VocabEntry{token, count, 0});
    }
    // Descending count; lexicographically smaller token wins ties. counts was
    // already token-sorted, so stable_sort keeps that order inside a tie.
    std::stable_sort(stats.entries.begin(), stats.entries.end(),
                     [](const VocabEntry& a, const VocabEntry& b) { return a.count > b.count; });
    for (std::size_t i = 0; i < stats.entries.size(); ++i) {
        stats.entries[i].rank = static_cast<std::uint32_t>(i + 1);
        stats.rank_of[stats.entries[i].token] = stats.entries[i].rank;
    }
    return stats;
}

std::vector<FreqBucket> frequency_curve(const VocabStats& stats) {
    if (stats.entries.empty()) throw ValidationError("frequency_curve: empty vocabulary");
    std::map<std::uint64_t, std::uint64_t> words_at;  // count value -> #words
    for (const auto& e : stats.entries) ++words_at[e.count];
    std::vector<FreqBucket> curve;
    std::uint64_t cum = 0;
    for (const auto& [freq, nwords] : words_at) {
        cum += nwords;
        curve.push_back(FreqBucket{freq, std::log10(static_cast<double>(freq)), cum});
    }
    return curve;
}

void write_vocab_tsv(const VocabStats& stats, std::ostream& out) {
    for (const auto& e : stats.entries)
        out << e.token << '\t' << e.count << '\t' << e.rank << "\n";
}

void write_frequency_curve_tsv(const std::vector<FreqBucket>& curve, std::ostream& out) {
    char buf[32];
    out << "frequency\tlog10_frequency\tcumulative_words\n";
    for (const auto& b : curve) {
        std::snprintf(buf, sizeof(buf), "%.6f", b.log10_frequency);
        out << b.frequency << '\t' << buf << '\t' << b.cumulative_words << "\n";
    }
}

}  // namespace distcap
