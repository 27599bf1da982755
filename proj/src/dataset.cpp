#include "pathogan/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include "pathogan/error.hpp"
#include "pathogan/rng.hpp"

namespace pathogan {

namespace {

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) throw InvalidInput("bad number '" + s + "'");
    return v;
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const auto tab = line.find('\t', start);
        fields.push_back(line.substr(start, tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
    }
    return fields;
}

// Indices of k elements chosen uniformly without replacement, ascending.
std::vector<std::size_t> choose(std::size_t n, std::size_t k, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    k = std::min(k, n);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace

std::string hash_hex(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

std::string config_hash(const std::string& canonical_config) { return hash_hex(fnv1a64(canonical_config)); }

std::string format_manifest(const Manifest& manifest) {
    std::ostringstream out;
    out << "# seed=" << manifest.seed << " config_hash=" << manifest.config_hash << '\n';
    for (const auto& e : manifest.entries) {
        out << e.path << '\t' << e.slide_id << '\t' << e.row << '\t' << e.col << '\t'
            << format_double(e.tissue_fraction) << '\t' << to_string(e.coverage) << '\t'
            << (e.label ? to_string(*e.label) : "-") << '\n';
    }
    return out.str();
}

Manifest parse_manifest(const std::string& text) {
    Manifest m;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream header(line.substr(1));
            std::string token;
            while (header >> token) {
                if (token.rfind("seed=", 0) == 0) m.seed = std::stoull(token.substr(5));
                else if (token.rfind("config_hash=", 0) == 0) m.config_hash = token.substr(12);
            }
            continue;
        }
        const auto f = split_tabs(line);
        if (f.size() != 7) throw InvalidInput("manifest line " + std::to_string(line_no) + ": expected 7 fields");
        ManifestEntry e;
        e.path = f[0];
        e.slide_id = f[1];
        e.row = std::stoi(f[2]);
        e.col = std::stoi(f[3]);
        e.tissue_fraction = parse_double(f[4]);
        e.coverage = parse_coverage(f[5]);
        if (f[6] != "-") e.label = parse_label(f[6]);
        m.entries.push_back(std::move(e));
    }
    return m;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write manifest " + path.string());
    out << format_manifest(manifest);
}

Manifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read manifest " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_manifest(buf.str());
}

std::filesystem::path resolve_entry(const std::filesystem::path& manifest_path, const ManifestEntry& entry) {
    const std::filesystem::path p(entry.path);
    if (p.is_absolute()) return p;
    return manifest_path.parent_path() / p;
}

void validate_manifest(const Manifest& manifest, const std::optional<std::filesystem::path>& root) {
    std::unordered_set<std::string> paths;
    for (const auto& e : manifest.entries) {
        if (!paths.insert(e.path).second) throw InvalidInput("duplicate manifest path " + e.path);
        if (root) {
            const std::filesystem::path p(e.path);
            const auto full = p.is_absolute() ? p : *root / p;
            if (!std::filesystem::exists(full)) throw InvalidInput("manifest references missing file " + e.path);
        }
    }
}

SampleOutcome sample_normal_training_set(const Manifest& manifest, const SamplingConfig& cfg) {
    require(cfg.patches_per_slide >= 1, "patches_per_slide must be >= 1");
    require(cfg.min_coverage >= 0.0 && cfg.min_coverage <= 1.0, "min_coverage must lie in [0,1]");

    std::vector<std::string> order;
    std::map<std::string, std::vector<std::size_t>> qualifying;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        const auto& e = manifest.entries[i];
        if (e.label == PatchLabel::tumor) throw InvalidInput("normal training set given a tumor entry: " + e.path);
        if (!qualifying.contains(e.slide_id)) {
            order.push_back(e.slide_id);
            qualifying[e.slide_id];
        }
        if (e.tissue_fraction >= cfg.min_coverage) qualifying[e.slide_id].push_back(i);
    }

    SampleOutcome out;
    out.manifest.seed = cfg.seed;
    out.manifest.config_hash = manifest.config_hash;
    for (const auto& slide : order) {
        const auto& pool = qualifying[slide];
        if (pool.empty()) {
            out.warnings.push_back("slide " + slide + " has no patches with coverage >= " +
                                   format_double(cfg.min_coverage));
            continue;
        }
        Rng rng(derive_seed(cfg.seed, slide));
        for (std::size_t k : choose(pool.size(), static_cast<std::size_t>(cfg.patches_per_slide), rng))
            out.manifest.entries.push_back(manifest.entries[pool[k]]);
    }
    return out;
}

namespace {

struct SlideGroup {
    std::string slide_id;
    std::vector<std::size_t> normal;
    std::vector<std::size_t> tumor;
};

void take_class(const std::vector<std::size_t>& pool, int n, Rng& rng,
                std::vector<std::size_t>& out) {
    for (std::size_t k : choose(pool.size(), static_cast<std::size_t>(n), rng)) out.push_back(pool[k]);
}

Manifest assemble(const Manifest& src, std::vector<std::size_t> indices, std::uint64_t seed) {
    std::sort(indices.begin(), indices.end());
    Manifest m;
    m.seed = seed;
    m.config_hash = src.config_hash;
    for (std::size_t i : indices) m.entries.push_back(src.entries[i]);
    return m;
}

}  // namespace

LabeledSplit build_labeled_split(const Manifest& manifest, const SplitConfig& cfg) {
    require(cfg.n_train_per_class >= 1 && cfg.n_test_per_class >= 1, "split counts must be >= 1");
    const auto n_train = static_cast<std::size_t>(cfg.n_train_per_class);
    const auto n_test = static_cast<std::size_t>(cfg.n_test_per_class);

    std::vector<SlideGroup> groups;
    std::map<std::string, std::size_t> group_of;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        const auto& e = manifest.entries[i];
        if (!e.label) throw InvalidInput("labeled split needs labels; unlabeled entry " + e.path);
        auto [it, inserted] = group_of.try_emplace(e.slide_id, groups.size());
        if (inserted) groups.push_back({e.slide_id, {}, {}});
        auto& g = groups[it->second];
        (*e.label == PatchLabel::tumor ? g.tumor : g.normal).push_back(i);
    }

    if (cfg.allow_slide_overlap) {
        std::vector<std::size_t> normal, tumor;
        for (const auto& g : groups) {
            normal.insert(normal.end(), g.normal.begin(), g.normal.end());
            tumor.insert(tumor.end(), g.tumor.begin(), g.tumor.end());
        }
        std::sort(normal.begin(), normal.end());
        std::sort(tumor.begin(), tumor.end());
        if (normal.size() < n_train + n_test || tumor.size() < n_train + n_test)
            throw SplitInfeasible("not enough patches per class for the requested split");
        Rng rng(derive_seed(cfg.seed, "split"));
        std::vector<std::size_t> train, test;
        for (const auto* pool : {&normal, &tumor}) {
            auto picked = choose(pool->size(), n_train + n_test, rng);
            // Shuffle the picked positions so the test subset is random too.
            for (std::size_t i = picked.size(); i > 1; --i) std::swap(picked[i - 1], picked[rng.below(i)]);
            for (std::size_t k = 0; k < picked.size(); ++k)
                (k < n_test ? test : train).push_back((*pool)[picked[k]]);
        }
        return {assemble(manifest, train, cfg.seed), assemble(manifest, test, cfg.seed)};
    }

    constexpr int kAttempts = 64;
    for (int attempt = 0; attempt < kAttempts; ++attempt) {
        Rng rng(derive_seed(cfg.seed, "split#" + std::to_string(attempt)));
        std::vector<std::size_t> order(groups.size());
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

        std::vector<std::size_t> test_normal, test_tumor, train_normal, train_tumor;
        for (std::size_t gi : order) {
            const auto& g = groups[gi];
            const bool test_short = (test_normal.size() < n_test && !g.normal.empty()) ||
                                    (test_tumor.size() < n_test && !g.tumor.empty());
            auto& dst_n = test_short ? test_normal : train_normal;
            auto& dst_t = test_short ? test_tumor : train_tumor;
            dst_n.insert(dst_n.end(), g.normal.begin(), g.normal.end());
            dst_t.insert(dst_t.end(), g.tumor.begin(), g.tumor.end());
        }
        if (test_normal.size() < n_test || test_tumor.size() < n_test || train_normal.size() < n_train ||
            train_tumor.size() < n_train)
            continue;

        for (auto* pool : {&test_normal, &test_tumor, &train_normal, &train_tumor}) std::sort(pool->begin(), pool->end());
        Rng pick(derive_seed(cfg.seed, "split-sample"));
        std::vector<std::size_t> train, test;
        take_class(train_normal, cfg.n_train_per_class, pick, train);
        take_class(train_tumor, cfg.n_train_per_class, pick, train);
        take_class(test_normal, cfg.n_test_per_class, pick, test);
        take_class(test_tumor, cfg.n_test_per_class, pick, test);
        return {assemble(manifest, train, cfg.seed), assemble(manifest, test, cfg.seed)};
    }
    throw SplitInfeasible("no slide-disjoint split satisfies the requested per-class counts");
}

}  // namespace pathogan
