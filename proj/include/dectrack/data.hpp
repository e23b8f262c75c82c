#pragma once

#include "dectrack/common.hpp"
#include "dectrack/rng.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace dectrack {

struct Sample {
    std::vector<std::pair<int, double>> features;  // 0-based index, ascending, no duplicates
    double label = 0.0;                            // normalized to -1 / +1
};

struct Dataset {
    std::vector<Sample> samples;
    int d = 0;
    std::string source;

    std::size_t size() const { return samples.size(); }

    double dot(const Vec& x, int sample) const {
        double s = 0.0;
        for (const auto& [idx, val] : samples[static_cast<std::size_t>(sample)].features)
            s += val * x[idx];
        return s;
    }

    Vec to_dense(int sample) const {
        Vec a = Vec::Zero(d);
        for (const auto& [idx, val] : samples[static_cast<std::size_t>(sample)].features)
            a[idx] = val;
        return a;
    }
};

namespace detail {

inline double parse_number(const std::string& tok, const std::string& path, std::size_t lineno,
                           const char* what) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0' || !std::isfinite(v))
        throw Error(path + ":" + std::to_string(lineno) + ": non-numeric " + what + " '" + tok +
                    "'");
    return v;
}

}  // namespace detail

/// LIBSVM text: each nonempty line is `label index:value [index:value ...]`
/// with 1-based ascending indices. Indices are stored 0-based; labels {0,1}
/// and {-1,+1} are both normalized to -1/+1. d is the max index seen unless
/// overridden (train/test files of the same corpus can disagree on max index).
inline Dataset parse_libsvm(const std::string& path, std::optional<int> d_override = {}) {
    std::ifstream in(path);
    require(in.good(), "parse_libsvm: cannot open " + path);

    Dataset ds;
    ds.source = path;
    int max_index = 0;  // 1-based
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string tok;
        if (!(ls >> tok)) continue;  // blank line

        Sample s;
        const double raw_label = detail::parse_number(tok, path, lineno, "label");
        if (raw_label == 1.0 || raw_label == 0.0 || raw_label == -1.0)
            s.label = raw_label == 1.0 ? 1.0 : -1.0;
        else
            throw Error(path + ":" + std::to_string(lineno) + ": label '" + tok +
                        "' is not one of {-1, 0, +1}");

        int prev_index = 0;
        while (ls >> tok) {
            const auto colon = tok.find(':');
            if (colon == std::string::npos || colon == 0 || colon + 1 == tok.size())
                throw Error(path + ":" + std::to_string(lineno) + ": malformed feature '" + tok +
                            "' (want index:value)");
            const double idx_raw =
                detail::parse_number(tok.substr(0, colon), path, lineno, "feature index");
            const int idx = static_cast<int>(idx_raw);
            if (idx_raw != idx || idx < 1)
                throw Error(path + ":" + std::to_string(lineno) + ": feature index '" +
                            tok.substr(0, colon) + "' is not a positive integer");
            if (idx <= prev_index)
                throw Error(path + ":" + std::to_string(lineno) +
                            ": feature indices not strictly ascending");
            prev_index = idx;
            const double val =
                detail::parse_number(tok.substr(colon + 1), path, lineno, "feature value");
            s.features.emplace_back(idx - 1, val);
            max_index = std::max(max_index, idx);
        }
        ds.samples.push_back(std::move(s));
    }
    require(!in.bad(), "parse_libsvm: read error in " + path);

    ds.d = d_override.value_or(max_index);
    require(max_index <= ds.d, "parse_libsvm: feature index " + std::to_string(max_index) +
                                   " exceeds d_override " + std::to_string(ds.d));
    return ds;
}

inline void serialize_libsvm(const Dataset& ds, std::ostream& out) {
    for (const auto& s : ds.samples) {
        out << (s.label > 0 ? "+1" : "-1");
        for (const auto& [idx, val] : s.features) out << ' ' << (idx + 1) << ':' << format_double(val);
        out << '\n';
    }
}

enum class PartitionMode { iid_shuffle, label_skew };

/// Client assignment per sample (-1 = dropped). Every client receives exactly
/// m samples; trailing remainder samples are dropped so N = m*n holds exactly.
struct Partition {
    std::vector<int> assignment;
    int n = 0;
    int m = 0;
    PartitionMode mode = PartitionMode::iid_shuffle;
    int shards_per_client = 1;
    std::uint64_t seed = 0;

    /// Global sample ids per client, in assignment order.
    std::vector<std::vector<int>> client_samples() const {
        std::vector<std::vector<int>> out(static_cast<std::size_t>(n));
        for (std::size_t s = 0; s < assignment.size(); ++s)
            if (assignment[s] >= 0) out[static_cast<std::size_t>(assignment[s])].push_back(static_cast<int>(s));
        return out;
    }
};

inline Partition partition(const Dataset& ds, int n, PartitionMode mode, std::uint64_t seed,
                           int shards_per_client = 1) {
    require(n >= 1, "partition: need at least one client");
    require(!ds.samples.empty(), "partition: dataset is empty");
    require(static_cast<std::size_t>(n) <= ds.size(),
            "partition: more clients than samples (" + std::to_string(n) + " > " +
                std::to_string(ds.size()) + ")");

    Partition part;
    part.n = n;
    part.mode = mode;
    part.seed = seed;
    part.shards_per_client = shards_per_client;
    part.assignment.assign(ds.size(), -1);

    StreamRng rng(StreamRng::key_of(seed, 0x9a27ULL));
    if (mode == PartitionMode::iid_shuffle) {
        part.m = static_cast<int>(ds.size()) / n;
        std::vector<int> order(ds.size());
        std::iota(order.begin(), order.end(), 0);
        deterministic_shuffle(order, rng);
        for (int c = 0; c < n; ++c)
            for (int j = 0; j < part.m; ++j)
                part.assignment[static_cast<std::size_t>(order[static_cast<std::size_t>(c) * part.m + j])] = c;
    } else {
        require(shards_per_client >= 1, "partition: shards_per_client must be >= 1");
        const int shards = n * shards_per_client;
        const int shard_size = static_cast<int>(ds.size()) / shards;
        require(shard_size >= 1, "partition: too many shards for dataset size");
        part.m = shards_per_client * shard_size;

        std::vector<int> order(ds.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return ds.samples[static_cast<std::size_t>(a)].label < ds.samples[static_cast<std::size_t>(b)].label;
        });
        std::vector<int> shard_ids(static_cast<std::size_t>(shards));
        std::iota(shard_ids.begin(), shard_ids.end(), 0);
        deterministic_shuffle(shard_ids, rng);
        for (int c = 0; c < n; ++c)
            for (int s = 0; s < shards_per_client; ++s) {
                const int shard = shard_ids[static_cast<std::size_t>(c) * shards_per_client + s];
                for (int j = 0; j < shard_size; ++j)
                    part.assignment[static_cast<std::size_t>(order[static_cast<std::size_t>(shard) * shard_size + j])] = c;
            }
    }
    return part;
}

}  // namespace dectrack
