#pragma once

#include "dectrack/common.hpp"

#include <cstdint>
#include <vector>

namespace dectrack {

/// splitmix64 finalizer; the mixing core of every deterministic stream here.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Counter-based random stream: the state is a pure function of the key, so
/// identical keys always replay the identical sequence regardless of what ran
/// before. std::uniform_int_distribution is not pinned across standard
/// libraries, hence the hand-rolled bounded draw.
class StreamRng {
public:
    explicit StreamRng(std::uint64_t key) : key_(key), counter_(0) {}

    /// Derive a key from a tuple of stream coordinates.
    static std::uint64_t key_of(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0,
                                std::uint64_t c = 0, std::uint64_t d = 0) {
        std::uint64_t k = mix64(seed);
        k = mix64(k ^ a);
        k = mix64(k ^ b);
        k = mix64(k ^ c);
        k = mix64(k ^ d);
        return k;
    }

    std::uint64_t next_u64() { return mix64(key_ + 0x632be59bd9b4e019ULL * ++counter_); }

    /// Unbiased uniform integer in [0, bound) (Lemire multiply + rejection).
    std::uint64_t next_below(std::uint64_t bound) {
        require(bound > 0, "next_below: bound must be positive");
        while (true) {
            const std::uint64_t x = next_u64();
            const unsigned __int128 m = static_cast<unsigned __int128>(x) * bound;
            const std::uint64_t lo = static_cast<std::uint64_t>(m);
            if (lo >= bound || lo >= static_cast<std::uint64_t>(-bound) % bound)
                return static_cast<std::uint64_t>(m >> 64);
        }
    }

    /// Uniform in [0,1) with 53 random bits.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

private:
    std::uint64_t key_;
    std::uint64_t counter_;
};

/// Deterministic Fisher-Yates; std::shuffle leaves the permutation
/// implementation-defined.
template <typename T>
void deterministic_shuffle(std::vector<T>& items, StreamRng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.next_below(i));
        std::swap(items[i - 1], items[j]);
    }
}

enum class BatchVar { x, y };

/// Mini-batch index source. Batches are drawn uniformly with replacement from
/// the client's samples; the stream is keyed by (seed, client, round,
/// local_step, variable) so any batch can be replayed in isolation.
class BatchSampler {
public:
    BatchSampler(std::uint64_t seed, int b_x, int b_y, std::vector<std::vector<int>> client_samples)
        : seed_(seed), b_x_(b_x), b_y_(b_y), client_samples_(std::move(client_samples)) {
        require(b_x >= 0 && b_y >= 0, "BatchSampler: negative batch size");
    }

    int batch_size(BatchVar which) const { return which == BatchVar::x ? b_x_ : b_y_; }
    int num_clients() const { return static_cast<int>(client_samples_.size()); }
    const std::vector<int>& samples_of(int client) const { return client_samples_.at(client); }

    std::vector<int> draw(int client, long round, int local_step, BatchVar which) const {
        return draw_keyed(client, static_cast<std::uint64_t>(round),
                          static_cast<std::uint64_t>(local_step), which);
    }

    /// Batch for the correction initialization; reserved stream tag
    /// so it can never collide with a training-step batch.
    std::vector<int> draw_init(int client, BatchVar which) const {
        return draw_keyed(client, kInitTag, kInitTag, which);
    }

private:
    static constexpr std::uint64_t kInitTag = 0xffffffffffffffffULL;

    std::vector<int> draw_keyed(int client, std::uint64_t round, std::uint64_t step,
                                BatchVar which) const {
        const auto& pool = client_samples_.at(client);
        require(!pool.empty(), "draw_batch: client " + std::to_string(client) + " has no samples");
        const int b = batch_size(which);
        StreamRng rng(StreamRng::key_of(seed_, static_cast<std::uint64_t>(client), round, step,
                                        which == BatchVar::x ? 0 : 1));
        std::vector<int> batch(static_cast<std::size_t>(b));
        for (int i = 0; i < b; ++i)
            batch[static_cast<std::size_t>(i)] = pool[rng.next_below(pool.size())];
        return batch;
    }

    std::uint64_t seed_;
    int b_x_;
    int b_y_;
    std::vector<std::vector<int>> client_samples_;
};

}  // namespace dectrack
