#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <thread>
#include <vector>

namespace memsurf {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives a child seed from a parent seed and a stream index. Used for
/// trial seeding so parallel execution order cannot change results.
inline uint64_t derive_seed(uint64_t parent, uint64_t index) {
    return splitmix64(parent ^ splitmix64(index + 0x51ed2701ULL));
}

/// mt19937_64 with explicit sampling algorithms, so sequences do not depend
/// on the standard library's distribution implementations.
class Rng {
  public:
    explicit Rng(uint64_t seed) : gen_(splitmix64(seed)) {}

    uint64_t u64() { return gen_(); }

    /// Uniform integer in [0, n). Rejection sampling, n > 0.
    uint64_t below(uint64_t n) {
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v = gen_();
        while (v >= limit) {
            v = gen_();
        }
        return v % n;
    }

    int64_t range_int(int64_t lo, int64_t hi) {  // inclusive
        return lo + static_cast<int64_t>(below(static_cast<uint64_t>(hi - lo + 1)));
    }

    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double range(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal(double mean, double sd) {
        if (have_spare_) {
            have_spare_ = false;
            return mean + sd * spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        have_spare_ = true;
        return mean + sd * u * m;
    }

    uint64_t poisson(double mean) {
        if (mean <= 0.0) {
            return 0;
        }
        if (mean > 64.0) {  // normal approximation for large means
            const double v = normal(mean, std::sqrt(mean));
            return v <= 0.0 ? 0 : static_cast<uint64_t>(std::llround(v));
        }
        const double limit = std::exp(-mean);
        uint64_t k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= uniform();
        } while (p > limit);
        return k - 1;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t k = v.size(); k > 1; --k) {
            std::swap(v[k - 1], v[below(k)]);
        }
    }

  private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

/// Runs tasks 0..count-1 on up to `threads` workers (0 = hardware count).
/// Tasks must be independent; results should be written to pre-sized slots
/// so the output does not depend on scheduling.
inline void parallel_tasks(size_t count, const std::function<void(size_t)>& task,
                           unsigned threads = 0) {
    if (count == 0) {
        return;
    }
    unsigned n = threads ? threads : std::thread::hardware_concurrency();
    if (n == 0) {
        n = 1;
    }
    n = static_cast<unsigned>(std::min<size_t>(n, count));
    if (n <= 1) {
        for (size_t k = 0; k < count; ++k) {
            task(k);
        }
        return;
    }
    std::atomic<size_t> next{0};
    std::exception_ptr error;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    pool.reserve(n);
    for (unsigned w = 0; w < n; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const size_t k = next.fetch_add(1);
                if (k >= count || failed.load()) {
                    return;
                }
                try {
                    task(k);
                } catch (...) {
                    if (!failed.exchange(true)) {
                        error = std::current_exception();
                    }
                    return;
                }
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

}  // namespace memsurf
