// common.hpp
// Shared plumbing: errors, logging, seed derivation, parallel_for.
#pragma once

#include <cstdint>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace decor {

// ---------------------------------------------------------------------------
// Errors. The CLI maps these onto its exit-code contract.
// ---------------------------------------------------------------------------

struct DecorError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : DecorError {
    using DecorError::DecorError;
};
struct IoError : DecorError {
    using DecorError::DecorError;
};
struct DivergenceError : DecorError {
    using DecorError::DecorError;
};
struct CollisionOverflowError : DecorError {
    using DecorError::DecorError;
};
struct UniverseMismatchError : DecorError {
    using DecorError::DecorError;
};
struct NumericsError : DecorError {
    using DecorError::DecorError;
};

#define DECOR_REQUIRE(cond, err, msg)            \
    do {                                         \
        if (!(cond)) {                           \
            std::ostringstream oss__;            \
            oss__ << msg;                        \
            throw ::decor::err(oss__.str());     \
        }                                        \
    } while (0)

// ---------------------------------------------------------------------------
// Logging. Verbosity from DECOR_LOG (error|warn|info|debug), default warn.
// All log output goes to stderr; stdout is reserved for machine JSON.
// ---------------------------------------------------------------------------

enum class LogLevel : int { Error = 0, Warn = 1, Info = 2, Debug = 3 };

inline LogLevel log_level() {
    static LogLevel level = [] {
        const char* env = std::getenv("DECOR_LOG");
        if (env == nullptr) return LogLevel::Warn;
        std::string v(env);
        if (v == "error") return LogLevel::Error;
        if (v == "warn") return LogLevel::Warn;
        if (v == "info") return LogLevel::Info;
        if (v == "debug") return LogLevel::Debug;
        return LogLevel::Warn;
    }();
    return level;
}

inline void log_msg(LogLevel level, const std::string& msg) {
    if (static_cast<int>(level) > static_cast<int>(log_level())) return;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    const char* tag = level == LogLevel::Error  ? "error"
                      : level == LogLevel::Warn ? "warn"
                      : level == LogLevel::Info ? "info"
                                                : "debug";
    std::fprintf(stderr, "[decor:%s] %s\n", tag, msg.c_str());
}

#define DECOR_LOG_AT(lvl, msg)                                  \
    do {                                                        \
        if (static_cast<int>(lvl) <=                            \
            static_cast<int>(::decor::log_level())) {           \
            std::ostringstream oss__;                           \
            oss__ << msg;                                       \
            ::decor::log_msg(lvl, oss__.str());                 \
        }                                                       \
    } while (0)

#define DECOR_WARN(msg) DECOR_LOG_AT(::decor::LogLevel::Warn, msg)
#define DECOR_INFO(msg) DECOR_LOG_AT(::decor::LogLevel::Info, msg)
#define DECOR_DEBUG(msg) DECOR_LOG_AT(::decor::LogLevel::Debug, msg)

// ---------------------------------------------------------------------------
// Seed derivation. Every random stream hashes the run seed with a stable
// tag so components cannot alias each other's randomness.
// ---------------------------------------------------------------------------

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t base, std::string_view tag) {
    uint64_t h = base;
    for (char c : tag) {
        h = splitmix64(h ^ static_cast<uint64_t>(static_cast<unsigned char>(c)));
    }
    return splitmix64(h);
}

inline uint64_t derive_seed(uint64_t base, std::string_view tag, uint64_t n) {
    return splitmix64(derive_seed(base, tag) ^ n);
}

// ---------------------------------------------------------------------------
// Threading. A process-wide thread budget set once by the CLI (--threads).
// Work is split into contiguous chunks, one per worker; callers that need
// determinism across thread counts must aggregate per-index, not per-chunk.
// ---------------------------------------------------------------------------

inline int& thread_budget_ref() {
    static int budget = [] {
        unsigned hc = std::thread::hardware_concurrency();
        if (hc == 0) hc = 1;
        return static_cast<int>(hc > 8 ? 8 : hc);
    }();
    return budget;
}

inline int thread_budget() { return thread_budget_ref(); }
inline void set_thread_budget(int n) { thread_budget_ref() = n < 1 ? 1 : n; }

// fn(chunk_begin, chunk_end, chunk_index); chunk count == effective thread count.
inline void parallel_chunks(size_t n, const std::function<void(size_t, size_t, int)>& fn) {
    int nt = thread_budget();
    if (n == 0) return;
    if (nt <= 1 || n == 1) {
        fn(0, n, 0);
        return;
    }
    size_t chunks = static_cast<size_t>(nt) < n ? static_cast<size_t>(nt) : n;
    std::vector<std::thread> workers;
    workers.reserve(chunks);
    size_t base = n / chunks, rem = n % chunks, begin = 0;
    for (size_t c = 0; c < chunks; ++c) {
        size_t len = base + (c < rem ? 1 : 0);
        size_t end = begin + len;
        workers.emplace_back([&fn, begin, end, c] { fn(begin, end, static_cast<int>(c)); });
        begin = end;
    }
    for (auto& w : workers) w.join();
}

}  // namespace decor
