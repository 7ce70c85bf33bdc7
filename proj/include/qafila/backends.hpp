#ifndef QAFILA_BACKENDS_HPP
#define QAFILA_BACKENDS_HPP

#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace qafila {

using Embedding = Eigen::VectorXd;

// ---------------------------------------------------------------- errors

class BackendError : public std::runtime_error {
public:
    BackendError(const std::string& what, std::string cache_key = {})
        : std::runtime_error(cache_key.empty() ? what : what + " [cache key " + cache_key + "]"),
          cache_key_(std::move(cache_key)) {}
    const std::string& cache_key() const noexcept { return cache_key_; }

private:
    std::string cache_key_;
};

/// Network-level failure. Retryable failures (timeouts, 429, 5xx) are retried
/// by cached_call; others fail immediately.
class TransportError : public BackendError {
public:
    TransportError(const std::string& what, bool retryable = true, std::string cache_key = {})
        : BackendError("transport error: " + what, std::move(cache_key)), retryable_(retryable), detail_(what) {}
    bool retryable() const noexcept { return retryable_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    bool retryable_;
    std::string detail_;
};

/// The backend answered, but the reply could not be understood.
class ProtocolError : public BackendError {
public:
    ProtocolError(const std::string& what, std::string cache_key = {})
        : BackendError("protocol error: " + what, std::move(cache_key)), detail_(what) {}
    const std::string& detail() const noexcept { return detail_; }

private:
    std::string detail_;
};

// ---------------------------------------------------------------- interfaces

class Translator {
public:
    virtual ~Translator() = default;
    virtual std::string id() const = 0;
    virtual std::string translate(const std::string& text, const std::string& source_lang,
                                  const std::string& target_lang) = 0;
};

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::string id() const = 0;
    virtual std::size_t dimension() const = 0;
    virtual Embedding embed(const std::string& text) = 0;
};

class Captioner {
public:
    virtual ~Captioner() = default;
    virtual std::string id() const = 0;
    virtual std::string describe(const std::string& image_ref) = 0;
};

class Judge {
public:
    virtual ~Judge() = default;
    virtual std::string id() const = 0;
    virtual std::string complete(const std::string& prompt) = 0;
};

// ---------------------------------------------------------------- retry / rate limit

struct RetryPolicy {
    int max_attempts = 5;
    std::chrono::milliseconds initial_backoff{200};
    double multiplier = 2.0;
    std::chrono::milliseconds max_backoff{10'000};
    /// Replaceable for tests; defaults to std::this_thread::sleep_for.
    std::function<void(std::chrono::milliseconds)> sleep;

    std::chrono::milliseconds backoff_for(int failed_attempts) const;
};

/// Runs `call` until it succeeds, a non-retryable error occurs, or attempts run out.
std::string with_retry(const RetryPolicy& policy, const std::function<std::string()>& call);

/// Token bucket limiting requests per second. A non-positive rate disables limiting.
class TokenBucket {
public:
    explicit TokenBucket(double requests_per_second, double burst = 1.0);
    void acquire();

private:
    double rate_;
    double burst_;
    double tokens_;
    std::chrono::steady_clock::time_point last_;
    std::mutex mutex_;
};

// ---------------------------------------------------------------- cache

struct CachePolicy {
    /// Empty directory keeps the cache in memory only.
    std::filesystem::path directory;
    std::optional<std::chrono::seconds> ttl;
};

/// Persistent response cache. Layout: <dir>/<backend>/<2-char shard>/<key>.json.
/// Payloads are stored verbatim so hits are byte-identical to the original reply.
class ResponseCache {
public:
    explicit ResponseCache(CachePolicy policy = {});

    /// sha256 over (backend id, operation, NFC-normalized inputs).
    static std::string make_key(std::string_view backend_id, std::string_view operation,
                                std::span<const std::string> inputs);

    std::optional<std::string> get(std::string_view backend_id, const std::string& key);
    void put(std::string_view backend_id, const std::string& key, const std::string& payload);
    std::filesystem::path path_for(std::string_view backend_id, const std::string& key) const;

    /// Serializes concurrent work on one key.
    std::mutex& key_mutex(const std::string& key);

    std::size_t hits() const noexcept { return hits_; }
    std::size_t misses() const noexcept { return misses_; }
    const CachePolicy& policy() const noexcept { return policy_; }

private:
    struct Entry {
        std::string payload;
        std::chrono::system_clock::time_point stored;
    };

    CachePolicy policy_;
    std::mutex mutex_;
    std::map<std::string, Entry> memory_;
    std::array<std::mutex, 64> key_mutexes_;
    std::atomic<std::size_t> hits_{0};
    std::atomic<std::size_t> misses_{0};
};

/// Cache-first call. On a miss the backend is invoked with retry (and the
/// optional rate limiter per attempt) and the payload persisted. Errors are
/// rethrown carrying the cache key.
std::string cached_call(ResponseCache& cache, std::string_view backend_id, std::string_view operation,
                        std::span<const std::string> inputs, const std::function<std::string()>& call,
                        const RetryPolicy& retry, TokenBucket* limiter = nullptr);

/// Shared plumbing handed to every cached wrapper.
struct CallContext {
    std::shared_ptr<ResponseCache> cache = std::make_shared<ResponseCache>();
    RetryPolicy retry;
    std::shared_ptr<TokenBucket> limiter;
};

// Wrappers that route a backend through cached_call. They present the same
// interface, so pipeline code never knows whether the cache is warm.

class CachedTranslator final : public Translator {
public:
    CachedTranslator(std::shared_ptr<Translator> inner, CallContext ctx);
    std::string id() const override { return inner_->id(); }
    std::string translate(const std::string& text, const std::string& source_lang,
                          const std::string& target_lang) override;

private:
    std::shared_ptr<Translator> inner_;
    CallContext ctx_;
};

class CachedEmbedder final : public Embedder {
public:
    CachedEmbedder(std::shared_ptr<Embedder> inner, CallContext ctx);
    std::string id() const override { return inner_->id(); }
    std::size_t dimension() const override { return inner_->dimension(); }
    Embedding embed(const std::string& text) override;

private:
    std::shared_ptr<Embedder> inner_;
    CallContext ctx_;
};

class CachedCaptioner final : public Captioner {
public:
    CachedCaptioner(std::shared_ptr<Captioner> inner, CallContext ctx);
    std::string id() const override { return inner_->id(); }
    std::string describe(const std::string& image_ref) override;

private:
    std::shared_ptr<Captioner> inner_;
    CallContext ctx_;
};

class CachedJudge final : public Judge {
public:
    CachedJudge(std::shared_ptr<Judge> inner, CallContext ctx);
    std::string id() const override { return inner_->id(); }
    std::string complete(const std::string& prompt) override;

private:
    std::shared_ptr<Judge> inner_;
    CallContext ctx_;
};

/// Exact text encoding of an embedding (shortest round-trip doubles).
std::string encode_embedding(const Embedding& v);
Embedding decode_embedding(std::string_view payload);

}  // namespace qafila

#endif  // QAFILA_BACKENDS_HPP
