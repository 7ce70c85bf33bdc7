#include "qafila/backends.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "qafila/text.hpp"

namespace qafila {

namespace fs = std::filesystem;

std::chrono::milliseconds RetryPolicy::backoff_for(int failed_attempts) const {
    double ms = static_cast<double>(initial_backoff.count()) * std::pow(multiplier, std::max(0, failed_attempts - 1));
    ms = std::min(ms, static_cast<double>(max_backoff.count()));
    return std::chrono::milliseconds(static_cast<std::int64_t>(ms));
}

std::string with_retry(const RetryPolicy& policy, const std::function<std::string()>& call) {
    const int attempts = std::max(1, policy.max_attempts);
    for (int attempt = 1;; ++attempt) {
        try {
            return call();
        } catch (const TransportError& e) {
            if (!e.retryable() || attempt >= attempts) throw;
            auto delay = policy.backoff_for(attempt);
            if (policy.sleep)
                policy.sleep(delay);
            else
                std::this_thread::sleep_for(delay);
        }
    }
}

TokenBucket::TokenBucket(double requests_per_second, double burst)
    : rate_(requests_per_second), burst_(std::max(1.0, burst)), tokens_(burst_), last_(std::chrono::steady_clock::now()) {}

void TokenBucket::acquire() {
    if (rate_ <= 0) return;
    std::unique_lock lock(mutex_);
    while (true) {
        auto now = std::chrono::steady_clock::now();
        tokens_ = std::min(burst_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_);
        last_ = now;
        if (tokens_ >= 1.0) {
            tokens_ -= 1.0;
            return;
        }
        auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
        lock.unlock();
        std::this_thread::sleep_for(wait);
        lock.lock();
    }
}

// ---------------------------------------------------------------- cache

namespace {

std::string sanitize_component(std::string_view s) {
    std::string out;
    for (char c : s) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                        c == '_' || c == '.';
        out += ok ? c : '_';
    }
    if (out.empty() || out == "." || out == "..") out = "_";
    return out;
}

std::string memory_key(std::string_view backend_id, const std::string& key) {
    return std::string(backend_id) + '\x1f' + key;
}

}  // namespace

ResponseCache::ResponseCache(CachePolicy policy) : policy_(std::move(policy)) {}

std::string ResponseCache::make_key(std::string_view backend_id, std::string_view operation,
                                    std::span<const std::string> inputs) {
    nlohmann::json canon = nlohmann::json::array();
    canon.push_back(backend_id);
    canon.push_back(operation);
    for (const auto& in : inputs) canon.push_back(nfc(in));
    return sha256_hex(canon.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace));
}

fs::path ResponseCache::path_for(std::string_view backend_id, const std::string& key) const {
    return policy_.directory / sanitize_component(backend_id) / key.substr(0, 2) / (key + ".json");
}

std::mutex& ResponseCache::key_mutex(const std::string& key) {
    return key_mutexes_[fnv1a64(key) % key_mutexes_.size()];
}

std::optional<std::string> ResponseCache::get(std::string_view backend_id, const std::string& key) {
    const auto now = std::chrono::system_clock::now();
    auto fresh = [&](std::chrono::system_clock::time_point stored) {
        return !policy_.ttl || now - stored <= *policy_.ttl;
    };
    {
        std::lock_guard lock(mutex_);
        auto it = memory_.find(memory_key(backend_id, key));
        if (it != memory_.end() && fresh(it->second.stored)) {
            ++hits_;
            return it->second.payload;
        }
    }
    if (!policy_.directory.empty()) {
        const auto path = path_for(backend_id, key);
        std::error_code ec;
        if (fs::exists(path, ec)) {
            auto mtime = fs::last_write_time(path, ec);
            auto stored = std::chrono::time_point_cast<std::chrono::system_clock::duration>(std::chrono::file_clock::to_sys(mtime));
            if (!ec && fresh(stored)) {
                std::ifstream in(path, std::ios::binary);
                std::ostringstream ss;
                ss << in.rdbuf();
                if (in || in.eof()) {
                    std::string payload = ss.str();
                    std::lock_guard lock(mutex_);
                    memory_[memory_key(backend_id, key)] = Entry{payload, stored};
                    ++hits_;
                    return payload;
                }
            }
        }
    }
    ++misses_;
    return std::nullopt;
}

void ResponseCache::put(std::string_view backend_id, const std::string& key, const std::string& payload) {
    const auto now = std::chrono::system_clock::now();
    {
        std::lock_guard lock(mutex_);
        memory_[memory_key(backend_id, key)] = Entry{payload, now};
    }
    if (policy_.directory.empty()) return;
    const auto path = path_for(backend_id, key);
    fs::create_directories(path.parent_path());
    // Write-then-rename so readers never see a partial payload.
    std::ostringstream tmp_name;
    tmp_name << path.filename().string() << ".tmp." << std::this_thread::get_id();
    const auto tmp = path.parent_path() / tmp_name.str();
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
        if (!out) throw std::runtime_error("cache write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string cached_call(ResponseCache& cache, std::string_view backend_id, std::string_view operation,
                        std::span<const std::string> inputs, const std::function<std::string()>& call,
                        const RetryPolicy& retry, TokenBucket* limiter) {
    const std::string key = ResponseCache::make_key(backend_id, operation, inputs);
    std::lock_guard key_lock(cache.key_mutex(key));
    if (auto hit = cache.get(backend_id, key)) return *hit;
    std::string payload;
    try {
        payload = with_retry(retry, [&] {
            if (limiter) limiter->acquire();
            return call();
        });
    } catch (const TransportError& e) {
        throw TransportError(e.detail(), e.retryable(), key);
    } catch (const ProtocolError& e) {
        throw ProtocolError(e.detail(), key);
    }
    cache.put(backend_id, key, payload);
    return payload;
}

// ---------------------------------------------------------------- embedding payloads

std::string encode_embedding(const Embedding& v) {
    nlohmann::json arr = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr.dump();
}

Embedding decode_embedding(std::string_view payload) {
    nlohmann::json arr;
    try {
        arr = nlohmann::json::parse(payload.begin(), payload.end());
    } catch (const nlohmann::json::parse_error& e) {
        throw ProtocolError(std::string("embedding payload is not JSON: ") + e.what());
    }
    if (!arr.is_array()) throw ProtocolError("embedding payload is not an array");
    Embedding v(static_cast<Eigen::Index>(arr.size()));
    for (std::size_t i = 0; i < arr.size(); ++i) {
        if (!arr[i].is_number()) throw ProtocolError("embedding payload has a non-numeric entry");
        v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
        if (!std::isfinite(v[static_cast<Eigen::Index>(i)])) throw ProtocolError("embedding has non-finite entry");
    }
    return v;
}

// ---------------------------------------------------------------- wrappers

CachedTranslator::CachedTranslator(std::shared_ptr<Translator> inner, CallContext ctx)
    : inner_(std::move(inner)), ctx_(std::move(ctx)) {}

std::string CachedTranslator::translate(const std::string& text, const std::string& source_lang,
                                        const std::string& target_lang) {
    const std::string inputs[] = {text, source_lang, target_lang};
    return cached_call(
        *ctx_.cache, inner_->id(), "translate", inputs,
        [&] { return inner_->translate(text, source_lang, target_lang); }, ctx_.retry, ctx_.limiter.get());
}

CachedEmbedder::CachedEmbedder(std::shared_ptr<Embedder> inner, CallContext ctx)
    : inner_(std::move(inner)), ctx_(std::move(ctx)) {}

Embedding CachedEmbedder::embed(const std::string& text) {
    const std::string inputs[] = {text};
    auto payload = cached_call(
        *ctx_.cache, inner_->id(), "embed", inputs, [&] { return encode_embedding(inner_->embed(text)); },
        ctx_.retry, ctx_.limiter.get());
    auto v = decode_embedding(payload);
    if (inner_->dimension() != 0 && static_cast<std::size_t>(v.size()) != inner_->dimension())
        throw ProtocolError("cached embedding has dimension " + std::to_string(v.size()) + ", expected " +
                            std::to_string(inner_->dimension()));
    return v;
}

CachedCaptioner::CachedCaptioner(std::shared_ptr<Captioner> inner, CallContext ctx)
    : inner_(std::move(inner)), ctx_(std::move(ctx)) {}

std::string CachedCaptioner::describe(const std::string& image_ref) {
    const std::string inputs[] = {image_ref};
    return cached_call(
        *ctx_.cache, inner_->id(), "describe", inputs, [&] { return inner_->describe(image_ref); }, ctx_.retry,
        ctx_.limiter.get());
}

CachedJudge::CachedJudge(std::shared_ptr<Judge> inner, CallContext ctx)
    : inner_(std::move(inner)), ctx_(std::move(ctx)) {}

std::string CachedJudge::complete(const std::string& prompt) {
    const std::string inputs[] = {prompt};
    return cached_call(
        *ctx_.cache, inner_->id(), "complete", inputs, [&] { return inner_->complete(prompt); }, ctx_.retry,
        ctx_.limiter.get());
}

}  // namespace qafila
