#ifndef QAFILA_BACKEND_REGISTRY_HPP
#define QAFILA_BACKEND_REGISTRY_HPP

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>

#include "qafila/backends.hpp"
#include "qafila/corpus_model.hpp"

namespace qafila {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Builds cached backends from the "backends" section of a run config.
///
///   {"translator": "mock" | {"kind": "mock", "mode": "lossy", "rate": 0.3}
///                  | {"kind": "google", "api_key_env": "TRANSLATE_API_KEY"},
///    "embedder":   "mock" | {"kind": "http", "url_env": "EMBED_API_URL", "dimension": 768},
///    "captioner":  "mock" | {"kind": "openai", "model": "...", "api_key_env": "CAPTION_API_KEY"},
///    "judges": {"<name>": "mock" | {"kind": "openai", "base_url": "...", "model": "...",
///                                   "api_key_env": "...", "temperature": 0}},
///    "rate_limit": {"requests_per_second": 2, "burst": 4}}
///
/// Backends are created on first use, so credentials are only required for
/// roles a command actually needs. Missing credentials raise ConfigError.
class BackendRegistry {
public:
    BackendRegistry(Json config, CallContext context, std::uint64_t seed = 0);

    std::shared_ptr<Translator> translator();
    std::shared_ptr<Embedder> embedder();
    std::shared_ptr<Captioner> captioner();
    std::shared_ptr<Judge> judge(const std::string& name);
    /// Decoding settings for a judge, recorded on its score records.
    Json judge_settings(const std::string& name) const;

    /// Judges absent from the config become seeded mock judges instead of an error.
    void set_mock_unlisted_judges(bool on) { mock_unlisted_judges_ = on; }

    const CallContext& context() const { return context_; }

private:
    Json spec_for(const char* role, const char* fallback) const;

    Json config_;
    CallContext context_;
    std::uint64_t seed_;
    bool mock_unlisted_judges_ = false;
    std::mutex mutex_;
    std::shared_ptr<Translator> translator_;
    std::shared_ptr<Embedder> embedder_;
    std::shared_ptr<Captioner> captioner_;
    std::map<std::string, std::shared_ptr<Judge>> judges_;
};

}  // namespace qafila

#endif  // QAFILA_BACKEND_REGISTRY_HPP
