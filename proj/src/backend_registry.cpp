#include "qafila/backend_registry.hpp"

#include <algorithm>
#include <cctype>

#include "qafila/http_backends.hpp"
#include "qafila/mock_backends.hpp"

namespace qafila {

namespace {

Json normalize_spec(const Json& spec, const std::string& role) {
    if (spec.is_string()) {
        const auto s = spec.get<std::string>();
        if (s == "mock-faithful") return Json{{"kind", "mock"}, {"mode", "faithful"}};
        if (s == "mock-lossy") return Json{{"kind", "mock"}, {"mode", "lossy"}};
        return Json{{"kind", s}};
    }
    if (!spec.is_object() || !spec.contains("kind") || !spec["kind"].is_string())
        throw ConfigError(role + ": backend spec must be a name or an object with \"kind\"");
    return spec;
}

std::string credential(const Json& spec, const std::string& role, const std::string& default_env) {
    const auto var = spec.value("api_key_env", default_env);
    if (auto v = env(var.c_str())) return *v;
    throw ConfigError(role + ": missing credential, set " + var);
}

std::optional<std::string> optional_credential(const Json& spec, const std::string& default_env) {
    return env(spec.value("api_key_env", default_env).c_str());
}

std::string upper_env_name(const std::string& name) {
    std::string out;
    for (char c : name) out += std::isalnum(static_cast<unsigned char>(c)) ? static_cast<char>(std::toupper(c)) : '_';
    return out;
}

template <class T>
T field(const Json& spec, const char* key, T fallback, const std::string& role) {
    try {
        return spec.value(key, fallback);
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(role + ": bad value for " + key);
    }
}

}  // namespace

BackendRegistry::BackendRegistry(Json config, CallContext context, std::uint64_t seed)
    : config_(config.is_null() ? Json::object() : std::move(config)), context_(std::move(context)), seed_(seed) {
    if (!config_.is_object()) throw ConfigError("backends config must be an object");
    if (config_.contains("rate_limit") && !context_.limiter) {
        const auto& rl = config_["rate_limit"];
        const double rps = field(rl, "requests_per_second", 0.0, "rate_limit");
        if (rps <= 0) throw ConfigError("rate_limit: requests_per_second must be positive");
        context_.limiter = std::make_shared<TokenBucket>(rps, field(rl, "burst", 1.0, "rate_limit"));
    }
}

Json BackendRegistry::spec_for(const char* role, const char* fallback) const {
    return normalize_spec(config_.contains(role) ? config_[role] : Json(fallback), role);
}

std::shared_ptr<Translator> BackendRegistry::translator() {
    std::lock_guard lock(mutex_);
    if (translator_) return translator_;
    const auto spec = spec_for("translator", "mock-faithful");
    const auto kind = spec["kind"].get<std::string>();
    std::shared_ptr<Translator> inner;
    if (kind == "mock") {
        const auto mode = field<std::string>(spec, "mode", "faithful", "translator");
        if (mode == "faithful")
            inner = std::make_shared<MockTranslator>();
        else if (mode == "lossy")
            inner = std::make_shared<MockTranslator>(MockTranslator::Mode::lossy, field(spec, "rate", 0.3, "translator"),
                                                     field(spec, "seed", seed_, "translator"));
        else
            throw ConfigError("translator: unknown mock mode " + mode);
    } else if (kind == "google") {
        inner = std::make_shared<GoogleTranslator>(
            credential(spec, "translator", "TRANSLATE_API_KEY"),
            field<std::string>(spec, "base_url", "https://translation.googleapis.com", "translator"));
    } else {
        throw ConfigError("translator: unknown kind " + kind);
    }
    translator_ = std::make_shared<CachedTranslator>(inner, context_);
    return translator_;
}

std::shared_ptr<Embedder> BackendRegistry::embedder() {
    std::lock_guard lock(mutex_);
    if (embedder_) return embedder_;
    const auto spec = spec_for("embedder", "mock");
    const auto kind = spec["kind"].get<std::string>();
    std::shared_ptr<Embedder> inner;
    if (kind == "mock") {
        inner = std::make_shared<MockEmbedder>(field(spec, "seed", std::uint64_t{0}, "embedder"),
                                               field(spec, "dimension", MockEmbedder::kDefaultDimension, "embedder"));
    } else if (kind == "http") {
        std::string url = field<std::string>(spec, "url", "", "embedder");
        if (url.empty()) {
            const auto var = field<std::string>(spec, "url_env", "EMBED_API_URL", "embedder");
            auto v = env(var.c_str());
            if (!v) throw ConfigError("embedder: missing endpoint, set " + var);
            url = *v;
        }
        const auto dimension = field(spec, "dimension", std::size_t{0}, "embedder");
        if (dimension == 0) throw ConfigError("embedder: http embedder needs a positive \"dimension\"");
        std::optional<std::string> model;
        if (spec.contains("model")) model = field<std::string>(spec, "model", "", "embedder");
        inner = std::make_shared<HttpEmbedder>(url, dimension, model, optional_credential(spec, "EMBED_API_KEY"));
    } else {
        throw ConfigError("embedder: unknown kind " + kind);
    }
    embedder_ = std::make_shared<CachedEmbedder>(inner, context_);
    return embedder_;
}

std::shared_ptr<Captioner> BackendRegistry::captioner() {
    std::lock_guard lock(mutex_);
    if (captioner_) return captioner_;
    const auto spec = spec_for("captioner", "mock");
    const auto kind = spec["kind"].get<std::string>();
    std::shared_ptr<Captioner> inner;
    if (kind == "mock") {
        inner = std::make_shared<MockCaptioner>(field(spec, "seed", seed_, "captioner"));
    } else if (kind == "openai") {
        inner = std::make_shared<ChatVisionCaptioner>(
            field<std::string>(spec, "base_url", "https://api.openai.com", "captioner"),
            field<std::string>(spec, "model", "gpt-4o", "captioner"), credential(spec, "captioner", "CAPTION_API_KEY"),
            field<std::string>(spec, "media_root", "", "captioner"));
    } else {
        throw ConfigError("captioner: unknown kind " + kind);
    }
    captioner_ = std::make_shared<CachedCaptioner>(inner, context_);
    return captioner_;
}

std::shared_ptr<Judge> BackendRegistry::judge(const std::string& name) {
    std::lock_guard lock(mutex_);
    if (auto it = judges_.find(name); it != judges_.end()) return it->second;
    const Json judges = config_.value("judges", Json::object());
    Json spec;
    if (judges.contains(name))
        spec = normalize_spec(judges[name], "judge " + name);
    else if (mock_unlisted_judges_)
        spec = Json{{"kind", "mock"}};
    else
        throw ConfigError("judge " + name + " is not configured under backends.judges");
    const auto kind = spec["kind"].get<std::string>();
    const std::string role = "judge " + name;
    std::shared_ptr<Judge> inner;
    if (kind == "mock") {
        inner = std::make_shared<MockJudge>(name, field(spec, "seed", seed_, role));
    } else if (kind == "openai") {
        const auto model = field<std::string>(spec, "model", "", role);
        if (model.empty()) throw ConfigError(role + ": \"model\" is required");
        inner = std::make_shared<ChatCompletionJudge>(
            name, field<std::string>(spec, "base_url", "https://api.openai.com", role), model,
            credential(spec, role, "JUDGE_API_KEY_" + upper_env_name(name)), field(spec, "temperature", 0.0, role));
    } else {
        throw ConfigError(role + ": unknown kind " + kind);
    }
    auto judge = std::make_shared<CachedJudge>(inner, context_);
    judges_[name] = judge;
    return judge;
}

Json BackendRegistry::judge_settings(const std::string& name) const {
    const Json judges = config_.value("judges", Json::object());
    if (!judges.contains(name)) return Json{{"kind", "mock"}};
    const auto spec = normalize_spec(judges[name], "judge " + name);
    Json out{{"kind", spec["kind"]}};
    if (spec["kind"] == "openai") {
        out["model"] = spec.value("model", "");
        out["temperature"] = spec.value("temperature", 0.0);
    }
    return out;
}

}  // namespace qafila
