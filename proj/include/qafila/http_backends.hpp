#ifndef QAFILA_HTTP_BACKENDS_HPP
#define QAFILA_HTTP_BACKENDS_HPP

#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "qafila/backends.hpp"

namespace qafila {

/// Splits "https://host:port/prefix" into the scheme-host-port part and the path prefix.
struct Endpoint {
    std::string origin;
    std::string path;

    static Endpoint parse(const std::string& url);
};

/// POSTs JSON and returns the parsed reply. Connection failures, 429 and 5xx
/// raise retryable TransportError; other non-2xx statuses are non-retryable.
/// Unparseable bodies raise ProtocolError.
nlohmann::json post_json(const Endpoint& endpoint, const std::string& path_suffix, const nlohmann::json& body,
                         const std::optional<std::string>& bearer_token, int timeout_seconds = 60);

/// Google Cloud Translation v2 REST (`POST /language/translate/v2?key=...`).
class GoogleTranslator final : public Translator {
public:
    GoogleTranslator(std::string api_key, std::string base_url = "https://translation.googleapis.com");
    std::string id() const override { return "google-translate-v2"; }
    std::string translate(const std::string& text, const std::string& source_lang,
                          const std::string& target_lang) override;

private:
    std::string api_key_;
    Endpoint endpoint_;
};

/// Embedding service. Sends {"input": text[, "model": m]} and accepts either
/// {"embedding": [...]} or the OpenAI {"data": [{"embedding": [...]}]} shape.
class HttpEmbedder final : public Embedder {
public:
    HttpEmbedder(std::string url, std::size_t dimension, std::optional<std::string> model = std::nullopt,
                 std::optional<std::string> api_key = std::nullopt);
    std::string id() const override;
    std::size_t dimension() const override { return dimension_; }
    Embedding embed(const std::string& text) override;

private:
    Endpoint endpoint_;
    std::size_t dimension_;
    std::optional<std::string> model_;
    std::optional<std::string> api_key_;
};

/// OpenAI-compatible chat completion judge (`POST <base>/v1/chat/completions`).
class ChatCompletionJudge final : public Judge {
public:
    ChatCompletionJudge(std::string id, std::string base_url, std::string model, std::optional<std::string> api_key,
                        double temperature = 0.0);
    std::string id() const override { return id_; }
    std::string complete(const std::string& prompt) override;

private:
    std::string id_;
    Endpoint endpoint_;
    std::string model_;
    std::optional<std::string> api_key_;
    double temperature_;
};

/// OpenAI-compatible vision chat captioner. Local image paths under
/// `media_root` are inlined as base64 data URLs; http(s) refs are passed through.
class ChatVisionCaptioner final : public Captioner {
public:
    ChatVisionCaptioner(std::string base_url, std::string model, std::optional<std::string> api_key,
                        std::filesystem::path media_root = {});
    std::string id() const override { return "vision-" + model_; }
    std::string describe(const std::string& image_ref) override;

private:
    Endpoint endpoint_;
    std::string model_;
    std::optional<std::string> api_key_;
    std::filesystem::path media_root_;
};

/// Reads an environment variable; empty values count as unset.
std::optional<std::string> env(const char* name);

}  // namespace qafila

#endif  // QAFILA_HTTP_BACKENDS_HPP
