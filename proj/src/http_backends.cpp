#include "qafila/http_backends.hpp"

#include <cmath>
#include <cstdlib>

#include <httplib.h>

#include "qafila/corpus_model.hpp"
#include "qafila/text.hpp"

namespace qafila {

Endpoint Endpoint::parse(const std::string& url) {
    const auto scheme_end = url.find("://");
    const auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    const auto path_start = url.find('/', host_start);
    if (path_start == std::string::npos) return {url, ""};
    std::string path = url.substr(path_start);
    while (!path.empty() && path.back() == '/') path.pop_back();
    return {url.substr(0, path_start), path};
}

nlohmann::json post_json(const Endpoint& endpoint, const std::string& path_suffix, const nlohmann::json& body,
                         const std::optional<std::string>& bearer_token, int timeout_seconds) {
    httplib::Client client(endpoint.origin);
    client.set_connection_timeout(timeout_seconds);
    client.set_read_timeout(timeout_seconds);
    client.set_write_timeout(timeout_seconds);
    httplib::Headers headers;
    if (bearer_token) headers.emplace("Authorization", "Bearer " + *bearer_token);
    const std::string path = endpoint.path + path_suffix;
    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res) throw TransportError("POST " + endpoint.origin + path + " failed: " + httplib::to_string(res.error()));
    if (res->status == 429 || res->status >= 500)
        throw TransportError("HTTP " + std::to_string(res->status) + " from " + endpoint.origin + path, true);
    if (res->status < 200 || res->status >= 300)
        throw TransportError("HTTP " + std::to_string(res->status) + " from " + endpoint.origin + path, false);
    try {
        return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error& e) {
        throw ProtocolError(std::string("reply is not JSON: ") + e.what());
    }
}

std::optional<std::string> env(const char* name) {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
}

namespace {

const nlohmann::json& at_path(const nlohmann::json& j, std::initializer_list<std::string_view> keys) {
    const nlohmann::json* cur = &j;
    for (auto k : keys) {
        if (!cur->is_object() || !cur->contains(k)) throw ProtocolError("reply lacks field " + std::string(k));
        cur = &(*cur)[std::string(k)];
    }
    return *cur;
}

std::string chat_content(const nlohmann::json& reply) {
    const auto& choices = at_path(reply, {"choices"});
    if (!choices.is_array() || choices.empty()) throw ProtocolError("reply has no choices");
    const auto& content = at_path(choices[0], {"message", "content"});
    if (!content.is_string()) throw ProtocolError("reply content is not a string");
    return content.get<std::string>();
}

}  // namespace

// ---------------------------------------------------------------- translator

GoogleTranslator::GoogleTranslator(std::string api_key, std::string base_url)
    : api_key_(std::move(api_key)), endpoint_(Endpoint::parse(base_url)) {}

std::string GoogleTranslator::translate(const std::string& text, const std::string& source_lang,
                                        const std::string& target_lang) {
    nlohmann::json body{{"q", text}, {"source", source_lang}, {"target", target_lang}, {"format", "text"}};
    auto reply = post_json(endpoint_, "/language/translate/v2?key=" + api_key_, body, std::nullopt);
    const auto& translations = at_path(reply, {"data", "translations"});
    if (!translations.is_array() || translations.empty()) throw ProtocolError("no translations in reply");
    const auto& t = at_path(translations[0], {"translatedText"});
    if (!t.is_string()) throw ProtocolError("translatedText is not a string");
    return t.get<std::string>();
}

// ---------------------------------------------------------------- embedder

HttpEmbedder::HttpEmbedder(std::string url, std::size_t dimension, std::optional<std::string> model,
                           std::optional<std::string> api_key)
    : endpoint_(Endpoint::parse(url)), dimension_(dimension), model_(std::move(model)), api_key_(std::move(api_key)) {}

std::string HttpEmbedder::id() const {
    return "http-embedder-" + (model_ ? *model_ : std::string("default")) + "-" + std::to_string(dimension_);
}

Embedding HttpEmbedder::embed(const std::string& text) {
    nlohmann::json body{{"input", text}};
    if (model_) body["model"] = *model_;
    auto reply = post_json(endpoint_, "", body, api_key_);
    const nlohmann::json* vec = nullptr;
    if (reply.contains("embedding")) {
        vec = &reply["embedding"];
    } else {
        const auto& data = at_path(reply, {"data"});
        if (!data.is_array() || data.empty()) throw ProtocolError("reply has no data");
        vec = &at_path(data[0], {"embedding"});
    }
    auto v = decode_embedding(vec->dump());
    if (static_cast<std::size_t>(v.size()) != dimension_)
        throw ProtocolError("embedding dimension " + std::to_string(v.size()) + " != configured " +
                            std::to_string(dimension_));
    return v;
}

// ---------------------------------------------------------------- judge

ChatCompletionJudge::ChatCompletionJudge(std::string id, std::string base_url, std::string model,
                                         std::optional<std::string> api_key, double temperature)
    : id_(std::move(id)),
      endpoint_(Endpoint::parse(base_url)),
      model_(std::move(model)),
      api_key_(std::move(api_key)),
      temperature_(temperature) {}

std::string ChatCompletionJudge::complete(const std::string& prompt) {
    nlohmann::json body{{"model", model_},
                        {"temperature", temperature_},
                        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};
    return chat_content(post_json(endpoint_, "/v1/chat/completions", body, api_key_));
}

// ---------------------------------------------------------------- captioner

ChatVisionCaptioner::ChatVisionCaptioner(std::string base_url, std::string model, std::optional<std::string> api_key,
                                         std::filesystem::path media_root)
    : endpoint_(Endpoint::parse(base_url)),
      model_(std::move(model)),
      api_key_(std::move(api_key)),
      media_root_(std::move(media_root)) {}

std::string ChatVisionCaptioner::describe(const std::string& image_ref) {
    std::string url = image_ref;
    if (image_ref.rfind("http://", 0) != 0 && image_ref.rfind("https://", 0) != 0) {
        const auto path = media_root_.empty() ? std::filesystem::path(image_ref) : media_root_ / image_ref;
        std::string bytes;
        try {
            bytes = read_file(path.string());
        } catch (const std::exception& e) {
            throw TransportError(std::string("cannot read image: ") + e.what(), false);
        }
        const auto ext = path.extension().string();
        const std::string mime = ext == ".png" ? "image/png" : "image/jpeg";
        url = "data:" + mime + ";base64," + base64_encode(bytes);
    }
    nlohmann::json content = nlohmann::json::array(
        {{{"type", "text"},
          {"text", "Describe the content of this image in detail, covering objects, people, actions, text and "
                   "setting."}},
         {{"type", "image_url"}, {"image_url", {{"url", url}}}}});
    nlohmann::json body{{"model", model_},
                        {"temperature", 0.0},
                        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", content}}})}};
    auto text = chat_content(post_json(endpoint_, "/v1/chat/completions", body, api_key_));
    if (text.empty()) throw ProtocolError("empty image description");
    return text;
}

}  // namespace qafila
