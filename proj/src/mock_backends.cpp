#include "qafila/mock_backends.hpp"

#include <cstdio>

#include "qafila/random.hpp"
#include "qafila/text.hpp"

namespace qafila {

namespace {

constexpr std::uint64_t kWordSalt = 0x77u;
constexpr std::uint64_t kTrigramSalt = 0x33u;

void add_feature(Embedding& v, std::string_view feature, std::uint64_t seed, double weight) {
    const std::uint64_t h = mix64(fnv1a64(feature) ^ seed);
    const auto index = static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(v.size()));
    const double sign = ((h >> 63) & 1u) ? 1.0 : -1.0;
    v[index] += sign * weight;
}

std::string hex6(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf, 6);
}

}  // namespace

MockEmbedder::MockEmbedder(std::uint64_t seed, std::size_t dimension) : seed_(seed), dimension_(dimension) {}

std::string MockEmbedder::id() const { return "mock-embedder-" + std::to_string(dimension_) + "-s" + std::to_string(seed_); }

Embedding MockEmbedder::embed(const std::string& text) {
    ++calls_;
    Embedding v = Embedding::Zero(static_cast<Eigen::Index>(dimension_));
    if (text.empty()) return v;
    for (const auto& word : split_whitespace(text)) add_feature(v, word, mix64(seed_ ^ kWordSalt), 1.0);
    const std::string padded = " " + text + " ";
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i)
        add_feature(v, std::string_view(padded).substr(i, 3), mix64(seed_ ^ kTrigramSalt), 0.5);
    return v;
}

MockTranslator::MockTranslator(Mode mode, double rate, std::uint64_t seed) : mode_(mode), rate_(rate), seed_(seed) {}

std::string MockTranslator::id() const {
    if (mode_ == Mode::faithful) return "mock-translator-faithful";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", rate_);
    return "mock-translator-lossy-" + std::string(buf) + "-s" + std::to_string(seed_);
}

std::string MockTranslator::translate(const std::string& text, const std::string& source_lang,
                                      const std::string& target_lang) {
    ++calls_;
    const std::string src_tag = tag(source_lang);
    if (text.rfind(src_tag, 0) == 0) return text.substr(src_tag.size());
    if (mode_ == Mode::faithful || rate_ <= 0.0) return tag(target_lang) + text;

    std::string out = tag(target_lang);
    const auto tokens = split_whitespace(text);
    const std::uint64_t text_hash = fnv1a64(text, mix64(seed_));
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const std::uint64_t h = mix64(text_hash ^ mix64(i + 1));
        const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
        if (i) out += ' ';
        if (u < rate_)
            out += "~" + hex6(mix64(h));
        else
            out += tokens[i];
    }
    return out;
}

std::string MockCaptioner::describe(const std::string& image_ref) {
    ++calls_;
    static constexpr const char* kScenes[] = {"a busy street with pedestrians and parked cars",
                                              "a kitchen table with plates of food",
                                              "a group of people standing near a bus",
                                              "a living room with a sofa and a television",
                                              "a beach with umbrellas under a clear sky",
                                              "a market stall with fruit and vegetables"};
    const auto h = mix64(fnv1a64(image_ref) ^ seed_);
    return "Detailed description of " + image_ref + ": the image shows " + kScenes[h % std::size(kScenes)] + ".";
}

std::string MockJudge::complete(const std::string& prompt) {
    ++calls_;
    const auto h = mix64(fnv1a64(prompt) ^ mix64(seed_));
    auto pick = [&](int shift, int lo, int hi) { return lo + static_cast<int>((h >> shift) % (hi - lo + 1)); };
    if (prompt.find("\"reference\"") != std::string::npos)
        return "{\"reference\": " + std::to_string(pick(0, 6, 10)) +
               ", \"candidate\": " + std::to_string(pick(16, 5, 10)) + "}";
    if (prompt.find("\"DA\"") != std::string::npos)
        return "{\"DA\": " + std::to_string(pick(0, 1, 10)) + ", \"CA\": " + std::to_string(pick(16, 1, 10)) + "}";
    return "{\"score\": " + std::to_string(pick(0, 1, 10)) + "}";
}

}  // namespace qafila
