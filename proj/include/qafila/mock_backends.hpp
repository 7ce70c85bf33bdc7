#ifndef QAFILA_MOCK_BACKENDS_HPP
#define QAFILA_MOCK_BACKENDS_HPP

#include <atomic>
#include <cstdint>
#include <functional>
#include <string>

#include "qafila/backends.hpp"

namespace qafila {

/// Feature-hashing embedder over character trigrams and word unigrams.
/// Deterministic for a fixed seed; empty text maps to the zero vector.
class MockEmbedder final : public Embedder {
public:
    static constexpr std::size_t kDefaultDimension = 256;

    explicit MockEmbedder(std::uint64_t seed = 0, std::size_t dimension = kDefaultDimension);
    std::string id() const override;
    std::size_t dimension() const override { return dimension_; }
    Embedding embed(const std::string& text) override;

    std::size_t calls() const noexcept { return calls_; }

private:
    std::uint64_t seed_;
    std::size_t dimension_;
    std::atomic<std::size_t> calls_{0};
};

/// Reversible tagged translator. Translating text that carries the source
/// tag strips it; anything else gets the target tag prepended, so a round
/// trip reproduces the source exactly. Lossy mode replaces each token of the
/// forward translation with a marker token with probability `rate`.
class MockTranslator final : public Translator {
public:
    enum class Mode { faithful, lossy };

    explicit MockTranslator(Mode mode = Mode::faithful, double rate = 0.0, std::uint64_t seed = 0);
    std::string id() const override;
    std::string translate(const std::string& text, const std::string& source_lang,
                          const std::string& target_lang) override;

    std::size_t calls() const noexcept { return calls_; }
    static std::string tag(const std::string& lang) { return "[" + lang + "] "; }

private:
    Mode mode_;
    double rate_;
    std::uint64_t seed_;
    std::atomic<std::size_t> calls_{0};
};

class MockCaptioner final : public Captioner {
public:
    explicit MockCaptioner(std::uint64_t seed = 0) : seed_(seed) {}
    std::string id() const override { return "mock-captioner"; }
    std::string describe(const std::string& image_ref) override;

    std::size_t calls() const noexcept { return calls_; }

private:
    std::uint64_t seed_;
    std::atomic<std::size_t> calls_{0};
};

/// Replies with strict JSON scores derived from a hash of the prompt. The
/// reply shape follows the format instruction found in the prompt.
class MockJudge final : public Judge {
public:
    explicit MockJudge(std::string id = "mock", std::uint64_t seed = 0) : id_(std::move(id)), seed_(seed) {}
    std::string id() const override { return id_; }
    std::string complete(const std::string& prompt) override;

    std::size_t calls() const noexcept { return calls_; }

private:
    std::string id_;
    std::uint64_t seed_;
    std::atomic<std::size_t> calls_{0};
};

/// Judge driven by a caller-supplied reply function.
class ScriptedJudge final : public Judge {
public:
    using Script = std::function<std::string(const std::string& prompt)>;

    ScriptedJudge(std::string id, Script script) : id_(std::move(id)), script_(std::move(script)) {}
    std::string id() const override { return id_; }
    std::string complete(const std::string& prompt) override {
        ++calls_;
        return script_(prompt);
    }

    std::size_t calls() const noexcept { return calls_; }

private:
    std::string id_;
    Script script_;
    std::atomic<std::size_t> calls_{0};
};

}  // namespace qafila

#endif  // QAFILA_MOCK_BACKENDS_HPP
