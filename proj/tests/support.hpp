#ifndef QAFILA_TESTS_SUPPORT_HPP
#define QAFILA_TESTS_SUPPORT_HPP

#include <atomic>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "qafila/corpus_model.hpp"

namespace qtest {

inline std::string fixture(const std::string& name) { return std::string(QAFILA_FIXTURES) + "/" + name; }

inline qafila::Json load_json(const std::string& name) { return qafila::Json::parse(qafila::read_file(fixture(name))); }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("qafila-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

inline qafila::Sample make_sample(std::string id, qafila::ContentType type, std::vector<qafila::Turn> turns,
                                  qafila::Language lang = qafila::Language::english,
                                  qafila::Stage stage = qafila::Stage::instruct) {
    qafila::Sample s;
    s.id = std::move(id);
    s.image_ref = "images/" + s.id + ".jpg";
    s.turns = std::move(turns);
    s.language = lang;
    s.stage = stage;
    s.content_type = type;
    return s;
}

/// English instruct corpus with varied vocabulary; content types cycle.
inline std::vector<qafila::Sample> english_corpus(std::size_t n, std::uint64_t seed = 1) {
    static const char* words[] = {"red",    "car",   "street", "people", "walking", "dog",    "park",
                                  "bright", "sky",   "market", "fruit",  "vendor",  "child",  "bicycle",
                                  "river",  "boat",  "bridge", "old",    "building", "window", "train",
                                  "cat",    "table", "kitchen", "plate", "food",    "green",  "tree"};
    std::mt19937_64 rng(seed);
    auto sentence = [&](std::size_t len) {
        std::string s;
        for (std::size_t i = 0; i < len; ++i) {
            if (i) s += ' ';
            s += words[rng() % std::size(words)];
        }
        return s;
    };
    std::vector<qafila::Sample> out;
    for (std::size_t i = 0; i < n; ++i) {
        const auto type = qafila::kAllContentTypes[i % 3];
        std::vector<qafila::Turn> turns;
        if (type == qafila::ContentType::detailed_description)
            turns.push_back({"Describe the image in detail.", "The image shows " + sentence(12)});
        else
            for (int t = 0; t < 2; ++t) turns.push_back({"What " + sentence(5) + "?", "It is " + sentence(9)});
        out.push_back(make_sample("s" + std::to_string(i), type, std::move(turns)));
    }
    return out;
}

inline bool within(double actual, double expected, double tol) { return std::abs(actual - expected) <= tol + 1e-9; }

}  // namespace qtest

#endif  // QAFILA_TESTS_SUPPORT_HPP
