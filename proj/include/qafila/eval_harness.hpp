#ifndef QAFILA_EVAL_HARNESS_HPP
#define QAFILA_EVAL_HARNESS_HPP

#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qafila/backends.hpp"
#include "qafila/corpus_model.hpp"

namespace qafila {

class BenchmarkError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Benchmark {
    std::string name;
    Rubric rubric = Rubric::msa_relative;
    std::vector<BenchmarkItem> items;

    std::map<Category, std::size_t> category_counts() const;
    std::map<Dialect, std::size_t> dialect_counts() const;
    std::size_t distinct_images() const;
    const BenchmarkItem* find(const std::string& item_id) const;
};

/// Parses benchmark.jsonl. An optional first line {"benchmark": {...}} may
/// declare name, rubric, item_count, image_count and questions_per_dialect;
/// declared counts are enforced. Without a header the rubric follows the items.
Benchmark parse_benchmark(std::string_view jsonl, std::string default_name = "benchmark");
Benchmark load_benchmark(const std::string& path);

/// Header line for a benchmark file with its actual counts.
Json benchmark_header(const Benchmark& bench);

class PromptError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Judge prompt with {placeholder} slots. Recognised placeholders:
/// {question} {response} {reference} {image_description} {dialect} {output_format}.
/// Braces not enclosing a bare identifier (JSON examples) are literal text.
struct JudgePromptTemplate {
    std::string text;
    Rubric rubric = Rubric::dialect_da_ca;
    std::string output_instruction;
    std::string strict_output_instruction;

    static JudgePromptTemplate default_for(Rubric rubric);
    /// Template text from a UTF-8 file, with the rubric's default output instructions.
    static JudgePromptTemplate from_file(const std::string& path, Rubric rubric);

    static std::vector<std::string> required_placeholders(Rubric rubric);
    /// Throws PromptError if a required placeholder is absent or an unknown one is present.
    void validate() const;
};

/// Caches one image description per image_ref. Descriptions may be preloaded
/// (offline runs); the rest come from the captioner.
class JudgeContextProvider {
public:
    explicit JudgeContextProvider(std::shared_ptr<Captioner> captioner = nullptr);

    void add_description(const std::string& image_ref, std::string description);
    /// JSONL lines {"image_ref": ..., "description": ...}.
    void load_descriptions(const std::string& path);

    std::string describe(const std::string& image_ref);
    std::size_t captioner_calls() const noexcept { return captioner_calls_; }

private:
    std::shared_ptr<Captioner> captioner_;
    std::mutex mutex_;
    std::map<std::string, std::string> descriptions_;
    std::size_t captioner_calls_ = 0;
};

/// Image context text for an item; non-empty or throws.
std::string build_judge_context(const BenchmarkItem& item, JudgeContextProvider& provider);

/// Fills the template. Relative scoring embeds the item's reference answer
/// and the candidate response; dialect scoring embeds the dialect name.
/// `strict` swaps in the stricter output instruction used for a re-ask.
std::string render_prompt(const JudgePromptTemplate& tmpl, const BenchmarkItem& item, const std::string& response,
                          const std::string& context, bool strict = false);

struct Evaluator {
    std::string id;
    std::shared_ptr<Judge> judge;
};

struct SkipRecord {
    std::string item_id;
    std::string model_id;
    std::string evaluator_id;
    std::string reason;

    bool operator==(const SkipRecord&) const = default;
};

template <>
struct JsonCodec<SkipRecord> {
    static Json encode(const SkipRecord& v);
    static SkipRecord decode(const Json& j);
};

class CoverageError : public std::runtime_error {
public:
    CoverageError(std::vector<std::pair<std::string, std::string>> missing);
    const std::vector<std::pair<std::string, std::string>>& missing() const noexcept { return missing_; }

private:
    std::vector<std::pair<std::string, std::string>> missing_;
};

struct EvaluationOptions {
    std::size_t jobs = 1;
    /// Models to score, in output order. Empty: every model in the responses, sorted.
    std::vector<std::string> models;
    /// Decoding settings recorded on every record (e.g. {"temperature": 0}).
    Json judge_settings = Json::object();
};

struct EvaluationResult {
    std::vector<ScoreRecord> records;
    std::vector<SkipRecord> skips;
};

/// One ScoreRecord or SkipRecord per (item, model, evaluator), ordered by
/// benchmark item, then model, then evaluator. A failed judgment becomes a
/// skip; it never aborts the run. An unparseable reply gets one re-ask.
EvaluationResult run_evaluation(const Benchmark& bench, std::span<const ModelResponse> responses,
                                std::span<const Evaluator> evaluators, const JudgePromptTemplate& tmpl,
                                JudgeContextProvider& contexts, const EvaluationOptions& options = {});

}  // namespace qafila

#endif  // QAFILA_EVAL_HARNESS_HPP
