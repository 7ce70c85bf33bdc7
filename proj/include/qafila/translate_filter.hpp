#ifndef QAFILA_TRANSLATE_FILTER_HPP
#define QAFILA_TRANSLATE_FILTER_HPP

#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qafila/backends.hpp"
#include "qafila/corpus_model.hpp"

namespace qafila {

/// The threshold the filter uses unless told otherwise (80% cosine similarity).
inline constexpr double kDefaultSimilarityThreshold = 0.80;

enum class TextField { question, answer };
std::string_view to_string(TextField f);
std::optional<TextField> parse_text_field(std::string_view s);

/// Round-trip artifact for one turn field. A record whose source text is
/// empty (caption samples have no question) is exempt: it is never
/// translated, scored or filtered on.
struct TranslationRecord {
    std::string sample_id;
    std::size_t turn_index = 0;
    TextField field = TextField::question;
    std::string source_text;
    std::string translated_text;
    std::string back_translated_text;
    std::optional<double> similarity;
    bool unscorable = false;
    Json extra = Json::object();

    bool exempt() const { return source_text.empty(); }
    bool operator==(const TranslationRecord&) const = default;
};

template <>
struct JsonCodec<TranslationRecord> {
    static Json encode(const TranslationRecord& v);
    static TranslationRecord decode(const Json& j);
};

struct FailingField {
    std::size_t turn_index = 0;
    TextField field = TextField::question;
    std::optional<double> similarity;  // empty for unscorable texts

    bool operator==(const FailingField&) const = default;
};

struct FilterDecision {
    std::string sample_id;
    bool retained = false;
    std::optional<double> min_question_sim;
    std::optional<double> min_answer_sim;
    double threshold = kDefaultSimilarityThreshold;
    std::vector<FailingField> failing_fields;

    bool operator==(const FilterDecision&) const = default;
};

template <>
struct JsonCodec<FilterDecision> {
    static Json encode(const FilterDecision& v);
    static FilterDecision decode(const Json& j);
};

struct RetentionCounts {
    std::size_t total = 0;
    std::size_t retained = 0;
    std::size_t dropped = 0;

    double rate() const { return total == 0 ? 0.0 : static_cast<double>(retained) / static_cast<double>(total); }
    bool operator==(const RetentionCounts&) const = default;
};

struct RetentionStats {
    RetentionCounts overall;
    std::map<ContentType, RetentionCounts> by_content_type;

    double retention_rate() const { return overall.rate(); }
    Json to_json(double threshold) const;
};

struct FilterResult {
    std::vector<Sample> retained;
    std::vector<Sample> dropped;
    std::vector<FilterDecision> decisions;
    RetentionStats stats;
};

struct SweepPoint {
    double threshold = 0;
    double retention_rate = 0;
};

/// Raised when a pipeline step fails for one sample; names the sample.
class PipelineError : public std::runtime_error {
public:
    PipelineError(std::string sample_id, const std::string& what)
        : std::runtime_error(sample_id + ": " + what), sample_id_(std::move(sample_id)) {}
    const std::string& sample_id() const noexcept { return sample_id_; }

private:
    std::string sample_id_;
};

/// Maps a language code ("en", "ar") to the corpus language it denotes, if any.
std::optional<Language> language_for_code(std::string_view code);

/// Forward translation then back-translation for every turn field, ordered
/// by (turn_index, question before answer). Backend errors are rethrown with
/// the sample id attached (original type preserved for transport/protocol).
std::vector<TranslationRecord> roundtrip_sample(const Sample& sample, Translator& translator,
                                                const std::string& source_lang, const std::string& target_lang);

/// roundtrip_sample over a corpus on up to `jobs` workers; output follows input order.
std::vector<TranslationRecord> roundtrip_corpus(std::span<const Sample> samples, Translator& translator,
                                                const std::string& source_lang, const std::string& target_lang,
                                                std::size_t jobs = 1);

/// Fills `similarity` with cosine(embed(source), embed(back-translation)).
/// Each distinct text is embedded once. Empty back-translations and zero
/// embeddings mark the record unscorable. Returns the number of embed calls.
std::size_t score_records(std::span<TranslationRecord> records, Embedder& embedder, std::size_t jobs = 1);

/// Keeps a sample iff every non-exempt turn field has similarity >= threshold.
/// Unscorable fields always fail. Throws PipelineError if a sample's records
/// are missing or unscored.
FilterResult filter_corpus(std::span<const Sample> samples, std::span<const TranslationRecord> records,
                           double threshold = kDefaultSimilarityThreshold);

std::vector<SweepPoint> threshold_sweep(std::span<const Sample> samples, std::span<const TranslationRecord> records,
                                        std::span<const double> grid);

/// Parses "start:stop:step" (inclusive stop) or a comma-separated list.
std::vector<double> parse_grid(std::string_view spec);

std::string sweep_to_csv(std::span<const SweepPoint> curve);

/// Rebuilds a sample in the target language from its round-trip records.
/// The copy is id "<source id>-<language>" and records the source id in extra.source_id.
Sample translated_sample(const Sample& source, std::span<const TranslationRecord> records, Language target);

}  // namespace qafila

#endif  // QAFILA_TRANSLATE_FILTER_HPP
