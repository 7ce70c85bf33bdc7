#ifndef QAFILA_CORPUS_MODEL_HPP
#define QAFILA_CORPUS_MODEL_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace qafila {

/// Ordered JSON: field order on encode follows insertion order, so JSONL
/// output is stable and diffable.
using Json = nlohmann::ordered_json;

enum class Language { english, msa, dialect };
enum class Dialect { egypt, mauritania, morocco, palestine, saudi, yemen };
enum class Stage { pretrain, instruct, dialect_tune };
enum class ContentType { conversation, detailed_description, complex_reasoning };
enum class Category { conversation, details, complex_reasoning, dialect };
enum class Rubric { msa_relative, dialect_da_ca, human_overall };

inline constexpr Dialect kAllDialects[] = {Dialect::egypt,     Dialect::mauritania, Dialect::morocco,
                                           Dialect::palestine, Dialect::saudi,      Dialect::yemen};
inline constexpr ContentType kAllContentTypes[] = {ContentType::conversation, ContentType::detailed_description,
                                                   ContentType::complex_reasoning};

std::string_view to_string(Language v);
std::string_view to_string(Dialect v);
std::string_view to_string(Stage v);
std::string_view to_string(ContentType v);
std::string_view to_string(Category v);
std::string_view to_string(Rubric v);

std::optional<Language> parse_language(std::string_view s);
std::optional<Dialect> parse_dialect(std::string_view s);
std::optional<Stage> parse_stage(std::string_view s);
std::optional<ContentType> parse_content_type(std::string_view s);
std::optional<Category> parse_category(std::string_view s);
std::optional<Rubric> parse_rubric(std::string_view s);

/// Human-readable dialect name ("Egypt", "Saudi", ...), used in prompts and tables.
std::string_view display_name(Dialect v);

/// Raised when a record breaks a type invariant. Names the record and field.
class ValidationError : public std::runtime_error {
public:
    ValidationError(std::string record_id, std::string field, const std::string& reason);

    const std::string& record_id() const noexcept { return record_id_; }
    const std::string& field() const noexcept { return field_; }
    const std::string& reason() const noexcept { return reason_; }

private:
    std::string record_id_;
    std::string field_;
    std::string reason_;
};

struct Turn {
    std::string question;
    std::string answer;

    bool operator==(const Turn&) const = default;
};

struct Sample {
    std::string id;
    std::string image_ref;
    std::vector<Turn> turns;
    Language language = Language::english;
    std::optional<Dialect> dialect;
    Stage stage = Stage::instruct;
    ContentType content_type = ContentType::conversation;
    Json extra = Json::object();

    bool operator==(const Sample&) const = default;
};

struct ManifestEntry {
    Stage stage = Stage::pretrain;
    std::string source;
    std::int64_t count = 0;
    Json extra = Json::object();

    bool operator==(const ManifestEntry&) const = default;
};

struct StageManifest {
    std::vector<ManifestEntry> entries;
    std::int64_t total = 0;
    Json extra = Json::object();

    std::int64_t stage_total(Stage stage) const;
    bool operator==(const StageManifest&) const = default;
};

struct BenchmarkItem {
    std::string id;
    std::string image_ref;
    std::string question;
    Category category = Category::conversation;
    std::optional<Dialect> dialect;
    std::optional<std::string> reference_answer;
    Json extra = Json::object();

    bool operator==(const BenchmarkItem&) const = default;
};

struct ModelResponse {
    std::string item_id;
    std::string model_id;
    std::string response;
    Json metadata = Json::object();
    Json extra = Json::object();

    bool operator==(const ModelResponse&) const = default;
};

namespace dim {
inline constexpr std::string_view DA = "DA";
inline constexpr std::string_view CA = "CA";
inline constexpr std::string_view score = "score";
inline constexpr std::string_view relative_percent = "relative_percent";
}  // namespace dim

struct ScoreRecord {
    std::string item_id;
    std::string model_id;
    std::string evaluator_id;
    Rubric rubric = Rubric::dialect_da_ca;
    std::map<std::string, double> values;
    std::optional<std::string> raw_reply;
    Json metadata = Json::object();
    Json extra = Json::object();

    bool operator==(const ScoreRecord&) const = default;
};

/// Dimension names a rubric requires, in canonical order.
std::vector<std::string_view> rubric_dimensions(Rubric rubric);

// Invariant checks. Each throws ValidationError on the first violation.
void validate(const Turn& turn, std::string_view record_id, std::size_t index, Stage stage);
void validate(const Sample& sample);
void validate(const BenchmarkItem& item);
void validate(const ModelResponse& response);
void validate(const ScoreRecord& record);

/// Returns human-readable violations; empty means the manifest is consistent.
std::vector<std::string> validate_manifest(const StageManifest& manifest);

/// Per-type JSON mapping. `decode` validates and throws ValidationError on
/// bad enums, missing fields, or invariant violations. Unknown fields are
/// kept in `extra` and re-emitted after the known ones.
template <class T>
struct JsonCodec;

template <>
struct JsonCodec<Sample> {
    static Json encode(const Sample& v);
    static Sample decode(const Json& j);
};
template <>
struct JsonCodec<ManifestEntry> {
    static Json encode(const ManifestEntry& v);
    static ManifestEntry decode(const Json& j);
};
template <>
struct JsonCodec<StageManifest> {
    static Json encode(const StageManifest& v);
    static StageManifest decode(const Json& j);
};
template <>
struct JsonCodec<BenchmarkItem> {
    static Json encode(const BenchmarkItem& v);
    static BenchmarkItem decode(const Json& j);
};
template <>
struct JsonCodec<ModelResponse> {
    static Json encode(const ModelResponse& v);
    static ModelResponse decode(const Json& j);
};
template <>
struct JsonCodec<ScoreRecord> {
    static Json encode(const ScoreRecord& v);
    static ScoreRecord decode(const Json& j);
};

/// Serializes to one compact UTF-8 line (no trailing newline).
std::string dump_line(const Json& j);

template <class T>
std::string encode_jsonl(std::span<const T> records) {
    std::string out;
    for (const auto& r : records) {
        out += dump_line(JsonCodec<T>::encode(r));
        out += '\n';
    }
    return out;
}

template <class T>
std::string encode_jsonl(const std::vector<T>& records) {
    return encode_jsonl(std::span<const T>(records));
}

enum class DecodeMode { lenient, strict };

struct LineError {
    std::size_t line = 0;  // 1-based
    std::string reason;
};

class DecodeError : public std::runtime_error {
public:
    explicit DecodeError(LineError error);
    const LineError& error() const noexcept { return error_; }

private:
    LineError error_;
};

template <class T>
struct DecodeResult {
    std::vector<T> records;
    std::vector<LineError> errors;
};

/// Parses one JSONL line into `out`. Returns the reason on failure.
template <class T>
std::optional<std::string> decode_line(std::string_view line, T& out) {
    Json j;
    try {
        j = Json::parse(line.begin(), line.end());
    } catch (const nlohmann::json::parse_error& e) {
        return std::string("malformed JSON: ") + e.what();
    }
    if (!j.is_object()) return std::string("malformed JSON: expected an object");
    try {
        out = JsonCodec<T>::decode(j);
    } catch (const ValidationError& e) {
        return std::string(e.what());
    }
    return std::nullopt;
}

/// Splits on LF, skipping empty lines. Strict mode throws DecodeError on the
/// first bad line; lenient mode collects line errors and keeps going.
template <class T>
DecodeResult<T> decode_jsonl(std::string_view stream, DecodeMode mode = DecodeMode::lenient) {
    DecodeResult<T> result;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < stream.size()) {
        auto end = stream.find('\n', pos);
        if (end == std::string_view::npos) end = stream.size();
        auto line = stream.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        T value;
        if (auto reason = decode_line(line, value)) {
            LineError err{line_no, std::move(*reason)};
            if (mode == DecodeMode::strict) throw DecodeError(std::move(err));
            result.errors.push_back(std::move(err));
        } else {
            result.records.push_back(std::move(value));
        }
    }
    return result;
}

/// Checks corpus-level uniqueness of sample ids. Throws ValidationError.
void require_unique_ids(std::span<const Sample> samples);

// File helpers (UTF-8, LF).
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

template <class T>
std::vector<T> load_jsonl(const std::string& path, DecodeMode mode = DecodeMode::strict) {
    return decode_jsonl<T>(read_file(path), mode).records;
}

template <class T>
void save_jsonl(const std::string& path, const std::vector<T>& records) {
    write_file(path, encode_jsonl(records));
}

StageManifest load_manifest(const std::string& path);
void save_manifest(const std::string& path, const StageManifest& manifest);

}  // namespace qafila

#endif  // QAFILA_CORPUS_MODEL_HPP
