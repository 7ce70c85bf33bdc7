#include "qafila/corpus_model.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <utility>

namespace qafila {

namespace {

template <class E, std::size_t N>
using NameTable = std::array<std::pair<E, std::string_view>, N>;

constexpr NameTable<Language, 3> kLanguageNames{{
    {Language::english, "english"}, {Language::msa, "msa"}, {Language::dialect, "dialect"}}};
constexpr NameTable<Dialect, 6> kDialectNames{{{Dialect::egypt, "egypt"},
                                               {Dialect::mauritania, "mauritania"},
                                               {Dialect::morocco, "morocco"},
                                               {Dialect::palestine, "palestine"},
                                               {Dialect::saudi, "saudi"},
                                               {Dialect::yemen, "yemen"}}};
constexpr NameTable<Stage, 3> kStageNames{
    {{Stage::pretrain, "pretrain"}, {Stage::instruct, "instruct"}, {Stage::dialect_tune, "dialect_tune"}}};
constexpr NameTable<ContentType, 3> kContentTypeNames{{{ContentType::conversation, "conversation"},
                                                       {ContentType::detailed_description, "detailed_description"},
                                                       {ContentType::complex_reasoning, "complex_reasoning"}}};
constexpr NameTable<Category, 4> kCategoryNames{{{Category::conversation, "conversation"},
                                                 {Category::details, "details"},
                                                 {Category::complex_reasoning, "complex_reasoning"},
                                                 {Category::dialect, "dialect"}}};
constexpr NameTable<Rubric, 3> kRubricNames{{{Rubric::msa_relative, "msa_relative"},
                                             {Rubric::dialect_da_ca, "dialect_da_ca"},
                                             {Rubric::human_overall, "human_overall"}}};

template <class E, std::size_t N>
std::string_view name_of(const NameTable<E, N>& table, E v) {
    for (const auto& [e, name] : table)
        if (e == v) return name;
    return "?";
}

template <class E, std::size_t N>
std::optional<E> parse_of(const NameTable<E, N>& table, std::string_view s) {
    for (const auto& [e, name] : table)
        if (name == s) return e;
    return std::nullopt;
}

// Reads the known fields out of `j` and leaves everything else for `extra`.
class FieldReader {
public:
    FieldReader(const Json& j, std::string record_id) : rest_(j), id_(std::move(record_id)) {}

    const std::string& id() const { return id_; }

    std::string string(const char* key) {
        auto v = take(key);
        if (!v) throw ValidationError(id_, key, "missing field");
        if (!v->is_string()) throw ValidationError(id_, key, "expected a string");
        return v->get<std::string>();
    }

    std::optional<std::string> optional_string(const char* key) {
        auto v = take(key);
        if (!v || v->is_null()) return std::nullopt;
        if (!v->is_string()) throw ValidationError(id_, key, "expected a string");
        return v->get<std::string>();
    }

    std::int64_t integer(const char* key) {
        auto v = take(key);
        if (!v) throw ValidationError(id_, key, "missing field");
        if (!v->is_number_integer()) throw ValidationError(id_, key, "expected an integer");
        return v->get<std::int64_t>();
    }

    Json object(const char* key) {
        auto v = take(key);
        if (!v || v->is_null()) return Json::object();
        if (!v->is_object()) throw ValidationError(id_, key, "expected an object");
        return *v;
    }

    Json array(const char* key) {
        auto v = take(key);
        if (!v) throw ValidationError(id_, key, "missing field");
        if (!v->is_array()) throw ValidationError(id_, key, "expected an array");
        return *v;
    }

    template <class E>
    E enumeration(const char* key, std::optional<E> (*parse)(std::string_view)) {
        auto s = string(key);
        auto e = parse(s);
        if (!e) throw ValidationError(id_, key, "unknown enum value '" + s + "'");
        return *e;
    }

    template <class E>
    std::optional<E> optional_enumeration(const char* key, std::optional<E> (*parse)(std::string_view)) {
        auto s = optional_string(key);
        if (!s) return std::nullopt;
        auto e = parse(*s);
        if (!e) throw ValidationError(id_, key, "unknown enum value '" + *s + "'");
        return e;
    }

    Json extra() const { return rest_; }

private:
    std::optional<Json> take(const char* key) {
        auto it = rest_.find(key);
        if (it == rest_.end()) return std::nullopt;
        Json v = *it;
        rest_.erase(it);
        return v;
    }

    Json rest_;
    std::string id_;
};

std::string peek_id(const Json& j, const char* key) {
    auto it = j.find(key);
    if (it != j.end() && it->is_string()) return it->get<std::string>();
    return "<unknown>";
}

void append_extra(Json& out, const Json& extra) {
    for (auto it = extra.begin(); it != extra.end(); ++it)
        if (!out.contains(it.key())) out[it.key()] = it.value();
}

}  // namespace

std::string_view to_string(Language v) { return name_of(kLanguageNames, v); }
std::string_view to_string(Dialect v) { return name_of(kDialectNames, v); }
std::string_view to_string(Stage v) { return name_of(kStageNames, v); }
std::string_view to_string(ContentType v) { return name_of(kContentTypeNames, v); }
std::string_view to_string(Category v) { return name_of(kCategoryNames, v); }
std::string_view to_string(Rubric v) { return name_of(kRubricNames, v); }

std::optional<Language> parse_language(std::string_view s) { return parse_of(kLanguageNames, s); }
std::optional<Dialect> parse_dialect(std::string_view s) { return parse_of(kDialectNames, s); }
std::optional<Stage> parse_stage(std::string_view s) { return parse_of(kStageNames, s); }
std::optional<ContentType> parse_content_type(std::string_view s) { return parse_of(kContentTypeNames, s); }
std::optional<Category> parse_category(std::string_view s) { return parse_of(kCategoryNames, s); }
std::optional<Rubric> parse_rubric(std::string_view s) { return parse_of(kRubricNames, s); }

std::string_view display_name(Dialect v) {
    switch (v) {
        case Dialect::egypt: return "Egypt";
        case Dialect::mauritania: return "Mauritania";
        case Dialect::morocco: return "Morocco";
        case Dialect::palestine: return "Palestine";
        case Dialect::saudi: return "Saudi";
        case Dialect::yemen: return "Yemen";
    }
    return "?";
}

ValidationError::ValidationError(std::string record_id, std::string field, const std::string& reason)
    : std::runtime_error(record_id + ": " + field + ": " + reason),
      record_id_(std::move(record_id)),
      field_(std::move(field)),
      reason_(reason) {}

DecodeError::DecodeError(LineError error)
    : std::runtime_error("line " + std::to_string(error.line) + ": " + error.reason), error_(std::move(error)) {}

std::int64_t StageManifest::stage_total(Stage stage) const {
    std::int64_t sum = 0;
    for (const auto& e : entries)
        if (e.stage == stage) sum += e.count;
    return sum;
}

std::vector<std::string_view> rubric_dimensions(Rubric rubric) {
    switch (rubric) {
        case Rubric::msa_relative: return {dim::relative_percent};
        case Rubric::dialect_da_ca: return {dim::DA, dim::CA};
        case Rubric::human_overall: return {dim::score};
    }
    return {};
}

// ---------------------------------------------------------------- validation

void validate(const Turn& turn, std::string_view record_id, std::size_t index, Stage stage) {
    const std::string field = "turns[" + std::to_string(index) + "]";
    if (turn.answer.empty()) throw ValidationError(std::string(record_id), field + ".answer", "empty answer");
    if (turn.question.empty() && stage != Stage::pretrain)
        throw ValidationError(std::string(record_id), field + ".question",
                              "empty question outside pretrain caption samples");
}

void validate(const Sample& s) {
    if (s.id.empty()) throw ValidationError("<unknown>", "id", "empty id");
    if (s.turns.empty()) throw ValidationError(s.id, "turns", "no turns");
    if (s.stage == Stage::pretrain && s.turns.size() != 1)
        throw ValidationError(s.id, "turns", "pretrain samples have exactly one turn");
    if (s.dialect && s.language != Language::dialect)
        throw ValidationError(s.id, "dialect", "dialect without dialect language");
    if (!s.dialect && s.language == Language::dialect)
        throw ValidationError(s.id, "dialect", "dialect language without dialect");
    for (std::size_t i = 0; i < s.turns.size(); ++i) validate(s.turns[i], s.id, i, s.stage);
}

void validate(const BenchmarkItem& item) {
    if (item.id.empty()) throw ValidationError("<unknown>", "id", "empty id");
    const bool is_dialect = item.category == Category::dialect;
    if (is_dialect && !item.dialect) throw ValidationError(item.id, "dialect", "dialect category without dialect");
    if (!is_dialect && item.dialect) throw ValidationError(item.id, "dialect", "dialect set on non-dialect item");
}

void validate(const ModelResponse& r) {
    if (r.item_id.empty()) throw ValidationError("<unknown>", "item_id", "empty item_id");
    if (r.model_id.empty()) throw ValidationError(r.item_id, "model_id", "empty model_id");
}

void validate(const ScoreRecord& r) {
    const std::string id = r.item_id.empty() ? "<unknown>" : r.item_id;
    if (r.evaluator_id.empty()) throw ValidationError(id, "evaluator_id", "empty evaluator_id");
    if (r.model_id.empty()) throw ValidationError(id, "model_id", "empty model_id");
    auto dims = rubric_dimensions(r.rubric);
    if (r.values.size() != dims.size())
        throw ValidationError(id, "values", "dimensions inconsistent with rubric " + std::string(to_string(r.rubric)));
    for (auto d : dims) {
        auto it = r.values.find(std::string(d));
        if (it == r.values.end())
            throw ValidationError(id, "values", "missing dimension " + std::string(d) + " for rubric " +
                                                    std::string(to_string(r.rubric)));
        const double v = it->second;
        const bool relative = d == dim::relative_percent;
        const double lo = relative ? 0.0 : 1.0;
        const double hi = relative ? 200.0 : 10.0;
        if (!std::isfinite(v) || v < lo || v > hi) {
            std::ostringstream msg;
            msg << "value " << v << " outside [" << lo << ", " << hi << "]";
            throw ValidationError(id, "values." + std::string(d), msg.str());
        }
    }
}

std::vector<std::string> validate_manifest(const StageManifest& m) {
    std::vector<std::string> violations;
    std::int64_t sum = 0;
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        const auto& e = m.entries[i];
        if (e.count < 0)
            violations.push_back("entry " + std::to_string(i) + " (" + e.source + ") has negative count " +
                                 std::to_string(e.count));
        sum += e.count;
    }
    if (m.total < 0) violations.push_back("negative total " + std::to_string(m.total));
    if (sum != m.total)
        violations.push_back("total mismatch: expected " + std::to_string(sum) + " (sum of entries), declared " +
                             std::to_string(m.total));
    return violations;
}

void require_unique_ids(std::span<const Sample> samples) {
    std::set<std::string_view> seen;
    for (const auto& s : samples)
        if (!seen.insert(s.id).second) throw ValidationError(s.id, "id", "duplicate id within corpus");
}

// ---------------------------------------------------------------- codecs

Json JsonCodec<Sample>::encode(const Sample& v) {
    validate(v);
    Json j;
    j["id"] = v.id;
    j["image_ref"] = v.image_ref;
    Json turns = Json::array();
    for (const auto& t : v.turns) turns.push_back(Json{{"question", t.question}, {"answer", t.answer}});
    j["turns"] = std::move(turns);
    j["language"] = to_string(v.language);
    if (v.dialect) j["dialect"] = to_string(*v.dialect);
    j["stage"] = to_string(v.stage);
    j["content_type"] = to_string(v.content_type);
    append_extra(j, v.extra);
    return j;
}

Sample JsonCodec<Sample>::decode(const Json& j) {
    FieldReader r(j, peek_id(j, "id"));
    Sample s;
    s.id = r.string("id");
    s.image_ref = r.string("image_ref");
    const Json turns = r.array("turns");
    for (std::size_t i = 0; i < turns.size(); ++i) {
        const auto& t = turns[i];
        const std::string field = "turns[" + std::to_string(i) + "]";
        if (!t.is_object()) throw ValidationError(s.id, field, "expected an object");
        auto q = t.find("question");
        auto a = t.find("answer");
        if (q == t.end() || !q->is_string()) throw ValidationError(s.id, field + ".question", "expected a string");
        if (a == t.end() || !a->is_string()) throw ValidationError(s.id, field + ".answer", "expected a string");
        s.turns.push_back(Turn{q->get<std::string>(), a->get<std::string>()});
    }
    s.language = r.enumeration("language", &parse_language);
    s.dialect = r.optional_enumeration("dialect", &parse_dialect);
    s.stage = r.enumeration("stage", &parse_stage);
    s.content_type = r.enumeration("content_type", &parse_content_type);
    s.extra = r.extra();
    validate(s);
    return s;
}

Json JsonCodec<ManifestEntry>::encode(const ManifestEntry& v) {
    Json j;
    j["stage"] = to_string(v.stage);
    j["source"] = v.source;
    j["count"] = v.count;
    append_extra(j, v.extra);
    return j;
}

ManifestEntry JsonCodec<ManifestEntry>::decode(const Json& j) {
    FieldReader r(j, peek_id(j, "source"));
    ManifestEntry e;
    e.stage = r.enumeration("stage", &parse_stage);
    e.source = r.string("source");
    e.count = r.integer("count");
    e.extra = r.extra();
    return e;
}

Json JsonCodec<StageManifest>::encode(const StageManifest& v) {
    Json j;
    Json entries = Json::array();
    for (const auto& e : v.entries) entries.push_back(JsonCodec<ManifestEntry>::encode(e));
    j["entries"] = std::move(entries);
    j["total"] = v.total;
    append_extra(j, v.extra);
    return j;
}

StageManifest JsonCodec<StageManifest>::decode(const Json& j) {
    FieldReader r(j, "manifest");
    StageManifest m;
    for (const auto& e : r.array("entries")) {
        if (!e.is_object()) throw ValidationError("manifest", "entries", "expected objects");
        m.entries.push_back(JsonCodec<ManifestEntry>::decode(e));
    }
    m.total = r.integer("total");
    m.extra = r.extra();
    return m;
}

Json JsonCodec<BenchmarkItem>::encode(const BenchmarkItem& v) {
    validate(v);
    Json j;
    j["id"] = v.id;
    j["image_ref"] = v.image_ref;
    j["question"] = v.question;
    j["category"] = to_string(v.category);
    if (v.dialect) j["dialect"] = to_string(*v.dialect);
    if (v.reference_answer) j["reference_answer"] = *v.reference_answer;
    append_extra(j, v.extra);
    return j;
}

BenchmarkItem JsonCodec<BenchmarkItem>::decode(const Json& j) {
    FieldReader r(j, peek_id(j, "id"));
    BenchmarkItem it;
    it.id = r.string("id");
    it.image_ref = r.string("image_ref");
    it.question = r.string("question");
    it.category = r.enumeration("category", &parse_category);
    it.dialect = r.optional_enumeration("dialect", &parse_dialect);
    it.reference_answer = r.optional_string("reference_answer");
    it.extra = r.extra();
    validate(it);
    return it;
}

Json JsonCodec<ModelResponse>::encode(const ModelResponse& v) {
    validate(v);
    Json j;
    j["item_id"] = v.item_id;
    j["model_id"] = v.model_id;
    j["response"] = v.response;
    j["metadata"] = v.metadata;
    append_extra(j, v.extra);
    return j;
}

ModelResponse JsonCodec<ModelResponse>::decode(const Json& j) {
    FieldReader r(j, peek_id(j, "item_id"));
    ModelResponse m;
    m.item_id = r.string("item_id");
    m.model_id = r.string("model_id");
    m.response = r.string("response");
    m.metadata = r.object("metadata");
    m.extra = r.extra();
    validate(m);
    return m;
}

Json JsonCodec<ScoreRecord>::encode(const ScoreRecord& v) {
    validate(v);
    Json j;
    j["item_id"] = v.item_id;
    j["model_id"] = v.model_id;
    j["evaluator_id"] = v.evaluator_id;
    j["rubric"] = to_string(v.rubric);
    Json values = Json::object();
    for (const auto& [k, x] : v.values) values[k] = x;
    j["values"] = std::move(values);
    if (v.raw_reply) j["raw_reply"] = *v.raw_reply;
    j["metadata"] = v.metadata;
    append_extra(j, v.extra);
    return j;
}

ScoreRecord JsonCodec<ScoreRecord>::decode(const Json& j) {
    FieldReader r(j, peek_id(j, "item_id"));
    ScoreRecord s;
    s.item_id = r.string("item_id");
    s.model_id = r.string("model_id");
    s.evaluator_id = r.string("evaluator_id");
    s.rubric = r.enumeration("rubric", &parse_rubric);
    const Json values = r.object("values");
    for (auto it = values.begin(); it != values.end(); ++it) {
        if (!it.value().is_number()) throw ValidationError(s.item_id, "values." + it.key(), "expected a number");
        s.values[it.key()] = it.value().get<double>();
    }
    s.raw_reply = r.optional_string("raw_reply");
    s.metadata = r.object("metadata");
    s.extra = r.extra();
    validate(s);
    return s;
}

std::string dump_line(const Json& j) {
    try {
        return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::strict);
    } catch (const nlohmann::json::type_error& e) {
        throw ValidationError(peek_id(j, "id"), "<text>", std::string("invalid UTF-8: ") + e.what());
    }
}

// ---------------------------------------------------------------- files

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write failed for " + path);
}

StageManifest load_manifest(const std::string& path) {
    Json j;
    try {
        j = Json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("manifest", "<file>", std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw ValidationError("manifest", "<file>", "expected an object");
    return JsonCodec<StageManifest>::decode(j);
}

void save_manifest(const std::string& path, const StageManifest& manifest) {
    write_file(path, JsonCodec<StageManifest>::encode(manifest).dump(2) + "\n");
}

}  // namespace qafila
