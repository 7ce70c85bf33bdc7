#include "qafila/translate_filter.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <unordered_map>

#include "qafila/parallel.hpp"
#include "qafila/similarity.hpp"

namespace qafila {

std::string_view to_string(TextField f) { return f == TextField::question ? "question" : "answer"; }

std::optional<TextField> parse_text_field(std::string_view s) {
    if (s == "question") return TextField::question;
    if (s == "answer") return TextField::answer;
    return std::nullopt;
}

std::optional<Language> language_for_code(std::string_view code) {
    if (code == "en" || code == "english") return Language::english;
    if (code == "ar" || code == "msa") return Language::msa;
    return std::nullopt;
}

// ---------------------------------------------------------------- codecs

Json JsonCodec<TranslationRecord>::encode(const TranslationRecord& v) {
    Json j;
    j["sample_id"] = v.sample_id;
    j["turn_index"] = v.turn_index;
    j["field"] = to_string(v.field);
    j["source_text"] = v.source_text;
    j["translated_text"] = v.translated_text;
    j["back_translated_text"] = v.back_translated_text;
    if (v.similarity) j["similarity"] = *v.similarity;
    if (v.unscorable) j["unscorable"] = true;
    for (auto it = v.extra.begin(); it != v.extra.end(); ++it)
        if (!j.contains(it.key())) j[it.key()] = it.value();
    return j;
}

TranslationRecord JsonCodec<TranslationRecord>::decode(const Json& j) {
    TranslationRecord r;
    Json rest = j;
    const std::string id = j.contains("sample_id") && j["sample_id"].is_string() ? j["sample_id"].get<std::string>()
                                                                                  : "<unknown>";
    auto take = [&](const char* key) -> Json {
        auto it = rest.find(key);
        if (it == rest.end()) throw ValidationError(id, key, "missing field");
        Json v = *it;
        rest.erase(it);
        return v;
    };
    auto take_string = [&](const char* key) {
        auto v = take(key);
        if (!v.is_string()) throw ValidationError(id, key, "expected a string");
        return v.get<std::string>();
    };
    r.sample_id = take_string("sample_id");
    auto turn = take("turn_index");
    if (!turn.is_number_unsigned()) throw ValidationError(id, "turn_index", "expected a non-negative integer");
    r.turn_index = turn.get<std::size_t>();
    auto field = take_string("field");
    auto parsed = parse_text_field(field);
    if (!parsed) throw ValidationError(id, "field", "unknown enum value '" + field + "'");
    r.field = *parsed;
    r.source_text = take_string("source_text");
    r.translated_text = take_string("translated_text");
    r.back_translated_text = take_string("back_translated_text");
    if (auto it = rest.find("similarity"); it != rest.end()) {
        if (!it->is_null()) {
            if (!it->is_number()) throw ValidationError(id, "similarity", "expected a number");
            r.similarity = it->get<double>();
            if (!std::isfinite(*r.similarity) || std::abs(*r.similarity) > 1.0 + 1e-9)
                throw ValidationError(id, "similarity", "outside [-1, 1]");
        }
        rest.erase(it);
    }
    if (auto it = rest.find("unscorable"); it != rest.end()) {
        if (!it->is_boolean()) throw ValidationError(id, "unscorable", "expected a boolean");
        r.unscorable = it->get<bool>();
        rest.erase(it);
    }
    r.extra = std::move(rest);
    return r;
}

Json JsonCodec<FilterDecision>::encode(const FilterDecision& v) {
    auto opt = [](const std::optional<double>& x) { return x ? Json(*x) : Json(nullptr); };
    Json j;
    j["sample_id"] = v.sample_id;
    j["retained"] = v.retained;
    j["min_question_sim"] = opt(v.min_question_sim);
    j["min_answer_sim"] = opt(v.min_answer_sim);
    j["threshold"] = v.threshold;
    Json failing = Json::array();
    for (const auto& f : v.failing_fields)
        failing.push_back(Json{{"turn_index", f.turn_index}, {"field", to_string(f.field)}, {"similarity", opt(f.similarity)}});
    j["failing_fields"] = std::move(failing);
    return j;
}

FilterDecision JsonCodec<FilterDecision>::decode(const Json& j) {
    FilterDecision d;
    try {
        d.sample_id = j.at("sample_id").get<std::string>();
        d.retained = j.at("retained").get<bool>();
        auto opt = [](const Json& x) { return x.is_null() ? std::optional<double>{} : std::optional<double>(x.get<double>()); };
        d.min_question_sim = opt(j.at("min_question_sim"));
        d.min_answer_sim = opt(j.at("min_answer_sim"));
        d.threshold = j.at("threshold").get<double>();
        for (const auto& f : j.at("failing_fields")) {
            auto field = parse_text_field(f.at("field").get<std::string>());
            if (!field) throw ValidationError(d.sample_id, "failing_fields.field", "unknown enum value");
            d.failing_fields.push_back({f.at("turn_index").get<std::size_t>(), *field, opt(f.at("similarity"))});
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(d.sample_id.empty() ? "<unknown>" : d.sample_id, "<decision>", e.what());
    }
    if (d.retained != d.failing_fields.empty())
        throw ValidationError(d.sample_id, "failing_fields", "must be empty iff retained");
    return d;
}

Json RetentionStats::to_json(double threshold) const {
    auto counts = [](const RetentionCounts& c) {
        return Json{{"total", c.total}, {"retained", c.retained}, {"dropped", c.dropped}, {"retention_rate", c.rate()}};
    };
    Json j = counts(overall);
    j["threshold"] = threshold;
    Json by_type = Json::object();
    for (const auto& [type, c] : by_content_type) by_type[std::string(to_string(type))] = counts(c);
    j["by_content_type"] = std::move(by_type);
    return j;
}

// ---------------------------------------------------------------- round trip

std::vector<TranslationRecord> roundtrip_sample(const Sample& sample, Translator& translator,
                                                const std::string& source_lang, const std::string& target_lang) {
    if (auto expected = language_for_code(source_lang); expected && *expected != sample.language)
        throw PipelineError(sample.id, "sample language " + std::string(to_string(sample.language)) +
                                           " does not match source language " + source_lang);
    std::vector<TranslationRecord> out;
    out.reserve(sample.turns.size() * 2);
    try {
        for (std::size_t t = 0; t < sample.turns.size(); ++t) {
            for (auto field : {TextField::question, TextField::answer}) {
                TranslationRecord r;
                r.sample_id = sample.id;
                r.turn_index = t;
                r.field = field;
                r.source_text = field == TextField::question ? sample.turns[t].question : sample.turns[t].answer;
                if (!r.exempt()) {
                    r.translated_text = translator.translate(r.source_text, source_lang, target_lang);
                    r.back_translated_text = translator.translate(r.translated_text, target_lang, source_lang);
                }
                out.push_back(std::move(r));
            }
        }
    } catch (const TransportError& e) {
        throw TransportError(sample.id + ": " + e.detail(), e.retryable(), e.cache_key());
    } catch (const ProtocolError& e) {
        throw ProtocolError(sample.id + ": " + e.detail(), e.cache_key());
    }
    return out;
}

std::vector<TranslationRecord> roundtrip_corpus(std::span<const Sample> samples, Translator& translator,
                                                const std::string& source_lang, const std::string& target_lang,
                                                std::size_t jobs) {
    std::vector<std::vector<TranslationRecord>> per_sample(samples.size());
    parallel_for(samples.size(), jobs, [&](std::size_t i) {
        per_sample[i] = roundtrip_sample(samples[i], translator, source_lang, target_lang);
    });
    std::vector<TranslationRecord> out;
    for (auto& recs : per_sample)
        for (auto& r : recs) out.push_back(std::move(r));
    return out;
}

// ---------------------------------------------------------------- scoring

std::size_t score_records(std::span<TranslationRecord> records, Embedder& embedder, std::size_t jobs) {
    // Collect distinct texts in first-seen order so embedding work is deterministic.
    std::unordered_map<std::string, std::size_t> index;
    std::vector<const std::string*> texts;
    auto intern = [&](const std::string& s) {
        auto [it, inserted] = index.try_emplace(s, texts.size());
        if (inserted) texts.push_back(&it->first);
    };
    for (const auto& r : records) {
        if (r.exempt()) continue;
        intern(r.source_text);
        if (!r.back_translated_text.empty()) intern(r.back_translated_text);
    }
    std::vector<Embedding> embeddings(texts.size());
    parallel_for(texts.size(), jobs, [&](std::size_t i) { embeddings[i] = embedder.embed(*texts[i]); });

    for (auto& r : records) {
        r.similarity.reset();
        r.unscorable = false;
        if (r.exempt()) continue;
        if (r.back_translated_text.empty()) {
            r.unscorable = true;
            continue;
        }
        try {
            r.similarity = cosine_similarity(embeddings[index.at(r.source_text)],
                                             embeddings[index.at(r.back_translated_text)]);
        } catch (const SimilarityError&) {
            r.unscorable = true;
        }
    }
    return texts.size();
}

// ---------------------------------------------------------------- filtering

namespace {

using RecordIndex = std::unordered_map<std::string_view, std::vector<const TranslationRecord*>>;

RecordIndex index_records(std::span<const TranslationRecord> records) {
    RecordIndex idx;
    for (const auto& r : records) idx[r.sample_id].push_back(&r);
    return idx;
}

// Returns the sample's records in (turn, field) order, checking coverage and scoring.
std::vector<const TranslationRecord*> records_for(const Sample& s, const RecordIndex& idx) {
    auto it = idx.find(s.id);
    if (it == idx.end()) throw PipelineError(s.id, "missing translation records");
    std::vector<const TranslationRecord*> slots(s.turns.size() * 2, nullptr);
    for (const auto* r : it->second) {
        if (r->turn_index >= s.turns.size()) throw PipelineError(s.id, "record for nonexistent turn");
        slots[r->turn_index * 2 + (r->field == TextField::answer ? 1 : 0)] = r;
    }
    for (std::size_t k = 0; k < slots.size(); ++k) {
        if (!slots[k])
            throw PipelineError(s.id, "missing record for turn " + std::to_string(k / 2) + " " +
                                          (k % 2 ? "answer" : "question"));
        if (!slots[k]->exempt() && !slots[k]->similarity && !slots[k]->unscorable)
            throw PipelineError(s.id, "record for turn " + std::to_string(k / 2) + " is not scored");
    }
    return slots;
}

FilterDecision decide(const Sample& s, const std::vector<const TranslationRecord*>& recs, double threshold) {
    FilterDecision d;
    d.sample_id = s.id;
    d.threshold = threshold;
    for (const auto* r : recs) {
        if (r->exempt()) continue;
        auto& min_sim = r->field == TextField::question ? d.min_question_sim : d.min_answer_sim;
        if (r->unscorable) {
            d.failing_fields.push_back({r->turn_index, r->field, std::nullopt});
            continue;
        }
        const double sim = *r->similarity;
        if (!min_sim || sim < *min_sim) min_sim = sim;
        if (!(sim >= threshold)) d.failing_fields.push_back({r->turn_index, r->field, sim});
    }
    d.retained = d.failing_fields.empty();
    return d;
}

// Smallest similarity that must clear the threshold; -inf if any field is unscorable.
double effective_min(const std::vector<const TranslationRecord*>& recs) {
    double m = std::numeric_limits<double>::infinity();
    for (const auto* r : recs) {
        if (r->exempt()) continue;
        if (r->unscorable) return -std::numeric_limits<double>::infinity();
        m = std::min(m, *r->similarity);
    }
    return m;
}

}  // namespace

FilterResult filter_corpus(std::span<const Sample> samples, std::span<const TranslationRecord> records,
                           double threshold) {
    const auto idx = index_records(records);
    FilterResult result;
    result.decisions.reserve(samples.size());
    for (const auto& s : samples) {
        auto d = decide(s, records_for(s, idx), threshold);
        auto& overall = result.stats.overall;
        auto& by_type = result.stats.by_content_type[s.content_type];
        ++overall.total;
        ++by_type.total;
        if (d.retained) {
            ++overall.retained;
            ++by_type.retained;
            result.retained.push_back(s);
        } else {
            ++overall.dropped;
            ++by_type.dropped;
            result.dropped.push_back(s);
        }
        result.decisions.push_back(std::move(d));
    }
    return result;
}

std::vector<SweepPoint> threshold_sweep(std::span<const Sample> samples, std::span<const TranslationRecord> records,
                                        std::span<const double> grid) {
    if (grid.empty()) throw std::invalid_argument("threshold grid is empty");
    const auto idx = index_records(records);
    std::vector<double> mins;
    mins.reserve(samples.size());
    for (const auto& s : samples) mins.push_back(effective_min(records_for(s, idx)));
    std::vector<SweepPoint> curve;
    for (double t : grid) {
        if (!std::isfinite(t)) throw std::invalid_argument("threshold grid contains a non-finite value");
        const auto kept = std::count_if(mins.begin(), mins.end(), [t](double m) { return m >= t; });
        curve.push_back({t, mins.empty() ? 0.0 : static_cast<double>(kept) / static_cast<double>(mins.size())});
    }
    return curve;
}

std::vector<double> parse_grid(std::string_view spec) {
    auto to_double = [&](std::string_view s) {
        std::string str(s);
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(str, &used);
        } catch (const std::exception&) {
            throw std::invalid_argument("bad grid value '" + str + "'");
        }
        if (used != str.size()) throw std::invalid_argument("bad grid value '" + str + "'");
        return v;
    };
    std::vector<double> grid;
    if (spec.find(':') != std::string_view::npos) {
        const auto a = spec.find(':');
        const auto b = spec.find(':', a + 1);
        if (b == std::string_view::npos) throw std::invalid_argument("grid must be start:stop:step");
        const double start = to_double(spec.substr(0, a));
        const double stop = to_double(spec.substr(a + 1, b - a - 1));
        const double step = to_double(spec.substr(b + 1));
        if (!(step > 0) || stop < start) throw std::invalid_argument("grid needs step > 0 and stop >= start");
        const auto n = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9));
        for (std::size_t i = 0; i <= n; ++i) grid.push_back(start + static_cast<double>(i) * step);
    } else {
        std::size_t pos = 0;
        while (pos <= spec.size()) {
            auto comma = spec.find(',', pos);
            if (comma == std::string_view::npos) comma = spec.size();
            auto item = spec.substr(pos, comma - pos);
            if (!item.empty()) grid.push_back(to_double(item));
            pos = comma + 1;
        }
    }
    if (grid.empty()) throw std::invalid_argument("threshold grid is empty");
    return grid;
}

std::string sweep_to_csv(std::span<const SweepPoint> curve) {
    std::string out = "threshold,retention_rate\n";
    char buf[64];
    for (const auto& p : curve) {
        std::snprintf(buf, sizeof buf, "%.4f,%.6f\n", p.threshold, p.retention_rate);
        out += buf;
    }
    return out;
}

Sample translated_sample(const Sample& source, std::span<const TranslationRecord> records, Language target) {
    Sample out = source;
    out.id = source.id + "-" + std::string(to_string(target));
    out.language = target;
    out.dialect.reset();
    out.extra["source_id"] = source.id;
    for (const auto& r : records) {
        if (r.sample_id != source.id || r.turn_index >= out.turns.size() || r.exempt()) continue;
        auto& turn = out.turns[r.turn_index];
        (r.field == TextField::question ? turn.question : turn.answer) = r.translated_text;
    }
    return out;
}

}  // namespace qafila
