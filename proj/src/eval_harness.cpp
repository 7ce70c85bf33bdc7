#include "qafila/eval_harness.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <set>
#include <variant>

#include "qafila/judge_reply.hpp"
#include "qafila/parallel.hpp"
#include "qafila/text.hpp"

namespace qafila {

// ---------------------------------------------------------------- benchmark

std::map<Category, std::size_t> Benchmark::category_counts() const {
    std::map<Category, std::size_t> counts;
    for (const auto& it : items) ++counts[it.category];
    return counts;
}

std::map<Dialect, std::size_t> Benchmark::dialect_counts() const {
    std::map<Dialect, std::size_t> counts;
    for (const auto& it : items)
        if (it.dialect) ++counts[*it.dialect];
    return counts;
}

std::size_t Benchmark::distinct_images() const {
    std::set<std::string_view> refs;
    for (const auto& it : items) refs.insert(it.image_ref);
    return refs.size();
}

const BenchmarkItem* Benchmark::find(const std::string& item_id) const {
    for (const auto& it : items)
        if (it.id == item_id) return &it;
    return nullptr;
}

Benchmark parse_benchmark(std::string_view jsonl, std::string default_name) {
    Benchmark bench;
    bench.name = std::move(default_name);
    std::optional<Json> header;
    std::size_t line_no = 0;
    std::set<std::string> ids;
    for (const auto& raw : split(jsonl, '\n')) {
        ++line_no;
        std::string_view line = raw;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        if (bench.items.empty() && !header && line.find("\"benchmark\"") != std::string_view::npos) {
            try {
                auto j = Json::parse(line);
                if (j.is_object() && j.contains("benchmark") && j["benchmark"].is_object()) {
                    header = j["benchmark"];
                    continue;
                }
            } catch (const nlohmann::json::parse_error&) {
            }
        }
        BenchmarkItem item;
        if (auto err = decode_line(line, item))
            throw BenchmarkError("line " + std::to_string(line_no) + ": " + *err);
        if (!ids.insert(item.id).second)
            throw BenchmarkError("line " + std::to_string(line_no) + ": duplicate item id " + item.id);
        bench.items.push_back(std::move(item));
    }
    if (bench.items.empty()) throw BenchmarkError("benchmark has no items");

    const bool any_dialect = std::any_of(bench.items.begin(), bench.items.end(),
                                         [](const BenchmarkItem& i) { return i.category == Category::dialect; });
    const bool all_dialect = std::all_of(bench.items.begin(), bench.items.end(),
                                         [](const BenchmarkItem& i) { return i.category == Category::dialect; });
    if (any_dialect && !all_dialect) throw BenchmarkError("benchmark mixes dialect and MSA items");
    bench.rubric = all_dialect ? Rubric::dialect_da_ca : Rubric::msa_relative;

    if (header) {
        try {
            if (header->contains("name")) bench.name = (*header)["name"].get<std::string>();
            if (header->contains("rubric")) {
                auto r = parse_rubric((*header)["rubric"].get<std::string>());
                if (!r || *r == Rubric::human_overall) throw BenchmarkError("header declares an unusable rubric");
                if (*r != bench.rubric) throw BenchmarkError("header rubric does not match the items");
            }
            auto expect = [&](const char* key, std::size_t actual) {
                if (!header->contains(key)) return;
                const auto declared = (*header)[key].get<std::size_t>();
                if (declared != actual)
                    throw BenchmarkError(std::string("count mismatch: header declares ") + key + " = " +
                                         std::to_string(declared) + ", file has " + std::to_string(actual));
            };
            expect("item_count", bench.items.size());
            expect("image_count", bench.distinct_images());
            if (header->contains("questions_per_dialect")) {
                const auto per = (*header)["questions_per_dialect"].get<std::size_t>();
                for (const auto& [d, n] : bench.dialect_counts())
                    if (n != per)
                        throw BenchmarkError("count mismatch: " + std::string(to_string(d)) + " has " +
                                             std::to_string(n) + " questions, header declares " + std::to_string(per));
            }
        } catch (const nlohmann::json::exception& e) {
            throw BenchmarkError(std::string("bad benchmark header: ") + e.what());
        }
    }
    if (bench.rubric == Rubric::msa_relative)
        for (const auto& it : bench.items)
            if (!it.reference_answer || it.reference_answer->empty())
                throw BenchmarkError(it.id + ": MSA benchmark items need a reference answer");
    return bench;
}

Benchmark load_benchmark(const std::string& path) {
    auto name = std::filesystem::path(path).stem().string();
    return parse_benchmark(read_file(path), name);
}

Json benchmark_header(const Benchmark& bench) {
    Json h;
    h["name"] = bench.name;
    h["rubric"] = to_string(bench.rubric);
    h["item_count"] = bench.items.size();
    h["image_count"] = bench.distinct_images();
    return Json{{"benchmark", h}};
}

// ---------------------------------------------------------------- templates

namespace {

constexpr const char* kDialectTemplate =
    R"(You are an expert judge of spoken Arabic dialects. An AI assistant was asked a question about an image, and both the question and its answer are meant to be in the {dialect} dialect of Arabic.

Image description (context only; the assistant saw the image itself):
{image_description}

Question:
{question}

Assistant answer:
{response}

Score the answer on two separate criteria, each an integer from 1 to 10:
- Dialect Authenticity (DA): how genuinely the answer is written in the {dialect} dialect. Judge the dialect alone and ignore whether the content is right.
- Content Accuracy (CA): how well the answer addresses the question and the image content. Judge the content alone and ignore which dialect or language is used.

{output_format})";

constexpr const char* kDialectOutput =
    R"(Reply with only a JSON object of the form {"DA": <integer 1-10>, "CA": <integer 1-10>}.)";
constexpr const char* kDialectStrictOutput =
    R"(Your reply must be exactly one JSON object and nothing else, for example {"DA": 7, "CA": 8}. Use integers from 1 to 10. Do not add explanations.)";

constexpr const char* kMsaTemplate =
    R"(You are a careful reviewer of answers written in Modern Standard Arabic. Two AI assistants answered the same question about an image.

[Image description]
{image_description}

[Question]
{question}

[Assistant 1]
{reference}
[End of Assistant 1]

[Assistant 2]
{response}
[End of Assistant 2]

Rate each assistant for helpfulness, relevance, accuracy and level of detail, and for answering in correct Arabic. Give each assistant one overall integer score from 1 to 10, where higher is better. Treat both assistants the same way regardless of the order they appear in.

{output_format})";

constexpr const char* kMsaOutput =
    R"(Reply with only a JSON object of the form {"reference": <score for Assistant 1>, "candidate": <score for Assistant 2>}.)";
constexpr const char* kMsaStrictOutput =
    R"(Your reply must be exactly one JSON object and nothing else, for example {"reference": 8, "candidate": 7}. Use integers from 1 to 10. Do not add explanations.)";

const std::set<std::string>& known_placeholders() {
    static const std::set<std::string> names{"question",  "response", "reference", "image_description",
                                             "dialect",   "output_format"};
    return names;
}

// Calls fn(name, begin, end) for each {identifier} span in text.
template <class Fn>
void scan_placeholders(const std::string& text, Fn&& fn) {
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '{') continue;
        std::size_t j = i + 1;
        while (j < text.size() && (std::islower(static_cast<unsigned char>(text[j])) || text[j] == '_')) ++j;
        if (j > i + 1 && j < text.size() && text[j] == '}') {
            fn(text.substr(i + 1, j - i - 1), i, j + 1);
            i = j;
        }
    }
}

}  // namespace

JudgePromptTemplate JudgePromptTemplate::default_for(Rubric rubric) {
    if (rubric == Rubric::msa_relative) return {kMsaTemplate, rubric, kMsaOutput, kMsaStrictOutput};
    if (rubric == Rubric::dialect_da_ca) return {kDialectTemplate, rubric, kDialectOutput, kDialectStrictOutput};
    throw PromptError("no judge template for rubric " + std::string(to_string(rubric)));
}

JudgePromptTemplate JudgePromptTemplate::from_file(const std::string& path, Rubric rubric) {
    auto t = default_for(rubric);
    t.text = read_file(path);
    t.validate();
    return t;
}

std::vector<std::string> JudgePromptTemplate::required_placeholders(Rubric rubric) {
    if (rubric == Rubric::msa_relative) return {"question", "response", "reference", "image_description"};
    return {"dialect", "question", "response", "image_description"};
}

void JudgePromptTemplate::validate() const {
    std::set<std::string> present;
    scan_placeholders(text, [&](const std::string& name, std::size_t, std::size_t) {
        if (!known_placeholders().count(name)) throw PromptError("unknown placeholder {" + name + "}");
        present.insert(name);
    });
    for (const auto& name : required_placeholders(rubric))
        if (!present.count(name))
            throw PromptError("template lacks required placeholder {" + name + "} for rubric " +
                              std::string(to_string(rubric)));
}

// ---------------------------------------------------------------- context

JudgeContextProvider::JudgeContextProvider(std::shared_ptr<Captioner> captioner) : captioner_(std::move(captioner)) {}

void JudgeContextProvider::add_description(const std::string& image_ref, std::string description) {
    std::lock_guard lock(mutex_);
    descriptions_[image_ref] = std::move(description);
}

void JudgeContextProvider::load_descriptions(const std::string& path) {
    std::size_t line_no = 0;
    for (const auto& raw : split(read_file(path), '\n')) {
        ++line_no;
        if (raw.empty()) continue;
        try {
            auto j = Json::parse(raw);
            add_description(j.at("image_ref").get<std::string>(), j.at("description").get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            throw BenchmarkError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

std::string JudgeContextProvider::describe(const std::string& image_ref) {
    std::lock_guard lock(mutex_);
    if (auto it = descriptions_.find(image_ref); it != descriptions_.end()) return it->second;
    if (!captioner_) throw BenchmarkError("no description for " + image_ref + " and no captioner configured");
    ++captioner_calls_;
    auto text = captioner_->describe(image_ref);
    if (text.empty()) throw ProtocolError("captioner returned an empty description for " + image_ref);
    descriptions_[image_ref] = text;
    return text;
}

std::string build_judge_context(const BenchmarkItem& item, JudgeContextProvider& provider) {
    return provider.describe(item.image_ref);
}

std::string render_prompt(const JudgePromptTemplate& tmpl, const BenchmarkItem& item, const std::string& response,
                          const std::string& context, bool strict) {
    tmpl.validate();
    auto value_of = [&](const std::string& name) -> std::string {
        if (name == "question") return item.question;
        if (name == "response") return response;
        if (name == "image_description") {
            if (context.empty()) throw PromptError(item.id + ": missing placeholder value {image_description}");
            return context;
        }
        if (name == "reference") {
            if (!item.reference_answer) throw PromptError(item.id + ": missing placeholder value {reference}");
            return *item.reference_answer;
        }
        if (name == "dialect") {
            if (!item.dialect) throw PromptError(item.id + ": missing placeholder value {dialect}");
            return std::string(display_name(*item.dialect));
        }
        if (name == "output_format") return strict ? tmpl.strict_output_instruction : tmpl.output_instruction;
        throw PromptError("unknown placeholder {" + name + "}");
    };
    std::string out;
    std::size_t last = 0;
    bool has_output_format = false;
    scan_placeholders(tmpl.text, [&](const std::string& name, std::size_t begin, std::size_t end) {
        out.append(tmpl.text, last, begin - last);
        out += value_of(name);
        last = end;
        has_output_format |= name == "output_format";
    });
    out.append(tmpl.text, last, std::string::npos);
    if (!has_output_format) out += "\n\n" + (strict ? tmpl.strict_output_instruction : tmpl.output_instruction);
    return out;
}

// ---------------------------------------------------------------- skip codec

Json JsonCodec<SkipRecord>::encode(const SkipRecord& v) {
    Json j;
    j["item_id"] = v.item_id;
    j["model_id"] = v.model_id;
    j["evaluator_id"] = v.evaluator_id;
    j["skipped"] = true;
    j["reason"] = v.reason;
    return j;
}

SkipRecord JsonCodec<SkipRecord>::decode(const Json& j) {
    try {
        return {j.at("item_id").get<std::string>(), j.at("model_id").get<std::string>(),
                j.at("evaluator_id").get<std::string>(), j.at("reason").get<std::string>()};
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("<skip>", "<record>", e.what());
    }
}

// ---------------------------------------------------------------- evaluation

CoverageError::CoverageError(std::vector<std::pair<std::string, std::string>> missing)
    : std::runtime_error([&] {
          std::string msg = "responses missing for " + std::to_string(missing.size()) + " (item, model) pairs:";
          for (std::size_t i = 0; i < missing.size() && i < 10; ++i)
              msg += " (" + missing[i].first + ", " + missing[i].second + ")";
          if (missing.size() > 10) msg += " ...";
          return msg;
      }()),
      missing_(std::move(missing)) {}

namespace {

struct Task {
    const BenchmarkItem* item;
    const ModelResponse* response;
    const Evaluator* evaluator;
};

std::variant<ScoreRecord, SkipRecord> judge_one(const Task& task, const JudgePromptTemplate& tmpl,
                                                const std::string& context, const EvaluationOptions& options) {
    const auto& item = *task.item;
    SkipRecord skip{item.id, task.response->model_id, task.evaluator->id, ""};
    std::string reply;
    std::map<std::string, double> scores;
    bool reasked = false;
    try {
        reply = task.evaluator->judge->complete(render_prompt(tmpl, item, task.response->response, context));
        try {
            scores = parse_judge_reply(reply, tmpl.rubric);
        } catch (const ReplyParseError&) {
            reasked = true;
            reply = task.evaluator->judge->complete(
                render_prompt(tmpl, item, task.response->response, context, /*strict=*/true));
            scores = parse_judge_reply(reply, tmpl.rubric);
        }
    } catch (const ReplyParseError& e) {
        skip.reason = std::string("unparseable judge reply after re-ask: ") + e.what();
        return skip;
    } catch (const ReplyRangeError& e) {
        skip.reason = std::string("judge score out of range: ") + e.what();
        return skip;
    } catch (const std::exception& e) {
        skip.reason = e.what();
        return skip;
    }

    ScoreRecord rec;
    rec.item_id = item.id;
    rec.model_id = task.response->model_id;
    rec.evaluator_id = task.evaluator->id;
    rec.rubric = tmpl.rubric;
    rec.raw_reply = reply;
    rec.metadata["category"] = to_string(item.category);
    if (item.dialect) rec.metadata["dialect"] = to_string(*item.dialect);
    if (tmpl.rubric == Rubric::msa_relative) {
        const double reference = scores.at("reference");
        const double candidate = scores.at("candidate");
        const double relative = 100.0 * candidate / reference;
        if (relative > 200.0) {
            skip.reason = "relative score " + std::to_string(relative) + " exceeds 200";
            return skip;
        }
        rec.values[std::string(dim::relative_percent)] = relative;
        rec.metadata["reference_score"] = reference;
        rec.metadata["candidate_score"] = candidate;
    } else {
        rec.values = scores;
    }
    if (reasked) rec.metadata["reasked"] = true;
    if (!options.judge_settings.empty()) rec.metadata["judge_settings"] = options.judge_settings;
    return rec;
}

}  // namespace

EvaluationResult run_evaluation(const Benchmark& bench, std::span<const ModelResponse> responses,
                                std::span<const Evaluator> evaluators, const JudgePromptTemplate& tmpl,
                                JudgeContextProvider& contexts, const EvaluationOptions& options) {
    if (tmpl.rubric != bench.rubric)
        throw PromptError("template rubric " + std::string(to_string(tmpl.rubric)) + " does not match benchmark rubric " +
                          std::string(to_string(bench.rubric)));
    tmpl.validate();

    std::map<std::pair<std::string, std::string>, const ModelResponse*> by_pair;
    std::set<std::string> model_set;
    for (const auto& r : responses) {
        if (!bench.find(r.item_id)) throw BenchmarkError("response for unknown item " + r.item_id);
        by_pair[{r.item_id, r.model_id}] = &r;
        model_set.insert(r.model_id);
    }
    std::vector<std::string> models = options.models.empty()
                                          ? std::vector<std::string>(model_set.begin(), model_set.end())
                                          : options.models;
    std::vector<std::pair<std::string, std::string>> missing;
    std::vector<Task> tasks;
    for (const auto& item : bench.items) {
        for (const auto& model : models) {
            auto it = by_pair.find({item.id, model});
            if (it == by_pair.end()) {
                missing.emplace_back(item.id, model);
                continue;
            }
            for (const auto& ev : evaluators) tasks.push_back({&item, it->second, &ev});
        }
    }
    if (!missing.empty()) throw CoverageError(std::move(missing));

    // Describe each image once, before fanning out.
    std::map<std::string, std::string> context_for;
    std::map<std::string, std::string> context_error;
    for (const auto& item : bench.items) {
        if (context_for.count(item.image_ref) || context_error.count(item.image_ref)) continue;
        try {
            context_for[item.image_ref] = build_judge_context(item, contexts);
        } catch (const std::exception& e) {
            context_error[item.image_ref] = std::string("image context unavailable: ") + e.what();
        }
    }

    std::vector<std::variant<ScoreRecord, SkipRecord>> outcomes(tasks.size());
    parallel_for(tasks.size(), options.jobs, [&](std::size_t i) {
        const auto& t = tasks[i];
        if (auto err = context_error.find(t.item->image_ref); err != context_error.end()) {
            outcomes[i] = SkipRecord{t.item->id, t.response->model_id, t.evaluator->id, err->second};
            return;
        }
        outcomes[i] = judge_one(t, tmpl, context_for.at(t.item->image_ref), options);
    });

    EvaluationResult result;
    for (auto& o : outcomes) {
        if (auto* rec = std::get_if<ScoreRecord>(&o))
            result.records.push_back(std::move(*rec));
        else
            result.skips.push_back(std::move(std::get<SkipRecord>(o)));
    }
    return result;
}

}  // namespace qafila
