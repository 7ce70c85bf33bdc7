// Acceptance suite: one PASS/FAIL line per criterion.
//
// Exit status is 0 when the set of failing criteria equals the set given by
// --expected-failures (comma separated), and 1 otherwise.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "qafila/annotation.hpp"
#include "qafila/annotation_server.hpp"
#include "qafila/dataset_assembly.hpp"
#include "qafila/eval_harness.hpp"
#include "qafila/judge_reply.hpp"
#include "qafila/mock_backends.hpp"
#include "qafila/score_analytics.hpp"
#include "qafila/similarity.hpp"
#include "qafila/text.hpp"
#include "qafila/translate_filter.hpp"

// After Eigen: resolv.h, pulled in by httplib, defines a `_res` macro.
#include <httplib.h>

using namespace qafila;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

std::string fixture(const std::string& name) { return std::string(QAFILA_FIXTURES) + "/" + name; }
Json load_fixture(const std::string& name) { return Json::parse(read_file(fixture(name))); }

bool within(double actual, double expected, double tol) { return std::abs(actual - expected) <= tol + 1e-9; }

std::string fmt(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

class Suite {
public:
    void check(const std::string& name, bool ok, const std::string& detail) {
        std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << "\n" << std::flush;
        if (!ok) failed_.insert(name);
    }

    // Runs a criterion body; an exception is a failure with its message.
    void run(const std::string& name, const std::function<std::pair<bool, std::string>()>& body) {
        try {
            const auto [ok, detail] = body();
            check(name, ok, detail);
        } catch (const std::exception& e) {
            check(name, false, std::string("exception: ") + e.what());
        }
    }

    const std::set<std::string>& failed() const { return failed_; }

private:
    std::set<std::string> failed_;
};

class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = fs::temp_directory_path() / ("qafila-acceptance-" + std::to_string(rd()));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

std::vector<ModelResponse> responses_for(const Benchmark& bench, const std::vector<std::string>& models) {
    std::vector<ModelResponse> out;
    for (const auto& item : bench.items)
        for (std::size_t m = 0; m < models.size(); ++m)
            out.push_back({item.id, models[m], "response " + std::to_string(m) + " for " + item.id, Json::object(),
                           Json::object()});
    return out;
}

// ------------------------------------------------------------------ dialect table

void dialect_criteria(Suite& suite) {
    const auto table = load_fixture("dialect_scores.json");
    const auto bench = load_benchmark(fixture("dialect_bench.jsonl"));
    const auto& evaluators = table["evaluators"];
    const std::string reference = table["reference"].get<std::string>();

    // Judge evaluators go through run_evaluation: a scripted judge replies
    // with the table's value for the item's dialect. Human means are fed as
    // score records directly.
    std::map<std::string, DialectReport> reports;
    const auto start = Clock::now();
    for (const auto& [name, ev] : evaluators.items()) {
        if (name == reference) {
            std::vector<ScoreRecord> recs;
            for (std::size_t i = 0; i < 6; ++i) {
                const auto d = kAllDialects[i];
                recs.push_back({"human-" + std::string(to_string(d)), "Dallah", name, Rubric::dialect_da_ca,
                                {{"DA", ev["DA"][i].get<double>()}, {"CA", ev["CA"][i].get<double>()}}, std::nullopt,
                                Json{{"dialect", std::string(to_string(d))}}, Json::object()});
            }
            reports[name] = dialect_report(recs, {}, kAllDialects);
            continue;
        }
        std::map<std::string, std::string> reply_for;  // dialect display name -> reply
        for (std::size_t i = 0; i < 6; ++i)
            reply_for[std::string(display_name(kAllDialects[i]))] =
                Json{{"DA", ev["DA"][i]}, {"CA", ev["CA"][i]}}.dump();
        auto judge = std::make_shared<ScriptedJudge>(name, [reply_for](const std::string& prompt) {
            for (const auto& [dialect, reply] : reply_for)
                if (prompt.find("in the " + dialect + " dialect") != std::string::npos) return reply;
            return std::string("no dialect found");
        });
        JudgeContextProvider contexts(std::make_shared<MockCaptioner>());
        std::vector<Evaluator> evs{{name, judge}};
        EvaluationOptions opts;
        opts.jobs = 4;
        const auto result = run_evaluation(bench, responses_for(bench, {"Dallah"}), evs,
                                           JudgePromptTemplate::default_for(bench.rubric), contexts, opts);
        if (!result.skips.empty()) throw std::runtime_error(name + ": unexpected skips: " + result.skips[0].reason);
        reports[name] = dialect_report(result.records, ItemIndex(bench), kAllDialects);
    }

    const auto& human = reports.at(reference);
    for (const auto& [name, ev] : evaluators.items()) {
        if (!ev.contains("mad")) continue;
        const auto mad = alignment_mad(reports.at(name), human);
        for (auto [dim, got] : {std::pair{"DA", mad.mad_da}, std::pair{"CA", mad.mad_ca}}) {
            const double want = ev["mad"][dim].get<double>();
            suite.check("dialect.mad " + name + " " + dim, within(got, want, 0.005),
                        "computed " + fmt(got, 6) + ", reference " + fmt(want, 2) + " +/- 0.005");
        }
    }
    const double elapsed = seconds_since(start);
    suite.check("dialect.mad runtime", elapsed < 1.0, fmt(elapsed, 3) + " s (limit 1 s)");

    for (const auto& [name, ev] : evaluators.items()) {
        const auto& rep = reports.at(name);
        for (auto [dim, got] : {std::pair{"DA", rep.average_da}, std::pair{"CA", rep.average_ca}}) {
            const double want = ev["average"][dim].get<double>();
            suite.check("dialect.average " + name + " " + dim, within(got, want, 0.005),
                        "computed " + fmt(got, 6) + ", reference " + fmt(want, 2) + " +/- 0.005");
        }
    }
}

// ------------------------------------------------------------------ category table

void category_criteria(Suite& suite) {
    const auto table = load_fixture("category_scores.json");
    std::vector<ScoreRecord> recs;
    std::size_t n = 0;
    for (const auto& row : table["rows"]) {
        for (auto [cat, key] : {std::pair{Category::conversation, "CC"}, std::pair{Category::details, "DD"},
                                std::pair{Category::complex_reasoning, "CR"}}) {
            recs.push_back({"item" + std::to_string(n++), row["model"], row["evaluator"], Rubric::msa_relative,
                            {{"relative_percent", row[key].get<double>()}}, std::nullopt,
                            Json{{"category", std::string(to_string(cat))}}, Json::object()});
        }
    }
    const auto reports = category_reports(recs);
    for (const auto& row : table["rows"]) {
        const auto evaluator = row["evaluator"].get<std::string>();
        const auto model = row["model"].get<std::string>();
        suite.run("category.row " + evaluator + "/" + model, [&]() -> std::pair<bool, std::string> {
            const auto it = std::find_if(reports.begin(), reports.end(), [&](const CategoryReport& r) {
                return r.evaluator_id == evaluator && r.model_id == model;
            });
            if (it == reports.end()) return {false, "no report"};
            const double printed = row["Avg"].get<double>();
            return {within(it->overall, printed, 0.02),
                    "mean of CC/DD/CR " + fmt(it->overall) + ", printed overall " + fmt(printed, 2) + " +/- 0.02"};
        });
    }
    suite.run("category.margin Dallah-PALO", [&]() -> std::pair<bool, std::string> {
        const auto margin = model_margin(reports, table["margin"]["model_a"], table["margin"]["model_b"]);
        const double want = table["margin"]["average"].get<double>();
        return {margin.per_evaluator.size() == 4 && within(margin.average, want, 0.01),
                "average over " + std::to_string(margin.per_evaluator.size()) + " evaluators " + fmt(margin.average) +
                    ", reference " + fmt(want, 2) + " +/- 0.01"};
    });
}

// ------------------------------------------------------------------ filter

std::vector<Sample> english_corpus(std::size_t n, std::uint64_t seed) {
    static const char* words[] = {"red",   "car",    "street", "people", "walking", "dog",     "park",  "bright",
                                  "sky",   "market", "fruit",  "vendor", "child",   "bicycle", "river", "boat",
                                  "bridge", "old",   "building", "window", "train", "cat",     "table", "kitchen"};
    std::mt19937_64 rng(seed);
    auto sentence = [&](std::size_t len) {
        std::string s;
        for (std::size_t i = 0; i < len; ++i) s += (i ? " " : "") + std::string(words[rng() % std::size(words)]);
        return s;
    };
    std::vector<Sample> out;
    for (std::size_t i = 0; i < n; ++i) {
        Sample s;
        s.id = "en-" + std::to_string(i);
        s.image_ref = "images/" + std::to_string(i % 97) + ".jpg";
        s.language = Language::english;
        s.stage = Stage::instruct;
        s.content_type = kAllContentTypes[i % 3];
        const int turns = s.content_type == ContentType::detailed_description ? 1 : 2;
        for (int t = 0; t < turns; ++t) s.turns.push_back({"What " + sentence(5) + "?", "It is " + sentence(10) + "."});
        out.push_back(std::move(s));
    }
    return out;
}

double retention(std::span<const Sample> corpus, Translator& translator, Embedder& embedder, double threshold,
                 std::vector<TranslationRecord>* keep = nullptr) {
    auto records = roundtrip_corpus(corpus, translator, "en", "ar", 4);
    score_records(records, embedder, 4);
    const double rate = filter_corpus(corpus, records, threshold).stats.retention_rate();
    if (keep) *keep = std::move(records);
    return rate;
}

void filter_criteria(Suite& suite) {
    const auto corpus = english_corpus(300, 1);
    suite.run("filter.faithful_retention", [&]() -> std::pair<bool, std::string> {
        MockTranslator t;
        MockEmbedder e(1);
        const double rate = retention(corpus, t, e, 0.99);
        return {rate == 1.0, "retention " + fmt(rate) + " at threshold 0.99 (want 1.0)"};
    });
    suite.run("filter.lossy_retention", [&]() -> std::pair<bool, std::string> {
        MockTranslator t(MockTranslator::Mode::lossy, 1.0, 2);
        MockEmbedder e(1);
        const double rate = retention(corpus, t, e, 0.8);
        return {rate == 0.0, "retention " + fmt(rate) + " at threshold 0.8 with lossy rate 1.0 (want 0.0)"};
    });
    suite.run("filter.sweep_monotone", [&]() -> std::pair<bool, std::string> {
        MockTranslator t(MockTranslator::Mode::lossy, 0.3, 3);
        MockEmbedder e(1);
        std::vector<TranslationRecord> records;
        retention(corpus, t, e, 0.8, &records);
        const auto grid = parse_grid("0:1:0.1");
        const auto curve = threshold_sweep(corpus, records, grid);
        bool monotone = curve.size() == 11;
        std::string detail;
        for (std::size_t i = 0; i < curve.size(); ++i) {
            if (i > 0 && curve[i].retention_rate > curve[i - 1].retention_rate) monotone = false;
            detail += (i ? " " : "") + fmt(curve[i].retention_rate, 3);
        }
        return {monotone, std::to_string(curve.size()) + " points: " + detail};
    });
    suite.run("filter.runtime_500", [&]() -> std::pair<bool, std::string> {
        const auto big = english_corpus(500, 9);
        const auto start = Clock::now();
        MockTranslator t(MockTranslator::Mode::lossy, 0.3, 4);
        MockEmbedder e(2);
        const double rate = retention(big, t, e, 0.8);
        const double elapsed = seconds_since(start);
        return {elapsed < 10.0, "500 samples in " + fmt(elapsed, 3) + " s (limit 10 s), retention " + fmt(rate)};
    });
}

// ------------------------------------------------------------------ cosine

void cosine_criteria(Suite& suite) {
    suite.run("cosine.properties", [&]() -> std::pair<bool, std::string> {
        std::mt19937_64 rng(99);
        std::normal_distribution<double> gauss(0.0, 1.0);
        std::uniform_int_distribution<int> dims(1, 128);
        std::size_t violations = 0;
        for (int trial = 0; trial < 10'000; ++trial) {
            const int n = dims(rng);
            Eigen::VectorXd u(n), v(n);
            for (int i = 0; i < n; ++i) u[i] = gauss(rng), v[i] = gauss(rng);
            const double uv = cosine_similarity(u, v), vu = cosine_similarity(v, u);
            if (std::abs(uv) > 1.0 + 1e-9) ++violations;
            if (std::abs(uv - vu) > 1e-12) ++violations;
            if (std::abs(cosine_similarity(u, u) - 1.0) > 1e-9) ++violations;
        }
        return {violations == 0, "10000 random pairs, " + std::to_string(violations) + " violations"};
    });
    suite.run("cosine.hand_case", [&]() -> std::pair<bool, std::string> {
        const double s = cosine_similarity(Eigen::Vector2d(1, 0), Eigen::Vector2d(1, 1));
        return {std::abs(s - 0.7071) <= 1e-4, "(1,0).(1,1) = " + fmt(s, 6) + ", want 0.7071 +/- 1e-4"};
    });
}

// ------------------------------------------------------------------ assembly

// Writes `count` valid samples for a stage dataset, streaming.
void write_stage_file(const fs::path& path, const std::string& prefix, std::size_t count, Stage stage,
                      Language language, std::optional<Dialect> dialect) {
    std::ofstream out(path, std::ios::binary);
    Sample s;
    s.image_ref = "images/x.jpg";
    s.language = language;
    s.dialect = dialect;
    s.stage = stage;
    s.content_type = stage == Stage::pretrain ? ContentType::detailed_description : ContentType::conversation;
    s.turns = {{stage == Stage::pretrain ? "" : "What is shown?", "A picture."}};
    for (std::size_t i = 0; i < count; ++i) {
        s.id = prefix + std::to_string(i);
        out << dump_line(JsonCodec<Sample>::encode(s)) << '\n';
    }
}

void assembly_criteria(Suite& suite) {
    const auto table = load_fixture("stage_counts.json");
    TempDir dir;
    std::vector<StageDataset> datasets;
    std::optional<StageManifest> manifest;

    suite.run("assembly.manifest_total", [&]() -> std::pair<bool, std::string> {
        std::size_t i = 0;
        for (const auto& e : table["entries"]) {
            const auto stage = parse_stage(e["stage"].get<std::string>()).value();
            const auto source = e["source"].get<std::string>();
            Language lang = Language::english;
            std::optional<Dialect> dialect;
            if (stage == Stage::dialect_tune) {
                lang = Language::dialect;
                for (auto d : kAllDialects)
                    if (display_name(d) == source) dialect = d;
            } else if (source.find("Arabic") != std::string::npos) {
                lang = Language::msa;
            }
            const auto path = dir.path() / ("stage" + std::to_string(i) + ".jsonl");
            write_stage_file(path, "d" + std::to_string(i) + "-", e["count"].get<std::size_t>(), stage, lang, dialect);
            datasets.push_back({stage, source, path});
            ++i;
        }
        manifest = build_stage_manifest(datasets);
        save_manifest((dir.path() / "manifest.json").string(), *manifest);
        const auto want = table["total"].get<std::int64_t>();
        return {manifest->total == want && validate_manifest(*manifest).empty(),
                "manifest total " + std::to_string(manifest->total) + ", want " + std::to_string(want)};
    });
    suite.run("assembly.dialect_export", [&]() -> std::pair<bool, std::string> {
        if (!manifest) return {false, "no manifest"};
        const auto reloaded = load_manifest((dir.path() / "manifest.json").string());
        const auto out = dir.path() / "dialect_tune.jsonl";
        const auto result = export_training_set(reloaded, datasets_from_manifest(reloaded), Stage::dialect_tune, 7, out);
        const auto text = read_file(out.string());
        const auto lines = static_cast<std::int64_t>(std::count(text.begin(), text.end(), '\n'));
        const auto want = table["dialect_tune_total"].get<std::int64_t>();
        return {lines == want && result.checksum == sha256_hex(text),
                std::to_string(lines) + " lines written, want " + std::to_string(want)};
    });

    // Subsets over a retained MSA corpus.
    std::vector<Sample> msa;
    for (std::size_t i = 0; i < 3000; ++i) {
        Sample s;
        s.id = "msa-" + std::to_string(i);
        s.image_ref = "images/m.jpg";
        s.language = Language::msa;
        s.stage = Stage::instruct;
        s.content_type = kAllContentTypes[i % 3];
        s.turns = {{"سؤال", "جواب"}};
        msa.push_back(std::move(s));
    }
    std::vector<SubsetSpec> specs;
    for (std::size_t i = 0; i < 6; ++i)
        specs.push_back({kAllDialects[i], table["entries"][3 + i]["count"].get<std::size_t>() / 2,
                         SubsetSpec::uniform_mix(), 2024 + i});
    const auto first = sample_subsets(msa, specs);
    suite.run("assembly.subsets_disjoint", [&]() -> std::pair<bool, std::string> {
        std::set<std::string> seen;
        std::size_t total = 0, collisions = 0;
        for (const auto& sheet : first)
            for (const auto& id : sheet.sample_ids) {
                ++total;
                if (!seen.insert(id).second) ++collisions;
            }
        return {collisions == 0, std::to_string(first.size()) + " subsets, " + std::to_string(total) + " samples, " +
                                     std::to_string(collisions) + " shared"};
    });
    suite.run("assembly.subsets_reproducible", [&]() -> std::pair<bool, std::string> {
        const auto second = sample_subsets(msa, specs);
        bool same = first.size() == second.size();
        for (std::size_t i = 0; same && i < first.size(); ++i) same = first[i].sample_ids == second[i].sample_ids;
        auto changed = specs;
        changed[0].seed += 1;
        const bool seed_matters = sample_subsets(msa, changed)[0].sample_ids != first[0].sample_ids;
        return {same && seed_matters, std::string("same seed ") + (same ? "identical" : "differs") +
                                          ", changed seed " + (seed_matters ? "differs" : "identical")};
    });
}

// ------------------------------------------------------------------ benchmark

void benchmark_criteria(Suite& suite) {
    suite.run("benchmark.msa_shape", [&]() -> std::pair<bool, std::string> {
        const auto b = load_benchmark(fixture("msa_bench.jsonl"));
        const auto cats = b.category_counts();
        bool ok = b.items.size() == 90 && b.distinct_images() == 30 && cats.size() == 3;
        for (const auto& [c, n] : cats) ok = ok && n == 30;
        return {ok, std::to_string(b.items.size()) + " items, " + std::to_string(b.distinct_images()) + " images, " +
                        std::to_string(cats.size()) + " categories"};
    });
    suite.run("benchmark.dialect_shape", [&]() -> std::pair<bool, std::string> {
        const auto b = load_benchmark(fixture("dialect_bench.jsonl"));
        const auto per = b.dialect_counts();
        bool ok = b.items.size() == 120 && b.distinct_images() == 20 && per.size() == 6;
        for (const auto& [d, n] : per) ok = ok && n == 20;
        return {ok, std::to_string(b.items.size()) + " items, " + std::to_string(b.distinct_images()) + " images, " +
                        std::to_string(per.size()) + " dialects"};
    });
    suite.run("benchmark.record_conservation", [&]() -> std::pair<bool, std::string> {
        std::string detail;
        bool ok = true;
        for (const auto* file : {"msa_bench.jsonl", "dialect_bench.jsonl"}) {
            const auto b = load_benchmark(fixture(file));
            const std::vector<std::string> models{"Dallah", "PALO", "Peacock"};
            std::atomic<int> n{0};
            std::vector<Evaluator> evs{
                {"mock", std::make_shared<MockJudge>("mock", 5)},
                {"erratic", std::make_shared<ScriptedJudge>("erratic", [&, rubric = b.rubric](const std::string&) {
                     const int k = n++;
                     if (k % 5 == 0) return std::string("I cannot decide.");
                     if (k % 7 == 0) return std::string(R"({"DA": 14, "CA": 3, "reference": 14, "candidate": 3})");
                     return rubric == Rubric::msa_relative ? std::string(R"({"reference": 8, "candidate": 7})")
                                                           : std::string(R"({"DA": 6, "CA": 7})");
                 })}};
            JudgeContextProvider contexts(std::make_shared<MockCaptioner>());
            EvaluationOptions opts;
            opts.jobs = 4;
            const auto r = run_evaluation(b, responses_for(b, models), evs, JudgePromptTemplate::default_for(b.rubric),
                                          contexts, opts);
            const auto expected = b.items.size() * models.size() * evs.size();
            ok = ok && r.records.size() + r.skips.size() == expected && !r.skips.empty();
            detail += (detail.empty() ? "" : "; ") + b.name + ": " + std::to_string(r.records.size()) + " records + " +
                      std::to_string(r.skips.size()) + " skips = " + std::to_string(expected);
        }
        return {ok, detail};
    });
}

// ------------------------------------------------------------------ judge parsing

void judge_criteria(Suite& suite) {
    const auto cases = load_fixture("judge_replies.json");
    suite.run("judge.styles", [&]() -> std::pair<bool, std::string> {
        std::size_t styles = 0, correct = 0;
        std::string bad;
        for (const auto& c : cases) {
            ++styles;
            const auto rubric = parse_rubric(c["rubric"].get<std::string>()).value();
            const auto reply = c["reply"].get<std::string>();
            bool ok = false;
            try {
                const auto got = parse_judge_reply(reply, rubric);
                if (c.contains("expect")) {
                    std::map<std::string, double> want;
                    for (const auto& [k, v] : c["expect"].items()) want[k] = v.get<double>();
                    ok = got == want;
                }
            } catch (const ReplyParseError&) {
                ok = c.value("error", "") == "parse";
            } catch (const ReplyRangeError&) {
                ok = c.value("error", "") == "range";
            }
            if (ok)
                ++correct;
            else
                bad += " " + c["name"].get<std::string>();
        }
        return {styles >= 20 && correct == styles,
                std::to_string(correct) + "/" + std::to_string(styles) + " reply styles handled" +
                    (bad.empty() ? "" : ", wrong:" + bad)};
    });
    suite.run("judge.no_fabrication", [&]() -> std::pair<bool, std::string> {
        // Replies that carry no score must never yield one.
        std::size_t checked = 0, fabricated = 0;
        for (const auto& c : cases) {
            if (c.value("error", "") != "parse") continue;
            ++checked;
            try {
                parse_judge_reply(c["reply"].get<std::string>(), parse_rubric(c["rubric"].get<std::string>()).value());
                ++fabricated;
            } catch (const ReplyParseError&) {
            } catch (const ReplyRangeError&) {
                ++fabricated;
            }
        }
        const char* fillers[] = {"Use a scale of 1-10.", "Scores are out of 10.", "Both are rated /10.",
                                 "The answer is acceptable.", "Rate from 1 to 10 please."};
        std::mt19937_64 rng(12);
        for (int i = 0; i < 1000; ++i) {
            std::string reply;
            for (std::size_t k = 0, n = 1 + rng() % 3; k < n; ++k) reply += std::string(fillers[rng() % 5]) + " ";
            ++checked;
            try {
                parse_judge_reply(reply, Rubric::dialect_da_ca);
                ++fabricated;
            } catch (const ReplyParseError&) {
            }
        }
        return {fabricated == 0, std::to_string(checked) + " score-free replies, " + std::to_string(fabricated) +
                                     " produced scores"};
    });
    suite.run("judge.out_of_range", [&]() -> std::pair<bool, std::string> {
        std::size_t checked = 0, accepted = 0;
        std::mt19937_64 rng(13);
        const double bad_values[] = {0, -1, 11, 12.5, 100, 0.5, 10.01};
        for (int i = 0; i < 500; ++i) {
            const double bad = bad_values[rng() % std::size(bad_values)];
            const int good = 1 + static_cast<int>(rng() % 10);
            const bool first = rng() % 2;
            const std::string replies[] = {
                Json{{"DA", first ? bad : good}, {"CA", first ? good : bad}}.dump(),
                "Dialect authenticity: " + fmt(first ? bad : good, 2) + "\nContent accuracy: " + fmt(first ? good : bad, 2)};
            for (const auto& reply : replies) {
                ++checked;
                try {
                    parse_judge_reply(reply, Rubric::dialect_da_ca);
                    ++accepted;
                } catch (const ReplyRangeError&) {
                } catch (const ReplyParseError&) {
                }
            }
        }
        for (const auto& c : cases) {
            if (c.value("error", "") != "range") continue;
            ++checked;
            try {
                parse_judge_reply(c["reply"].get<std::string>(), parse_rubric(c["rubric"].get<std::string>()).value());
                ++accepted;
            } catch (const ReplyRangeError&) {
            }
        }
        return {accepted == 0, std::to_string(checked) + " out-of-range replies, " + std::to_string(accepted) +
                                   " accepted"};
    });
}

// ------------------------------------------------------------------ blinding

void blinding_criteria(Suite& suite) {
    TempDir dir;
    const auto bench = load_benchmark(fixture("dialect_bench.jsonl"));
    const std::vector<std::string> models{"Dallah", "PALO", "Peacock"};
    Json before;

    suite.run("blinding.leak_scan", [&]() -> std::pair<bool, std::string> {
        auto store = std::make_shared<AnnotationStore>(dir.path());
        ServerOptions opts;
        opts.port = 0;
        AnnotationServer server(store, opts);
        const int port = server.bind();
        std::thread thread([&] { server.run(); });
        while (!server.running()) std::this_thread::sleep_for(std::chrono::milliseconds(2));
        httplib::Client cli("127.0.0.1", port);

        Json items = Json::array();
        for (const auto& item : bench.items) items.push_back(JsonCodec<BenchmarkItem>::encode(item));
        Json responses = Json::array();
        for (const auto& r : responses_for(bench, models)) responses.push_back(JsonCodec<ModelResponse>::encode(r));
        const Json body{{"benchmark", {{"name", bench.name}, {"items", items}}},
                        {"responses", responses},
                        {"models", models},
                        {"seed", 31}};
        const auto created = cli.Post("/sessions", body.dump(), "application/json");
        if (!created || created->status != 201) {
            server.stop();
            thread.join();
            return {false, "session creation failed"};
        }
        const auto sid = Json::parse(created->body)["session_id"].get<std::string>();

        std::size_t payloads = 0, leaks = 0;
        auto scan = [&](const httplib::Result& res) {
            if (!res) {
                ++leaks;
                return;
            }
            std::string text = res->body;
            for (const auto& [k, v] : res->headers) text += "\n" + k + ": " + v;
            if (text.find("model_id") != std::string::npos) ++leaks;
            for (const auto& m : models)
                if (text.find(m) != std::string::npos) ++leaks;
        };
        const int per_annotator[] = {334, 333, 333};
        for (int a = 0; a < 3; ++a) {
            const std::string annotator = "annotator-" + std::to_string(a);
            for (int i = 0; i < per_annotator[a]; ++i) {
                const auto res = cli.Get("/sessions/" + sid + "/next?annotator=" + annotator);
                scan(res);
                if (!res) break;
                const auto task = Json::parse(res->body);
                if (task.value("done", false)) break;
                ++payloads;
                const Json sub{{"task_id", task["task_id"]},
                               {"annotator_id", annotator},
                               {"values", {{"DA", 1 + (i + a) % 10}, {"CA", 1 + (2 * i) % 10}}}};
                scan(cli.Post("/sessions/" + sid + "/submissions", sub.dump(), "application/json"));
            }
        }
        scan(cli.Get("/sessions/" + sid + "/progress"));
        server.stop();
        thread.join();
        before = store->state_json();
        return {payloads == 1000 && leaks == 0,
                std::to_string(payloads) + " task payloads served, " + std::to_string(leaks) + " model identity leaks"};
    });
    suite.run("blinding.replay", [&]() -> std::pair<bool, std::string> {
        if (before.is_null()) return {false, "no state to compare"};
        AnnotationStore reopened(dir.path());
        const bool same = reopened.state_json() == before;
        return {same, std::to_string(reopened.event_count()) + " events replayed, state " +
                          (same ? "identical" : "differs")};
    });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"qafila acceptance suite"};
    std::string expected_arg;
    app.add_option("--expected-failures", expected_arg, "Comma-separated criteria known to fail");
    CLI11_PARSE(app, argc, argv);

    std::set<std::string> expected;
    for (const auto& name : split(expected_arg, ','))
        if (!name.empty()) expected.insert(name);

    Suite suite;
    const std::pair<const char*, void (*)(Suite&)> groups[] = {
        {"dialect", dialect_criteria}, {"category", category_criteria}, {"filter", filter_criteria},
        {"cosine", cosine_criteria},   {"assembly", assembly_criteria}, {"benchmark", benchmark_criteria},
        {"judge", judge_criteria},     {"blinding", blinding_criteria}};
    for (const auto& [name, fn] : groups) {
        try {
            fn(suite);
        } catch (const std::exception& e) {
            suite.check(std::string(name) + ".setup", false, std::string("exception: ") + e.what());
        }
    }

    std::cout << "\n" << suite.failed().size() << " criteria failed\n";
    bool ok = true;
    for (const auto& name : suite.failed())
        if (!expected.count(name)) {
            std::cout << "unexpected failure: " << name << "\n";
            ok = false;
        }
    for (const auto& name : expected)
        if (!suite.failed().count(name)) {
            std::cout << "expected failure now passes: " << name << "\n";
            ok = false;
        }
    if (!expected.empty() && ok) std::cout << "failures match the expected set\n";
    return ok ? 0 : 1;
}
