#include "qafila/cli.hpp"

#include <csignal>
#include <filesystem>
#include <memory>
#include <optional>
#include <thread>

#include <CLI11.hpp>

#include "qafila/annotation_server.hpp"
#include "qafila/backend_registry.hpp"
#include "qafila/dataset_assembly.hpp"
#include "qafila/eval_harness.hpp"
#include "qafila/judge_reply.hpp"
#include "qafila/parallel.hpp"
#include "qafila/score_analytics.hpp"
#include "qafila/text.hpp"
#include "qafila/translate_filter.hpp"

namespace qafila {

namespace fs = std::filesystem;

namespace {

/// Bad flags or flag combinations detected after parsing.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A command finished but left work undone (skips, pending rows).
struct Partial {
    std::string summary;
};

struct Globals {
    std::string config_path;
    std::string cache_dir;
    std::size_t jobs = 0;
    std::uint64_t seed = 0;
    bool json_errors = false;
    CLI::Option* jobs_opt = nullptr;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* cache_opt = nullptr;
};

class Run {
public:
    Run(const Globals& g, std::ostream& out, std::ostream& err) : out(out), err(err) {
        if (!g.config_path.empty()) {
            try {
                config = Json::parse(read_file(g.config_path));
            } catch (const nlohmann::json::parse_error& e) {
                throw UsageError("config " + g.config_path + ": " + e.what());
            }
            if (!config.is_object()) throw UsageError("config " + g.config_path + ": top level must be an object");
        } else {
            config = Json::object();
        }
        try {
            seed = g.seed_opt->count() ? g.seed : config.value("seed", std::uint64_t{0});
            jobs = g.jobs_opt->count() ? g.jobs : config.value("jobs", default_jobs());
            cache_dir = g.cache_opt->count() ? g.cache_dir : config.value("cache_dir", std::string());
        } catch (const nlohmann::json::exception& e) {
            throw UsageError(std::string("config: ") + e.what());
        }
        if (jobs == 0) throw UsageError("--jobs must be at least 1");
    }

    void header(const std::string& command) const {
        err << "qafila " << QAFILA_VERSION << " " << command << " seed=" << seed << " jobs=" << jobs
            << " cache=" << (cache_dir.empty() ? "memory" : cache_dir) << "\n";
    }

    BackendRegistry& backends() {
        if (!registry_) {
            CallContext ctx;
            ctx.cache = std::make_shared<ResponseCache>(CachePolicy{cache_dir, std::nullopt});
            if (config.contains("retry")) {
                const auto& r = config["retry"];
                ctx.retry.max_attempts = r.value("max_attempts", ctx.retry.max_attempts);
                ctx.retry.initial_backoff =
                    std::chrono::milliseconds(r.value("initial_backoff_ms", ctx.retry.initial_backoff.count()));
            }
            registry_ = std::make_unique<BackendRegistry>(config.value("backends", Json::object()), ctx, seed);
        }
        return *registry_;
    }

    double config_double(const char* key, double fallback) const {
        try {
            return config.value(key, fallback);
        } catch (const nlohmann::json::exception&) {
            throw UsageError(std::string("config: bad value for ") + key);
        }
    }

    std::ostream& out;
    std::ostream& err;
    Json config;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
    std::string cache_dir;

private:
    std::unique_ptr<BackendRegistry> registry_;
};

void ensure_parent(const std::string& path) {
    const auto parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

template <class T>
void write_jsonl(const std::string& path, const std::vector<T>& records) {
    ensure_parent(path);
    save_jsonl(path, records);
}

void write_text(const std::string& path, const std::string& text) {
    ensure_parent(path);
    write_file(path, text);
}

std::vector<std::string> comma_list(const std::string& s) {
    std::vector<std::string> out;
    for (auto& part : split(s, ','))
        if (!part.empty()) out.push_back(part);
    return out;
}

double checked_threshold(double t) {
    if (!(t >= 0.0 && t <= 1.0)) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%g", t);
        throw UsageError(std::string("threshold out of range: ") + buf + " is not in [0, 1]");
    }
    return t;
}

// Scores any records that arrive without a similarity.
void ensure_scored(std::vector<TranslationRecord>& records, Run& run) {
    const bool missing = std::any_of(records.begin(), records.end(), [](const TranslationRecord& r) {
        return !r.exempt() && !r.unscorable && !r.similarity;
    });
    if (missing) score_records(records, *run.backends().embedder(), run.jobs);
}

// ------------------------------------------------------------------ commands

struct TranslateArgs {
    std::string in, out, src = "en", tgt = "ar";
    bool no_score = false;
};

void cmd_translate(Run& run, const TranslateArgs& a) {
    run.header("translate");
    const auto samples = load_jsonl<Sample>(a.in);
    require_unique_ids(samples);
    auto records = roundtrip_corpus(samples, *run.backends().translator(), a.src, a.tgt, run.jobs);
    std::size_t embed_calls = 0;
    if (!a.no_score) embed_calls = score_records(records, *run.backends().embedder(), run.jobs);
    write_jsonl(a.out, records);
    run.err << "translated " << samples.size() << " samples into " << records.size() << " field records";
    if (!a.no_score) run.err << " (" << embed_calls << " embeddings)";
    run.err << "\n";
}

struct FilterArgs {
    std::string samples, records, out_retained, out_dropped, stats, decisions, tgt = "ar";
    double threshold = kDefaultSimilarityThreshold;
    CLI::Option* threshold_opt = nullptr;
};

void cmd_filter(Run& run, const FilterArgs& a) {
    const double threshold = checked_threshold(
        a.threshold_opt->count() ? a.threshold : run.config_double("threshold", kDefaultSimilarityThreshold));
    run.header("filter");
    const auto target = language_for_code(a.tgt);
    if (!target) throw UsageError("unsupported target language " + a.tgt);
    const auto samples = load_jsonl<Sample>(a.samples);
    auto records = load_jsonl<TranslationRecord>(a.records);
    ensure_scored(records, run);
    const auto result = filter_corpus(samples, records, threshold);

    std::vector<Sample> retained;
    retained.reserve(result.retained.size());
    for (const auto& s : result.retained) retained.push_back(translated_sample(s, records, *target));
    write_jsonl(a.out_retained, retained);
    if (!a.out_dropped.empty()) write_jsonl(a.out_dropped, result.dropped);
    if (!a.decisions.empty()) write_jsonl(a.decisions, result.decisions);
    const auto stats = result.stats.to_json(threshold);
    if (!a.stats.empty()) write_text(a.stats, stats.dump(2) + "\n");
    char rate[32];
    std::snprintf(rate, sizeof rate, "%.4f", result.stats.retention_rate());
    run.err << "retained " << result.stats.overall.retained << "/" << result.stats.overall.total << " (rate " << rate
            << ") at threshold " << threshold << "\n";
}

struct SweepArgs {
    std::string samples, records, grid = "0.5:1.0:0.05", out;
};

void cmd_sweep(Run& run, const SweepArgs& a) {
    std::vector<double> grid;
    try {
        grid = parse_grid(a.grid);
    } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("bad --grid: ") + e.what());
    }
    for (double t : grid) checked_threshold(t);
    run.header("sweep");
    const auto samples = load_jsonl<Sample>(a.samples);
    auto records = load_jsonl<TranslationRecord>(a.records);
    ensure_scored(records, run);
    const auto curve = threshold_sweep(samples, records, grid);
    const auto csv = sweep_to_csv(curve);
    if (a.out.empty())
        run.out << csv;
    else
        write_text(a.out, csv);
}

struct SubsetArgs {
    std::string specs, corpus, out_dir;
};

void cmd_subset(Run& run, const SubsetArgs& a) {
    run.header("subset");
    Json spec_json;
    try {
        spec_json = Json::parse(read_file(a.specs));
    } catch (const nlohmann::json::parse_error& e) {
        throw UsageError("specs " + a.specs + ": " + e.what());
    }
    const auto specs = parse_subset_specs(spec_json);
    const auto corpus = load_jsonl<Sample>(a.corpus);
    require_unique_ids(corpus);
    auto sheets = sample_subsets(corpus, specs);
    fs::create_directories(a.out_dir);
    for (auto& sheet : sheets) {
        const std::string name(to_string(sheet.dialect));
        sheet.export_path = fs::path(a.out_dir) / (name + ".jsonl");
        write_file(sheet.export_path.string(), encode_sheet(sheet));
        const auto rows = exchange_rows(sheet);
        write_file((fs::path(a.out_dir) / (name + ".exchange.jsonl")).string(), encode_exchange(rows));
        run.err << name << ": " << sheet.sample_ids.size() << " samples, " << rows.size() << " rows to translate -> "
                << sheet.export_path.string() << "\n";
    }
}

struct MergeArgs {
    std::string sheet, translations, out, sheet_out;
};

std::optional<Partial> cmd_merge(Run& run, const MergeArgs& a) {
    run.header("merge");
    auto sheet = decode_sheet(read_file(a.sheet));
    const auto rows = decode_exchange(read_file(a.translations));
    const auto result = merge_dialect_translations(sheet, rows);
    write_jsonl(a.out, result.samples);
    if (!a.sheet_out.empty()) write_text(a.sheet_out, encode_sheet(sheet));
    run.err << "merged " << result.samples.size() << " " << to_string(sheet.dialect) << " samples\n";
    if (result.pending_ids.empty()) return std::nullopt;
    std::string msg = std::to_string(result.pending_ids.size()) + " samples still pending translation:";
    for (std::size_t i = 0; i < result.pending_ids.size() && i < 10; ++i) msg += " " + result.pending_ids[i];
    if (result.pending_ids.size() > 10) msg += " ...";
    return Partial{msg};
}

struct ManifestArgs {
    std::vector<std::string> stages;
    std::string out;
};

void cmd_manifest(Run& run, const ManifestArgs& a) {
    run.header("manifest");
    std::vector<StageDataset> datasets;
    const auto manifest_dir = fs::absolute(fs::path(a.out)).parent_path();
    for (const auto& spec : a.stages) {
        const auto colon = spec.find(':');
        const auto eq = spec.find('=', colon == std::string::npos ? 0 : colon);
        if (colon == std::string::npos || eq == std::string::npos)
            throw UsageError("--stages entries look like stage:source=path, got " + spec);
        const auto stage = parse_stage(spec.substr(0, colon));
        if (!stage) throw UsageError("unknown stage " + spec.substr(0, colon));
        const fs::path path = spec.substr(eq + 1);
        if (!fs::exists(path)) throw UsageError("dataset not found: " + path.string());
        datasets.push_back({*stage, spec.substr(colon + 1, eq - colon - 1), path});
    }
    auto manifest = build_stage_manifest(datasets);
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        const auto& p = std::get<fs::path>(datasets[i].data);
        manifest.entries[i].extra["path"] = fs::relative(fs::absolute(p), manifest_dir).generic_string();
    }
    ensure_parent(a.out);
    save_manifest(a.out, manifest);
    for (auto stage : {Stage::pretrain, Stage::instruct, Stage::dialect_tune})
        run.err << to_string(stage) << ": " << manifest.stage_total(stage) << "\n";
    run.err << "total: " << manifest.total << "\n";
}

struct ExportArgs {
    std::string manifest, stage, out, parallel_msa = "mixed";
};

void cmd_export(Run& run, const ExportArgs& a) {
    const auto stage = parse_stage(a.stage);
    if (!stage) throw UsageError("unknown stage " + a.stage);
    ParallelMsa mode;
    if (a.parallel_msa == "mixed")
        mode = ParallelMsa::mixed;
    else if (a.parallel_msa == "separate")
        mode = ParallelMsa::separate;
    else if (a.parallel_msa == "exclude")
        mode = ParallelMsa::exclude;
    else
        throw UsageError("--parallel-msa must be mixed, separate or exclude");
    run.header("export");
    const auto manifest = load_manifest(a.manifest);
    const auto datasets = datasets_from_manifest(manifest, fs::path(a.manifest).parent_path());
    ensure_parent(a.out);
    const auto result = export_training_set(manifest, datasets, *stage, run.seed, a.out, mode);
    for (const auto& w : result.warnings) run.err << "warning: " << w << "\n";
    run.err << "wrote " << result.lines << " lines to " << a.out << " sha256 " << result.checksum << "\n";
}

struct EvalArgs {
    std::string bench, responses, evaluators, templ, out, descriptions, models;
    bool mock_judges = false;
};

std::optional<Partial> cmd_eval(Run& run, const EvalArgs& a) {
    const auto evaluator_names = comma_list(a.evaluators);
    if (evaluator_names.empty()) throw UsageError("--evaluators needs at least one name");
    run.header("eval");
    const auto bench = load_benchmark(a.bench);
    const auto responses = load_jsonl<ModelResponse>(a.responses);
    const auto tmpl =
        a.templ.empty() ? JudgePromptTemplate::default_for(bench.rubric) : JudgePromptTemplate::from_file(a.templ, bench.rubric);

    auto& reg = run.backends();
    reg.set_mock_unlisted_judges(a.mock_judges);
    std::vector<Evaluator> evaluators;
    EvaluationOptions options;
    options.jobs = run.jobs;
    options.models = comma_list(a.models);
    for (const auto& name : evaluator_names) {
        evaluators.push_back({name, reg.judge(name)});
        options.judge_settings[name] = reg.judge_settings(name);
    }
    JudgeContextProvider contexts(reg.captioner());
    if (!a.descriptions.empty()) contexts.load_descriptions(a.descriptions);

    const auto result = run_evaluation(bench, responses, evaluators, tmpl, contexts, options);
    write_jsonl(a.out, result.records);
    const auto skips_path = a.out + ".skips.jsonl";
    write_jsonl(skips_path, result.skips);
    run.err << bench.name << ": " << bench.items.size() << " items, " << result.records.size() << " records, "
            << result.skips.size() << " skips\n";
    if (result.skips.empty()) return std::nullopt;
    return Partial{std::to_string(result.skips.size()) + " judgments skipped, see " + skips_path};
}

struct ReportArgs {
    std::vector<std::string> scores;
    std::string kind, out, csv, bench, human = "human", model, model_a, model_b, evaluators;
};

void cmd_report(Run& run, const ReportArgs& a) {
    run.header("report");
    std::vector<ScoreRecord> records;
    for (const auto& path : a.scores) {
        auto part = load_jsonl<ScoreRecord>(path);
        records.insert(records.end(), part.begin(), part.end());
    }
    const ItemIndex index = a.bench.empty() ? ItemIndex() : ItemIndex(load_benchmark(a.bench));
    const auto order = comma_list(a.evaluators);
    auto keep = [&](const ScoreRecord& r) {
        if (!a.model.empty() && r.model_id != a.model) return false;
        return order.empty() || std::find(order.begin(), order.end(), r.evaluator_id) != order.end() ||
               r.evaluator_id == a.human;
    };
    auto by_order = [&](const std::string& evaluator) {
        auto it = std::find(order.begin(), order.end(), evaluator);
        return it == order.end() ? order.size() : static_cast<std::size_t>(it - order.begin());
    };

    Json report{{"kind", a.kind}};
    std::string csv;
    if (a.kind == "categories" || a.kind == "margin") {
        std::vector<ScoreRecord> msa;
        for (const auto& r : records)
            if ((r.rubric == Rubric::msa_relative || r.rubric == Rubric::human_overall) && keep(r)) msa.push_back(r);
        auto reports = category_reports(msa, index);
        std::stable_sort(reports.begin(), reports.end(), [&](const CategoryReport& x, const CategoryReport& y) {
            return by_order(x.evaluator_id) < by_order(y.evaluator_id);
        });
        if (a.kind == "categories") {
            report["rows"] = Json::array();
            for (const auto& r : reports) report["rows"].push_back(to_json(r));
            csv = category_csv(reports);
        } else {
            if (a.model_a.empty() || a.model_b.empty()) throw UsageError("margin needs --model-a and --model-b");
            const auto margin = model_margin(reports, a.model_a, a.model_b);
            report["margin"] = to_json(margin);
            csv = margin_csv(margin, reports);
        }
    } else if (a.kind == "dialects" || a.kind == "mad") {
        std::vector<ScoreRecord> dialect;
        for (const auto& r : records)
            if (r.rubric == Rubric::dialect_da_ca && keep(r)) dialect.push_back(r);
        auto reports = dialect_reports(dialect, index);
        std::set<std::string> seen;
        for (const auto& r : reports)
            if (!seen.insert(r.evaluator_id).second)
                throw UsageError("evaluator " + r.evaluator_id + " scored several models; pick one with --model");
        std::stable_sort(reports.begin(), reports.end(), [&](const DialectReport& x, const DialectReport& y) {
            return by_order(x.evaluator_id) < by_order(y.evaluator_id);
        });
        if (a.kind == "dialects") {
            report["rows"] = Json::array();
            for (const auto& r : reports) report["rows"].push_back(to_json(r));
            csv = dialect_csv(reports);
        } else {
            auto human = std::find_if(reports.begin(), reports.end(),
                                      [&](const DialectReport& r) { return r.evaluator_id == a.human; });
            if (human == reports.end()) throw UsageError("no records from reference evaluator " + a.human);
            std::vector<AlignmentReport> alignments;
            for (const auto& r : reports)
                if (r.evaluator_id != a.human) alignments.push_back(alignment_mad(r, *human));
            alignments = rank_evaluators(std::move(alignments));
            report["ranking"] = Json::array();
            for (const auto& r : alignments) report["ranking"].push_back(to_json(r));
            csv = mad_csv(alignments);
        }
    } else {
        throw UsageError("--kind must be categories, dialects, mad or margin");
    }

    if (!a.out.empty()) write_text(a.out, report.dump(2) + "\n");
    if (!a.csv.empty()) write_text(a.csv, csv);
    if (a.out.empty() && a.csv.empty()) run.out << csv;
}

struct ServeArgs {
    std::string host = "127.0.0.1", data_dir, media_dir, ui_dir, bench, responses, models;
    int port = 8080;
};

void cmd_serve(Run& run, const ServeArgs& a) {
    run.header("serve");
    auto store = std::make_shared<AnnotationStore>(fs::path(a.data_dir));
    if (!a.bench.empty()) {
        if (a.responses.empty()) throw UsageError("--bench needs --responses");
        const auto bench = load_benchmark(a.bench);
        const auto responses = load_jsonl<ModelResponse>(a.responses);
        const auto id = store->create_session(bench, responses, comma_list(a.models), run.seed);
        run.out << "session " << id << " with " << store->session(id).tasks.size() << " tasks\n" << std::flush;
    }
    ServerOptions opts;
    opts.host = a.host;
    opts.port = a.port;
    if (!a.media_dir.empty()) opts.media_dir = a.media_dir;
    if (!a.ui_dir.empty()) opts.ui_dir = a.ui_dir;
    AnnotationServer server(store, opts);

    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);
    const int port = server.bind();
    run.err << "listening on http://" << a.host << ":" << port << "\n";
    std::jthread waiter([&] {
        int sig = 0;
        sigwait(&signals, &sig);
        server.stop();
    });
    server.run();
    store->snapshot();
    run.err << "snapshot written to " << (fs::path(a.data_dir) / "snapshot.json").string() << "\n";
}

// ------------------------------------------------------------------ errors

struct Classified {
    int code;
    std::string type;
    std::string message;
};

Classified classify(std::exception_ptr ep) {
    try {
        std::rethrow_exception(ep);
    } catch (const TransportError& e) {
        return {exit_code::transport, "transport", e.what()};
    } catch (const ProtocolError& e) {
        return {exit_code::transport, "protocol", e.what()};
    } catch (const BackendError& e) {
        return {exit_code::transport, "backend", e.what()};
    } catch (const ValidationError& e) {
        return {exit_code::validation, "validation", e.what()};
    } catch (const DecodeError& e) {
        return {exit_code::validation, "decode", e.what()};
    } catch (const UsageError& e) {
        return {exit_code::validation, "usage", e.what()};
    } catch (const ConfigError& e) {
        return {exit_code::validation, "config", e.what()};
    } catch (const CoverageError& e) {
        return {exit_code::validation, "coverage", e.what()};
    } catch (const BenchmarkError& e) {
        return {exit_code::validation, "benchmark", e.what()};
    } catch (const PromptError& e) {
        return {exit_code::validation, "prompt", e.what()};
    } catch (const AssemblyError& e) {
        return {exit_code::validation, "assembly", e.what()};
    } catch (const AnalyticsError& e) {
        return {exit_code::validation, "analytics", e.what()};
    } catch (const PipelineError& e) {
        return {exit_code::validation, "pipeline", e.what()};
    } catch (const AnnotationError& e) {
        return {exit_code::validation, "annotation", e.what()};
    } catch (const std::exception& e) {
        return {exit_code::validation, "error", e.what()};
    }
}

void report_error(std::ostream& err, bool json, const Classified& c) {
    if (json)
        err << Json{{"error", {{"type", c.type}, {"message", c.message}, {"exit_code", c.code}}}}.dump() << "\n";
    else
        err << "error: " << c.message << "\n";
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Corpus curation and evaluation workbench", "qafila"};
    app.set_version_flag("--version", std::string("qafila ") + QAFILA_VERSION);
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--config", g.config_path, "JSON run config; flags override it")->check(CLI::ExistingFile);
    g.cache_opt = app.add_option("--cache-dir", g.cache_dir, "Backend response cache directory (default: memory only)");
    g.jobs_opt = app.add_option("--jobs", g.jobs, "Worker threads (default: logical processors)");
    g.seed_opt = app.add_option("--seed", g.seed, "Seed for every randomized step (default 0)");
    app.add_flag("--json-errors", g.json_errors, "Print errors as JSON objects");

    TranslateArgs ta;
    auto* translate = app.add_subcommand("translate", "Round-trip translate samples and score similarity");
    translate->add_option("--in", ta.in, "Samples JSONL")->required()->check(CLI::ExistingFile);
    translate->add_option("--src", ta.src, "Source language code")->capture_default_str();
    translate->add_option("--tgt", ta.tgt, "Target language code")->capture_default_str();
    translate->add_option("--out", ta.out, "Translation records JSONL")->required();
    translate->add_flag("--no-score", ta.no_score, "Skip embedding similarity scoring");

    FilterArgs fa;
    auto* filter = app.add_subcommand("filter", "Keep samples whose round trip clears the similarity threshold");
    filter->add_option("--samples", fa.samples, "Source samples JSONL")->required()->check(CLI::ExistingFile);
    filter->add_option("--records", fa.records, "Translation records JSONL")->required()->check(CLI::ExistingFile);
    fa.threshold_opt = filter->add_option("--threshold", fa.threshold, "Similarity threshold in [0, 1] (default 0.8)");
    filter->add_option("--tgt", fa.tgt, "Language of retained output")->capture_default_str();
    filter->add_option("--out-retained", fa.out_retained, "Retained samples, translated")->required();
    filter->add_option("--out-dropped", fa.out_dropped, "Dropped source samples");
    filter->add_option("--decisions", fa.decisions, "Per-sample filter decisions JSONL");
    filter->add_option("--stats", fa.stats, "Retention statistics JSON");

    SweepArgs sa;
    auto* sweep = app.add_subcommand("sweep", "Retention rate over a grid of thresholds");
    sweep->add_option("--samples", sa.samples, "Source samples JSONL")->required()->check(CLI::ExistingFile);
    sweep->add_option("--records", sa.records, "Translation records JSONL")->required()->check(CLI::ExistingFile);
    sweep->add_option("--grid", sa.grid, "start:stop:step or a comma list")->capture_default_str();
    sweep->add_option("--out", sa.out, "CSV output (default: stdout)");

    SubsetArgs ua;
    auto* subset = app.add_subcommand("subset", "Draw disjoint per-dialect subsets for human translation");
    subset->add_option("--specs", ua.specs, "Subset specs JSON")->required()->check(CLI::ExistingFile);
    subset->add_option("--corpus", ua.corpus, "Retained MSA samples JSONL")->required()->check(CLI::ExistingFile);
    subset->add_option("--out-dir", ua.out_dir, "Directory for sheets")->required();

    MergeArgs ma;
    auto* merge = app.add_subcommand("merge", "Merge returned dialect translations into samples");
    merge->add_option("--sheet", ma.sheet, "Assignment sheet JSONL")->required()->check(CLI::ExistingFile);
    merge->add_option("--translations", ma.translations, "Returned exchange rows JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    merge->add_option("--out", ma.out, "Dialect samples JSONL")->required();
    merge->add_option("--sheet-out", ma.sheet_out, "Updated sheet with statuses");

    ManifestArgs na;
    auto* manifest = app.add_subcommand("manifest", "Count every stage dataset into a manifest");
    manifest->add_option("--stages", na.stages, "stage:source=path entries")->required();
    manifest->add_option("--out", na.out, "Manifest JSON")->required();

    ExportArgs ea;
    auto* exp = app.add_subcommand("export", "Write one stage's training file");
    exp->add_option("--manifest", ea.manifest, "Manifest JSON")->required()->check(CLI::ExistingFile);
    exp->add_option("--stage", ea.stage, "pretrain, instruct or dialect_tune")->required();
    exp->add_option("--out", ea.out, "Training JSONL")->required();
    exp->add_option("--parallel-msa", ea.parallel_msa, "mixed, separate or exclude")->capture_default_str();

    EvalArgs va;
    auto* eval = app.add_subcommand("eval", "Score model responses with judge backends");
    eval->add_option("--bench", va.bench, "Benchmark JSONL")->required()->check(CLI::ExistingFile);
    eval->add_option("--responses", va.responses, "Model responses JSONL")->required()->check(CLI::ExistingFile);
    eval->add_option("--evaluators", va.evaluators, "Comma-separated judge names")->required();
    eval->add_option("--template", va.templ, "Judge prompt template file")->check(CLI::ExistingFile);
    eval->add_option("--descriptions", va.descriptions, "Precomputed image descriptions JSONL")
        ->check(CLI::ExistingFile);
    eval->add_option("--models", va.models, "Comma-separated model ids (default: all)");
    eval->add_option("--out", va.out, "Score records JSONL; skips go to <out>.skips.jsonl")->required();
    eval->add_flag("--mock-judges", va.mock_judges, "Use seeded mock judges for unconfigured names");

    ReportArgs ra;
    auto* report = app.add_subcommand("report", "Aggregate score records into tables");
    report->add_option("--scores", ra.scores, "Score records JSONL (repeatable)")->required()->check(CLI::ExistingFile);
    report->add_option("--kind", ra.kind, "categories, dialects, mad or margin")->required();
    report->add_option("--bench", ra.bench, "Benchmark for records without category/dialect metadata")
        ->check(CLI::ExistingFile);
    report->add_option("--evaluators", ra.evaluators, "Evaluators to include, in column order");
    report->add_option("--human", ra.human, "Reference evaluator for mad")->capture_default_str();
    report->add_option("--model", ra.model, "Only records for this model");
    report->add_option("--model-a", ra.model_a, "margin: first model");
    report->add_option("--model-b", ra.model_b, "margin: second model");
    report->add_option("--out", ra.out, "Report JSON");
    report->add_option("--csv", ra.csv, "Report CSV");

    ServeArgs va2;
    auto* serve = app.add_subcommand("serve", "Run the human annotation service");
    serve->add_option("--port", va2.port, "Port (0 picks a free one)")->capture_default_str();
    serve->add_option("--host", va2.host, "Bind address")->capture_default_str();
    serve->add_option("--data-dir", va2.data_dir, "Event log and snapshot directory")->required();
    serve->add_option("--media-dir", va2.media_dir, "Images served under /media/")->check(CLI::ExistingDirectory);
    serve->add_option("--ui-dir", va2.ui_dir, "Built annotation UI served at /")->check(CLI::ExistingDirectory);
    serve->add_option("--bench", va2.bench, "Create a session for this benchmark at startup")->check(CLI::ExistingFile);
    serve->add_option("--responses", va2.responses, "Responses for the startup session")->check(CLI::ExistingFile);
    serve->add_option("--models", va2.models, "Models for the startup session (default: all)");

    std::vector<std::string> argv_storage{"qafila"};
    argv_storage.insert(argv_storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : argv_storage) argv.push_back(s.data());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_code::ok;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return exit_code::ok;
    } catch (const CLI::CallForVersion&) {
        out << "qafila " << QAFILA_VERSION << "\n";
        return exit_code::ok;
    } catch (const CLI::ParseError& e) {
        const auto* failed = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
        if (failed->get_help_ptr() && failed->get_help_ptr()->count()) {
            out << failed->help();
            return exit_code::ok;
        }
        report_error(err, g.json_errors, {exit_code::validation, "usage", e.what()});
        if (!g.json_errors) err << failed->help();
        return exit_code::validation;
    }

    try {
        Run run(g, out, err);
        std::optional<Partial> partial;
        if (*translate) cmd_translate(run, ta);
        else if (*filter) cmd_filter(run, fa);
        else if (*sweep) cmd_sweep(run, sa);
        else if (*subset) cmd_subset(run, ua);
        else if (*merge) partial = cmd_merge(run, ma);
        else if (*manifest) cmd_manifest(run, na);
        else if (*exp) cmd_export(run, ea);
        else if (*eval) partial = cmd_eval(run, va);
        else if (*report) cmd_report(run, ra);
        else if (*serve) cmd_serve(run, va2);
        if (partial) {
            report_error(err, g.json_errors, {exit_code::partial, "partial", partial->summary});
            return exit_code::partial;
        }
        return exit_code::ok;
    } catch (...) {
        const auto c = classify(std::current_exception());
        report_error(err, g.json_errors, c);
        return c.code;
    }
}

}  // namespace qafila
