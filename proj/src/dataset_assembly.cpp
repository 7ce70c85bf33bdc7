#include "qafila/dataset_assembly.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "qafila/random.hpp"
#include "qafila/text.hpp"

namespace qafila {

namespace fs = std::filesystem;

std::map<ContentType, double> SubsetSpec::uniform_mix() {
    return {{ContentType::conversation, 1.0 / 3.0},
            {ContentType::detailed_description, 1.0 / 3.0},
            {ContentType::complex_reasoning, 1.0 / 3.0}};
}

std::vector<SubsetSpec> parse_subset_specs(const Json& j) {
    const Json& list = j.is_object() && j.contains("specs") ? j["specs"] : j;
    if (!list.is_array()) throw AssemblyError("subset specs must be a JSON array (or {\"specs\": [...]})");
    std::vector<SubsetSpec> specs;
    for (const auto& item : list) {
        try {
            SubsetSpec s;
            const auto name = item.at("dialect").get<std::string>();
            auto d = parse_dialect(name);
            if (!d) throw AssemblyError("unknown dialect '" + name + "'");
            s.dialect = *d;
            const auto count = item.at("target_count").get<std::int64_t>();
            if (count <= 0) throw AssemblyError(name + ": target_count must be > 0");
            s.target_count = static_cast<std::size_t>(count);
            if (item.contains("seed")) s.seed = item["seed"].get<std::uint64_t>();
            if (item.contains("content_mix")) {
                s.content_mix.clear();
                for (auto it = item["content_mix"].begin(); it != item["content_mix"].end(); ++it) {
                    auto type = parse_content_type(it.key());
                    if (!type) throw AssemblyError(name + ": unknown content type '" + it.key() + "'");
                    s.content_mix[*type] = it.value().get<double>();
                }
            }
            specs.push_back(std::move(s));
        } catch (const nlohmann::json::exception& e) {
            throw AssemblyError(std::string("bad subset spec: ") + e.what());
        }
    }
    return specs;
}

std::map<ContentType, std::size_t> content_quotas(std::size_t count, const std::map<ContentType, double>& mix) {
    double sum = 0;
    for (const auto& [type, f] : mix) {
        if (!(f >= 0)) throw AssemblyError("content mix fractions must be non-negative");
        sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw AssemblyError("content mix fractions must sum to 1");
    std::map<ContentType, std::size_t> quotas;
    std::vector<std::pair<double, ContentType>> remainders;
    std::size_t assigned = 0;
    for (const auto& [type, f] : mix) {
        const double exact = static_cast<double>(count) * f;
        const auto base = static_cast<std::size_t>(std::floor(exact));
        quotas[type] = base;
        assigned += base;
        remainders.emplace_back(exact - static_cast<double>(base), type);
    }
    // Largest remainder first; ties go to the earlier content type.
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < count && i < remainders.size(); ++i, ++assigned) ++quotas[remainders[i].second];
    return quotas;
}

std::vector<AssignmentSheet> sample_subsets(std::span<const Sample> corpus, std::span<const SubsetSpec> specs) {
    std::map<ContentType, std::vector<std::size_t>> by_type;
    for (std::size_t i = 0; i < corpus.size(); ++i)
        if (corpus[i].language == Language::msa) by_type[corpus[i].content_type].push_back(i);

    std::unordered_set<std::size_t> used;
    std::vector<AssignmentSheet> sheets;
    for (const auto& spec : specs) {
        const std::string name(to_string(spec.dialect));
        if (spec.target_count == 0) throw AssemblyError(name + ": target_count must be > 0");
        const auto quotas = content_quotas(spec.target_count, spec.content_mix);
        std::mt19937_64 rng(spec.seed);
        std::vector<std::size_t> picked;
        for (const auto& [type, quota] : quotas) {
            std::vector<std::size_t> pool;
            for (auto idx : by_type[type])
                if (!used.count(idx)) pool.push_back(idx);
            if (pool.size() < quota)
                throw AssemblyError("corpus too small: " + name + " needs " + std::to_string(quota) + " " +
                                    std::string(to_string(type)) + " samples, " + std::to_string(pool.size()) +
                                    " available");
            seeded_shuffle(pool, rng);
            picked.insert(picked.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(quota));
        }
        seeded_shuffle(picked, rng);
        AssignmentSheet sheet;
        sheet.dialect = spec.dialect;
        for (auto idx : picked) {
            used.insert(idx);
            sheet.sample_ids.push_back(corpus[idx].id);
            sheet.status[corpus[idx].id] = AssignmentStatus::pending;
            sheet.samples.push_back(corpus[idx]);
        }
        sheets.push_back(std::move(sheet));
    }
    return sheets;
}

// ---------------------------------------------------------------- sheet files

std::string encode_sheet(const AssignmentSheet& sheet) {
    std::string out;
    for (std::size_t i = 0; i < sheet.samples.size(); ++i) {
        const auto& s = sheet.samples[i];
        auto st = sheet.status.find(s.id);
        const bool done = st != sheet.status.end() && st->second == AssignmentStatus::translated;
        Json line;
        line["dialect"] = to_string(sheet.dialect);
        line["sample_id"] = s.id;
        line["status"] = done ? "translated" : "pending";
        line["sample"] = JsonCodec<Sample>::encode(s);
        out += dump_line(line) + "\n";
    }
    return out;
}

AssignmentSheet decode_sheet(std::string_view jsonl) {
    AssignmentSheet sheet;
    std::optional<Dialect> dialect;
    std::size_t line_no = 0;
    for (const auto& raw : split(jsonl, '\n')) {
        ++line_no;
        if (raw.empty()) continue;
        try {
            auto j = Json::parse(raw);
            auto d = parse_dialect(j.at("dialect").get<std::string>());
            if (!d) throw AssemblyError("unknown dialect");
            if (dialect && *dialect != *d) throw AssemblyError("sheet mixes dialects");
            dialect = d;
            auto sample = JsonCodec<Sample>::decode(j.at("sample"));
            const auto status = j.at("status").get<std::string>();
            sheet.sample_ids.push_back(sample.id);
            sheet.status[sample.id] = status == "translated" ? AssignmentStatus::translated : AssignmentStatus::pending;
            sheet.samples.push_back(std::move(sample));
        } catch (const std::exception& e) {
            throw AssemblyError("sheet line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (!dialect) throw AssemblyError("empty assignment sheet");
    sheet.dialect = *dialect;
    return sheet;
}

// ---------------------------------------------------------------- exchange rows

namespace {

std::string row_id(const std::string& sample_id, std::size_t turn, std::string_view field) {
    return sample_id + ":" + std::to_string(turn) + ":" + std::string(field);
}

struct RowKey {
    std::string sample_id;
    std::size_t turn = 0;
    bool answer = false;
};

std::optional<RowKey> parse_row_id(const std::string& id) {
    const auto b = id.rfind(':');
    if (b == std::string::npos || b == 0) return std::nullopt;
    const auto a = id.rfind(':', b - 1);
    if (a == std::string::npos) return std::nullopt;
    const auto field = id.substr(b + 1);
    if (field != "question" && field != "answer") return std::nullopt;
    const auto turn = id.substr(a + 1, b - a - 1);
    if (turn.empty() || !std::all_of(turn.begin(), turn.end(), [](char c) { return c >= '0' && c <= '9'; }))
        return std::nullopt;
    return RowKey{id.substr(0, a), static_cast<std::size_t>(std::stoull(turn)), field == "answer"};
}

}  // namespace

std::vector<ExchangeRow> exchange_rows(const AssignmentSheet& sheet) {
    std::vector<ExchangeRow> rows;
    for (const auto& s : sheet.samples) {
        for (std::size_t t = 0; t < s.turns.size(); ++t) {
            if (!s.turns[t].question.empty()) rows.push_back({row_id(s.id, t, "question"), s.turns[t].question, ""});
            rows.push_back({row_id(s.id, t, "answer"), s.turns[t].answer, ""});
        }
    }
    return rows;
}

std::string encode_exchange(std::span<const ExchangeRow> rows) {
    std::string out;
    for (const auto& r : rows) {
        Json j;
        j["id"] = r.id;
        j["msa_text"] = r.msa_text;
        j["dialect_text"] = r.dialect_text;
        out += dump_line(j) + "\n";
    }
    return out;
}

std::vector<ExchangeRow> decode_exchange(std::string_view jsonl) {
    std::vector<ExchangeRow> rows;
    std::size_t line_no = 0;
    for (const auto& raw : split(jsonl, '\n')) {
        ++line_no;
        if (raw.empty()) continue;
        try {
            auto j = Json::parse(raw);
            rows.push_back({j.at("id").get<std::string>(), j.value("msa_text", std::string()),
                            j.at("dialect_text").get<std::string>()});
        } catch (const std::exception& e) {
            throw AssemblyError("translation line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return rows;
}

MergeResult merge_dialect_translations(AssignmentSheet& sheet, std::span<const ExchangeRow> translations) {
    std::unordered_map<std::string, const Sample*> by_id;
    for (const auto& s : sheet.samples) by_id[s.id] = &s;

    std::map<std::string, std::string> text_for;  // row id -> dialect text
    for (const auto& row : translations) {
        auto key = parse_row_id(row.id);
        if (!key) throw AssemblyError("id mismatch: malformed row id '" + row.id + "'");
        auto it = by_id.find(key->sample_id);
        if (it == by_id.end()) throw AssemblyError("id mismatch: '" + key->sample_id + "' is not on the sheet");
        if (key->turn >= it->second->turns.size())
            throw AssemblyError("id mismatch: '" + row.id + "' names a nonexistent turn");
        if (row.dialect_text.empty()) throw AssemblyError("empty translated text for '" + row.id + "'");
        text_for[row.id] = row.dialect_text;
    }

    MergeResult result;
    for (const auto& s : sheet.samples) {
        Sample out = s;
        bool complete = true;
        for (std::size_t t = 0; t < s.turns.size() && complete; ++t) {
            for (bool answer : {false, true}) {
                const auto& msa = answer ? s.turns[t].answer : s.turns[t].question;
                if (msa.empty()) continue;
                auto it = text_for.find(row_id(s.id, t, answer ? "answer" : "question"));
                if (it == text_for.end()) {
                    complete = false;
                    break;
                }
                (answer ? out.turns[t].answer : out.turns[t].question) = it->second;
            }
        }
        if (!complete) {
            result.pending_ids.push_back(s.id);
            continue;
        }
        out.id = s.id + "-" + std::string(to_string(sheet.dialect));
        out.language = Language::dialect;
        out.dialect = sheet.dialect;
        out.stage = Stage::dialect_tune;
        out.extra["msa_source_id"] = s.id;
        sheet.status[s.id] = AssignmentStatus::translated;
        result.samples.push_back(std::move(out));
    }
    return result;
}

// ---------------------------------------------------------------- manifests

void for_each_sample(const StageDataset& dataset, const std::function<void(const Sample&)>& fn) {
    auto check = [&](const Sample& s, const std::string& where) {
        if (s.stage != dataset.stage)
            throw AssemblyError(where + ": sample " + s.id + " has stage " + std::string(to_string(s.stage)) +
                                ", dataset is " + std::string(to_string(dataset.stage)));
        fn(s);
    };
    if (const auto* samples = std::get_if<std::vector<Sample>>(&dataset.data)) {
        for (const auto& s : *samples) {
            try {
                validate(s);
            } catch (const ValidationError& e) {
                throw AssemblyError(dataset.source + ": " + e.what());
            }
            check(s, dataset.source);
        }
        return;
    }
    const auto& path = std::get<fs::path>(dataset.data);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw AssemblyError("cannot open " + path.string());
    std::string line;
    std::size_t line_no = 0;
    Sample s;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (auto err = decode_line(line, s)) throw AssemblyError(path.string() + ":" + std::to_string(line_no) + ": " + *err);
        check(s, path.string() + ":" + std::to_string(line_no));
    }
}

std::int64_t count_samples(const StageDataset& dataset) {
    std::int64_t n = 0;
    for_each_sample(dataset, [&](const Sample&) { ++n; });
    return n;
}

StageManifest build_stage_manifest(std::span<const StageDataset> datasets) {
    StageManifest m;
    std::set<std::pair<Stage, std::string>> seen;
    for (const auto& d : datasets) {
        if (!seen.emplace(d.stage, d.source).second)
            throw AssemblyError("duplicate dataset label (" + std::string(to_string(d.stage)) + ", " + d.source + ")");
        ManifestEntry e;
        e.stage = d.stage;
        e.source = d.source;
        e.count = count_samples(d);
        if (const auto* path = std::get_if<fs::path>(&d.data)) e.extra["path"] = path->string();
        m.total += e.count;
        m.entries.push_back(std::move(e));
    }
    if (auto v = validate_manifest(m); !v.empty()) throw AssemblyError(v.front());
    return m;
}

std::vector<StageDataset> datasets_from_manifest(const StageManifest& manifest, const fs::path& base_dir) {
    std::vector<StageDataset> out;
    for (const auto& e : manifest.entries) {
        auto it = e.extra.find("path");
        if (it == e.extra.end() || !it->is_string())
            throw AssemblyError("manifest entry (" + std::string(to_string(e.stage)) + ", " + e.source +
                                ") has no path");
        fs::path p = it->get<std::string>();
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        out.push_back({e.stage, e.source, p});
    }
    return out;
}

ExportResult export_training_set(const StageManifest& manifest, std::span<const StageDataset> datasets, Stage stage,
                                 std::uint64_t seed, const fs::path& out, ParallelMsa parallel_msa) {
    if (auto v = validate_manifest(manifest); !v.empty()) throw AssemblyError("invalid manifest: " + v.front());

    std::vector<Sample> main;
    std::vector<Sample> parallel;
    std::size_t excluded = 0;
    for (const auto& entry : manifest.entries) {
        if (entry.stage != stage) continue;
        auto it = std::find_if(datasets.begin(), datasets.end(),
                               [&](const StageDataset& d) { return d.stage == entry.stage && d.source == entry.source; });
        if (it == datasets.end()) throw AssemblyError("no dataset for manifest entry " + entry.source);
        std::int64_t n = 0;
        for_each_sample(*it, [&](const Sample& s) {
            ++n;
            const bool is_parallel = stage == Stage::dialect_tune && s.language == Language::msa;
            if (!is_parallel || parallel_msa == ParallelMsa::mixed)
                main.push_back(s);
            else if (parallel_msa == ParallelMsa::separate)
                parallel.push_back(s);
            else
                ++excluded;
        });
        if (n != entry.count)
            throw AssemblyError("dataset " + entry.source + " has " + std::to_string(n) + " samples, manifest says " +
                                std::to_string(entry.count));
    }
    require_unique_ids(main);

    ExportResult result;
    if (main.empty() && parallel.empty())
        result.warnings.push_back("stage " + std::string(to_string(stage)) + " has no data; wrote an empty file");

    auto write_shuffled = [&](std::vector<Sample>& samples, const fs::path& path) {
        std::mt19937_64 rng(seed);
        seeded_shuffle(samples, rng);
        const std::string content = encode_jsonl(samples);
        if (path.has_parent_path()) fs::create_directories(path.parent_path());
        write_file(path.string(), content);
        const std::string checksum = sha256_hex(content);
        write_file(path.string() + ".sha256", checksum + "  " + path.filename().string() + "\n");
        return checksum;
    };
    result.checksum = write_shuffled(main, out);
    result.lines = main.size();
    if (parallel_msa == ParallelMsa::separate) {
        write_shuffled(parallel, fs::path(out.string() + ".msa_parallel.jsonl"));
        result.parallel_msa_lines = parallel.size();
    }
    const auto written = static_cast<std::int64_t>(result.lines + result.parallel_msa_lines + excluded);
    if (written != manifest.stage_total(stage))
        throw AssemblyError("export wrote " + std::to_string(written) + " samples, manifest stage total is " +
                            std::to_string(manifest.stage_total(stage)));
    return result;
}

}  // namespace qafila
