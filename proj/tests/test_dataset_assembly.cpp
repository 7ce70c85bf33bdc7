#include <doctest.h>

#include <fstream>
#include <set>

#include "qafila/dataset_assembly.hpp"
#include "qafila/text.hpp"
#include "support.hpp"

using namespace qafila;

namespace {

std::vector<Sample> msa_corpus(std::size_t n, std::uint64_t seed = 1) {
    auto corpus = qtest::english_corpus(n, seed);
    for (auto& s : corpus) s.language = Language::msa;
    return corpus;
}

std::vector<Sample> stage_samples(const std::string& prefix, std::size_t n, Stage stage) {
    std::vector<Sample> out;
    for (std::size_t i = 0; i < n; ++i) {
        auto s = qtest::make_sample(prefix + std::to_string(i), ContentType::conversation, {{"q", "a" + std::to_string(i)}},
                                    Language::english, stage);
        if (stage == Stage::pretrain) s.content_type = ContentType::detailed_description;
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

TEST_CASE("content quotas sum to the count and stay within one of the exact share") {
    for (std::size_t count : {1u, 2u, 7u, 100u, 853u, 1000u}) {
        const auto q = content_quotas(count, SubsetSpec::uniform_mix());
        std::size_t sum = 0;
        for (const auto& [type, n] : q) {
            sum += n;
            CHECK(std::abs(static_cast<double>(n) - count / 3.0) < 1.0);
        }
        CHECK(sum == count);
    }
    const std::map<ContentType, double> skew{{ContentType::conversation, 0.5},
                                             {ContentType::detailed_description, 0.25},
                                             {ContentType::complex_reasoning, 0.25}};
    const auto q = content_quotas(10, skew);
    CHECK(q.at(ContentType::conversation) == 5);
    CHECK(q.at(ContentType::detailed_description) + q.at(ContentType::complex_reasoning) == 5);
    CHECK_THROWS_AS(content_quotas(10, {{ContentType::conversation, 0.4}}), AssemblyError);
}

TEST_CASE("subsets are disjoint, sized, balanced and reproducible") {
    const auto corpus = msa_corpus(600);
    std::vector<SubsetSpec> specs;
    for (auto d : kAllDialects) specs.push_back({d, 60, SubsetSpec::uniform_mix(), 42});
    const auto a = sample_subsets(corpus, specs);
    const auto b = sample_subsets(corpus, specs);
    REQUIRE(a.size() == 6);
    std::set<std::string> seen;
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].sample_ids == b[i].sample_ids);
        CHECK(a[i].sample_ids.size() == 60);
        CHECK(a[i].dialect == kAllDialects[i]);
        std::map<ContentType, int> per_type;
        for (const auto& s : a[i].samples) ++per_type[s.content_type];
        for (const auto& [type, n] : per_type) CHECK(n == 20);
        for (const auto& id : a[i].sample_ids) CHECK(seen.insert(id).second);
    }
    specs[0].seed = 43;
    CHECK(sample_subsets(corpus, specs)[0].sample_ids != a[0].sample_ids);
}

TEST_CASE("subset sampling refuses undersized corpora and ignores non-MSA samples") {
    auto corpus = msa_corpus(30);
    for (std::size_t i = 0; i < 15; ++i) corpus[i].language = Language::english;
    std::vector<SubsetSpec> specs{{Dialect::yemen, 30, SubsetSpec::uniform_mix(), 1}};
    CHECK_THROWS_WITH_AS(sample_subsets(corpus, specs), doctest::Contains("corpus too small"), AssemblyError);
    specs[0].target_count = 0;
    CHECK_THROWS_AS(sample_subsets(corpus, specs), AssemblyError);
}

TEST_CASE("subset spec parsing") {
    const auto specs = parse_subset_specs(Json::parse(
        R"({"specs": [{"dialect": "egypt", "target_count": 10, "seed": 3},
                      {"dialect": "saudi", "target_count": 4, "content_mix": {"conversation": 1.0}}]})"));
    REQUIRE(specs.size() == 2);
    CHECK(specs[0].seed == 3);
    CHECK(specs[1].content_mix.size() == 1);
    CHECK_THROWS_AS(parse_subset_specs(Json::parse(R"([{"dialect": "atlantis", "target_count": 1}])")), AssemblyError);
}

TEST_CASE("sheet and exchange files round trip") {
    const auto corpus = msa_corpus(30);
    std::vector<SubsetSpec> specs{{Dialect::morocco, 6, SubsetSpec::uniform_mix(), 9}};
    auto sheet = sample_subsets(corpus, specs)[0];
    const auto back = decode_sheet(encode_sheet(sheet));
    CHECK(back.sample_ids == sheet.sample_ids);
    CHECK(back.dialect == Dialect::morocco);
    CHECK(back.samples == sheet.samples);

    const auto rows = exchange_rows(sheet);
    std::size_t fields = 0;
    for (const auto& s : sheet.samples) fields += 2 * s.turns.size();
    CHECK(rows.size() == fields);
    const auto rows_back = decode_exchange(encode_exchange(rows));
    REQUIRE(rows_back.size() == rows.size());
    CHECK(rows_back[0].id == rows[0].id);
    CHECK(rows_back[0].msa_text == rows[0].msa_text);
}

TEST_CASE("merge builds dialect samples and leaves incomplete ones pending") {
    const auto corpus = msa_corpus(30);
    std::vector<SubsetSpec> specs{{Dialect::palestine, 6, SubsetSpec::uniform_mix(), 5}};
    auto sheet = sample_subsets(corpus, specs)[0];
    auto rows = exchange_rows(sheet);
    for (auto& r : rows) r.dialect_text = "PS " + r.msa_text;
    const std::string held_back = sheet.sample_ids[2];
    std::vector<ExchangeRow> partial;
    for (const auto& r : rows)
        if (r.id.rfind(held_back + ":", 0) != 0 || r.id.find(":answer") == std::string::npos) partial.push_back(r);

    const auto merged = merge_dialect_translations(sheet, partial);
    CHECK(merged.pending_ids == std::vector<std::string>{held_back});
    REQUIRE(merged.samples.size() == 5);
    for (const auto& s : merged.samples) {
        CHECK(s.language == Language::dialect);
        CHECK(s.dialect == Dialect::palestine);
        CHECK(s.stage == Stage::dialect_tune);
        CHECK(s.id == s.extra["msa_source_id"].get<std::string>() + "-palestine");
        CHECK(s.turns[0].answer.rfind("PS ", 0) == 0);
        CHECK_NOTHROW(validate(s));
    }
    CHECK(sheet.status.at(held_back) == AssignmentStatus::pending);
    CHECK(sheet.status.at(merged.samples[0].extra["msa_source_id"].get<std::string>()) == AssignmentStatus::translated);
}

TEST_CASE("merge rejects unknown ids and empty translations") {
    const auto corpus = msa_corpus(30);
    std::vector<SubsetSpec> specs{{Dialect::egypt, 3, SubsetSpec::uniform_mix(), 5}};
    auto sheet = sample_subsets(corpus, specs)[0];
    std::vector<ExchangeRow> stranger{{"nobody:0:answer", "x", "y"}};
    CHECK_THROWS_WITH_AS(merge_dialect_translations(sheet, stranger), doctest::Contains("id mismatch"), AssemblyError);
    std::vector<ExchangeRow> bad_turn{{sheet.sample_ids[0] + ":99:answer", "x", "y"}};
    CHECK_THROWS_WITH_AS(merge_dialect_translations(sheet, bad_turn), doctest::Contains("id mismatch"), AssemblyError);
    std::vector<ExchangeRow> empty{{sheet.sample_ids[0] + ":0:answer", "x", ""}};
    CHECK_THROWS_WITH_AS(merge_dialect_translations(sheet, empty), doctest::Contains("empty translated text"),
                         AssemblyError);
}

TEST_CASE("manifest counts match datasets and totals add up") {
    std::vector<StageDataset> datasets{{Stage::pretrain, "captions", stage_samples("p", 40, Stage::pretrain)},
                                       {Stage::instruct, "english", stage_samples("e", 25, Stage::instruct)},
                                       {Stage::instruct, "arabic", stage_samples("a", 17, Stage::instruct)}};
    const auto m = build_stage_manifest(datasets);
    CHECK(m.total == 82);
    CHECK(m.stage_total(Stage::instruct) == 42);
    CHECK(validate_manifest(m).empty());

    auto dup = datasets;
    dup.push_back(datasets[1]);
    CHECK_THROWS_WITH_AS(build_stage_manifest(dup), doctest::Contains("duplicate dataset label"), AssemblyError);

    auto wrong_stage = datasets;
    wrong_stage[1].stage = Stage::dialect_tune;
    CHECK_THROWS_AS(build_stage_manifest(wrong_stage), AssemblyError);
}

TEST_CASE("export writes the stage total, a checksum sidecar and a seed-determined order") {
    qtest::TempDir dir;
    const auto english = stage_samples("e", 25, Stage::instruct);
    const auto arabic = stage_samples("a", 17, Stage::instruct);
    write_file(dir.file("arabic.jsonl"), encode_jsonl(std::span<const Sample>(arabic)));
    std::vector<StageDataset> datasets{{Stage::instruct, "english", english},
                                       {Stage::instruct, "arabic", std::filesystem::path(dir.file("arabic.jsonl"))}};
    const auto m = build_stage_manifest(datasets);
    CHECK(m.entries[1].extra["path"].get<std::string>() == dir.file("arabic.jsonl"));

    const auto r1 = export_training_set(m, datasets, Stage::instruct, 7, dir.file("out1.jsonl"));
    const auto r2 = export_training_set(m, datasets, Stage::instruct, 7, dir.file("out2.jsonl"));
    const auto r3 = export_training_set(m, datasets, Stage::instruct, 8, dir.file("out3.jsonl"));
    CHECK(r1.lines == 42);
    const auto content = read_file(dir.file("out1.jsonl"));
    CHECK(std::count(content.begin(), content.end(), '\n') == 42);
    CHECK(r1.checksum == sha256_hex(content));
    CHECK(read_file(dir.file("out1.jsonl.sha256")) == r1.checksum + "  out1.jsonl\n");
    CHECK(r1.checksum == r2.checksum);
    CHECK(r1.checksum != r3.checksum);

    const auto empty = export_training_set(m, datasets, Stage::pretrain, 7, dir.file("none.jsonl"));
    CHECK(empty.lines == 0);
    CHECK(empty.warnings.size() == 1);
}

TEST_CASE("export refuses datasets that disagree with the manifest") {
    qtest::TempDir dir;
    std::vector<StageDataset> datasets{{Stage::instruct, "english", stage_samples("e", 5, Stage::instruct)}};
    auto m = build_stage_manifest(datasets);
    m.entries[0].count = 6;
    m.total = 6;
    CHECK_THROWS_WITH_AS(export_training_set(m, datasets, Stage::instruct, 1, dir.file("o.jsonl")),
                         doctest::Contains("manifest says 6"), AssemblyError);
    m.total = 5;
    CHECK_THROWS_WITH_AS(export_training_set(m, datasets, Stage::instruct, 1, dir.file("o.jsonl")),
                         doctest::Contains("invalid manifest"), AssemblyError);
}

TEST_CASE("parallel MSA samples in the dialect stage can be separated or excluded") {
    qtest::TempDir dir;
    auto dialect = stage_samples("d", 6, Stage::dialect_tune);
    for (auto& s : dialect) {
        s.language = Language::dialect;
        s.dialect = Dialect::yemen;
    }
    auto msa = stage_samples("m", 4, Stage::dialect_tune);
    for (auto& s : msa) s.language = Language::msa;
    std::vector<StageDataset> datasets{{Stage::dialect_tune, "Yemen", dialect}, {Stage::dialect_tune, "Yemen MSA", msa}};
    const auto m = build_stage_manifest(datasets);
    CHECK(export_training_set(m, datasets, Stage::dialect_tune, 1, dir.file("a.jsonl")).lines == 10);
    const auto sep = export_training_set(m, datasets, Stage::dialect_tune, 1, dir.file("b.jsonl"), ParallelMsa::separate);
    CHECK(sep.lines == 6);
    CHECK(sep.parallel_msa_lines == 4);
    CHECK(std::filesystem::exists(dir.file("b.jsonl.msa_parallel.jsonl")));
    CHECK(export_training_set(m, datasets, Stage::dialect_tune, 1, dir.file("c.jsonl"), ParallelMsa::exclude).lines == 6);
}

TEST_CASE("manifest paths resolve against a base directory") {
    StageManifest m;
    m.entries = {{Stage::instruct, "x", 1, Json{{"path", "x.jsonl"}}}, {Stage::instruct, "y", 1, Json::object()}};
    m.total = 2;
    CHECK_THROWS_WITH_AS(datasets_from_manifest(m, "/data"), doctest::Contains("has no path"), AssemblyError);
    m.entries.pop_back();
    m.total = 1;
    const auto ds = datasets_from_manifest(m, "/data");
    CHECK(std::get<std::filesystem::path>(ds[0].data) == std::filesystem::path("/data/x.jsonl"));
}
