#include <doctest.h>

#include <random>
#include <sstream>

#include "qafila/corpus_model.hpp"
#include "support.hpp"

using namespace qafila;

TEST_CASE("enum names round trip") {
    for (auto d : kAllDialects) CHECK(parse_dialect(to_string(d)) == d);
    for (auto c : kAllContentTypes) CHECK(parse_content_type(to_string(c)) == c);
    for (auto r : {Rubric::msa_relative, Rubric::dialect_da_ca, Rubric::human_overall})
        CHECK(parse_rubric(to_string(r)) == r);
    CHECK_FALSE(parse_dialect("atlantis").has_value());
    CHECK(display_name(Dialect::saudi) == "Saudi");
}

TEST_CASE("sample encodes fields in a fixed order and keeps unknown fields") {
    auto s = qtest::make_sample("a1", ContentType::conversation, {{"Q?", "A."}});
    s.extra["source_url"] = "http://example.org/1";
    const auto line = dump_line(JsonCodec<Sample>::encode(s));
    CHECK(line.find("\"id\"") < line.find("\"turns\""));
    CHECK(line.find("source_url") != std::string::npos);
    Sample back;
    REQUIRE_FALSE(decode_line(line, back).has_value());
    CHECK(back == s);
}

TEST_CASE("sample invariants") {
    auto s = qtest::make_sample("d1", ContentType::conversation, {{"Q?", "A."}}, Language::msa);
    s.dialect = Dialect::egypt;
    CHECK_THROWS_WITH_AS(validate(s), doctest::Contains("dialect without dialect language"), ValidationError);

    auto p = qtest::make_sample("p1", ContentType::detailed_description, {{"", "a"}, {"", "b"}}, Language::english,
                                Stage::pretrain);
    CHECK_THROWS_WITH_AS(validate(p), doctest::Contains("exactly one turn"), ValidationError);

    auto caption = qtest::make_sample("p2", ContentType::detailed_description, {{"", "a caption"}}, Language::english,
                                      Stage::pretrain);
    CHECK_NOTHROW(validate(caption));

    auto empty_answer = qtest::make_sample("e1", ContentType::conversation, {{"Q?", ""}});
    try {
        validate(empty_answer);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(e.record_id() == "e1");
        CHECK(e.field() == "turns[0].answer");
    }
}

TEST_CASE("decode reports missing fields and bad enums") {
    Sample s;
    auto err = decode_line(R"({"id": "x", "image_ref": "i", "turns": [{"question": "q", "answer": "a"}]})", s);
    REQUIRE(err.has_value());
    CHECK(err->find("language") != std::string::npos);

    err = decode_line(
        R"({"id": "x", "image_ref": "i", "turns": [{"question": "q", "answer": "a"}], "language": "klingon", "stage": "instruct", "content_type": "conversation"})",
        s);
    REQUIRE(err.has_value());
    CHECK(err->find("klingon") != std::string::npos);
}

TEST_CASE("lenient decoding collects line errors, strict decoding stops") {
    const auto good = dump_line(JsonCodec<Sample>::encode(qtest::make_sample("g", ContentType::conversation, {{"q", "a"}})));
    const std::string stream = good + "\n{not json}\n\n" + good + "\n";
    auto result = decode_jsonl<Sample>(stream, DecodeMode::lenient);
    CHECK(result.records.size() == 2);
    REQUIRE(result.errors.size() == 1);
    CHECK(result.errors[0].line == 2);
    CHECK_THROWS_AS(decode_jsonl<Sample>(stream, DecodeMode::strict), DecodeError);
}

TEST_CASE("invalid UTF-8 is rejected on encode") {
    auto s = qtest::make_sample("u", ContentType::conversation, {{"q", std::string("bad \xff byte")}});
    CHECK_THROWS_AS(dump_line(JsonCodec<Sample>::encode(s)), ValidationError);
}

TEST_CASE("score record ranges") {
    ScoreRecord r{"i1", "m", "e", Rubric::dialect_da_ca, {{"DA", 7}, {"CA", 11}}, std::nullopt, Json::object(), Json::object()};
    CHECK_THROWS_WITH_AS(validate(r), doctest::Contains("values.CA"), ValidationError);
    r.values["CA"] = 10;
    CHECK_NOTHROW(validate(r));
    r.values.erase("CA");
    CHECK_THROWS_AS(validate(r), ValidationError);

    ScoreRecord rel{"i2", "m", "e", Rubric::msa_relative, {{"relative_percent", 250}}, std::nullopt, Json::object(),
                    Json::object()};
    CHECK_THROWS_AS(validate(rel), ValidationError);
    rel.values["relative_percent"] = 120;
    CHECK_NOTHROW(validate(rel));
}

TEST_CASE("manifest totals must equal the sum of entries") {
    StageManifest m;
    m.entries = {{Stage::pretrain, "a", 1000, Json::object()}, {Stage::instruct, "b", 233, Json::object()}};
    m.total = 1000;
    const auto v = validate_manifest(m);
    REQUIRE(v.size() == 1);
    CHECK(v[0] == "total mismatch: expected 1233 (sum of entries), declared 1000");
    m.total = 1233;
    CHECK(validate_manifest(m).empty());
    CHECK(m.stage_total(Stage::instruct) == 233);
}

TEST_CASE("manifest file round trip") {
    qtest::TempDir dir;
    StageManifest m;
    m.entries = {{Stage::dialect_tune, "Egypt", 738, Json{{"path", "egypt.jsonl"}}}};
    m.total = 738;
    save_manifest(dir.file("m.json"), m);
    CHECK(load_manifest(dir.file("m.json")) == m);
}

TEST_CASE("property: random records survive encode and decode unchanged") {
    std::mt19937_64 rng(7);
    const std::string alphabet[] = {"a", "b", "ع", "ر", "ب", "ي", " ", "\"", "\\", "\n", "é", "😀"};
    auto text = [&](std::size_t max_len) {
        std::string s;
        const auto len = 1 + rng() % max_len;
        for (std::size_t i = 0; i < len; ++i) s += alphabet[rng() % std::size(alphabet)];
        return s;
    };
    for (int trial = 0; trial < 300; ++trial) {
        Sample s;
        s.id = "r" + std::to_string(trial);
        s.image_ref = text(10);
        const auto turns = 1 + rng() % 4;
        for (std::size_t t = 0; t < turns; ++t) s.turns.push_back({text(30), text(60)});
        s.language = static_cast<Language>(rng() % 3);
        if (s.language == Language::dialect) s.dialect = kAllDialects[rng() % 6];
        s.content_type = kAllContentTypes[rng() % 3];
        if (rng() % 2) s.extra["note"] = text(5);
        std::vector<Sample> batch{s};
        const auto decoded = decode_jsonl<Sample>(encode_jsonl(batch), DecodeMode::strict);
        REQUIRE(decoded.records.size() == 1);
        CHECK(decoded.records[0] == s);

        ScoreRecord r{s.id, text(5), text(5), Rubric::dialect_da_ca,
                      {{"DA", 1 + static_cast<double>(rng() % 10)}, {"CA", 1 + (rng() % 900) / 100.0}},
                      text(20), Json{{"k", text(4)}}, Json::object()};
        ScoreRecord back;
        REQUIRE_FALSE(decode_line(dump_line(JsonCodec<ScoreRecord>::encode(r)), back).has_value());
        CHECK(back == r);
    }
}
