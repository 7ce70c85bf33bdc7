#include <doctest.h>

#include <thread>

#include "qafila/annotation_server.hpp"
#include "support.hpp"

// After Eigen: resolv.h, pulled in by httplib, defines a `_res` macro.
#include <httplib.h>

using namespace qafila;

namespace {

const std::vector<std::string> kModels{"Dallah", "PALO"};

struct Running {
    std::shared_ptr<AnnotationStore> store = std::make_shared<AnnotationStore>();
    std::unique_ptr<AnnotationServer> server;
    std::thread thread;
    int port = 0;

    explicit Running(ServerOptions options = {}) {
        options.port = 0;
        server = std::make_unique<AnnotationServer>(store, options);
        port = server->bind();
        thread = std::thread([this] { server->run(); });
        for (int i = 0; i < 200 && !server->running(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    ~Running() {
        server->stop();
        thread.join();
    }
    httplib::Client client() const { return httplib::Client("127.0.0.1", port); }
};

Json session_body(const Benchmark& bench) {
    Json items = Json::array();
    for (const auto& item : bench.items) items.push_back(JsonCodec<BenchmarkItem>::encode(item));
    Json responses = Json::array();
    for (const auto& item : bench.items)
        for (std::size_t m = 0; m < kModels.size(); ++m)
            responses.push_back(JsonCodec<ModelResponse>::encode(
                {item.id, kModels[m], "reply " + std::to_string(m) + " to " + item.id, Json::object(), Json::object()}));
    return Json{{"benchmark", {{"name", bench.name}, {"items", items}}}, {"responses", responses}, {"seed", 9}};
}

void check_no_model_names(const httplib::Result& res) {
    REQUIRE(res);
    for (const auto& m : kModels) {
        CHECK(res->body.find(m) == std::string::npos);
        for (const auto& [k, v] : res->headers) CHECK(v.find(m) == std::string::npos);
    }
}

}  // namespace

TEST_CASE("root serves a page when no UI is installed") {
    Running srv;
    auto cli = srv.client();
    auto res = cli.Get("/");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(res->get_header_value("Content-Type").find("text/html") == 0);
    CHECK(res->body.find("<html") != std::string::npos);
}

TEST_CASE("UI and media directories are served as static files") {
    qtest::TempDir ui, media;
    write_file(ui.file("index.html"), "<!doctype html><title>ui</title>");
    std::filesystem::create_directories(media.path() / "images");
    write_file((media.path() / "images" / "a.jpg").string(), std::string("\xFF\xD8\xFF\xE0", 4));
    ServerOptions o;
    o.ui_dir = ui.path();
    o.media_dir = media.path();
    Running srv(o);
    auto cli = srv.client();
    auto root = cli.Get("/");
    REQUIRE(root);
    CHECK(root->status == 200);
    CHECK(root->body.find("<title>ui</title>") != std::string::npos);
    auto img = cli.Get("/media/images/a.jpg");
    REQUIRE(img);
    CHECK(img->status == 200);
    CHECK(img->get_header_value("Content-Type") == "image/jpeg");
    CHECK(img->body.size() == 4);
    auto missing = cli.Get("/media/images/none.jpg");
    REQUIRE(missing);
    CHECK(missing->status == 404);

    ServerOptions bad;
    bad.media_dir = media.path() / "absent";
    CHECK_THROWS(AnnotationServer(std::make_shared<AnnotationStore>(), bad));
}

TEST_CASE("full annotation round over HTTP without leaking model identity") {
    const auto bench = load_benchmark(qtest::fixture("dialect_bench.jsonl"));
    Running srv;
    auto cli = srv.client();
    auto created = cli.Post("/sessions", session_body(bench).dump(), "application/json");
    REQUIRE(created);
    REQUIRE(created->status == 201);
    const auto info = Json::parse(created->body);
    CHECK(info["task_count"] == 240);
    CHECK(info["rubric"] == "dialect_da_ca");
    const auto sid = info["session_id"].get<std::string>();

    std::size_t submitted = 0;
    for (;;) {
        auto next = cli.Get("/sessions/" + sid + "/next?annotator=ann");
        check_no_model_names(next);
        REQUIRE(next->status == 200);
        const auto task = Json::parse(next->body);
        if (task.value("done", false)) break;
        CHECK_FALSE(task.contains("model_id"));
        const Json body{{"task_id", task["task_id"]}, {"annotator_id", "ann"}, {"values", {{"DA", 6}, {"CA", 7}}}};
        auto sub = cli.Post("/sessions/" + sid + "/submissions", body.dump(), "application/json");
        check_no_model_names(sub);
        REQUIRE(sub->status == 200);
        CHECK(Json::parse(sub->body)["status"] == "accepted");
        ++submitted;
    }
    CHECK(submitted == 240);

    auto progress = cli.Get("/sessions/" + sid + "/progress?annotator=ann");
    check_no_model_names(progress);
    CHECK(Json::parse(progress->body)["completed"] == 240);

    auto exported = cli.Get("/sessions/" + sid + "/export");
    REQUIRE(exported);
    const auto gold = Json::parse(exported->body);
    CHECK(gold["records"].size() == 240);
    CHECK(gold["pending"].empty());
    CHECK(gold["records"][0]["evaluator_id"] == "human");
}

TEST_CASE("HTTP error mapping") {
    const auto bench = load_benchmark(qtest::fixture("dialect_bench.jsonl"));
    Running srv;
    auto cli = srv.client();
    const auto sid = Json::parse(cli.Post("/sessions", session_body(bench).dump(), "application/json")->body)["session_id"]
                         .get<std::string>();

    auto unknown = cli.Get("/sessions/abcdef/next?annotator=a");
    REQUIRE(unknown);
    CHECK(unknown->status == 404);
    auto no_annotator = cli.Get("/sessions/" + sid + "/next");
    REQUIRE(no_annotator);
    CHECK(no_annotator->status == 400);

    auto not_json = cli.Post("/sessions/" + sid + "/submissions", "{oops", "application/json");
    REQUIRE(not_json);
    CHECK(not_json->status == 400);

    const auto task = Json::parse(cli.Get("/sessions/" + sid + "/next?annotator=a")->body);
    const Json bad{{"task_id", task["task_id"]}, {"annotator_id", "a"}, {"values", {{"DA", 11}, {"CA", 7}}}};
    auto rejected = cli.Post("/sessions/" + sid + "/submissions", bad.dump(), "application/json");
    REQUIRE(rejected);
    CHECK(rejected->status == 422);
    CHECK(Json::parse(rejected->body)["reason"] == "DA above maximum 10");

    const Json good{{"task_id", task["task_id"]}, {"annotator_id", "a"}, {"values", {{"DA", 3}, {"CA", 7}}}};
    cli.Post("/sessions/" + sid + "/submissions", good.dump(), "application/json");
    auto dup = cli.Post("/sessions/" + sid + "/submissions", good.dump(), "application/json");
    CHECK(Json::parse(dup->body)["duplicate"] == true);

    auto body = session_body(bench);
    body["responses"].erase(body["responses"].size() - 1);
    auto gap = cli.Post("/sessions", body.dump(), "application/json");
    REQUIRE(gap);
    CHECK(gap->status == 400);
    CHECK(Json::parse(gap->body)["error"].get<std::string>().find("responses missing") != std::string::npos);

    auto garbage = cli.Post("/sessions", "[]", "application/json");
    REQUIRE(garbage);
    CHECK(garbage->status == 400);
}
