#include "qafila/annotation_server.hpp"

#include <httplib.h>

namespace qafila {

namespace {

constexpr const char* kPlaceholderPage = R"(<!doctype html>
<html lang="en">
<head><meta charset="utf-8"><title>qafila annotation</title></head>
<body>
<h1>qafila annotation service</h1>
<p>The annotation UI is not installed. Start the service with <code>--ui-dir</code> pointing at the built UI,
or use the JSON API under <code>/sessions</code>.</p>
</body>
</html>
)";

void send_json(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json; charset=utf-8");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, Json{{"error", message}});
}

Benchmark benchmark_from_json(const Json& j) {
    Json items = j;
    std::string name = "session";
    if (j.is_object()) {
        name = j.value("name", name);
        items = j.at("items");
    }
    if (!items.is_array()) throw BenchmarkError("benchmark items must be an array");
    std::string jsonl;
    for (const auto& item : items) jsonl += item.dump() + "\n";
    return parse_benchmark(jsonl, name);
}

// Runs a handler, mapping library errors onto HTTP statuses.
template <class Fn>
void guarded(httplib::Response& res, Fn&& fn) {
    try {
        fn();
    } catch (const AnnotationError& e) {
        send_error(res, e.kind() == AnnotationError::Kind::not_found ? 404 : 400, e.what());
    } catch (const nlohmann::json::exception& e) {
        send_error(res, 400, std::string("bad request body: ") + e.what());
    } catch (const CoverageError& e) {
        send_error(res, 400, e.what());
    } catch (const BenchmarkError& e) {
        send_error(res, 400, e.what());
    } catch (const ValidationError& e) {
        send_error(res, 400, e.what());
    } catch (const std::exception& e) {
        send_error(res, 500, e.what());
    }
}

}  // namespace

struct AnnotationServer::Impl {
    std::shared_ptr<AnnotationStore> store;
    ServerOptions options;
    httplib::Server server;
};

AnnotationServer::AnnotationServer(std::shared_ptr<AnnotationStore> store, ServerOptions options)
    : impl_(std::make_unique<Impl>()) {
    impl_->store = std::move(store);
    impl_->options = std::move(options);
    auto& srv = impl_->server;
    auto* st = impl_->store.get();

    if (impl_->options.media_dir && !srv.set_mount_point("/media", impl_->options.media_dir->string()))
        throw std::runtime_error("media directory not found: " + impl_->options.media_dir->string());
    if (impl_->options.ui_dir) {
        if (!srv.set_mount_point("/", impl_->options.ui_dir->string()))
            throw std::runtime_error("UI directory not found: " + impl_->options.ui_dir->string());
    } else {
        srv.Get("/", [](const httplib::Request&, httplib::Response& res) {
            res.set_content(kPlaceholderPage, "text/html; charset=utf-8");
        });
    }

    srv.Post("/sessions", [st](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto body = Json::parse(req.body);
            const auto bench = benchmark_from_json(body.at("benchmark"));
            std::vector<ModelResponse> responses;
            for (const auto& r : body.at("responses")) responses.push_back(JsonCodec<ModelResponse>::decode(r));
            std::vector<std::string> models;
            if (body.contains("models")) models = body["models"].get<std::vector<std::string>>();
            const auto seed = body.value("seed", std::uint64_t{0});
            const auto id = st->create_session(bench, responses, models, seed);
            const auto s = st->session(id);
            send_json(res, 201, Json{{"session_id", id}, {"task_count", s.tasks.size()}, {"rubric", to_string(s.rubric)}});
        });
    });

    srv.Get(R"(/sessions/([0-9a-f]+)/next)", [st](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            if (!req.has_param("annotator")) throw AnnotationError(AnnotationError::Kind::invalid, "annotator required");
            send_json(res, 200, st->next_task(req.matches[1], req.get_param_value("annotator")));
        });
    });

    srv.Post(R"(/sessions/([0-9a-f]+)/submissions)", [st](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            Json body;
            try {
                body = Json::parse(req.body);
            } catch (const nlohmann::json::parse_error&) {
                send_json(res, 400, Json{{"status", "rejected"}, {"reason", "body is not JSON"}});
                return;
            }
            const auto outcome = st->submit(req.matches[1], body);
            if (outcome.accepted)
                send_json(res, 200, Json{{"status", "accepted"}, {"duplicate", outcome.duplicate}});
            else
                send_json(res, 422, Json{{"status", "rejected"}, {"reason", outcome.reason}});
        });
    });

    srv.Get(R"(/sessions/([0-9a-f]+)/export)", [st](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto gold = st->export_gold(req.matches[1]);
            Json j;
            j["records"] = Json::array();
            for (const auto& r : gold.records) j["records"].push_back(JsonCodec<ScoreRecord>::encode(r));
            j["pending"] = gold.pending_task_ids;
            send_json(res, 200, j);
        });
    });

    srv.Get(R"(/sessions/([0-9a-f]+)/progress)", [st](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            std::optional<std::string> annotator;
            if (req.has_param("annotator")) annotator = req.get_param_value("annotator");
            send_json(res, 200, st->progress(req.matches[1], annotator));
        });
    });
}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::bind() {
    auto& o = impl_->options;
    const int port = o.port == 0 ? impl_->server.bind_to_any_port(o.host) : (impl_->server.bind_to_port(o.host, o.port) ? o.port : -1);
    if (port < 0) throw std::runtime_error("cannot bind " + o.host + ":" + std::to_string(o.port));
    o.port = port;
    return port;
}

void AnnotationServer::run() { impl_->server.listen_after_bind(); }

void AnnotationServer::stop() {
    if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

bool AnnotationServer::running() const { return impl_->server.is_running(); }

}  // namespace qafila
