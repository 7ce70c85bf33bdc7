#ifndef QAFILA_ANNOTATION_SERVER_HPP
#define QAFILA_ANNOTATION_SERVER_HPP

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "qafila/annotation.hpp"

namespace qafila {

struct ServerOptions {
    std::string host = "127.0.0.1";
    int port = 8080;  // 0 picks a free port
    /// Images served under /media/.
    std::optional<std::filesystem::path> media_dir;
    /// Built annotation UI served at /. Without it / returns a placeholder page.
    std::optional<std::filesystem::path> ui_dir;
};

/// HTTP/JSON front end of an AnnotationStore.
///
///   POST /sessions                      create a session
///   GET  /sessions/{id}/next?annotator= next blinded task or {"done": true}
///   POST /sessions/{id}/submissions     submit scores
///   GET  /sessions/{id}/export          human gold records and pending tasks
///   GET  /sessions/{id}/progress        completion counts
class AnnotationServer {
public:
    AnnotationServer(std::shared_ptr<AnnotationStore> store, ServerOptions options);
    ~AnnotationServer();
    AnnotationServer(const AnnotationServer&) = delete;
    AnnotationServer& operator=(const AnnotationServer&) = delete;

    /// Binds the socket and returns the bound port.
    int bind();
    /// Serves until stop(). Call bind() first.
    void run();
    void stop();
    bool running() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace qafila

#endif  // QAFILA_ANNOTATION_SERVER_HPP
