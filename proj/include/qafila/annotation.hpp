#ifndef QAFILA_ANNOTATION_HPP
#define QAFILA_ANNOTATION_HPP

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <shared_mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qafila/corpus_model.hpp"
#include "qafila/eval_harness.hpp"

namespace qafila {

class AnnotationError : public std::runtime_error {
public:
    enum class Kind { not_found, invalid };
    AnnotationError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

struct AnnotationTask {
    std::string task_id;
    std::string item_id;
    std::string model_id;  // server side only
    std::string blind_label;
    std::string image_ref;
    std::string question;
    std::string response;
    Rubric rubric = Rubric::dialect_da_ca;
    Category category = Category::dialect;
    std::optional<Dialect> dialect;

    bool operator==(const AnnotationTask&) const = default;
};

struct Submission {
    std::string task_id;
    std::string annotator_id;
    std::map<std::string, int> values;
    std::optional<std::string> comment;
    /// Optional per-criterion guidance scores on MSA tasks; stored, not aggregated.
    Json criteria = Json::object();
    std::string timestamp;

    bool operator==(const Submission&) const = default;
};

struct AnnotationSession {
    std::string session_id;
    std::uint64_t seed = 0;
    Rubric rubric = Rubric::dialect_da_ca;
    std::map<std::string, std::string> blinding;  // model_id -> blind label
    std::vector<AnnotationTask> tasks;
    /// Every accepted submission per (task, annotator), oldest first. The last one is current.
    std::map<std::pair<std::string, std::string>, std::vector<Submission>> history;

    bool operator==(const AnnotationSession&) const = default;
};

struct SubmitOutcome {
    bool accepted = false;
    bool duplicate = false;
    std::string reason;
};

struct GoldExport {
    std::vector<ScoreRecord> records;
    std::vector<std::string> pending_task_ids;
};

/// Blind labels "Model A", "Model B", ... assigned to models by a seeded shuffle.
std::map<std::string, std::string> make_blinding(std::vector<std::string> models, std::uint64_t seed);

/// Presentation order of task indices for one annotator; a permutation that
/// depends only on (seed, annotator).
std::vector<std::size_t> annotator_order(std::size_t task_count, std::uint64_t seed, const std::string& annotator);

/// Human evaluation state. Every change is an event appended to
/// <data_dir>/events.jsonl; state is the fold of that log, so reopening a
/// directory reproduces it exactly.
class AnnotationStore {
public:
    /// With no data_dir the store is memory only.
    explicit AnnotationStore(std::optional<std::filesystem::path> data_dir = std::nullopt);

    std::string create_session(const Benchmark& bench, std::span<const ModelResponse> responses,
                               std::vector<std::string> models, std::uint64_t seed);

    /// Task payload for the annotator (never includes the model id), or {"done": true}.
    Json next_task(const std::string& session_id, const std::string& annotator_id);

    /// Body fields: task_id, annotator_id, values {dim: int}, optional comment, criteria.
    SubmitOutcome submit(const std::string& session_id, const Json& body);

    GoldExport export_gold(const std::string& session_id) const;
    Json progress(const std::string& session_id, const std::optional<std::string>& annotator = std::nullopt) const;

    std::vector<std::string> session_ids() const;
    AnnotationSession session(const std::string& session_id) const;
    std::size_t event_count() const;

    /// Writes <data_dir>/snapshot.json with the folded state.
    void snapshot() const;
    Json state_json() const;

private:
    void append_and_apply(const Json& event);
    void apply(const Json& event);
    const AnnotationSession& get(const std::string& session_id) const;

    std::optional<std::filesystem::path> data_dir_;
    std::ofstream log_;
    mutable std::shared_mutex mutex_;
    std::map<std::string, AnnotationSession> sessions_;
    std::map<std::string, std::map<std::string, std::size_t>> task_index_;  // session -> task -> index
    std::size_t events_ = 0;
};

Json session_to_json(const AnnotationSession& s);

}  // namespace qafila

#endif  // QAFILA_ANNOTATION_HPP
