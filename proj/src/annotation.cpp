#include "qafila/annotation.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <mutex>
#include <set>

#include <openssl/rand.h>

#include "qafila/random.hpp"
#include "qafila/text.hpp"

namespace qafila {

namespace {

std::string random_id() {
    unsigned char bytes[16];
    if (RAND_bytes(bytes, sizeof bytes) != 1) throw std::runtime_error("RAND_bytes failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned char b : bytes) {
        out += hex[b >> 4];
        out += hex[b & 15];
    }
    return out;
}

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[40];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[48];
    std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
    return out;
}

std::string blind_label(std::size_t i) {
    if (i < 26) return std::string("Model ") + static_cast<char>('A' + i);
    return "Model " + std::to_string(i + 1);
}

Json task_to_json(const AnnotationTask& t) {
    Json j;
    j["task_id"] = t.task_id;
    j["item_id"] = t.item_id;
    j["model_id"] = t.model_id;
    j["blind_label"] = t.blind_label;
    j["image_ref"] = t.image_ref;
    j["question"] = t.question;
    j["response"] = t.response;
    j["rubric"] = to_string(t.rubric);
    j["category"] = to_string(t.category);
    if (t.dialect) j["dialect"] = to_string(*t.dialect);
    return j;
}

AnnotationTask task_from_json(const Json& j) {
    AnnotationTask t;
    t.task_id = j.at("task_id").get<std::string>();
    t.item_id = j.at("item_id").get<std::string>();
    t.model_id = j.at("model_id").get<std::string>();
    t.blind_label = j.at("blind_label").get<std::string>();
    t.image_ref = j.at("image_ref").get<std::string>();
    t.question = j.at("question").get<std::string>();
    t.response = j.at("response").get<std::string>();
    t.rubric = parse_rubric(j.at("rubric").get<std::string>()).value();
    t.category = parse_category(j.at("category").get<std::string>()).value();
    if (j.contains("dialect")) t.dialect = parse_dialect(j["dialect"].get<std::string>()).value();
    return t;
}

Json submission_to_json(const Submission& s) {
    Json j;
    j["task_id"] = s.task_id;
    j["annotator_id"] = s.annotator_id;
    j["values"] = Json::object();
    for (const auto& [k, v] : s.values) j["values"][k] = v;
    if (s.comment) j["comment"] = *s.comment;
    if (!s.criteria.empty()) j["criteria"] = s.criteria;
    j["timestamp"] = s.timestamp;
    return j;
}

Submission submission_from_json(const Json& j) {
    Submission s;
    s.task_id = j.at("task_id").get<std::string>();
    s.annotator_id = j.at("annotator_id").get<std::string>();
    for (auto it = j.at("values").begin(); it != j.at("values").end(); ++it) s.values[it.key()] = it.value().get<int>();
    if (j.contains("comment")) s.comment = j["comment"].get<std::string>();
    if (j.contains("criteria")) s.criteria = j["criteria"];
    s.timestamp = j.value("timestamp", "");
    return s;
}

// Integer in [1, 10] or a rejection reason.
std::optional<std::string> check_score(const std::string& name, const Json& v, int& out) {
    if (!v.is_number()) return name + " must be a number";
    if (!v.is_number_integer() && !v.is_number_unsigned()) {
        const double d = v.get<double>();
        if (d != static_cast<double>(static_cast<long long>(d))) return name + " must be an integer";
    }
    const double d = v.get<double>();
    if (d < 1) return name + " below minimum 1";
    if (d > 10) return name + " above maximum 10";
    out = static_cast<int>(d);
    return std::nullopt;
}

const std::set<std::string>& msa_criteria() {
    static const std::set<std::string> names{"correctness", "helpfulness", "consistency"};
    return names;
}

}  // namespace

std::map<std::string, std::string> make_blinding(std::vector<std::string> models, std::uint64_t seed) {
    std::sort(models.begin(), models.end());
    std::mt19937_64 rng(seed);
    seeded_shuffle(models, rng);
    std::map<std::string, std::string> out;
    for (std::size_t i = 0; i < models.size(); ++i) out[models[i]] = blind_label(i);
    return out;
}

std::vector<std::size_t> annotator_order(std::size_t task_count, std::uint64_t seed, const std::string& annotator) {
    std::vector<std::size_t> order(task_count);
    for (std::size_t i = 0; i < task_count; ++i) order[i] = i;
    std::mt19937_64 rng(mix64(seed ^ fnv1a64(annotator)));
    seeded_shuffle(order, rng);
    return order;
}

Json session_to_json(const AnnotationSession& s) {
    Json j;
    j["session_id"] = s.session_id;
    j["seed"] = s.seed;
    j["rubric"] = to_string(s.rubric);
    j["blinding"] = Json::object();
    for (const auto& [m, l] : s.blinding) j["blinding"][m] = l;
    j["tasks"] = Json::array();
    for (const auto& t : s.tasks) j["tasks"].push_back(task_to_json(t));
    j["history"] = Json::array();
    for (const auto& [key, subs] : s.history)
        for (const auto& sub : subs) j["history"].push_back(submission_to_json(sub));
    return j;
}

AnnotationStore::AnnotationStore(std::optional<std::filesystem::path> data_dir) : data_dir_(std::move(data_dir)) {
    if (!data_dir_) return;
    std::filesystem::create_directories(*data_dir_);
    const auto log_path = *data_dir_ / "events.jsonl";
    if (std::filesystem::exists(log_path)) {
        const auto text = read_file(log_path.string());
        const auto lines = split(text, '\n');
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (lines[i].empty()) continue;
            Json event;
            try {
                event = Json::parse(lines[i]);
            } catch (const nlohmann::json::parse_error&) {
                // A torn final write (no trailing newline) is dropped; anything else is corruption.
                if (i + 1 == lines.size()) break;
                throw std::runtime_error(log_path.string() + ":" + std::to_string(i + 1) + ": corrupt event");
            }
            apply(event);
        }
    }
    log_.open(log_path, std::ios::app | std::ios::binary);
    if (!log_) throw std::runtime_error("cannot open " + log_path.string());
}

void AnnotationStore::append_and_apply(const Json& event) {
    if (log_.is_open()) {
        log_ << event.dump() << '\n';
        log_.flush();
        if (!log_) throw std::runtime_error("event log write failed");
    }
    apply(event);
}

void AnnotationStore::apply(const Json& event) {
    const auto type = event.at("event").get<std::string>();
    const auto sid = event.at("session_id").get<std::string>();
    if (type == "session_created") {
        AnnotationSession s;
        s.session_id = sid;
        s.seed = event.at("seed").get<std::uint64_t>();
        s.rubric = parse_rubric(event.at("rubric").get<std::string>()).value();
        for (auto it = event.at("blinding").begin(); it != event.at("blinding").end(); ++it)
            s.blinding[it.key()] = it.value().get<std::string>();
        auto& index = task_index_[sid];
        for (const auto& tj : event.at("tasks")) {
            index[tj.at("task_id").get<std::string>()] = s.tasks.size();
            s.tasks.push_back(task_from_json(tj));
        }
        sessions_[sid] = std::move(s);
    } else if (type == "submission") {
        auto sub = submission_from_json(event.at("submission"));
        sessions_.at(sid).history[{sub.task_id, sub.annotator_id}].push_back(std::move(sub));
    } else {
        throw std::runtime_error("unknown event type " + type);
    }
    ++events_;
}

const AnnotationSession& AnnotationStore::get(const std::string& session_id) const {
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) throw AnnotationError(AnnotationError::Kind::not_found, "unknown session " + session_id);
    return it->second;
}

std::string AnnotationStore::create_session(const Benchmark& bench, std::span<const ModelResponse> responses,
                                            std::vector<std::string> models, std::uint64_t seed) {
    if (models.empty()) {
        std::set<std::string> seen;
        for (const auto& r : responses) seen.insert(r.model_id);
        models.assign(seen.begin(), seen.end());
    }
    if (models.empty()) throw AnnotationError(AnnotationError::Kind::invalid, "no models to annotate");
    if (std::set<std::string>(models.begin(), models.end()).size() != models.size())
        throw AnnotationError(AnnotationError::Kind::invalid, "duplicate model ids");

    std::map<std::pair<std::string, std::string>, const ModelResponse*> by_pair;
    for (const auto& r : responses) by_pair[{r.item_id, r.model_id}] = &r;

    const auto rubric = bench.rubric == Rubric::dialect_da_ca ? Rubric::dialect_da_ca : Rubric::human_overall;
    const auto blinding = make_blinding(models, seed);
    const auto session_id = random_id();

    Json tasks = Json::array();
    std::vector<std::pair<std::string, std::string>> missing;
    for (const auto& item : bench.items) {
        for (const auto& model : models) {
            auto it = by_pair.find({item.id, model});
            if (it == by_pair.end()) {
                missing.emplace_back(item.id, model);
                continue;
            }
            AnnotationTask t{random_id(), item.id,       model,   blinding.at(model), item.image_ref, item.question,
                             it->second->response, rubric, item.category, item.dialect};
            tasks.push_back(task_to_json(t));
        }
    }
    if (!missing.empty()) throw CoverageError(std::move(missing));

    Json event;
    event["event"] = "session_created";
    event["session_id"] = session_id;
    event["seed"] = seed;
    event["rubric"] = to_string(rubric);
    event["blinding"] = Json::object();
    for (const auto& [m, l] : blinding) event["blinding"][m] = l;
    event["tasks"] = std::move(tasks);
    event["created_at"] = utc_now();

    std::unique_lock lock(mutex_);
    append_and_apply(event);
    return session_id;
}

Json AnnotationStore::next_task(const std::string& session_id, const std::string& annotator_id) {
    if (annotator_id.empty()) throw AnnotationError(AnnotationError::Kind::invalid, "annotator id required");
    std::shared_lock lock(mutex_);
    const auto& s = get(session_id);
    std::size_t done = 0;
    const AnnotationTask* next = nullptr;
    for (auto i : annotator_order(s.tasks.size(), s.seed, annotator_id)) {
        if (s.history.count({s.tasks[i].task_id, annotator_id}))
            ++done;
        else if (!next)
            next = &s.tasks[i];
    }
    Json progress{{"completed", done}, {"total", s.tasks.size()}};
    if (!next) return Json{{"done", true}, {"progress", progress}};

    const auto& t = *next;
    Json j;
    j["session_id"] = session_id;
    j["task_id"] = t.task_id;
    j["blind_label"] = t.blind_label;
    j["item_id"] = t.item_id;
    j["image_ref"] = t.image_ref;
    j["image_url"] = "/media/" + t.image_ref;
    j["question"] = t.question;
    j["response"] = t.response;
    j["rubric"] = to_string(t.rubric);
    j["category"] = to_string(t.category);
    if (t.dialect) {
        j["dialect"] = to_string(*t.dialect);
        j["dialect_name"] = display_name(*t.dialect);
    }
    j["dimensions"] = Json::array();
    for (auto d : rubric_dimensions(t.rubric)) j["dimensions"].push_back(d);
    if (t.rubric == Rubric::human_overall) j["guidance"] = {"correctness", "helpfulness", "consistency"};
    j["scale"] = {{"min", 1}, {"max", 10}};
    j["progress"] = progress;
    return j;
}

SubmitOutcome AnnotationStore::submit(const std::string& session_id, const Json& body) {
    auto reject = [](std::string reason) { return SubmitOutcome{false, false, std::move(reason)}; };
    if (!body.is_object()) return reject("submission must be a JSON object");
    for (const char* key : {"task_id", "annotator_id"})
        if (!body.contains(key) || !body[key].is_string() || body[key].get<std::string>().empty())
            return reject(std::string("missing ") + key);
    if (!body.contains("values") || !body["values"].is_object()) return reject("missing values");
    if (body.contains("comment") && !body["comment"].is_string()) return reject("comment must be a string");

    Submission sub;
    sub.task_id = body["task_id"].get<std::string>();
    sub.annotator_id = body["annotator_id"].get<std::string>();
    if (body.contains("comment")) sub.comment = body["comment"].get<std::string>();

    std::unique_lock lock(mutex_);
    const auto& s = get(session_id);
    const auto& index = task_index_.at(session_id);
    auto ti = index.find(sub.task_id);
    if (ti == index.end()) return reject("unknown task " + sub.task_id);
    const auto& task = s.tasks[ti->second];

    const auto dims = rubric_dimensions(task.rubric);
    for (auto it = body["values"].begin(); it != body["values"].end(); ++it)
        if (std::find(dims.begin(), dims.end(), it.key()) == dims.end())
            return reject("dimension " + it.key() + " does not belong to rubric " + std::string(to_string(task.rubric)));
    for (auto d : dims) {
        const std::string name(d);
        if (!body["values"].contains(name)) return reject("missing dimension " + name);
        int v = 0;
        if (auto err = check_score(name, body["values"][name], v)) return reject(*err);
        sub.values[name] = v;
    }
    if (body.contains("criteria")) {
        if (task.rubric != Rubric::human_overall) return reject("criteria apply only to MSA tasks");
        if (!body["criteria"].is_object()) return reject("criteria must be an object");
        for (auto it = body["criteria"].begin(); it != body["criteria"].end(); ++it) {
            if (!msa_criteria().count(it.key())) return reject("unknown criterion " + it.key());
            int v = 0;
            if (auto err = check_score(it.key(), it.value(), v)) return reject(*err);
            sub.criteria[it.key()] = v;
        }
    }

    if (auto h = s.history.find({sub.task_id, sub.annotator_id}); h != s.history.end()) {
        const auto& current = h->second.back();
        if (current.values == sub.values && current.comment == sub.comment && current.criteria == sub.criteria)
            return {true, true, ""};
    }
    sub.timestamp = utc_now();
    Json event;
    event["event"] = "submission";
    event["session_id"] = session_id;
    event["submission"] = submission_to_json(sub);
    append_and_apply(event);
    return {true, false, ""};
}

GoldExport AnnotationStore::export_gold(const std::string& session_id) const {
    std::shared_lock lock(mutex_);
    const auto& s = get(session_id);
    std::map<std::string, std::vector<const Submission*>> current;
    for (const auto& [key, subs] : s.history) current[key.first].push_back(&subs.back());

    GoldExport out;
    for (const auto& t : s.tasks) {
        auto it = current.find(t.task_id);
        if (it == current.end()) {
            out.pending_task_ids.push_back(t.task_id);
            continue;
        }
        ScoreRecord rec;
        rec.item_id = t.item_id;
        rec.model_id = t.model_id;
        rec.evaluator_id = "human";
        rec.rubric = t.rubric;
        for (auto d : rubric_dimensions(t.rubric)) {
            double sum = 0.0;
            for (const auto* sub : it->second) sum += sub->values.at(std::string(d));
            rec.values[std::string(d)] = sum / static_cast<double>(it->second.size());
        }
        rec.metadata["category"] = to_string(t.category);
        if (t.dialect) rec.metadata["dialect"] = to_string(*t.dialect);
        rec.metadata["annotators"] = it->second.size();
        rec.metadata["session_id"] = session_id;
        validate(rec);
        out.records.push_back(std::move(rec));
    }
    return out;
}

Json AnnotationStore::progress(const std::string& session_id, const std::optional<std::string>& annotator) const {
    std::shared_lock lock(mutex_);
    const auto& s = get(session_id);
    std::set<std::string> completed;
    std::map<std::string, std::size_t> per_annotator;
    for (const auto& [key, subs] : s.history) {
        completed.insert(key.first);
        ++per_annotator[key.second];
    }
    Json j;
    j["session_id"] = session_id;
    j["rubric"] = to_string(s.rubric);
    j["total"] = s.tasks.size();
    j["completed"] = completed.size();
    j["pending"] = s.tasks.size() - completed.size();
    j["annotators"] = Json::object();
    for (const auto& [a, n] : per_annotator) j["annotators"][a] = n;
    if (annotator) {
        const auto n = per_annotator.count(*annotator) ? per_annotator[*annotator] : 0;
        j["annotator"] = {{"id", *annotator}, {"completed", n}, {"remaining", s.tasks.size() - n}};
    }
    return j;
}

std::vector<std::string> AnnotationStore::session_ids() const {
    std::shared_lock lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [id, s] : sessions_) out.push_back(id);
    return out;
}

AnnotationSession AnnotationStore::session(const std::string& session_id) const {
    std::shared_lock lock(mutex_);
    return get(session_id);
}

std::size_t AnnotationStore::event_count() const {
    std::shared_lock lock(mutex_);
    return events_;
}

Json AnnotationStore::state_json() const {
    std::shared_lock lock(mutex_);
    Json j;
    j["events"] = events_;
    j["sessions"] = Json::array();
    for (const auto& [id, s] : sessions_) j["sessions"].push_back(session_to_json(s));
    return j;
}

void AnnotationStore::snapshot() const {
    if (!data_dir_) return;
    const auto state = state_json();
    const auto path = *data_dir_ / "snapshot.json";
    const auto tmp = *data_dir_ / "snapshot.json.tmp";
    write_file(tmp.string(), state.dump(2) + "\n");
    std::filesystem::rename(tmp, path);
}

}  // namespace qafila
