#include "qafila/score_analytics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <tuple>

#include <Eigen/Dense>

namespace qafila {

namespace {

constexpr Category kMsaCategories[] = {Category::conversation, Category::details, Category::complex_reasoning};

// Sorted before summing so the result does not depend on record order.
double stable_mean(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

void require_single_source(std::span<const ScoreRecord> records, const char* what) {
    if (records.empty()) throw AnalyticsError(std::string(what) + ": no records");
    for (const auto& r : records)
        if (r.evaluator_id != records.front().evaluator_id || r.model_id != records.front().model_id)
            throw AnalyticsError(std::string(what) + ": records mix evaluators or models (" +
                                 records.front().evaluator_id + "/" + records.front().model_id + " vs " +
                                 r.evaluator_id + "/" + r.model_id + ")");
}

double value_of(const ScoreRecord& r, std::string_view dimension) {
    auto it = r.values.find(std::string(dimension));
    if (it == r.values.end())
        throw AnalyticsError(r.item_id + ": record lacks dimension " + std::string(dimension));
    return it->second;
}

template <class Report, class Fn>
std::vector<Report> grouped(std::span<const ScoreRecord> records, Fn&& make) {
    std::map<std::pair<std::string, std::string>, std::vector<ScoreRecord>> groups;
    for (const auto& r : records) groups[{r.evaluator_id, r.model_id}].push_back(r);
    std::vector<Report> out;
    for (const auto& [key, group] : groups) out.push_back(make(std::span<const ScoreRecord>(group)));
    return out;
}

}  // namespace

ItemIndex::ItemIndex(const Benchmark& bench) {
    for (const auto& it : bench.items) items_[it.id] = {it.category, it.dialect};
}

Category ItemIndex::category_of(const ScoreRecord& rec) const {
    if (rec.metadata.contains("category") && rec.metadata["category"].is_string())
        if (auto c = parse_category(rec.metadata["category"].get<std::string>())) return *c;
    if (auto it = items_.find(rec.item_id); it != items_.end()) return it->second.category;
    throw AnalyticsError(rec.item_id + ": category unknown (no metadata and not in benchmark)");
}

Dialect ItemIndex::dialect_of(const ScoreRecord& rec) const {
    if (rec.metadata.contains("dialect") && rec.metadata["dialect"].is_string())
        if (auto d = parse_dialect(rec.metadata["dialect"].get<std::string>())) return *d;
    if (auto it = items_.find(rec.item_id); it != items_.end() && it->second.dialect) return *it->second.dialect;
    throw AnalyticsError(rec.item_id + ": dialect unknown (no metadata and not in benchmark)");
}

std::string_view category_label(Category c) {
    switch (c) {
        case Category::conversation: return "CC";
        case Category::details: return "DD";
        case Category::complex_reasoning: return "CR";
        case Category::dialect: return "dialect";
    }
    return "?";
}

CategoryReport category_report(std::span<const ScoreRecord> records, const ItemIndex& index) {
    require_single_source(records, "category_report");
    std::map<Category, std::vector<double>> buckets;
    for (const auto& r : records) {
        double percent;
        if (r.rubric == Rubric::msa_relative)
            percent = value_of(r, dim::relative_percent);
        else if (r.rubric == Rubric::human_overall)
            percent = 10.0 * value_of(r, dim::score);
        else
            throw AnalyticsError(r.item_id + ": category_report needs msa_relative or human_overall records");
        const auto cat = index.category_of(r);
        if (cat == Category::dialect) throw AnalyticsError(r.item_id + ": dialect item in an MSA report");
        buckets[cat].push_back(percent);
    }
    CategoryReport report{records.front().evaluator_id, records.front().model_id, {}, 0.0, records.size()};
    double sum = 0.0;
    for (auto c : kMsaCategories) {
        auto it = buckets.find(c);
        if (it == buckets.end())
            throw AnalyticsError("missing category " + std::string(category_label(c)) + " for " +
                                 report.evaluator_id + "/" + report.model_id);
        report.means[c] = stable_mean(it->second);
        sum += report.means[c];
    }
    report.overall = sum / 3.0;
    return report;
}

std::vector<CategoryReport> category_reports(std::span<const ScoreRecord> records, const ItemIndex& index) {
    return grouped<CategoryReport>(records, [&](auto g) { return category_report(g, index); });
}

DialectReport dialect_report(std::span<const ScoreRecord> records, const ItemIndex& index,
                             std::span<const Dialect> expected) {
    require_single_source(records, "dialect_report");
    std::map<Dialect, std::pair<std::vector<double>, std::vector<double>>> buckets;
    for (auto d : expected) buckets[d];
    for (const auto& r : records) {
        if (r.rubric != Rubric::dialect_da_ca)
            throw AnalyticsError(r.item_id + ": dialect_report needs dialect_da_ca records");
        auto& [da, ca] = buckets[index.dialect_of(r)];
        da.push_back(value_of(r, dim::DA));
        ca.push_back(value_of(r, dim::CA));
    }
    DialectReport report{records.front().evaluator_id, records.front().model_id, {}, 0.0, 0.0};
    std::vector<double> das, cas;
    for (const auto& [d, bucket] : buckets) {
        if (bucket.first.empty())
            throw AnalyticsError("empty dialect bucket " + std::string(to_string(d)) + " for " + report.evaluator_id);
        DialectMeans m{stable_mean(bucket.first), stable_mean(bucket.second), bucket.first.size()};
        report.rows[d] = m;
        das.push_back(m.da);
        cas.push_back(m.ca);
    }
    report.average_da = stable_mean(das);
    report.average_ca = stable_mean(cas);
    return report;
}

std::vector<DialectReport> dialect_reports(std::span<const ScoreRecord> records, const ItemIndex& index) {
    return grouped<DialectReport>(records, [&](auto g) { return dialect_report(g, index); });
}

AlignmentReport alignment_mad(const DialectReport& evaluator, const DialectReport& reference) {
    std::vector<Dialect> dialects;
    for (const auto& [d, m] : evaluator.rows) dialects.push_back(d);
    std::vector<Dialect> ref_dialects;
    for (const auto& [d, m] : reference.rows) ref_dialects.push_back(d);
    if (dialects != ref_dialects) throw AnalyticsError("dialect set mismatch between " + evaluator.evaluator_id +
                                                       " and " + reference.evaluator_id);
    if (dialects.empty()) throw AnalyticsError("alignment_mad: no dialects");

    const auto n = static_cast<Eigen::Index>(dialects.size());
    Eigen::MatrixX2d a(n, 2), b(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& ea = evaluator.rows.at(dialects[i]);
        const auto& eb = reference.rows.at(dialects[i]);
        a.row(i) << ea.da, ea.ca;
        b.row(i) << eb.da, eb.ca;
    }
    const Eigen::MatrixX2d diff = (a - b).cwiseAbs();
    const Eigen::RowVector2d mad = diff.colwise().mean();

    AlignmentReport report{evaluator.evaluator_id, reference.evaluator_id, {}, mad(0), mad(1)};
    for (Eigen::Index i = 0; i < n; ++i) report.differences[dialects[i]] = {diff(i, 0), diff(i, 1), 1};
    return report;
}

std::vector<AlignmentReport> rank_evaluators(std::vector<AlignmentReport> reports) {
    std::sort(reports.begin(), reports.end(), [](const AlignmentReport& x, const AlignmentReport& y) {
        return std::forward_as_tuple(x.combined(), x.mad_da, x.evaluator_id) <
               std::forward_as_tuple(y.combined(), y.mad_da, y.evaluator_id);
    });
    return reports;
}

MarginReport model_margin(std::span<const CategoryReport> reports, const std::string& model_a,
                          const std::string& model_b) {
    std::map<std::string, std::map<std::string, double>> overall;  // evaluator -> model -> overall
    for (const auto& r : reports) overall[r.evaluator_id][r.model_id] = r.overall;
    if (overall.empty()) throw AnalyticsError("model_margin: no reports");
    MarginReport out{model_a, model_b, {}, 0.0};
    std::vector<double> margins;
    for (const auto& [evaluator, models] : overall) {
        for (const auto* m : {&model_a, &model_b})
            if (!models.count(*m)) throw AnalyticsError("missing model " + *m + " for evaluator " + evaluator);
        const double margin = models.at(model_a) - models.at(model_b);
        out.per_evaluator[evaluator] = margin;
        margins.push_back(margin);
    }
    out.average = stable_mean(margins);
    return out;
}

double round2(double x) { return std::round(x * 100.0) / 100.0; }

std::string format2(double x) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.2f", round2(x));
    return buf;
}

Json to_json(const CategoryReport& r) {
    Json j;
    j["evaluator_id"] = r.evaluator_id;
    j["model_id"] = r.model_id;
    Json means = Json::object();
    for (const auto& [c, v] : r.means) means[std::string(category_label(c))] = v;
    j["means"] = means;
    j["overall"] = r.overall;
    j["record_count"] = r.record_count;
    return j;
}

Json to_json(const DialectReport& r) {
    Json j;
    j["evaluator_id"] = r.evaluator_id;
    j["model_id"] = r.model_id;
    Json rows = Json::object();
    for (const auto& [d, m] : r.rows) rows[std::string(to_string(d))] = {{"DA", m.da}, {"CA", m.ca}, {"count", m.count}};
    j["rows"] = rows;
    j["average"] = {{"DA", r.average_da}, {"CA", r.average_ca}};
    return j;
}

Json to_json(const AlignmentReport& r) {
    Json j;
    j["evaluator_id"] = r.evaluator_id;
    j["reference_id"] = r.reference_id;
    Json diffs = Json::object();
    for (const auto& [d, m] : r.differences) diffs[std::string(to_string(d))] = {{"DA", m.da}, {"CA", m.ca}};
    j["differences"] = diffs;
    j["MAD_DA"] = r.mad_da;
    j["MAD_CA"] = r.mad_ca;
    j["combined"] = r.combined();
    return j;
}

Json to_json(const MarginReport& r) {
    Json j;
    j["model_a"] = r.model_a;
    j["model_b"] = r.model_b;
    j["per_evaluator"] = Json::object();
    for (const auto& [e, m] : r.per_evaluator) j["per_evaluator"][e] = m;
    j["average"] = r.average;
    return j;
}

std::string category_csv(std::span<const CategoryReport> reports) {
    std::string out = "Evaluator,Model,CC,DD,CR,Avg\n";
    for (const auto& r : reports) {
        out += r.evaluator_id + "," + r.model_id;
        for (auto c : kMsaCategories) out += "," + format2(r.means.at(c));
        out += "," + format2(r.overall) + "\n";
    }
    return out;
}

std::string dialect_csv(std::span<const DialectReport> reports) {
    std::set<Dialect> dialects;
    for (const auto& r : reports)
        for (const auto& [d, m] : r.rows) dialects.insert(d);
    std::string out = "Country";
    for (const auto& r : reports) out += "," + r.evaluator_id + " DA," + r.evaluator_id + " CA";
    out += "\n";
    for (auto d : dialects) {
        out += std::string(display_name(d));
        for (const auto& r : reports) {
            auto it = r.rows.find(d);
            out += it == r.rows.end() ? ",," : "," + format2(it->second.da) + "," + format2(it->second.ca);
        }
        out += "\n";
    }
    out += "Average";
    for (const auto& r : reports) out += "," + format2(r.average_da) + "," + format2(r.average_ca);
    out += "\n";
    return out;
}

std::string mad_csv(std::span<const AlignmentReport> reports) {
    std::string out = "Evaluator,MAD_DA,MAD_CA,Combined\n";
    for (const auto& r : reports)
        out += r.evaluator_id + "," + format2(r.mad_da) + "," + format2(r.mad_ca) + "," + format2(r.combined()) + "\n";
    return out;
}

std::string margin_csv(const MarginReport& margin, std::span<const CategoryReport> reports) {
    std::map<std::pair<std::string, std::string>, double> overall;
    for (const auto& r : reports) overall[{r.evaluator_id, r.model_id}] = r.overall;
    std::string out = "Evaluator," + margin.model_a + "," + margin.model_b + ",Margin\n";
    for (const auto& [e, m] : margin.per_evaluator)
        out += e + "," + format2(overall.at({e, margin.model_a})) + "," + format2(overall.at({e, margin.model_b})) +
               "," + format2(m) + "\n";
    out += "Average,,," + format2(margin.average) + "\n";
    return out;
}

}  // namespace qafila
