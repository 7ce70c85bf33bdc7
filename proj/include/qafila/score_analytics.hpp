#ifndef QAFILA_SCORE_ANALYTICS_HPP
#define QAFILA_SCORE_ANALYTICS_HPP

#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qafila/corpus_model.hpp"
#include "qafila/eval_harness.hpp"

namespace qafila {

class AnalyticsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Category and dialect of each benchmark item. Records carrying
/// "category"/"dialect" metadata need no index entry.
class ItemIndex {
public:
    ItemIndex() = default;
    explicit ItemIndex(const Benchmark& bench);

    Category category_of(const ScoreRecord& rec) const;
    Dialect dialect_of(const ScoreRecord& rec) const;

private:
    struct Entry {
        Category category;
        std::optional<Dialect> dialect;
    };
    std::map<std::string, Entry, std::less<>> items_;
};

/// Column label for an MSA category: CC, DD or CR.
std::string_view category_label(Category c);

struct CategoryReport {
    std::string evaluator_id;
    std::string model_id;
    std::map<Category, double> means;  // percent
    double overall = 0.0;
    std::size_t record_count = 0;
};

/// Per-category mean percent for one evaluator and model. Relative records
/// contribute relative_percent; human 1-10 scores are scaled by 10.
CategoryReport category_report(std::span<const ScoreRecord> records, const ItemIndex& index = {});

/// Splits records by (evaluator, model) and reports each group, sorted.
std::vector<CategoryReport> category_reports(std::span<const ScoreRecord> records, const ItemIndex& index = {});

struct DialectMeans {
    double da = 0.0;
    double ca = 0.0;
    std::size_t count = 0;
};

struct DialectReport {
    std::string evaluator_id;
    std::string model_id;
    std::map<Dialect, DialectMeans> rows;
    double average_da = 0.0;
    double average_ca = 0.0;
};

/// Per-dialect DA/CA means for one evaluator. With `expected`, every listed
/// dialect must have records.
DialectReport dialect_report(std::span<const ScoreRecord> records, const ItemIndex& index = {},
                             std::span<const Dialect> expected = {});

std::vector<DialectReport> dialect_reports(std::span<const ScoreRecord> records, const ItemIndex& index = {});

struct AlignmentReport {
    std::string evaluator_id;
    std::string reference_id;
    std::map<Dialect, DialectMeans> differences;  // |evaluator - reference| per dialect
    double mad_da = 0.0;
    double mad_ca = 0.0;

    double combined() const { return (mad_da + mad_ca) / 2.0; }
};

/// Mean absolute difference between an evaluator's dialect means and the
/// reference (human) means. Both reports must cover the same dialects.
AlignmentReport alignment_mad(const DialectReport& evaluator, const DialectReport& reference);

/// Ascending by combined MAD, then MAD_DA, then evaluator id.
std::vector<AlignmentReport> rank_evaluators(std::vector<AlignmentReport> reports);

struct MarginReport {
    std::string model_a;
    std::string model_b;
    std::map<std::string, double> per_evaluator;  // overall_a - overall_b
    double average = 0.0;
};

/// Overall margin of model_a over model_b for every evaluator in `reports`.
MarginReport model_margin(std::span<const CategoryReport> reports, const std::string& model_a,
                          const std::string& model_b);

/// Rounds half away from zero to two decimals.
double round2(double x);
std::string format2(double x);

Json to_json(const CategoryReport& r);
Json to_json(const DialectReport& r);
Json to_json(const AlignmentReport& r);
Json to_json(const MarginReport& r);

/// Evaluator,Model,CC,DD,CR,Avg
std::string category_csv(std::span<const CategoryReport> reports);
/// Country,<evaluator> DA,<evaluator> CA,... with a final Average row.
std::string dialect_csv(std::span<const DialectReport> reports);
/// Evaluator,MAD_DA,MAD_CA,Combined
std::string mad_csv(std::span<const AlignmentReport> reports);
/// Evaluator,<model_a>,<model_b>,Margin with a final Average row.
std::string margin_csv(const MarginReport& margin, std::span<const CategoryReport> reports);

}  // namespace qafila

#endif  // QAFILA_SCORE_ANALYTICS_HPP
