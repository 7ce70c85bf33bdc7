#ifndef QAFILA_DATASET_ASSEMBLY_HPP
#define QAFILA_DATASET_ASSEMBLY_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "qafila/corpus_model.hpp"

namespace qafila {

class AssemblyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SubsetSpec {
    Dialect dialect = Dialect::egypt;
    std::size_t target_count = 0;
    /// Defaults to uniform thirds over the three instruction content types.
    std::map<ContentType, double> content_mix = uniform_mix();
    std::uint64_t seed = 0;

    static std::map<ContentType, double> uniform_mix();
};

std::vector<SubsetSpec> parse_subset_specs(const Json& j);

enum class AssignmentStatus { pending, translated };

struct AssignmentSheet {
    Dialect dialect = Dialect::egypt;
    std::vector<std::string> sample_ids;
    std::filesystem::path export_path;
    std::map<std::string, AssignmentStatus> status;
    /// The MSA source samples, in sample_ids order.
    std::vector<Sample> samples;
};

/// Per-type quotas by largest remainder: each is within 1 of count*fraction
/// and they sum to count.
std::map<ContentType, std::size_t> content_quotas(std::size_t count, const std::map<ContentType, double>& mix);

/// Seeded sampling without replacement; sheets are mutually disjoint and
/// processed in spec order. Only MSA samples are eligible.
std::vector<AssignmentSheet> sample_subsets(std::span<const Sample> corpus, std::span<const SubsetSpec> specs);

// Sheet file: one line per sample {"dialect","sample_id","status","sample"}.
std::string encode_sheet(const AssignmentSheet& sheet);
AssignmentSheet decode_sheet(std::string_view jsonl);

/// One translator exchange row: a single turn field.
struct ExchangeRow {
    std::string id;  // "<sample_id>:<turn>:<question|answer>"
    std::string msa_text;
    std::string dialect_text;
};

std::vector<ExchangeRow> exchange_rows(const AssignmentSheet& sheet);
std::string encode_exchange(std::span<const ExchangeRow> rows);
std::vector<ExchangeRow> decode_exchange(std::string_view jsonl);

struct MergeResult {
    std::vector<Sample> samples;
    std::vector<std::string> pending_ids;
};

/// Builds dialect-tune samples from translated exchange rows. Samples with
/// any untranslated field stay pending. Throws AssemblyError for rows that
/// name unknown sheet ids and for rows with empty dialect text.
MergeResult merge_dialect_translations(AssignmentSheet& sheet, std::span<const ExchangeRow> translations);

/// A stage dataset, held in memory or streamed from a JSONL file.
struct StageDataset {
    Stage stage = Stage::pretrain;
    std::string source;
    std::variant<std::vector<Sample>, std::filesystem::path> data;
};

/// Counts records, checking each sample validates and carries the dataset's stage.
std::int64_t count_samples(const StageDataset& dataset);

/// Visits every sample of a dataset in file order.
void for_each_sample(const StageDataset& dataset, const std::function<void(const Sample&)>& fn);

/// One entry per dataset with exact counts; file-backed entries record their
/// path so the manifest can drive exports.
StageManifest build_stage_manifest(std::span<const StageDataset> datasets);

std::vector<StageDataset> datasets_from_manifest(const StageManifest& manifest,
                                                 const std::filesystem::path& base_dir = {});

enum class ParallelMsa { mixed, separate, exclude };

struct ExportResult {
    std::size_t lines = 0;
    std::string checksum;  // sha256 hex of the written file
    std::size_t parallel_msa_lines = 0;
    std::vector<std::string> warnings;
};

/// Writes the stage's samples as one shuffled JSONL file plus "<out>.sha256".
/// The written line count must equal the manifest's stage total.
ExportResult export_training_set(const StageManifest& manifest, std::span<const StageDataset> datasets, Stage stage,
                                 std::uint64_t seed, const std::filesystem::path& out,
                                 ParallelMsa parallel_msa = ParallelMsa::mixed);

}  // namespace qafila

#endif  // QAFILA_DATASET_ASSEMBLY_HPP
