#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "grpolab/rng.hpp"

namespace grpolab {

enum class TaskKind {
    anomaly_discrimination,
    defect_classification,
    defect_localization,
    object_classification,
};

const char* task_kind_name(TaskKind k);
std::optional<TaskKind> task_kind_from_name(const std::string& name);

// Nine cells of the 3x3 localization grid, reading order.
enum class RegionLabel : std::uint8_t {
    top_left,
    top_center,
    top_right,
    middle_left,
    center,
    middle_right,
    bottom_left,
    bottom_center,
    bottom_right,
};

constexpr std::size_t kNumRegions = 9;
const char* region_label_name(RegionLabel r);
std::optional<RegionLabel> region_label_from_name(const std::string& name);

// Binary mask, row-major, entries 0/1.
struct Mask {
    std::size_t h = 0;
    std::size_t w = 0;
    std::vector<std::uint8_t> bits;

    std::uint8_t at(std::size_t i, std::size_t j) const { return bits[i * w + j]; }
};

// Cell with the most positive pixels; rows split at floor(h/3), floor(2h/3)
// (remainder pixels join the last band), columns likewise. Ties break in
// reading order. Throws std::invalid_argument on an all-zero mask.
RegionLabel mask_to_region(const Mask& mask);

// Alternating run lengths starting with a zero-run, row-major.
std::string mask_to_rle(const Mask& mask);
Mask mask_from_rle(std::size_t h, std::size_t w, const std::string& rle);

// Plain-text PBM (P1).
Mask load_pbm(const std::string& path);
void save_pbm(const Mask& mask, const std::string& path);

struct QueryRef {
    enum class Kind { image, text };
    Kind kind = Kind::image;
    std::string value;  // opaque image path, or descriptive text

    bool operator==(const QueryRef&) const = default;
};

struct AnnotationRecord {
    std::string id;
    std::string object_type;
    bool is_anomalous = false;
    std::optional<std::string> defect_type;
    std::optional<Mask> mask;
    // Stated defect location for descriptive-text records without a mask.
    std::optional<std::string> defect_location;
    QueryRef query;
    std::string split = "train";
};

struct Provenance {
    std::string record_id;
    std::string split;
    std::optional<std::string> difficulty;

    bool operator==(const Provenance&) const = default;
};

struct McqSample {
    TaskKind task = TaskKind::anomaly_discrimination;
    std::string question;
    std::vector<std::string> options;  // 2..9 pairwise-distinct strings
    std::size_t gold_index = 0;
    std::optional<std::string> domain_knowledge;
    QueryRef query;
    Provenance provenance;

    std::size_t n_options() const { return options.size(); }
    char gold_letter() const { return static_cast<char>('A' + gold_index); }

    bool operator==(const McqSample&) const = default;
};

// Throws std::invalid_argument when a sample violates its contract.
void validate_sample(const McqSample& s);

struct DistractorPools {
    // defect type pool per object class; ordered for deterministic sampling
    std::map<std::string, std::vector<std::string>> defects_by_object;
    std::vector<std::string> object_types;
};

// One knowledge text per object type, loaded from <dir>/<object_type>.txt.
class KnowledgeBase {
public:
    KnowledgeBase() = default;
    static KnowledgeBase from_directory(const std::string& dir);
    void add(const std::string& object_type, std::string text);
    std::optional<std::string> lookup(const std::string& object_type) const;
    bool empty() const { return entries_.empty(); }

private:
    std::map<std::string, std::string> entries_;
};

struct GenerationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
    ParseError(std::size_t line_number, const std::string& what)
        : std::runtime_error("line " + std::to_string(line_number) + ": " + what),
          line(line_number) {}
    std::size_t line;
};

// Builds one multiple-choice sample for `task` from `record`. Distractors are
// drawn without replacement from the pools; options are shuffled by `rng`.
// Domain knowledge is attached for defect tasks when available and never for
// object classification. Incompatible task/record -> std::invalid_argument;
// pool too small -> GenerationError.
McqSample build_question(const AnnotationRecord& record, TaskKind task,
                         const DistractorPools& pools, const KnowledgeBase& knowledge, Rng& rng);

// JSON Lines round-trip. load_samples throws ParseError naming the bad line.
void emit_samples(const std::vector<McqSample>& samples, const std::string& path);
std::vector<McqSample> load_samples(const std::string& path);

// Annotation JSON Lines; PBM mask references resolve relative to the file.
std::vector<AnnotationRecord> load_annotations(const std::string& path);
void save_annotations(const std::vector<AnnotationRecord>& records, const std::string& path);

enum class PromptKind {
    defect_knowledge,
    normal_knowledge,
    defect_description,
    normal_description,
};

struct PromptSlots {
    std::optional<std::string> object_type;
    std::optional<std::string> defect_type;
    std::optional<std::string> defect_location;
};

// Template text with {object_type} / {defect_type} / {defect_location}
// placeholders, identical to the text assets shipped under assets/prompts/.
const std::string& prompt_template_text(PromptKind kind);
const char* prompt_asset_filename(PromptKind kind);

// Substitutes every slot the kind requires; missing slot -> invalid_argument.
std::string render_prompt_template(PromptKind kind, const PromptSlots& slots);

// Writes the four template files into `dir`.
void write_prompt_assets(const std::string& dir);

} // namespace grpolab
