#include "grpolab/taskgen.hpp"

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace grpolab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<const char*, 4> kTaskNames = {
    "anomaly_discrimination",
    "defect_classification",
    "defect_localization",
    "object_classification",
};

constexpr std::array<const char*, kNumRegions> kRegionNames = {
    "top left",    "top center",    "top right",
    "middle left", "center",        "middle right",
    "bottom left", "bottom center", "bottom right",
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << content;
}

// Band index for coordinate i of extent n: splits at floor(n/3), floor(2n/3),
// remainder joining the last band.
std::size_t band_of(std::size_t i, std::size_t n) {
    if (i < n / 3) return 0;
    if (i < 2 * n / 3) return 1;
    return 2;
}

std::vector<std::string> sample_distinct(std::vector<std::string> pool, const std::string& exclude,
                                         std::size_t count, Rng& rng, const char* what) {
    std::sort(pool.begin(), pool.end());
    pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
    pool.erase(std::remove(pool.begin(), pool.end(), exclude), pool.end());
    if (pool.size() < count)
        throw GenerationError(std::string(what) + " pool too small: need " +
                              std::to_string(count) + " distractors, have " +
                              std::to_string(pool.size()));
    shuffle_inplace(pool, rng);
    pool.resize(count);
    return pool;
}

McqSample assemble(TaskKind task, std::string question, const std::string& gold,
                   std::vector<std::string> distractors, const AnnotationRecord& record,
                   const KnowledgeBase& knowledge, Rng& rng) {
    McqSample s;
    s.task = task;
    s.question = std::move(question);
    s.options = std::move(distractors);
    s.options.push_back(gold);
    shuffle_inplace(s.options, rng);
    s.gold_index = static_cast<std::size_t>(
        std::find(s.options.begin(), s.options.end(), gold) - s.options.begin());
    if (task != TaskKind::object_classification)
        s.domain_knowledge = knowledge.lookup(record.object_type);
    s.query = record.query;
    s.provenance.record_id = record.id;
    s.provenance.split = record.split;
    validate_sample(s);
    return s;
}

json query_to_json(const QueryRef& q) {
    return json{{"kind", q.kind == QueryRef::Kind::image ? "image" : "text"}, {"value", q.value}};
}

QueryRef query_from_json(const json& j) {
    QueryRef q;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "image")
        q.kind = QueryRef::Kind::image;
    else if (kind == "text")
        q.kind = QueryRef::Kind::text;
    else
        throw std::runtime_error("unknown query kind '" + kind + "'");
    q.value = j.at("value").get<std::string>();
    return q;
}

const std::string& template_storage(PromptKind kind) {
    // Kept byte-identical to assets/prompts/; test_taskgen checks this.
    static const std::string defect_knowledge =
        "You are an expert in industrial quality inspection.\n"
        "I have provided three images: the first shows a defective {object_type}, the second is a "
        "mask highlighting the defective area, and the third shows a normal {object_type} of the "
        "same kind for comparison.\n"
        "Based on these images, write a detailed and generalized description of the visual "
        "characteristics of the defect '{defect_type}' as it appears on objects of type "
        "'{object_type}'.\n"
        "Focus on shape, color, texture, and typical extent. Describe the defect class in general "
        "terms rather than this single example, so the description applies to other instances of "
        "the same defect.\n"
        "Answer with the description only.\n";
    static const std::string normal_knowledge =
        "You are an expert in industrial quality inspection.\n"
        "I have provided an image of a normal {object_type}, together with context about defects "
        "that may affect this kind of object.\n"
        "Write a thorough and generalized description of the visual characteristics of a normal "
        "{object_type}: its shape, color, texture, surface finish, and any structural details a "
        "careful inspector would verify.\n"
        "Describe the object class in general terms rather than this single example.\n"
        "Answer with the description only.\n";
    static const std::string defect_description =
        "I have provided an image of a normal {object_type}.\n"
        "Imagine the same object exhibited a defect of type '{defect_type}' located at the "
        "'{defect_location}' region of the image.\n"
        "Write descriptive text detailing the visual characteristics of this object as if it "
        "showed that defect: how the defect would look, how it would alter the normal appearance, "
        "and how the rest of the object would remain unchanged.\n"
        "Do not mention that the defect is imaginary. Answer with the description only.\n";
    static const std::string normal_description =
        "I have provided an image of a normal {object_type}.\n"
        "Write descriptive text capturing the visual characteristics of this object: its shape, "
        "color, texture, and notable details, as an inspector would record them.\n"
        "Answer with the description only.\n";
    switch (kind) {
        case PromptKind::defect_knowledge: return defect_knowledge;
        case PromptKind::normal_knowledge: return normal_knowledge;
        case PromptKind::defect_description: return defect_description;
        case PromptKind::normal_description: return normal_description;
    }
    throw std::invalid_argument("unknown prompt kind");
}

void substitute_slot(std::string& text, const std::string& placeholder,
                     const std::optional<std::string>& value, bool required) {
    if (text.find(placeholder) == std::string::npos) return;
    if (!value) {
        if (required)
            throw std::invalid_argument("render_prompt_template: missing slot " + placeholder);
        return;
    }
    std::size_t pos = 0;
    while ((pos = text.find(placeholder, pos)) != std::string::npos) {
        text.replace(pos, placeholder.size(), *value);
        pos += value->size();
    }
}

} // namespace

const char* task_kind_name(TaskKind k) { return kTaskNames[static_cast<std::size_t>(k)]; }

std::optional<TaskKind> task_kind_from_name(const std::string& name) {
    for (std::size_t i = 0; i < kTaskNames.size(); ++i)
        if (name == kTaskNames[i]) return static_cast<TaskKind>(i);
    return std::nullopt;
}

const char* region_label_name(RegionLabel r) { return kRegionNames[static_cast<std::size_t>(r)]; }

std::optional<RegionLabel> region_label_from_name(const std::string& name) {
    for (std::size_t i = 0; i < kRegionNames.size(); ++i)
        if (name == kRegionNames[i]) return static_cast<RegionLabel>(i);
    return std::nullopt;
}

RegionLabel mask_to_region(const Mask& mask) {
    if (mask.h == 0 || mask.w == 0 || mask.bits.size() != mask.h * mask.w)
        throw std::invalid_argument("mask_to_region: malformed mask");
    std::array<std::size_t, kNumRegions> counts{};
    std::size_t total = 0;
    for (std::size_t i = 0; i < mask.h; ++i) {
        for (std::size_t j = 0; j < mask.w; ++j) {
            if (!mask.at(i, j)) continue;
            counts[band_of(i, mask.h) * 3 + band_of(j, mask.w)] += 1;
            ++total;
        }
    }
    if (total == 0) throw std::invalid_argument("mask_to_region: mask has no positive pixel");
    std::size_t best = 0;
    for (std::size_t c = 1; c < kNumRegions; ++c)
        if (counts[c] > counts[best]) best = c;
    return static_cast<RegionLabel>(best);
}

std::string mask_to_rle(const Mask& mask) {
    std::string out;
    std::uint8_t current = 0;
    std::size_t run = 0;
    auto flush = [&] {
        if (!out.empty()) out += ' ';
        out += std::to_string(run);
    };
    for (std::uint8_t b : mask.bits) {
        const std::uint8_t bit = b ? 1 : 0;
        if (bit == current) {
            ++run;
        } else {
            flush();
            current = bit;
            run = 1;
        }
    }
    flush();
    return out;
}

Mask mask_from_rle(std::size_t h, std::size_t w, const std::string& rle) {
    Mask m;
    m.h = h;
    m.w = w;
    m.bits.reserve(h * w);
    std::istringstream ss(rle);
    std::size_t run = 0;
    std::uint8_t bit = 0;
    while (ss >> run) {
        m.bits.insert(m.bits.end(), run, bit);
        bit = bit ? 0 : 1;
    }
    if (m.bits.size() != h * w)
        throw std::invalid_argument("mask_from_rle: run lengths sum to " +
                                    std::to_string(m.bits.size()) + ", expected " +
                                    std::to_string(h * w));
    return m;
}

Mask load_pbm(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_pbm: cannot open " + path);
    std::string magic;
    in >> magic;
    if (magic != "P1") throw std::runtime_error("load_pbm: expected P1 header in " + path);
    std::size_t w = 0, h = 0;
    in >> w >> h;
    Mask m;
    m.h = h;
    m.w = w;
    m.bits.reserve(h * w);
    int bit;
    while (m.bits.size() < h * w && in >> bit) m.bits.push_back(bit ? 1 : 0);
    if (m.bits.size() != h * w) throw std::runtime_error("load_pbm: truncated data in " + path);
    return m;
}

void save_pbm(const Mask& mask, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("save_pbm: cannot open " + path);
    out << "P1\n" << mask.w << ' ' << mask.h << '\n';
    for (std::size_t i = 0; i < mask.h; ++i) {
        for (std::size_t j = 0; j < mask.w; ++j) {
            out << (mask.at(i, j) ? '1' : '0');
            out << (j + 1 == mask.w ? '\n' : ' ');
        }
    }
}

void validate_sample(const McqSample& s) {
    if (s.options.size() < 2 || s.options.size() > 9)
        throw std::invalid_argument("sample must have 2..9 options");
    if (s.gold_index >= s.options.size())
        throw std::invalid_argument("gold index out of range");
    for (std::size_t i = 0; i < s.options.size(); ++i)
        for (std::size_t j = i + 1; j < s.options.size(); ++j)
            if (s.options[i] == s.options[j])
                throw std::invalid_argument("options must be pairwise distinct");
    if (s.task == TaskKind::anomaly_discrimination && s.options.size() != 2)
        throw std::invalid_argument("anomaly discrimination must have exactly 2 options");
    if (s.task == TaskKind::object_classification && s.domain_knowledge)
        throw std::invalid_argument("object classification must not carry domain knowledge");
}

KnowledgeBase KnowledgeBase::from_directory(const std::string& dir) {
    KnowledgeBase kb;
    if (!fs::is_directory(dir)) return kb;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& p : files) kb.add(p.stem().string(), read_file(p.string()));
    return kb;
}

void KnowledgeBase::add(const std::string& object_type, std::string text) {
    entries_[object_type] = std::move(text);
}

std::optional<std::string> KnowledgeBase::lookup(const std::string& object_type) const {
    auto it = entries_.find(object_type);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

McqSample build_question(const AnnotationRecord& record, TaskKind task,
                         const DistractorPools& pools, const KnowledgeBase& knowledge, Rng& rng) {
    switch (task) {
        case TaskKind::anomaly_discrimination: {
            const std::string gold = record.is_anomalous ? "Yes" : "No";
            return assemble(task,
                            "Is there any defect on the " + record.object_type +
                                " shown in the query?",
                            gold, {record.is_anomalous ? std::string("No") : std::string("Yes")},
                            record, knowledge, rng);
        }
        case TaskKind::defect_classification: {
            if (!record.is_anomalous || !record.defect_type)
                throw std::invalid_argument(
                    "defect classification requires an anomalous record with a defect type");
            auto it = pools.defects_by_object.find(record.object_type);
            if (it == pools.defects_by_object.end())
                throw GenerationError("no defect pool for object type '" + record.object_type + "'");
            auto distractors = sample_distinct(it->second, *record.defect_type, 3, rng, "defect");
            return assemble(task,
                            "What type of defect is present on the " + record.object_type + "?",
                            *record.defect_type, std::move(distractors), record, knowledge, rng);
        }
        case TaskKind::defect_localization: {
            std::string gold;
            if (record.mask) {
                gold = region_label_name(mask_to_region(*record.mask));
            } else if (record.query.kind == QueryRef::Kind::text && record.defect_location) {
                if (!region_label_from_name(*record.defect_location))
                    throw std::invalid_argument("unknown region label '" + *record.defect_location +
                                                "'");
                gold = *record.defect_location;
            } else {
                throw std::invalid_argument(
                    "defect localization requires a mask or a stated location on a text record");
            }
            std::vector<std::string> all(kRegionNames.begin(), kRegionNames.end());
            auto distractors = sample_distinct(std::move(all), gold, 3, rng, "region");
            return assemble(task,
                            "Dividing the image into a 3x3 grid of nine equal regions, where is "
                            "the defect located?",
                            gold, std::move(distractors), record, knowledge, rng);
        }
        case TaskKind::object_classification: {
            auto distractors =
                sample_distinct(pools.object_types, record.object_type, 3, rng, "object");
            return assemble(task, "What type of object is shown in the query?", record.object_type,
                            std::move(distractors), record, knowledge, rng);
        }
    }
    throw std::invalid_argument("unknown task kind");
}

void emit_samples(const std::vector<McqSample>& samples, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("emit_samples: cannot open " + path);
    for (const McqSample& s : samples) {
        json j;
        j["task"] = task_kind_name(s.task);
        j["question"] = s.question;
        j["options"] = s.options;
        j["gold_index"] = s.gold_index;
        if (s.domain_knowledge) j["domain_knowledge"] = *s.domain_knowledge;
        j["query"] = query_to_json(s.query);
        json prov;
        prov["record_id"] = s.provenance.record_id;
        prov["split"] = s.provenance.split;
        if (s.provenance.difficulty) prov["difficulty"] = *s.provenance.difficulty;
        j["provenance"] = prov;
        out << j.dump() << '\n';
    }
}

std::vector<McqSample> load_samples(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_samples: cannot open " + path);
    std::vector<McqSample> samples;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            McqSample s;
            const auto task = task_kind_from_name(j.at("task").get<std::string>());
            if (!task) throw std::runtime_error("unknown task kind");
            s.task = *task;
            s.question = j.at("question").get<std::string>();
            s.options = j.at("options").get<std::vector<std::string>>();
            s.gold_index = j.at("gold_index").get<std::size_t>();
            if (j.contains("domain_knowledge"))
                s.domain_knowledge = j.at("domain_knowledge").get<std::string>();
            s.query = query_from_json(j.at("query"));
            const json& prov = j.at("provenance");
            s.provenance.record_id = prov.at("record_id").get<std::string>();
            s.provenance.split = prov.at("split").get<std::string>();
            if (prov.contains("difficulty"))
                s.provenance.difficulty = prov.at("difficulty").get<std::string>();
            validate_sample(s);
            samples.push_back(std::move(s));
        } catch (const ParseError&) {
            throw;
        } catch (const std::exception& e) {
            throw ParseError(line_number, e.what());
        }
    }
    return samples;
}

std::vector<AnnotationRecord> load_annotations(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_annotations: cannot open " + path);
    const fs::path base = fs::path(path).parent_path();
    std::vector<AnnotationRecord> records;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            AnnotationRecord r;
            r.id = j.at("id").get<std::string>();
            r.object_type = j.at("object_type").get<std::string>();
            r.is_anomalous = j.at("is_anomalous").get<bool>();
            if (j.contains("defect_type")) r.defect_type = j.at("defect_type").get<std::string>();
            if (j.contains("mask")) {
                const json& m = j.at("mask");
                r.mask = mask_from_rle(m.at("h").get<std::size_t>(), m.at("w").get<std::size_t>(),
                                       m.at("rle").get<std::string>());
            } else if (j.contains("mask_pbm")) {
                r.mask = load_pbm((base / j.at("mask_pbm").get<std::string>()).string());
            }
            if (j.contains("defect_location"))
                r.defect_location = j.at("defect_location").get<std::string>();
            r.query = query_from_json(j.at("query"));
            r.split = j.value("split", "train");
            if (r.is_anomalous && !r.defect_type)
                throw std::runtime_error("anomalous record lacks defect_type");
            if (r.mask && !r.is_anomalous)
                throw std::runtime_error("mask present on a non-anomalous record");
            records.push_back(std::move(r));
        } catch (const ParseError&) {
            throw;
        } catch (const std::exception& e) {
            throw ParseError(line_number, e.what());
        }
    }
    return records;
}

void save_annotations(const std::vector<AnnotationRecord>& records, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("save_annotations: cannot open " + path);
    for (const AnnotationRecord& r : records) {
        json j;
        j["id"] = r.id;
        j["object_type"] = r.object_type;
        j["is_anomalous"] = r.is_anomalous;
        if (r.defect_type) j["defect_type"] = *r.defect_type;
        if (r.mask)
            j["mask"] = json{{"h", r.mask->h}, {"w", r.mask->w}, {"rle", mask_to_rle(*r.mask)}};
        if (r.defect_location) j["defect_location"] = *r.defect_location;
        j["query"] = query_to_json(r.query);
        j["split"] = r.split;
        out << j.dump() << '\n';
    }
}

const std::string& prompt_template_text(PromptKind kind) { return template_storage(kind); }

const char* prompt_asset_filename(PromptKind kind) {
    switch (kind) {
        case PromptKind::defect_knowledge: return "defect_knowledge.txt";
        case PromptKind::normal_knowledge: return "normal_knowledge.txt";
        case PromptKind::defect_description: return "defect_description.txt";
        case PromptKind::normal_description: return "normal_description.txt";
    }
    throw std::invalid_argument("unknown prompt kind");
}

std::string render_prompt_template(PromptKind kind, const PromptSlots& slots) {
    std::string text = prompt_template_text(kind);
    substitute_slot(text, "{object_type}", slots.object_type, true);
    substitute_slot(text, "{defect_type}", slots.defect_type, true);
    substitute_slot(text, "{defect_location}", slots.defect_location, true);
    return text;
}

void write_prompt_assets(const std::string& dir) {
    fs::create_directories(dir);
    for (PromptKind k : {PromptKind::defect_knowledge, PromptKind::normal_knowledge,
                         PromptKind::defect_description, PromptKind::normal_description})
        write_file((fs::path(dir) / prompt_asset_filename(k)).string(), prompt_template_text(k));
}

} // namespace grpolab
