#include "iclb/corpus.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "iclb/errors.hpp"
#include "iclb/rng.hpp"

namespace iclb {

using nlohmann::json;

std::string to_string(TaskKind task) {
    switch (task) {
        case TaskKind::ner: return "ner";
        case TaskKind::depparse: return "depparse";
        case TaskKind::pos: return "pos";
    }
    return "ner";
}

TaskKind task_from_string(const std::string& name) {
    if (name == "ner") return TaskKind::ner;
    if (name == "depparse") return TaskKind::depparse;
    if (name == "pos") return TaskKind::pos;
    throw ArgumentError("unknown task kind: " + name);
}

std::string Sample::surface() const {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += tokens[i];
    }
    return out;
}

bool Sample::has_ner() const {
    return annotation && std::holds_alternative<NerAnnotation>(*annotation);
}

bool Sample::has_parse() const {
    return annotation && std::holds_alternative<ParseAnnotation>(*annotation);
}

const NerAnnotation& Sample::ner() const {
    if (!has_ner()) throw ArgumentError("sample " + id + " has no NER annotation");
    return std::get<NerAnnotation>(*annotation);
}

const ParseAnnotation& Sample::parse() const {
    if (!has_parse()) throw ArgumentError("sample " + id + " has no parse annotation");
    return std::get<ParseAnnotation>(*annotation);
}

void validate_sample(const Sample& sample,
                     const std::vector<std::string>& allowed_entity_types) {
    const int n = static_cast<int>(sample.tokens.size());
    if (sample.tokens.empty()) {
        throw ValidationError("sample " + sample.id + ": empty token list");
    }
    for (const auto& token : sample.tokens) {
        // Whitespace inside a token would make the space-joined surface
        // ambiguous to reconstruct.
        if (token.empty() ||
            token.find_first_of(" \t\n\r\f\v") != std::string::npos) {
            throw ValidationError("sample " + sample.id +
                                  ": token is empty or contains whitespace");
        }
    }
    if (!sample.annotation) return;
    if (sample.has_ner()) {
        auto spans = sample.ner().entities;
        std::sort(spans.begin(), spans.end(), [](const EntitySpan& a, const EntitySpan& b) {
            return a.start < b.start || (a.start == b.start && a.end < b.end);
        });
        int prev_end = 0;
        for (const auto& span : spans) {
            if (span.start < 0 || span.start >= span.end || span.end > n) {
                throw ValidationError("sample " + sample.id + ": entity span [" +
                                      std::to_string(span.start) + "," +
                                      std::to_string(span.end) + ") out of range");
            }
            if (span.start < prev_end) {
                throw ValidationError("sample " + sample.id + ": overlapping entity spans");
            }
            prev_end = span.end;
            if (!allowed_entity_types.empty() &&
                std::find(allowed_entity_types.begin(), allowed_entity_types.end(),
                          span.type) == allowed_entity_types.end()) {
                throw ValidationError("sample " + sample.id + ": unknown entity type " +
                                      span.type);
            }
        }
    } else {
        const auto& rows = sample.parse().rows;
        if (static_cast<int>(rows.size()) != n) {
            throw ValidationError("sample " + sample.id + ": " +
                                  std::to_string(rows.size()) + " rows for " +
                                  std::to_string(n) + " tokens");
        }
        for (int i = 0; i < n; ++i) {
            const auto& row = rows[static_cast<std::size_t>(i)];
            if (row.head < 0 || row.head > n) {
                throw ValidationError("sample " + sample.id + ": head " +
                                      std::to_string(row.head) + " out of range");
            }
            if (row.head == i + 1) {
                throw ValidationError("sample " + sample.id + ": token " +
                                      std::to_string(i + 1) + " is its own head");
            }
            if (row.pos.empty()) {
                throw ValidationError("sample " + sample.id + ": empty POS tag");
            }
        }
    }
}

// -- CoNLL-U -----------------------------------------------------------------

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> cols;
    std::size_t start = 0;
    while (true) {
        std::size_t tab = line.find('\t', start);
        if (tab == std::string::npos) {
            cols.push_back(line.substr(start));
            break;
        }
        cols.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
    return cols;
}

bool parse_int(const std::string& s, int& out) {
    if (s.empty()) return false;
    std::size_t i = 0;
    long value = 0;
    for (; i < s.size(); ++i) {
        if (s[i] < '0' || s[i] > '9') return false;
        value = value * 10 + (s[i] - '0');
        if (value > 1000000) return false;
    }
    out = static_cast<int>(value);
    return true;
}

}  // namespace

std::vector<Sample> parse_conllu(const std::string& text) {
    std::vector<Sample> samples;
    Sample current;
    std::string sent_id;
    bool in_sentence = false;

    auto flush = [&](std::size_t line_no) {
        if (!in_sentence) return;
        if (current.tokens.empty()) {
            throw ParseError("sentence with no token lines", line_no);
        }
        current.id = sent_id.empty() ? "s" + std::to_string(samples.size() + 1) : sent_id;
        current.text = current.surface();
        validate_sample(current);
        samples.push_back(std::move(current));
        current = Sample{};
        current.annotation = ParseAnnotation{};
        sent_id.clear();
        in_sentence = false;
    };

    current.annotation = ParseAnnotation{};
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) {
            flush(line_no);
            continue;
        }
        if (line[0] == '#') {
            // Comments belong to the sentence that follows; one with no token
            // lines before the next boundary is a malformed sentence.
            in_sentence = true;
            const std::string key = "# sent_id =";
            if (line.rfind(key, 0) == 0) {
                sent_id = line.substr(key.size());
                while (!sent_id.empty() && sent_id.front() == ' ') sent_id.erase(0, 1);
            }
            continue;
        }
        auto cols = split_tabs(line);
        if (cols.size() != 10) {
            throw ParseError("expected 10 tab-separated columns, got " +
                             std::to_string(cols.size()), line_no);
        }
        const std::string& id_col = cols[0];
        // Multiword-token ranges ("3-4") and empty nodes ("5.1") carry no tree
        // structure of their own.
        if (id_col.find('-') != std::string::npos ||
            id_col.find('.') != std::string::npos) {
            in_sentence = true;
            continue;
        }
        int token_index = 0;
        if (!parse_int(id_col, token_index)) {
            throw ParseError("non-integer token ID '" + id_col + "'", line_no);
        }
        int head = 0;
        if (!parse_int(cols[6], head)) {
            throw ParseError("non-integer HEAD '" + cols[6] + "'", line_no);
        }
        current.tokens.push_back(cols[1]);
        std::get<ParseAnnotation>(*current.annotation)
            .rows.push_back(ParseRow{cols[3], head, cols[7]});
        in_sentence = true;
    }
    flush(line_no + 1);
    return samples;
}

// -- Canonical JSONL ----------------------------------------------------------

namespace {

Sample sample_from_json(const json& obj, std::size_t line_no, bool expect_ner) {
    if (!obj.is_object()) throw ParseError("expected a JSON object", line_no);
    Sample sample;
    if (!obj.contains("id") || !obj["id"].is_string()) {
        throw ParseError("missing string field 'id'", line_no);
    }
    sample.id = obj["id"].get<std::string>();
    if (!obj.contains("tokens") || !obj["tokens"].is_array()) {
        throw ParseError("missing array field 'tokens'", line_no);
    }
    for (const auto& tok : obj["tokens"]) {
        if (!tok.is_string()) throw ParseError("non-string token", line_no);
        sample.tokens.push_back(tok.get<std::string>());
    }
    sample.text = obj.value("text", sample.surface());

    if (expect_ner) {
        if (obj.contains("entities")) {
            NerAnnotation ann;
            for (const auto& ent : obj["entities"]) {
                if (!ent.is_array() || ent.size() != 3 || !ent[0].is_number_integer() ||
                    !ent[1].is_number_integer() || !ent[2].is_string()) {
                    throw ParseError("entity must be [start, end, type]", line_no);
                }
                ann.entities.push_back(EntitySpan{ent[0].get<int>(), ent[1].get<int>(),
                                                  ent[2].get<std::string>()});
            }
            sample.annotation = std::move(ann);
        }
    } else {
        if (obj.contains("rows")) {
            ParseAnnotation ann;
            for (const auto& row : obj["rows"]) {
                if (!row.is_array() || row.size() != 3 || !row[0].is_string() ||
                    !row[1].is_number_integer() || !row[2].is_string()) {
                    throw ParseError("row must be [pos, head, deprel]", line_no);
                }
                ann.rows.push_back(ParseRow{row[0].get<std::string>(), row[1].get<int>(),
                                            row[2].get<std::string>()});
            }
            sample.annotation = std::move(ann);
        }
    }
    return sample;
}

std::vector<Sample> parse_jsonl(const std::string& text, bool expect_ner) {
    std::vector<Sample> samples;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        json obj = json::parse(line, nullptr, false);
        if (obj.is_discarded()) throw ParseError("invalid JSON", line_no);
        Sample sample = sample_from_json(obj, line_no, expect_ner);
        validate_sample(sample);
        samples.push_back(std::move(sample));
    }
    return samples;
}

}  // namespace

std::vector<Sample> parse_ner_jsonl(const std::string& text) {
    return parse_jsonl(text, /*expect_ner=*/true);
}

std::vector<Sample> parse_parse_jsonl(const std::string& text) {
    return parse_jsonl(text, /*expect_ner=*/false);
}

std::string write_samples_jsonl(const std::vector<Sample>& samples) {
    std::string out;
    for (const auto& sample : samples) {
        json obj;
        obj["id"] = sample.id;
        obj["tokens"] = sample.tokens;
        if (sample.text != sample.surface()) obj["text"] = sample.text;
        if (sample.has_ner()) {
            json ents = json::array();
            for (const auto& span : sample.ner().entities) {
                ents.push_back(json::array({span.start, span.end, span.type}));
            }
            obj["entities"] = std::move(ents);
        } else if (sample.has_parse()) {
            json rows = json::array();
            for (const auto& row : sample.parse().rows) {
                rows.push_back(json::array({row.pos, row.head, row.deprel}));
            }
            obj["rows"] = std::move(rows);
        }
        out += obj.dump();
        out += '\n';
    }
    return out;
}

// -- Dataset assembly ----------------------------------------------------------

namespace {

void collect_labels(const Sample& sample, TaskKind task,
                    std::vector<std::string>& labels,
                    std::unordered_set<std::string>& seen) {
    auto add = [&](const std::string& label) {
        if (seen.insert(label).second) labels.push_back(label);
    };
    if (!sample.annotation) return;
    if (task == TaskKind::ner) {
        if (sample.has_ner())
            for (const auto& span : sample.ner().entities) add(span.type);
    } else if (sample.has_parse()) {
        for (const auto& row : sample.parse().rows) {
            add(task == TaskKind::depparse ? row.deprel : row.pos);
        }
    }
}

}  // namespace

Dataset make_dataset(std::string name, TaskKind task, std::vector<Sample> train,
                     std::vector<Sample> test) {
    Dataset dataset;
    dataset.name = std::move(name);
    dataset.task = task;
    dataset.train = std::move(train);
    dataset.test = std::move(test);

    std::unordered_set<std::string> train_ids, test_ids, seen_labels;
    for (const auto& sample : dataset.train) {
        validate_sample(sample);
        if (!train_ids.insert(sample.id).second) {
            throw ValidationError("duplicate train sample id: " + sample.id);
        }
        collect_labels(sample, task, dataset.label_set, seen_labels);
    }
    for (const auto& sample : dataset.test) {
        validate_sample(sample);
        if (!test_ids.insert(sample.id).second) {
            throw ValidationError("duplicate test sample id: " + sample.id);
        }
        if (train_ids.count(sample.id)) {
            throw ValidationError("sample id in both splits: " + sample.id);
        }
        collect_labels(sample, task, dataset.label_set, seen_labels);
    }
    std::sort(dataset.label_set.begin(), dataset.label_set.end());
    return dataset;
}

std::vector<std::string> observed_pos_tags(const Dataset& dataset) {
    std::vector<std::string> tags;
    std::unordered_set<std::string> seen;
    for (const auto* split : {&dataset.train, &dataset.test}) {
        for (const auto& sample : *split) {
            if (!sample.has_parse()) continue;
            for (const auto& row : sample.parse().rows) {
                if (seen.insert(row.pos).second) tags.push_back(row.pos);
            }
        }
    }
    std::sort(tags.begin(), tags.end());
    return tags;
}

Dataset subsample_test(const Dataset& dataset, std::size_t n, std::uint64_t seed) {
    if (n < 1) throw ArgumentError("subsample size must be >= 1");
    Dataset out = dataset;
    if (n >= dataset.test.size()) return out;
    auto picked = sample_without_replacement(dataset.test.size(), n, seed);
    std::sort(picked.begin(), picked.end());
    out.test.clear();
    out.test.reserve(picked.size());
    for (std::size_t idx : picked) out.test.push_back(dataset.test[idx]);
    return out;
}

}  // namespace iclb
