#include "iclb/promptcodec.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "iclb/errors.hpp"

namespace iclb {

using nlohmann::json;

std::string to_string(PromptMode mode) {
    return mode == PromptMode::message_pairs ? "message_pairs" : "separator";
}

PromptMode prompt_mode_from_string(const std::string& name) {
    if (name == "message_pairs") return PromptMode::message_pairs;
    if (name == "separator") return PromptMode::separator;
    throw ArgumentError("unknown prompt mode: " + name);
}

CodecConfig CodecConfig::defaults() {
    CodecConfig config;
    config.entity_types = {"PER", "ORG", "GPE", "LOC", "FAC", "WOA", "EVE", "DUC", "ANG"};
    config.pos_tags = {
        "VBN", "WDT", "GW",  "NN",    "TO",  "IN",   "JJR",  "WP",  "EX",  "VB",
        "HYPH", "JJ", "SYM", ":",     "RBR", "MD",   "VBP",  "JJS", "LS",  "WP$",
        "$",   "VBD", "VBZ", "NFP",   "PRP", "NNPS", "CC",   "XX",  ",",   "``",
        "NNP", "-RRB-", "CD", "VBG",  "-LRB-", "RP", "NNS",  "PDT", "AFX", "RB",
        "PRP$", "UH", ".",   "WRB",   "DT",  "FW",   "RBS",  "ADD", "POS", "''"};
    return config;
}

// -- NER codec -------------------------------------------------------------------

std::string render_ner(const Sample& sample) {
    const auto& entities = sample.ner().entities;
    std::vector<std::string> open_at(sample.tokens.size() + 1);
    std::vector<std::string> close_at(sample.tokens.size() + 1);
    for (const auto& span : entities) {
        open_at[static_cast<std::size_t>(span.start)] = span.type;
        close_at[static_cast<std::size_t>(span.end)] = span.type;
    }
    std::string out;
    auto append = [&](const std::string& piece) {
        if (!out.empty()) out += ' ';
        out += piece;
    };
    for (std::size_t i = 0; i <= sample.tokens.size(); ++i) {
        if (!close_at[i].empty()) append("</" + close_at[i] + ">");
        if (i == sample.tokens.size()) break;
        if (!open_at[i].empty()) append("<" + open_at[i] + ">");
        append(sample.tokens[i]);
    }
    return out;
}

namespace {

std::vector<std::string> whitespace_split(const std::string& text) {
    std::vector<std::string> pieces;
    std::string current;
    for (char c : text) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
            if (!current.empty()) {
                pieces.push_back(std::move(current));
                current.clear();
            }
        } else {
            current += c;
        }
    }
    if (!current.empty()) pieces.push_back(std::move(current));
    return pieces;
}

bool tag_shaped_name(const std::string& name) {
    if (name.empty()) return false;
    if (name[0] < 'A' || name[0] > 'Z') return false;
    for (char c : name) {
        bool ok = (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
        if (!ok) return false;
    }
    return true;
}

ParsedCompletion fail(const std::string& raw, std::string detail) {
    ParsedCompletion out;
    out.status = CompletionStatus::format_error;
    out.raw = raw;
    out.error_detail = std::move(detail);
    return out;
}

}  // namespace

ParsedCompletion parse_ner(const std::string& output, const Sample& original,
                           const CodecConfig& config) {
    NerAnnotation annotation;
    std::size_t token_idx = 0;
    std::string open_type;
    int open_start = -1;

    for (const auto& piece : whitespace_split(output)) {
        bool closing = piece.size() >= 3 && piece[0] == '<' && piece[1] == '/' &&
                       piece.back() == '>';
        bool opening = !closing && piece.size() >= 2 && piece[0] == '<' && piece.back() == '>';
        std::string name;
        if (closing) name = piece.substr(2, piece.size() - 3);
        if (opening) name = piece.substr(1, piece.size() - 2);

        if ((opening || closing) && tag_shaped_name(name)) {
            bool known = std::find(config.entity_types.begin(), config.entity_types.end(),
                                   name) != config.entity_types.end();
            if (!known) return fail(output, "unknown entity tag <" + name + ">");
            if (opening) {
                if (!open_type.empty()) {
                    return fail(output, "nested entity tag <" + name + ">");
                }
                open_type = name;
                open_start = static_cast<int>(token_idx);
            } else {
                if (open_type.empty()) {
                    return fail(output, "closing tag </" + name + "> with no open tag");
                }
                if (open_type != name) {
                    return fail(output, "mismatched closing tag </" + name + ">");
                }
                if (static_cast<int>(token_idx) == open_start) {
                    return fail(output, "empty entity span for <" + name + ">");
                }
                annotation.entities.push_back(
                    EntitySpan{open_start, static_cast<int>(token_idx), name});
                open_type.clear();
                open_start = -1;
            }
            continue;
        }

        if (token_idx >= original.tokens.size() || piece != original.tokens[token_idx]) {
            return fail(output, "token mismatch at index " + std::to_string(token_idx));
        }
        ++token_idx;
    }

    if (!open_type.empty()) return fail(output, "unclosed entity tag <" + open_type + ">");
    if (token_idx != original.tokens.size()) {
        return fail(output, "token mismatch at index " + std::to_string(token_idx));
    }

    ParsedCompletion out;
    out.status = CompletionStatus::ok;
    out.annotation = std::move(annotation);
    out.raw = output;
    return out;
}

// -- Parse codec -----------------------------------------------------------------

std::string render_parse(const Sample& sample) {
    const auto& rows = sample.parse().rows;
    std::string out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (i) out += '\n';
        out += '(' + sample.tokens[i] + ", " + rows[i].pos + ", " +
               std::to_string(rows[i].head) + ", " + rows[i].deprel + ')';
    }
    return out;
}

namespace {

std::string trim(const std::string& s) {
    std::size_t begin = 0, end = s.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) --end;
    return s.substr(begin, end - begin);
}

bool parse_head(const std::string& s, int& out) {
    if (s.empty() || s.size() > 6) return false;
    long value = 0;
    for (char c : s) {
        if (c < '0' || c > '9') return false;
        value = value * 10 + (c - '0');
    }
    out = static_cast<int>(value);
    return true;
}

}  // namespace

ParsedCompletion parse_parse(const std::string& output, const Sample& original,
                             const CodecConfig& config) {
    ParseAnnotation annotation;
    std::istringstream in(output);
    std::string line;
    while (std::getline(in, line)) {
        std::string tuple = trim(line);
        if (tuple.empty()) continue;
        if (!tuple.empty() && tuple.back() == ',') tuple = trim(tuple.substr(0, tuple.size() - 1));
        if (tuple.size() >= 2 && tuple.front() == '(' && tuple.back() == ')') {
            tuple = tuple.substr(1, tuple.size() - 2);
        }
        // Right-anchored split: the three rightmost separators delimit
        // pos/head/deprel, so commas inside the token (or a "," POS tag)
        // survive. A separator is a comma followed by whitespace; if fewer
        // than three exist, any comma qualifies.
        std::vector<std::size_t> separators;
        for (std::size_t i = 0; i + 1 < tuple.size(); ++i) {
            if (tuple[i] == ',' && std::isspace(static_cast<unsigned char>(tuple[i + 1]))) {
                separators.push_back(i);
            }
        }
        if (separators.size() < 3) {
            separators.clear();
            for (std::size_t i = 0; i < tuple.size(); ++i) {
                if (tuple[i] == ',') separators.push_back(i);
            }
        }
        if (separators.size() < 3) {
            return fail(output, "expected (token, pos, head, deprel): " + tuple);
        }
        const std::size_t c1 = separators[separators.size() - 3];
        const std::size_t c2 = separators[separators.size() - 2];
        const std::size_t c3 = separators[separators.size() - 1];
        ParseRow row;
        std::string token = trim(tuple.substr(0, c1));
        row.pos = trim(tuple.substr(c1 + 1, c2 - c1 - 1));
        std::string head = trim(tuple.substr(c2 + 1, c3 - c2 - 1));
        row.deprel = trim(tuple.substr(c3 + 1));
        if (token.empty()) return fail(output, "empty token field: " + tuple);
        if (!parse_head(head, row.head)) {
            return fail(output, "non-integer head '" + head + "'");
        }
        if (row.pos.empty() || row.deprel.empty()) {
            return fail(output, "empty pos or deprel field: " + tuple);
        }
        annotation.rows.push_back(std::move(row));
    }

    const std::size_t expected = original.tokens.size();
    if (annotation.rows.size() != expected) {
        return fail(output, "length mismatch: " + std::to_string(annotation.rows.size()) +
                                " tuples for " + std::to_string(expected) + " tokens");
    }
    for (std::size_t i = 0; i < annotation.rows.size(); ++i) {
        const auto& row = annotation.rows[i];
        if (row.head > static_cast<int>(expected)) {
            return fail(output, "head " + std::to_string(row.head) + " out of range");
        }
        if (row.head == static_cast<int>(i) + 1) {
            return fail(output, "token " + std::to_string(i + 1) + " is its own head");
        }
        if (!config.pos_tags.empty() &&
            std::find(config.pos_tags.begin(), config.pos_tags.end(), row.pos) ==
                config.pos_tags.end()) {
            return fail(output, "unknown POS tag '" + row.pos + "'");
        }
    }

    ParsedCompletion out;
    out.status = CompletionStatus::ok;
    out.annotation = std::move(annotation);
    out.raw = output;
    return out;
}

std::string render_annotation(TaskKind task, const Sample& sample) {
    return task == TaskKind::ner ? render_ner(sample) : render_parse(sample);
}

ParsedCompletion parse_completion(TaskKind task, const std::string& output,
                                  const Sample& original, const CodecConfig& config) {
    return task == TaskKind::ner ? parse_ner(output, original, config)
                                 : parse_parse(output, original, config);
}

// -- Prompt assembly ---------------------------------------------------------------

namespace {

constexpr const char* kNerDescription =
    "You are an NER classifier that identifies the following entities: "
    "Person __PER__, Organization __ORG__, Geo-Political __GPE__, Location __LOC__, "
    "Facility __FAC__, Work-of-Art __WOA__, Event __EVE__, Product __DUC__, "
    "Language __ANG__ use angle brackets to tag in-line, please don't include any "
    "additional information other than the annotated sentence and keep original "
    "spacing.";

constexpr const char* kParseDescription =
    "Your task is to parse the input sentence into a dependency tree by providing a "
    "(token, part-of-speech tag, head, deprel) for each token. In the input sentence, "
    "tokens are separated by spaces. Possible part-of-speech tags are:\n"
    "\n"
    "VBN, WDT, GW, NN, TO, IN, JJR, WP, EX, VB, HYPH, JJ, SYM, :, RBR, MD, VBP, JJS, "
    "LS, WP$, $, VBD, VBZ, NFP, PRP, NNPS, CC, XX, ,, ``, NNP, -RRB-, CD, VBG, -LRB-, "
    "RP, NNS, PDT, AFX, RB, PRP$, UH, ., WRB, DT, FW, RBS, ADD, POS, ''\n"
    "\n"
    "Output the parse and nothing else. Here are some examples:";

std::string read_text_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open template file: " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    std::string text = buffer.str();
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
    return text;
}

}  // namespace

PromptTemplates PromptTemplates::defaults() {
    return PromptTemplates{kNerDescription, kParseDescription};
}

PromptTemplates PromptTemplates::from_dir(const std::string& dir) {
    PromptTemplates templates;
    templates.ner_description = read_text_file(dir + "/ner_task.txt");
    templates.parse_description = read_text_file(dir + "/parse_task.txt");
    return templates;
}

std::string separator_token_for(TaskKind task) {
    return task == TaskKind::ner ? "[TAGS]" : "[PARSE]";
}

PromptInstance build_prompt(TaskKind task, const std::vector<Sample>& demos,
                            const Sample& inference, PromptMode mode,
                            const PromptTemplates& templates) {
    PromptInstance prompt;
    prompt.task_description =
        task == TaskKind::ner ? templates.ner_description : templates.parse_description;
    prompt.mode = mode;
    prompt.separator_token = separator_token_for(task);
    prompt.inference_text = inference.surface();
    for (const auto& demo : demos) {
        if (!demo.annotation) {
            throw ArgumentError("demonstration sample " + demo.id + " is unannotated");
        }
        prompt.demos.emplace_back(demo.surface(), render_annotation(task, demo));
    }
    return prompt;
}

SampleIndex index_samples(const std::vector<Sample>& samples) {
    SampleIndex index;
    for (const auto& sample : samples) index[sample.id] = &sample;
    return index;
}

PromptInstance build_prompt(TaskKind task, const DemonstrationSet& demos,
                            const SampleIndex& index, const Sample& inference,
                            PromptMode mode, const PromptTemplates& templates) {
    std::vector<Sample> resolved;
    resolved.reserve(demos.demos.size());
    for (const auto& [id, _] : demos.demos) {
        auto it = index.find(id);
        if (it == index.end()) {
            throw ArgumentError("demonstration id " + id + " not found in sample index");
        }
        resolved.push_back(*it->second);
    }
    return build_prompt(task, resolved, inference, mode, templates);
}

json to_messages(const PromptInstance& prompt) {
    json messages = json::array();
    messages.push_back({{"role", "system"}, {"content", prompt.task_description}});
    for (const auto& [input, annotated] : prompt.demos) {
        messages.push_back({{"role", "user"}, {"content", input}});
        messages.push_back({{"role", "assistant"}, {"content", annotated}});
    }
    messages.push_back({{"role", "user"}, {"content", prompt.inference_text}});
    return messages;
}

std::string to_separator_text(const PromptInstance& prompt) {
    std::string out = prompt.task_description;
    out += "\n\n";
    for (const auto& [input, annotated] : prompt.demos) {
        out += input + "\n" + prompt.separator_token + "\n" + annotated + "\n\n";
    }
    out += prompt.inference_text + "\n" + prompt.separator_token;
    return out;
}

std::string prompt_payload(const PromptInstance& prompt) {
    return prompt.mode == PromptMode::message_pairs ? to_messages(prompt).dump()
                                                    : to_separator_text(prompt);
}

}  // namespace iclb
