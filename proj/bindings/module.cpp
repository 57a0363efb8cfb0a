// Python bindings. Structured values cross the boundary as JSON strings;
// the iclbudget package wraps them with json.loads/dumps.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "iclb/analysis.hpp"
#include "iclb/corpus.hpp"
#include "iclb/embedding.hpp"
#include "iclb/errors.hpp"
#include "iclb/evalmetrics.hpp"
#include "iclb/experiment.hpp"
#include "iclb/promptcodec.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

std::vector<iclb::Sample> samples_from_jsonl(iclb::TaskKind task,
                                             const std::string& text) {
    return task == iclb::TaskKind::ner ? iclb::parse_ner_jsonl(text)
                                       : iclb::parse_parse_jsonl(text);
}

iclb::Sample sample_from_json(iclb::TaskKind task, const std::string& sample_json) {
    auto samples = samples_from_jsonl(task, sample_json + "\n");
    if (samples.size() != 1) {
        throw iclb::ArgumentError("expected exactly one sample object");
    }
    return samples.front();
}

// Codec whose label vocabularies are the ones observed in `samples`, so a
// rendered gold annotation always parses back.
iclb::CodecConfig codec_for(iclb::TaskKind task,
                            const std::vector<iclb::Sample>& samples) {
    iclb::CodecConfig codec = iclb::CodecConfig::defaults();
    std::vector<std::string> labels;
    for (const auto& sample : samples) {
        if (!sample.annotation.has_value()) continue;
        if (task == iclb::TaskKind::ner) {
            for (const auto& span : sample.ner().entities) labels.push_back(span.type);
        } else {
            for (const auto& row : sample.parse().rows) labels.push_back(row.pos);
        }
    }
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    if (task == iclb::TaskKind::ner) {
        codec.entity_types = labels;
    } else if (!labels.empty()) {
        codec.pos_tags = labels;
    }
    return codec;
}

json report_to_json(const iclb::EvalReport& report) {
    json cells = json::array();
    for (const auto& cell : report.cells) cells.push_back(cell.to_json());
    json rows = json::array();
    for (const auto& row : report.aggregate_rows) {
        rows.push_back(json{{"task", row.task},
                            {"model_tag", row.model_tag},
                            {"strategy", row.strategy},
                            {"pool_size", row.pool_size},
                            {"trials", row.trials},
                            {"mean", row.mean},
                            {"std", row.stddev},
                            {"oracle_value", row.oracle_value},
                            {"percent_of_oracle", row.percent_of_oracle}});
    }
    return json{{"run_dir", report.run_dir},
                {"failed_cells", report.failed_cells},
                {"oracle_value", report.oracle_value},
                {"cells", cells},
                {"aggregate", rows}};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Budget-constrained demonstration selection toolkit (C++ core)";
    m.attr("__version__") = "0.1.0";

    py::register_exception<iclb::Error>(m, "IclbError", PyExc_RuntimeError);

    m.def("conllu_to_jsonl",
          [](const std::string& text) {
              return iclb::write_samples_jsonl(iclb::parse_conllu(text));
          },
          py::arg("text"), "CoNLL-U text -> canonical JSONL");

    m.def("run_json",
          [](const std::string& config_path) {
              auto report = iclb::run(iclb::ExperimentConfig::load_file(config_path));
              return report_to_json(report).dump();
          },
          py::arg("config_path"), "Execute the full sweep; returns a report JSON");

    m.def("run_oracle_json",
          [](const std::string& config_path) {
              auto cell =
                  iclb::run_oracle(iclb::ExperimentConfig::load_file(config_path));
              return cell.to_json().dump();
          },
          py::arg("config_path"));

    m.def("resume_json",
          [](const std::string& manifest_path) {
              return report_to_json(iclb::resume(manifest_path)).dump();
          },
          py::arg("manifest_path"));

    m.def("report_json",
          [](const std::string& run_dir) {
              return report_to_json(iclb::report(run_dir)).dump();
          },
          py::arg("run_dir"));

    m.def("max_pool_size",
          [](const std::string& config_path) {
              auto inputs =
                  iclb::prepare_inputs(iclb::ExperimentConfig::load_file(config_path));
              return inputs.max_pool_size;
          },
          py::arg("config_path"));

    m.def("select_pool_json",
          [](const std::string& config_path, const std::string& strategy, std::size_t k,
             std::uint64_t seed) {
              auto config = iclb::ExperimentConfig::load_file(config_path);
              auto inputs = iclb::prepare_inputs(config);
              iclb::GeometryOptions geometry{config.l2_normalize};
              iclb::Pool pool;
              if (strategy == "random") {
                  pool = iclb::select_random(inputs.train_ids, k, seed);
              } else if (strategy == "central") {
                  pool = iclb::select_central(inputs.store, inputs.train_ids, k,
                                              geometry);
              } else if (strategy == "cluster") {
                  pool = iclb::select_cluster(inputs.store, inputs.train_ids, k, seed,
                                              geometry);
              } else if (strategy == "votek") {
                  pool = iclb::select_vote_k(inputs.store, inputs.train_ids, k,
                                             config.votek, std::nullopt, seed, geometry);
              } else {
                  throw iclb::ConfigError("unknown strategy: " + strategy);
              }
              return pool.to_json().dump();
          },
          py::arg("config_path"), py::arg("strategy"), py::arg("k"), py::arg("seed"));

    m.def("render_annotation",
          [](const std::string& task, const std::string& sample_json) {
              iclb::TaskKind kind = iclb::task_from_string(task);
              return iclb::render_annotation(kind, sample_from_json(kind, sample_json));
          },
          py::arg("task"), py::arg("sample_json"));

    m.def("parse_completion_json",
          [](const std::string& task, const std::string& output,
             const std::string& sample_json) {
              iclb::TaskKind kind = iclb::task_from_string(task);
              iclb::Sample sample = sample_from_json(kind, sample_json);
              iclb::CodecConfig codec = codec_for(kind, {sample});
              iclb::ParsedCompletion parsed =
                  iclb::parse_completion(kind, output, sample, codec);
              json out{{"ok", parsed.ok()},
                       {"raw", parsed.raw},
                       {"error_detail", parsed.error_detail}};
              if (parsed.ok()) {
                  iclb::Sample annotated = sample;
                  annotated.annotation = parsed.annotation;
                  std::string line = iclb::write_samples_jsonl({annotated});
                  if (!line.empty() && line.back() == '\n') line.pop_back();
                  out["sample"] = json::parse(line);
              }
              return out.dump();
          },
          py::arg("task"), py::arg("output"), py::arg("sample_json"));

    m.def("score_json",
          [](const std::string& task, const std::string& samples_jsonl,
             const std::vector<std::string>& outputs) {
              iclb::TaskKind kind = iclb::task_from_string(task);
              auto samples = samples_from_jsonl(kind, samples_jsonl);
              if (samples.size() != outputs.size()) {
                  throw iclb::ArgumentError("outputs are misaligned with samples");
              }
              iclb::CodecConfig codec = codec_for(kind, samples);
              std::vector<iclb::ParsedCompletion> preds;
              preds.reserve(outputs.size());
              for (std::size_t i = 0; i < outputs.size(); ++i) {
                  preds.push_back(
                      iclb::parse_completion(kind, outputs[i], samples[i], codec));
              }
              return iclb::score_samples(kind, samples, preds).to_json().dump();
          },
          py::arg("task"), py::arg("samples_jsonl"), py::arg("outputs"));

    m.def("entropy",
          [](const std::map<std::string, long long>& counts) {
              return iclb::entropy(counts);
          },
          py::arg("counts"));

    m.def("pearson",
          [](const std::vector<double>& xs, const std::vector<double>& ys) {
              iclb::PearsonResult result = iclb::pearson(xs, ys);
              return py::make_tuple(result.r, result.p_value);
          },
          py::arg("xs"), py::arg("ys"));

    m.def("cosine_similarity",
          [](const std::vector<double>& a, const std::vector<double>& b) {
              return iclb::cosine_similarity(iclb::EmbeddingVector(a),
                                             iclb::EmbeddingVector(b));
          },
          py::arg("a"), py::arg("b"));

    m.def("hash_embed",
          [](const std::vector<std::string>& texts, std::size_t dim,
             std::uint64_t seed) {
              iclb::HashEmbeddingProvider provider(dim, seed);
              std::vector<std::vector<double>> out;
              out.reserve(texts.size());
              for (const auto& vec : provider.embed(texts)) out.push_back(vec.values);
              return out;
          },
          py::arg("texts"), py::arg("dim") = 64, py::arg("seed") = 0);
}
