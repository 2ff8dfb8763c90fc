// Python surface. Structured values cross the boundary as JSON text; the
// ticl package wraps these functions with dict-based signatures.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ticl/client.hpp"
#include "ticl/error.hpp"
#include "ticl/hash.hpp"
#include "ticl/metrics.hpp"
#include "ticl/prompt.hpp"
#include "ticl/runner.hpp"
#include "ticl/selection.hpp"
#include "ticl/store.hpp"
#include "ticl/tags.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

ticl::TaskRegistry registry_from(const std::string& extra_tasks) {
  auto registry = ticl::TaskRegistry::builtin();
  if (!extra_tasks.empty()) {
    for (const auto& t : json::parse(extra_tasks)) registry.register_task(ticl::task_spec_from_json(t));
  }
  return registry;
}

std::vector<ticl::PredictionRecord> records_from(const std::string& s) {
  std::vector<ticl::PredictionRecord> out;
  for (const auto& j : json::parse(s)) out.push_back(ticl::record_from_json(j));
  return out;
}

std::vector<ticl::Gold> golds_from(const std::string& s) {
  std::vector<ticl::Gold> out;
  for (const auto& j : json::parse(s)) {
    ticl::Gold g;
    g.sample_id = j.at("sample_id");
    if (j.contains("label")) g.label = j.at("label").get<std::string>();
    g.answers = j.value("answers", std::vector<std::string>{});
    out.push_back(std::move(g));
  }
  return out;
}

std::string aggregate_tags(const std::string& bundle) {
  auto tags = ticl::tags::aggregate(ticl::tags::bundle_from_json(json::parse(bundle)));
  auto group = [](const std::vector<ticl::tags::ScoredLabel>& g) {
    return ticl::tags::labels_of(g);
  };
  json j = {{"image_type", tags.image_type ? json(tags.image_type->label) : json(nullptr)},
            {"objects", group(tags.objects)},
            {"scenes", group(tags.scenes)},
            {"facial_expressions", group(tags.facial_expressions)},
            {"text", ticl::tags::render_tagset(tags)}};
  return j.dump();
}

std::string parse_answer(const std::string& raw, const std::string& task_id,
                         const std::string& extra_tasks) {
  auto registry = registry_from(extra_tasks);
  auto p = ticl::parse_answer(raw, registry.get(task_id));
  return json{{"parsed", p.parsed},
              {"matched", p.matched ? json(*p.matched) : json(nullptr)},
              {"valid", p.valid}}
      .dump();
}

std::string build_prompt(const std::string& task_id, const std::string& samples,
                         const std::string& eval, const std::string& verbalizations,
                         const std::string& method_id, double chars_per_token) {
  auto registry = ticl::TaskRegistry::builtin();
  const auto& spec = registry.get(task_id);
  std::vector<ticl::Sample> shots;
  for (const auto& j : json::parse(samples)) shots.push_back(ticl::sample_from_json(j));
  auto e = ticl::sample_from_json(json::parse(eval));
  ticl::VerbalizationStore store;
  for (const auto& j : json::parse(verbalizations)) {
    store.add({j.at("image_id"), j.at("method_id"), j.at("text")});
  }
  auto p = ticl::build_prompt(spec, ticl::default_template(spec.template_id), shots, e, store,
                              method_id, ticl::TokenCounter::approximate(chars_per_token));
  return json{{"text", p.text},
              {"task_description", p.task_description},
              {"sample_blocks", p.sample_blocks},
              {"eval_block", p.eval_block},
              {"token_count", p.token_count}}
      .dump();
}

std::string run_experiment(const std::string& config, const std::string& base_dir) {
  auto cfg = ticl::config_from_json(json::parse(config), base_dir);
  ticl::RunResult result;
  {
    py::gil_scoped_release release;
    result = ticl::run_experiment(cfg);
  }
  json records = json::array();
  for (const auto& r : result.records) records.push_back(ticl::to_json(r));
  return json{{"report", ticl::to_json(result.report)},
              {"records", records},
              {"backend_calls", result.backend_calls},
              {"cache_hits", result.cache_hits}}
      .dump();
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  return ticl::cosine_similarity(ticl::EmbeddingVector(a), ticl::EmbeddingVector(b));
}

}  // namespace

PYBIND11_MODULE(_ticl, m) {
  m.doc() = "Text-visual in-context learning harness (native core)";

  auto& error = py::register_exception<ticl::Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ticl::ValidationError>(m, "ValidationError", error.ptr());
  py::register_exception<ticl::BudgetError>(m, "BudgetError", error.ptr());
  py::register_exception<ticl::ParseError>(m, "ParseError", error.ptr());
  py::register_exception<ticl::BackendError>(m, "BackendError", error.ptr());

  m.def("task_ids", [] { return ticl::TaskRegistry::builtin().task_ids(); });
  m.def("task_spec", [](const std::string& id) {
    return ticl::to_json(ticl::TaskRegistry::builtin().get(id)).dump();
  });
  m.def("aggregate_tags", &aggregate_tags, py::arg("bundle_json"));
  m.def("cosine_similarity", &cosine, py::arg("a"), py::arg("b"));
  m.def("count_tokens", [](const std::string& t, double cpt) { return ticl::count_tokens(t, cpt); },
        py::arg("text"), py::arg("chars_per_token") = 4.0);
  m.def("default_template", [](const std::string& id) {
    return ticl::serialize_template(ticl::default_template(id));
  });
  m.def("build_prompt", &build_prompt, py::arg("task_id"), py::arg("samples_json"),
        py::arg("eval_json"), py::arg("verbalizations_json"), py::arg("method_id"),
        py::arg("chars_per_token") = 4.0);
  m.def("extract_generation", &ticl::extract_generation, py::arg("output"), py::arg("echoed"));
  m.def("parse_answer", &parse_answer, py::arg("raw"), py::arg("task_id"),
        py::arg("extra_tasks_json") = "");
  m.def("accuracy", [](const std::string& r, const std::string& g) {
    return ticl::accuracy(records_from(r), golds_from(g));
  });
  m.def("macro_f1", [](const std::string& r, const std::string& g, const std::vector<std::string>& labels) {
    return ticl::macro_f1(records_from(r), golds_from(g), labels);
  });
  m.def("vqa_exact_match", [](const std::string& r, const std::string& g) {
    return ticl::vqa_exact_match(records_from(r), golds_from(g));
  });
  m.def("kfold_mean", [](const std::vector<double>& v, std::optional<std::size_t> expected) {
    return ticl::kfold_mean(v, expected);
  }, py::arg("per_fold"), py::arg("expected_folds") = py::none());
  m.def("sha256_hex", [](const std::string& s) { return ticl::sha256_hex(s); });
  m.def("run_experiment", &run_experiment, py::arg("config_json"), py::arg("base_dir") = "");
}
