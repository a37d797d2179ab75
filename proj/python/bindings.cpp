#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "cavq/checkpoint.hpp"
#include "cavq/cli.hpp"
#include "cavq/curriculum.hpp"
#include "cavq/dataset.hpp"
#include "cavq/errors.hpp"
#include "cavq/metrics.hpp"
#include "cavq/model.hpp"

namespace py = pybind11;
using namespace cavq;

namespace {

py::array_t<double> to_numpy(const Tensor& t) {
  py::array_t<double> a({t.rows(), t.cols()});
  std::copy(t.data().begin(), t.data().end(), a.mutable_data());
  return a;
}

py::tuple run_cli(const std::vector<std::string>& args) {
  std::vector<std::string> full = {"cavq"};
  full.insert(full.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : full) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code;
  {
    py::gil_scoped_release release;
    code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Curriculum paraphrase-augmentation engine";

  auto error = py::register_exception<Error>(m, "Error");
  py::register_exception<ValidationError>(m, "ValidationError", error);
  py::register_exception<ContractError>(m, "ContractError", error);
  py::register_exception<FormatError>(m, "FormatError", error);
  py::register_exception<IntegrityError>(m, "IntegrityError", error);
  py::register_exception<DimensionError>(m, "DimensionError", error);

  py::enum_<ScheduleKind>(m, "ScheduleKind")
      .value("FIXED", ScheduleKind::Fixed)
      .value("LINEAR", ScheduleKind::LinearPerEpoch)
      .value("COSINE", ScheduleKind::CosinePerStep);

  py::class_<Schedule>(m, "Schedule")
      .def_static("fixed", &Schedule::fixed, py::arg("t"), py::arg("horizon") = 1)
      .def_static("linear", &Schedule::linear, py::arg("t_max"), py::arg("t_min"), py::arg("epochs"))
      .def_static("cosine", &Schedule::cosine, py::arg("t_max"), py::arg("t_min"), py::arg("steps"))
      .def_readonly("kind", &Schedule::kind)
      .def_readonly("t_max", &Schedule::t_max)
      .def_readonly("t_min", &Schedule::t_min)
      .def_readonly("horizon", &Schedule::horizon)
      .def("validate", &Schedule::validate)
      .def("threshold", [](const Schedule& s, std::uint64_t epoch, std::uint64_t step) {
        s.validate();
        return threshold_at(s, epoch, step);
      }, py::arg("epoch"), py::arg("step") = 0);

  m.def("schedule_csv", [](const Schedule& s, std::uint64_t steps_per_epoch, double samples_per_epoch) {
    return trace_to_csv(schedule_trace(s, steps_per_epoch, samples_per_epoch));
  }, py::arg("schedule"), py::arg("steps_per_epoch") = 1, py::arg("samples_per_epoch") = 16.0);

  m.def("accuracy", [](const std::vector<std::size_t>& predictions, const std::vector<std::size_t>& labels) {
    return accuracy(predictions, labels);
  }, py::arg("predictions"), py::arg("labels"));
  m.def("tokenize", &tokenize, py::arg("text"));
  m.def("cider", [](const std::vector<std::string>& candidates, const std::vector<std::vector<std::string>>& refs,
                    const std::string& weighting) {
    CiderConfig c;
    if (weighting == "tfidf") {
      c.weighting = NgramWeighting::TfIdf;
    } else if (weighting != "raw") {
      throw ValidationError("unknown weighting '" + weighting + "'");
    }
    return cider(candidates, refs, c);
  }, py::arg("candidates"), py::arg("references"), py::arg("weighting") = "raw");

  py::class_<SyntheticSpec>(m, "SyntheticSpec")
      .def(py::init<>())
      .def_readwrite("num_classes", &SyntheticSpec::num_classes)
      .def_readwrite("samples_per_class", &SyntheticSpec::samples_per_class)
      .def_readwrite("d_img", &SyntheticSpec::d_img)
      .def_readwrite("d_text", &SyntheticSpec::d_text)
      .def_readwrite("pool_size", &SyntheticSpec::pool_size)
      .def_readwrite("paraphrase_noise", &SyntheticSpec::paraphrase_noise)
      .def_readwrite("separation", &SyntheticSpec::separation)
      .def_readwrite("question_noise", &SyntheticSpec::question_noise)
      .def_readwrite("label_image_correlation", &SyntheticSpec::label_image_correlation)
      .def("validate", &SyntheticSpec::validate);

  m.def("generate", [](const SyntheticSpec& spec, std::uint64_t seed, const std::filesystem::path& dir) {
    const DatasetSplits s = generate_synthetic(spec, seed);
    save_dataset(dir, s);
    return py::dict(py::arg("train") = s.train.size(), py::arg("dev") = s.dev.size(),
                    py::arg("test") = s.test.size());
  }, py::arg("spec"), py::arg("seed"), py::arg("directory"),
        "Generates a synthetic dataset and writes it to `directory`; returns split sizes.");

  m.def("load_checkpoint", [](const std::filesystem::path& path) {
    const Checkpoint ck = load_checkpoint(path);
    py::dict weights;
    for (std::size_t i = 0; i < ModelParams::kCount; ++i) {
      weights[py::str(std::string(ModelParams::kNames[i]))] = to_numpy(ck.params.at(i));
    }
    py::dict dims(py::arg("d") = ck.dims.d, py::arg("d_img") = ck.dims.d_img, py::arg("d_text") = ck.dims.d_text,
                  py::arg("d_k") = ck.dims.d_k, py::arg("num_classes") = ck.dims.num_classes);
    return py::dict(py::arg("weights") = weights, py::arg("dims") = dims,
                    py::arg("metadata") = py::module_::import("json").attr("loads")(ck.metadata.dump()));
  }, py::arg("path"));

  m.def("run_cli", &run_cli, py::arg("args"), "Runs the command-line tool in-process; returns (code, stdout, stderr).");
}
