#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "pixio/checkpoint.hpp"
#include "pixio/cli.hpp"
#include "pixio/curation.hpp"
#include "pixio/eval.hpp"
#include "pixio/gradcheck.hpp"

namespace py = pybind11;
using namespace pixio;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Image to_image(const U8Array& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw ContractError("expected an H x W x 3 uint8 array");
  Image img(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy_n(a.data(), img.rgb.size(), img.rgb.begin());
  return img;
}

U8Array from_image(const Image& img) {
  U8Array out({img.height, img.width, std::size_t{3}});
  std::copy(img.rgb.begin(), img.rgb.end(), out.mutable_data());
  return out;
}

py::array_t<float> from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<float> out(shape);
  std::copy_n(t.data(), t.numel(), out.mutable_data());
  return out;
}

py::dict case_dict(const GradcheckCase& c) {
  py::dict d;
  d["name"] = c.name;
  d["checked"] = c.checked;
  d["max_rel_err"] = c.max_rel_err;
  d["max_abs_err"] = c.max_abs_err;
  d["passed"] = c.passed;
  return d;
}

// Frozen encoder loaded from a checkpoint.
class Encoder {
 public:
  explicit Encoder(const std::string& path) : model_(model_from_checkpoint(load_checkpoint(path))) {}

  py::array_t<float> features(const std::vector<U8Array>& images, std::size_t block, const std::string& source) const {
    std::vector<Image> imgs;
    for (const auto& a : images) imgs.push_back(to_image(a));
    return from_tensor(extract_features(model_, imgs, block == 0 ? model_.config().enc_depth : block,
                                        parse_feature_source(source)));
  }

  py::dict reconstruct(const U8Array& image, double ratio, std::size_t granularity, std::uint64_t seed) const {
    const auto demo = reconstruct_demo(model_, {to_image(image)}, ratio, granularity, seed);
    py::dict d;
    d["masked"] = from_image(demo[0].masked);
    d["reconstruction"] = from_image(demo[0].reconstruction);
    d["truth"] = from_image(demo[0].truth);
    d["mask"] = demo[0].plan.mask;
    return d;
  }

  py::dict config() const {
    KeyValues kv;
    model_.config().write(kv, "");
    py::dict d;
    for (const auto& [k, v] : kv.entries()) d[py::str(k)] = v;
    return d;
  }

  std::size_t num_params() const { return model_.params().numel(); }

 private:
  PixioModel model_;
};

}  // namespace

PYBIND11_MODULE(_pixio, m) {
  m.doc() = "Pixio masked pixel autoencoder";

  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = run_cli(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run one pixio subcommand in process; returns (exit_code, stdout, stderr).");

  m.def(
      "gradcheck",
      [](const std::string& precision, bool include_model) {
        GradcheckOptions opt;
        opt.include_model = include_model;
        GradcheckReport r;
        if (precision == "f32") {
          r = f32::run_gradcheck(opt);
        } else if (precision == "f64") {
          r = f64::run_gradcheck(opt);
        } else {
          throw ConfigError("precision must be f32 or f64");
        }
        py::list cases;
        for (const auto& c : r.cases) cases.append(case_dict(c));
        return cases;
      },
      py::arg("precision") = "f64", py::arg("include_model") = false);

  m.def(
      "sample_block_mask",
      [](double ratio, std::size_t granularity, std::size_t grid_h, std::size_t grid_w, std::uint64_t seed) {
        Rng rng(seed);
        const MaskPlan p = sample_block_mask(MaskConfig{ratio, granularity, grid_h, grid_w}, rng);
        py::array_t<bool> out({grid_h, grid_w});
        std::copy(p.mask.begin(), p.mask.end(), out.mutable_data());
        return out;
      },
      py::arg("ratio"), py::arg("granularity"), py::arg("grid_h"), py::arg("grid_w"), py::arg("seed") = 0);

  m.def("color_entropy", [](const U8Array& a) { return color_entropy(to_image(a)); }, py::arg("image"),
        "Mean per-channel histogram entropy in bits.");
  m.def("delta1", &delta1, py::arg("pred"), py::arg("truth"));
  m.def("rmse", &rmse, py::arg("pred"), py::arg("truth"));

  m.def(
      "synthetic_images",
      [](std::uint64_t seed, std::size_t count, std::size_t size) {
        py::list out;
        for (const auto& img : synthetic_corpus(seed, count, size).images) out.append(from_image(img));
        return out;
      },
      py::arg("seed"), py::arg("count"), py::arg("size") = 64);

  py::class_<Encoder>(m, "Encoder")
      .def(py::init<const std::string&>(), py::arg("checkpoint"))
      .def("features", &Encoder::features, py::arg("images"), py::arg("block") = 0, py::arg("source") = "cls-mean",
           "One row per image from the normed states after `block` (0: last block).")
      .def("reconstruct", &Encoder::reconstruct, py::arg("image"), py::arg("ratio") = 0.75,
           py::arg("granularity") = 2, py::arg("seed") = 0)
      .def_property_readonly("config", &Encoder::config)
      .def_property_readonly("num_params", &Encoder::num_params);
}
