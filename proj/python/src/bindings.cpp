#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "r2upp/checkpoint.hpp"
#include "r2upp/data.hpp"
#include "r2upp/graph.hpp"
#include "r2upp/loss.hpp"
#include "r2upp/metrics.hpp"
#include "r2upp/ops.hpp"
#include "r2upp/trainer.hpp"

namespace py = pybind11;
using namespace r2upp;

namespace {

Tensor to_tensor(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 4) throw ShapeError("expected a 4-d NCHW array");
    Tensor t(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
             static_cast<int>(a.shape(2)), static_cast<int>(a.shape(3)));
    std::copy(a.data(), a.data() + t.numel(), t.data.begin());
    return t;
}

py::array_t<double> from_tensor(const Tensor& t) {
    py::array_t<double> a({t.n(), t.c(), t.h(), t.w()});
    std::copy(t.data.begin(), t.data.end(), a.mutable_data());
    return a;
}

py::array_t<double> from_image(const data::Image& img) {
    py::array_t<double> a({img.h, img.w});
    std::copy(img.px.begin(), img.px.end(), a.mutable_data());
    return a;
}

data::Image to_image(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw ShapeError("expected a 2-d HxW array");
    data::Image img(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
    std::copy(a.data(), a.data() + img.px.size(), img.px.begin());
    return img;
}

ArchitectureConfig make_arch(int depth, std::vector<int> filters, const std::string& block,
                             int t, const std::string& skips, bool deep_supervision) {
    ArchitectureConfig c;
    c.depth = depth;
    if (!filters.empty()) c.filters = std::move(filters);
    if (block == "plain")
        c.block_kind = BlockKind::Plain;
    else if (block == "rrcl")
        c.block_kind = BlockKind::Rrcl;
    else
        throw ConfigError("block must be 'plain' or 'rrcl'");
    c.t = t;
    if (skips == "simple")
        c.skip_style = SkipStyle::Simple;
    else if (skips == "dense")
        c.skip_style = SkipStyle::Dense;
    else
        throw ConfigError("skips must be 'dense' or 'simple'");
    c.deep_supervision = deep_supervision;
    c.validate();
    return c;
}

class PyModel {
public:
    PyModel(int depth, std::vector<int> filters, const std::string& block, int t,
            const std::string& skips, bool deep_supervision, uint64_t seed)
        : model_(build_model(
              make_arch(depth, std::move(filters), block, t, skips, deep_supervision), seed)) {}

    explicit PyModel(Model m) : model_(std::move(m)) {}

    // the parameter store holds unique_ptrs; keep pybind11 from instantiating
    // a copy constructor that cannot compile
    PyModel(const PyModel&) = delete;
    PyModel(PyModel&&) = default;

    size_t num_parameters() const { return count_parameters(model_.arch); }

    std::string graph() const { return dump_plan(model_.plan); }

    py::array_t<double> predict(
        const py::array_t<double, py::array::c_style | py::array::forcecast>& image,
        const std::string& mode) {
        data::Image img = to_image(image);
        if (mode == "ensemble")
            return from_image(predict_probability(model_, img, EvalMode::Ensemble));
        if (mode.size() == 2 && mode[0] == 'L')
            return from_image(
                predict_probability(model_, img, EvalMode::SingleHead, mode[1] - '0'));
        throw ConfigError("mode must be 'ensemble' or 'L<q>'");
    }

    std::vector<py::array_t<double>> forward_heads(
        const py::array_t<double, py::array::c_style | py::array::forcecast>& batch) {
        ForwardResult fwd =
            forward(model_.plan, model_.arch, model_.store, to_tensor(batch), false);
        std::vector<py::array_t<double>> out;
        for (const autograd::Var& h : fwd.heads) out.push_back(from_tensor(h->value));
        return out;
    }

    py::dict fit_synthetic(uint64_t data_seed, int count, int size, int max_epochs,
                           double train_dice_stop, uint64_t seed) {
        std::vector<data::ImageSample> set = data::synth_dataset(data_seed, count, size);
        TrainConfig cfg;
        cfg.max_epochs = max_epochs;
        cfg.patience = max_epochs;
        cfg.train_dice_stop = train_dice_stop;
        cfg.seed = seed;
        FitResult r = fit(model_, set, set, cfg);
        py::dict d;
        d["epochs"] = r.history.size();
        d["train_dice"] = r.final_train_dice;
        d["best_val_loss"] = r.best_val_loss;
        return d;
    }

    void save(const std::string& path) const { save_checkpoint(model_, path); }

    static PyModel load(const std::string& path) { return PyModel(load_checkpoint(path)); }

private:
    Model model_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "nested recurrent-residual encoder-decoder segmentation core";

    m.def(
        "conv2d",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& w,
           const std::vector<double>& bias, int stride, int padding) {
            return from_tensor(ops::conv2d(to_tensor(x), to_tensor(w), bias, stride, padding));
        },
        py::arg("x"), py::arg("weight"), py::arg("bias") = std::vector<double>{},
        py::arg("stride") = 1, py::arg("padding") = 0);

    m.def("maxpool_2x2",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x) {
              return from_tensor(ops::maxpool_2x2(to_tensor(x)).output);
          });

    m.def("upsample_2x",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
             const py::array_t<double, py::array::c_style | py::array::forcecast>& w) {
              return from_tensor(ops::upsample_2x(to_tensor(x), to_tensor(w)));
          });

    m.def("hybrid_loss",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& labels,
             const py::array_t<double, py::array::c_style | py::array::forcecast>& probs) {
              return hybrid_loss_value(to_tensor(labels), to_tensor(probs));
          });

    m.def("dice", &metrics::dice);
    m.def("iou", &metrics::iou);
    m.def("accuracy", &metrics::accuracy);
    m.def("sensitivity", &metrics::sensitivity);
    m.def("specificity", &metrics::specificity);

    m.def("synth_dataset", [](uint64_t seed, int count, int size) {
        py::list out;
        for (const data::ImageSample& s : data::synth_dataset(seed, count, size))
            out.append(py::make_tuple(s.id, from_image(s.image), from_image(s.mask)));
        return out;
    });

    m.def("load_pgm", [](const std::string& p) { return from_image(data::load_pgm(p)); });
    m.def("save_pgm",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
             const std::string& p) { data::save_pgm(to_image(a), p); });

    py::class_<PyModel>(m, "Model")
        .def(py::init<int, std::vector<int>, const std::string&, int, const std::string&, bool,
                      uint64_t>(),
             py::arg("depth") = 4, py::arg("filters") = std::vector<int>{},
             py::arg("block") = "rrcl", py::arg("t") = 2, py::arg("skips") = "dense",
             py::arg("deep_supervision") = true, py::arg("seed") = 0)
        .def_property_readonly("num_parameters", &PyModel::num_parameters)
        .def("graph", &PyModel::graph)
        .def("predict", &PyModel::predict, py::arg("image"), py::arg("mode") = "ensemble")
        .def("forward_heads", &PyModel::forward_heads)
        .def("fit_synthetic", &PyModel::fit_synthetic, py::arg("data_seed") = 1,
             py::arg("count") = 4, py::arg("size") = 32, py::arg("max_epochs") = 10,
             py::arg("train_dice_stop") = 0.0, py::arg("seed") = 0)
        .def("save", &PyModel::save)
        .def_static("load", &PyModel::load);

    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<data::DataError>(m, "DataError", PyExc_IOError);
    py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_ValueError);
}
