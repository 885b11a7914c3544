#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "prunekit/allocator.hpp"
#include "prunekit/capacity.hpp"
#include "prunekit/dataset.hpp"
#include "prunekit/engine.hpp"
#include "prunekit/error.hpp"
#include "prunekit/model.hpp"
#include "prunekit/pruning.hpp"
#include "prunekit/sweep.hpp"

namespace py = pybind11;
using namespace prunekit;

namespace {

PruneMethod make_method(const std::string& name, std::optional<std::uint64_t> seed) {
    PruneMethod m{parse_prune_kind(name), seed};
    validate(m);
    return m;
}

AllocationMode mode_of(bool uniform) { return uniform ? AllocationMode::Uniform : AllocationMode::Layerwise; }

Dataset dataset_from_arrays(py::array_t<double, py::array::c_style | py::array::forcecast> images,
                            py::array_t<std::int64_t, py::array::c_style | py::array::forcecast> labels,
                            std::size_t num_classes) {
    if (images.ndim() != 4) throw validation_error("images must have shape (n, h, w, c)");
    if (labels.ndim() != 1 || labels.shape(0) != images.shape(0)) {
        throw validation_error("labels must have shape (n,) matching images");
    }
    Dataset d;
    d.image_shape = Shape{static_cast<std::size_t>(images.shape(1)), static_cast<std::size_t>(images.shape(2)),
                          static_cast<std::size_t>(images.shape(3))};
    d.num_classes = num_classes;
    d.pixels.assign(images.data(), images.data() + images.size());
    for (py::ssize_t i = 0; i < labels.shape(0); ++i) {
        const std::int64_t y = labels.at(i);
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes) throw validation_error("label out of range");
        d.labels.push_back(static_cast<std::uint16_t>(y));
    }
    validate(d);
    return d;
}

py::array_t<double> dataset_images(const Dataset& d) {
    const auto& s = d.image_shape;
    py::array_t<double> out({d.size(), s[0], s[1], s[2]});
    std::copy(d.pixels.begin(), d.pixels.end(), out.mutable_data());
    return out;
}

}  // namespace

PYBIND11_MODULE(_prunekit, m) {
    m.doc() = "Layer-wise sparsity allocation and pruning for small CNNs";

    static py::exception<Error> error_type(m, "PrunekitError");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object exc = py::reinterpret_borrow<py::object>(error_type.ptr())(e.what());
            exc.attr("kind") = e.exit_code();
            PyErr_SetObject(error_type.ptr(), exc.ptr());
        }
    });

    py::class_<Dataset>(m, "Dataset")
        .def_static("from_arrays", &dataset_from_arrays, py::arg("images"), py::arg("labels"), py::arg("num_classes"))
        .def_static("load", [](const std::filesystem::path& p) { return load_dataset(p); })
        .def_static(
            "synthetic",
            [](std::size_t count, std::size_t image_size, std::size_t channels, std::size_t num_classes, double noise,
               std::uint64_t seed) {
                return make_synthetic_dataset(SyntheticSpec{count, image_size, channels, num_classes, noise, seed});
            },
            py::arg("count") = 5000, py::arg("image_size") = 16, py::arg("channels") = 3, py::arg("num_classes") = 3,
            py::arg("noise") = 0.8, py::arg("seed") = 1)
        .def("save", [](const Dataset& d, const std::filesystem::path& p) { save_dataset(d, p); })
        .def("head", &Dataset::head)
        .def("tail_from", &Dataset::tail_from)
        .def("__len__", &Dataset::size)
        .def_property_readonly("image_shape", [](const Dataset& d) { return d.image_shape.dims(); })
        .def_readonly("num_classes", &Dataset::num_classes)
        .def_property_readonly("images", &dataset_images)
        .def_property_readonly("labels", [](const Dataset& d) { return d.labels; });

    py::class_<ModelGraph>(m, "Model")
        .def_static("load", [](const std::filesystem::path& p) { return load_model(p); })
        .def_static("simple_cnn", &simple_cnn_architecture)
        .def_static(
            "desk",
            [](std::size_t image_size, std::size_t in_channels, std::size_t conv1, std::size_t conv2, std::size_t fc,
               std::size_t classes) {
                return desk_architecture(DeskArchitecture{image_size, in_channels, conv1, conv2, fc, classes});
            },
            py::arg("image_size") = 16, py::arg("in_channels") = 3, py::arg("conv1_channels") = 8,
            py::arg("conv2_channels") = 8, py::arg("fc_units") = 32, py::arg("num_classes") = 3)
        .def("save", [](const ModelGraph& g, const std::filesystem::path& p) { save_model(g, p); })
        .def("initialize", [](ModelGraph& g, std::uint64_t seed) { initialize_weights(g, seed); }, py::arg("seed"))
        .def_property_readonly("layer_ids", [](const ModelGraph& g) {
            std::vector<std::string> ids;
            for (const auto& l : g.layers) ids.push_back(l.id);
            return ids;
        })
        .def_property_readonly("weighted_layer_ids", &ModelGraph::weighted_layer_ids)
        .def_property_readonly("prunable_layer_ids", &ModelGraph::prunable_layer_ids)
        .def_property_readonly("param_count", [](const ModelGraph& g) { return count_params(g).total; })
        .def_property_readonly("flop_count", [](const ModelGraph& g) { return count_flops(g).total; })
        .def("layer_params", [](const ModelGraph& g) {
            std::map<std::string, std::uint64_t> out;
            const LayerCounts c = count_params(g);
            for (std::size_t i = 0; i < g.layers.size(); ++i) out[g.layers[i].id] = c.per_layer[i];
            return out;
        })
        .def("kernel", [](const ModelGraph& g, const std::string& id) {
            const Tensor& k = g.weights_of(id).kernel;
            py::array_t<double> out(k.shape().dims());
            std::copy(k.data().begin(), k.data().end(), out.mutable_data());
            return out;
        })
        .def_property_readonly("checksum", &model_checksum)
        .def("__eq__", [](const ModelGraph& a, const ModelGraph& b) { return a == b; });

    m.def(
        "train",
        [](const ModelGraph& g, const Dataset& d, std::size_t epochs, double lr, double momentum, std::size_t batch_size,
           std::uint64_t seed) {
            py::gil_scoped_release release;
            return train(g, d, TrainConfig{epochs, lr, momentum, batch_size, seed});
        },
        py::arg("model"), py::arg("data"), py::arg("epochs") = 10, py::arg("lr") = 0.01, py::arg("momentum") = 0.9,
        py::arg("batch_size") = 32, py::arg("seed") = 0);
    m.def(
        "finetune",
        [](const ModelGraph& g, const KeepMasks& masks, const Dataset& d, std::size_t epochs, double lr, double momentum,
           std::size_t batch_size, std::uint64_t seed) {
            py::gil_scoped_release release;
            return finetune(g, masks, d, TrainConfig{epochs, lr, momentum, batch_size, seed});
        },
        py::arg("model"), py::arg("masks"), py::arg("data"), py::arg("epochs") = 3, py::arg("lr") = 1e-4,
        py::arg("momentum") = 0.9, py::arg("batch_size") = 32, py::arg("seed") = 0);
    m.def("evaluate", &evaluate, py::arg("model"), py::arg("data"));

    py::class_<LayerCapacity>(m, "LayerCapacity")
        .def_readonly("id", &LayerCapacity::id)
        .def_readonly("mu", &LayerCapacity::mu)
        .def_readonly("omega", &LayerCapacity::omega)
        .def_readonly("samples_used", &LayerCapacity::samples_used)
        .def_readonly("clamped", &LayerCapacity::clamped);
    py::class_<CapacityProfile>(m, "CapacityProfile")
        .def_readonly("layers", &CapacityProfile::layers)
        .def_readonly("warnings", &CapacityProfile::warnings)
        .def_readonly("omega_sum", &CapacityProfile::omega_sum)
        .def("__getitem__", &CapacityProfile::at)
        .def("to_json", [](const CapacityProfile& p) { return to_json(p).dump(2); })
        .def_static("from_json", [](const std::string& text) {
            return capacity_profile_from_json(nlohmann::json::parse(text));
        });
    m.def(
        "capacity_profile",
        [](const ModelGraph& g, const Dataset& d, std::optional<std::vector<std::string>> layers) {
            return capacity_profile(g, d, layers ? *layers : g.prunable_layer_ids());
        },
        py::arg("model"), py::arg("data"), py::arg("layers") = py::none());

    py::class_<LayerAllocation>(m, "LayerAllocation")
        .def_readonly("id", &LayerAllocation::id)
        .def_readonly("params", &LayerAllocation::params)
        .def_readonly("omega", &LayerAllocation::omega)
        .def_readonly("min_remaining", &LayerAllocation::min_remaining)
        .def_readonly("epsilon", &LayerAllocation::epsilon)
        .def_readonly("sparsity", &LayerAllocation::sparsity)
        .def_readonly("remaining", &LayerAllocation::remaining);
    py::class_<SparsityPlan>(m, "SparsityPlan")
        .def_readonly("target_sparsity", &SparsityPlan::target_sparsity)
        .def_readonly("alpha", &SparsityPlan::alpha)
        .def_readonly("layers", &SparsityPlan::layers)
        .def_readonly("residual", &SparsityPlan::residual)
        .def_property_readonly("mode", [](const SparsityPlan& p) { return to_string(p.mode); })
        .def("__getitem__", &SparsityPlan::at)
        .def("to_json", [](const SparsityPlan& p) { return to_json(p).dump(2); })
        .def_static("from_json", [](const std::string& text) {
            return sparsity_plan_from_json(nlohmann::json::parse(text));
        });

    m.def(
        "solve_allocation",
        [](const std::vector<std::uint64_t>& params, const std::vector<double>& omega,
           std::optional<std::vector<std::uint64_t>> floors, double s) {
            if (omega.size() != params.size() || (floors && floors->size() != params.size())) {
                throw validation_error("params, omega and floors must have equal length");
            }
            AllocationInput in;
            in.target_sparsity = s;
            for (std::size_t l = 0; l < params.size(); ++l) {
                in.layers.push_back(LayerBudget{"L" + std::to_string(l), params[l], omega[l], floors ? (*floors)[l] : 0});
            }
            return solve_allocation(in);
        },
        py::arg("params"), py::arg("omega"), py::arg("floors") = py::none(), py::arg("target"));
    m.def(
        "allocate",
        [](const ModelGraph& g, const CapacityProfile& profile, double s, bool uniform, std::uint64_t floor_multiplier) {
            return allocate(make_allocation_input(g, profile, s, floor_multiplier), mode_of(uniform));
        },
        py::arg("model"), py::arg("profile"), py::arg("target"), py::arg("uniform") = false,
        py::arg("floor_multiplier") = 3);

    py::class_<PruneResult>(m, "PruneResult")
        .def_readonly("model", &PruneResult::model)
        .def_readonly("masks", &PruneResult::masks)
        .def_readonly("removed_channels", &PruneResult::removed_channels)
        .def_readonly("planned_params", &PruneResult::planned_params)
        .def_readonly("achieved_remaining", &PruneResult::achieved_remaining)
        .def_readonly("achieved_sparsity", &PruneResult::achieved_sparsity)
        .def("save", [](const PruneResult& r, const std::filesystem::path& p) { save_prune_result(r, p); });
    m.def(
        "prune",
        [](const ModelGraph& g, const SparsityPlan& plan, const std::string& method, std::optional<std::uint64_t> seed) {
            return prune(g, plan, make_method(method, seed));
        },
        py::arg("model"), py::arg("plan"), py::arg("method") = "weight-magnitude", py::arg("seed") = py::none());
    m.def("load_masks", [](const std::filesystem::path& p) { return load_masks(p); });
    m.def(
        "achieved_remaining",
        [](const ModelGraph& g, const SparsityPlan& plan, const std::string& method, std::optional<std::uint64_t> seed) {
            return achieved_remaining(g, plan, make_method(method, seed));
        },
        py::arg("model"), py::arg("plan"), py::arg("method"), py::arg("seed") = py::none());

    py::class_<Calibration>(m, "Calibration")
        .def_readonly("s_hat", &Calibration::s_hat)
        .def_readonly("achieved", &Calibration::achieved)
        .def_readonly("target_remaining", &Calibration::target_remaining)
        .def_readonly("gap", &Calibration::gap);
    m.def(
        "calibrate_s_hat",
        [](const ModelGraph& g, const CapacityProfile& profile, double s, const std::string& method,
           std::optional<std::uint64_t> seed, bool uniform, std::uint64_t floor_multiplier) {
            return calibrate_s_hat(g, profile, s, make_method(method, seed), mode_of(uniform), floor_multiplier);
        },
        py::arg("model"), py::arg("profile"), py::arg("target"), py::arg("method"), py::arg("seed") = py::none(),
        py::arg("uniform") = false, py::arg("floor_multiplier") = 3);

    m.def(
        "sweep_csv",
        [](const ModelGraph& g, const CapacityProfile& profile, const Dataset& eval_set, const Dataset& finetune_set,
           const std::vector<double>& grid, const std::vector<std::string>& methods, const std::string& baseline,
           std::size_t trials, std::vector<std::uint64_t> seeds, bool with_finetune) {
            SweepSpec spec;
            spec.grid = grid;
            for (const auto& name : methods) spec.methods.push_back(parse_prune_kind(name));
            spec.baseline = parse_baseline(baseline);
            spec.trials = trials;
            spec.seeds = std::move(seeds);
            spec.finetune = with_finetune;
            py::gil_scoped_release release;
            return to_csv(run_sweep(g, profile, eval_set, finetune_set, spec));
        },
        py::arg("model"), py::arg("profile"), py::arg("eval_data"), py::arg("finetune_data"), py::arg("grid"),
        py::arg("methods") = std::vector<std::string>{"weight-magnitude"}, py::arg("baseline") = "both",
        py::arg("trials") = 10, py::arg("seeds") = std::vector<std::uint64_t>{}, py::arg("finetune") = false);
}
