// prunekit command-line tool.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "prunekit/allocator.hpp"
#include "prunekit/capacity.hpp"
#include "prunekit/checksum.hpp"
#include "prunekit/dataset.hpp"
#include "prunekit/engine.hpp"
#include "prunekit/error.hpp"
#include "prunekit/model.hpp"
#include "prunekit/pruning.hpp"
#include "prunekit/rng.hpp"
#include "prunekit/sweep.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace prunekit;

namespace {

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<double> parse_grid(const std::string& text) {
    std::vector<double> grid;
    for (const auto& item : split_list(text)) {
        try {
            std::size_t used = 0;
            grid.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw validation_error("bad sparsity value '" + item + "'");
        }
    }
    return grid;
}

void check_target(double s) {
    if (!(s >= 0.0 && s < 1.0)) throw validation_error("--target must lie in [0, 1), got " + num(s));
}

Dataset subsample(const Dataset& d, std::size_t n, std::uint64_t seed) {
    if (n == 0 || n >= d.size()) return d;
    Rng rng(seed);
    std::vector<std::size_t> idx = rng.permutation(d.size());
    idx.resize(n);
    std::sort(idx.begin(), idx.end());
    return d.subset(idx);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw io_error("cannot write " + path.string());
    out << text;
    if (!out) throw io_error("failed writing " + path.string());
}

struct SynthArgs {
    std::string out, test_out;
    std::size_t count = 5000, test_count = 1000, size = 16, channels = 3, classes = 3;
    double noise = SyntheticSpec{}.noise;
    std::uint64_t seed = 1;
};

int cmd_synth(const SynthArgs& a) {
    SyntheticSpec spec;
    spec.count = a.count;
    spec.image_size = a.size;
    spec.channels = a.channels;
    spec.num_classes = a.classes;
    spec.noise = a.noise;
    spec.seed = a.seed;
    const Dataset d = make_synthetic_dataset(spec);
    if (a.test_out.empty()) {
        save_dataset(d, a.out);
        std::cout << "samples=" << d.size() << "\n";
        return 0;
    }
    if (a.test_count >= d.size()) throw validation_error("--test-count must be smaller than --count");
    const std::size_t n_train = d.size() - a.test_count;
    save_dataset(d.head(n_train), a.out);
    save_dataset(d.tail_from(n_train), a.test_out);
    std::cout << "train_samples=" << n_train << " test_samples=" << a.test_count << "\n";
    return 0;
}

struct TrainArgs {
    std::string model, arch = "desk", data, out;
    std::uint64_t init_seed = 0;
    TrainConfig cfg{10, 0.01, 0.9, 32, 0};
};

int cmd_train(const TrainArgs& a) {
    const Dataset d = load_dataset(a.data);
    ModelGraph g;
    if (!a.model.empty()) {
        g = load_model(a.model);
    } else {
        if (a.arch == "desk") {
            DeskArchitecture arch;
            arch.image_size = d.image_shape[0];
            arch.in_channels = d.image_shape[2];
            arch.num_classes = d.num_classes;
            g = desk_architecture(arch);
        } else if (a.arch == "simple") {
            g = simple_cnn_architecture();
        } else {
            throw validation_error("unknown architecture '" + a.arch + "' (expected desk or simple)");
        }
        initialize_weights(g, a.init_seed);
    }
    const ModelGraph trained = train(g, d, a.cfg, [](std::size_t epoch, double loss) {
        std::cout << "epoch=" << epoch + 1 << " loss=" << num(loss) << "\n";
    });
    save_model(trained, a.out);
    const double accuracy = evaluate(trained, d);
    std::cout << "accuracy=" << num(accuracy) << "\n";
    std::cout << "model_checksum=" << model_checksum(trained) << "\n";
    return 0;
}

int cmd_eval(const std::string& model, const std::string& data) {
    const ModelGraph g = load_model(model);
    const Dataset d = load_dataset(data);
    const double accuracy = evaluate(g, d);
    std::cout << "accuracy=" << num(accuracy) << "\n";
    return 0;
}

struct CapacityArgs {
    std::string model, data, out, layers;
    std::size_t subsample = 0;
    std::uint64_t seed = 0;
};

CapacityProfile measure(const ModelGraph& g, const Dataset& d, const std::string& layers) {
    std::vector<std::string> ids = layers.empty() ? g.prunable_layer_ids() : split_list(layers);
    if (ids.empty()) throw validation_error("model marks no layer as prunable; pass --layers");
    return capacity_profile(g, d, ids);
}

int cmd_capacity(const CapacityArgs& a) {
    const ModelGraph g = load_model(a.model);
    const Dataset calib = subsample(load_dataset(a.data), a.subsample, a.seed);
    const CapacityProfile p = measure(g, calib, a.layers);
    for (const auto& w : p.warnings) std::cerr << "warning: " << w << "\n";
    json doc = to_json(p);
    doc["dataset_checksum"] = sha256_file(a.data);
    doc["calibration_samples"] = calib.size();
    write_json_file(doc, a.out);
    for (const auto& l : p.layers) std::cout << l.id << " mu=" << num(l.mu) << " omega=" << num(l.omega) << "\n";
    return 0;
}

struct AllocateArgs {
    std::string model, capacity, out;
    double target = 0.0;
    bool uniform = false;
    std::uint64_t floor_multiplier = 3;
};

void check_capacity_matches(const CapacityProfile& p, const ModelGraph& g) {
    if (!p.model_checksum.empty() && p.model_checksum != model_checksum(g)) {
        throw validation_error("capacity report was measured on a different model (checksum mismatch)");
    }
}

int cmd_allocate(const AllocateArgs& a) {
    check_target(a.target);
    const ModelGraph g = load_model(a.model);
    const CapacityProfile p = capacity_profile_from_json(read_json_file(a.capacity));
    check_capacity_matches(p, g);
    const AllocationMode mode = a.uniform ? AllocationMode::Uniform : AllocationMode::Layerwise;
    SparsityPlan plan = allocate(make_allocation_input(g, p, a.target, a.floor_multiplier), mode);
    plan.source_checksum = sha256_file(a.capacity);
    json doc = to_json(plan);
    doc["model_checksum"] = model_checksum(g);
    write_json_file(doc, a.out);
    for (const auto& l : plan.layers) std::cout << l.id << " s_l=" << num(l.sparsity) << "\n";
    std::cout << "residual=" << num(plan.residual) << "\n";
    return 0;
}

PruneMethod make_method(const std::string& name, const std::optional<std::uint64_t>& seed) {
    const PruneKind kind = parse_prune_kind(name);
    if (kind == PruneKind::ChannelRandom) return PruneMethod::channel_random(seed.value_or(0));
    return PruneMethod{kind, std::nullopt};
}

struct PruneArgs {
    std::string model, plan, method = "weight-magnitude", out;
    std::optional<std::uint64_t> seed;
};

int cmd_prune(const PruneArgs& a) {
    const ModelGraph g = load_model(a.model);
    const json doc = read_json_file(a.plan);
    if (doc.contains("model_checksum") && doc["model_checksum"].get<std::string>() != model_checksum(g)) {
        throw validation_error("plan was derived from a different model (checksum mismatch)");
    }
    const PruneResult r = prune(g, sparsity_plan_from_json(doc), make_method(a.method, a.seed));
    save_prune_result(r, a.out);
    std::cout << "achieved_remaining=" << r.achieved_remaining << " planned_params=" << r.planned_params << "\n";
    std::cout << "achieved_sparsity=" << num(r.achieved_sparsity) << "\n";
    return 0;
}

struct FinetuneArgs {
    std::string model, data, out;
    TrainConfig cfg{3, 1e-4, 0.9, 32, 0};
};

int cmd_finetune(const FinetuneArgs& a) {
    const ModelGraph g = load_model(a.model);
    const KeepMasks masks = load_masks(a.model);
    const Dataset d = load_dataset(a.data);
    const ModelGraph tuned = finetune(g, masks, d, a.cfg, [](std::size_t epoch, double loss) {
        std::cout << "epoch=" << epoch + 1 << " loss=" << num(loss) << "\n";
    });
    json manifest = write_model_blobs(tuned, a.out);
    const json source = read_json_file(a.model);
    if (source.contains("provenance")) manifest["provenance"] = source["provenance"];
    manifest["finetuned_from"] = model_checksum(g);
    // Masks carry over so repeated finetuning keeps pruned entries at zero.
    const fs::path dir = fs::path(a.out).parent_path();
    const std::string stem = fs::path(a.out).stem().string();
    for (auto& entry : manifest["layers"]) {
        const auto it = masks.find(entry["id"].get<std::string>());
        if (it == masks.end()) continue;
        const std::string file = stem + "." + it->first + ".mask.bin";
        const auto packed = pack_mask(it->second);
        write_text(dir / file, std::string(packed.begin(), packed.end()));
        entry["mask_file"] = file;
        entry["sha256_mask"] = sha256_file(dir / file);
    }
    write_json_file(manifest, a.out);
    std::cout << "model_checksum=" << model_checksum(tuned) << "\n";
    return 0;
}

struct CalibrateArgs {
    std::string model, capacity, method = "channel-l1";
    double target = 0.0;
    bool uniform = false;
    std::optional<std::uint64_t> seed;
    std::uint64_t floor_multiplier = 3;
};

int cmd_calibrate(const CalibrateArgs& a) {
    check_target(a.target);
    const ModelGraph g = load_model(a.model);
    const CapacityProfile p = capacity_profile_from_json(read_json_file(a.capacity));
    check_capacity_matches(p, g);
    const Calibration c = calibrate_s_hat(g, p, a.target, make_method(a.method, a.seed),
                                          a.uniform ? AllocationMode::Uniform : AllocationMode::Layerwise,
                                          a.floor_multiplier);
    std::cout << "s_hat=" << num(c.s_hat) << "\n";
    std::cout << "achieved=" << c.achieved << " target=" << num(c.target_remaining) << " gap=" << num(c.gap) << "\n";
    return 0;
}

struct SweepArgs {
    std::string model, data, eval_data, out, grid = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9";
    std::string methods = "weight-magnitude", baseline = "both", seeds, layers;
    std::size_t trials = 10, subsample = 0;
    bool finetune = false;
    TrainConfig ft{3, 1e-4, 0.9, 32, 0};
};

int cmd_sweep(const SweepArgs& a) {
    SweepSpec spec;
    spec.grid = parse_grid(a.grid);
    for (const auto& m : split_list(a.methods)) spec.methods.push_back(parse_prune_kind(m));
    spec.baseline = parse_baseline(a.baseline);
    spec.trials = a.trials;
    for (const auto& s : split_list(a.seeds)) spec.seeds.push_back(std::stoull(s));
    spec.finetune = a.finetune;
    spec.finetune_config = a.ft;
    validate(spec);

    const ModelGraph g = load_model(a.model);
    const Dataset train_set = load_dataset(a.data);
    const Dataset eval_set = a.eval_data.empty() ? train_set : load_dataset(a.eval_data);
    const CapacityProfile p = measure(g, subsample(train_set, a.subsample, 0), a.layers);
    for (const auto& w : p.warnings) std::cerr << "warning: " << w << "\n";
    const auto rows = run_sweep(g, p, eval_set, train_set, spec);
    write_text(a.out, to_csv(rows));
    std::size_t failed = 0;
    for (const auto& r : rows) failed += r.status != "ok";
    std::cout << "rows=" << rows.size() << " failed=" << failed << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"prunekit: capacity-driven layer-wise pruning"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* c_synth = app.add_subcommand("synth", "Write a seeded synthetic grating dataset");
    c_synth->add_option("--out", synth.out, "Dataset file (training part when --test-out is given)")->required();
    c_synth->add_option("--test-out", synth.test_out, "Held-out dataset file");
    c_synth->add_option("--count", synth.count, "Total samples");
    c_synth->add_option("--test-count", synth.test_count, "Samples in the held-out file");
    c_synth->add_option("--size", synth.size, "Image height and width");
    c_synth->add_option("--channels", synth.channels);
    c_synth->add_option("--classes", synth.classes);
    c_synth->add_option("--noise", synth.noise);
    c_synth->add_option("--seed", synth.seed);

    TrainArgs tr;
    auto* c_train = app.add_subcommand("train", "Train a model with SGD");
    c_train->add_option("--data", tr.data)->required();
    c_train->add_option("--out", tr.out, "Output model manifest")->required();
    c_train->add_option("--model", tr.model, "Start from this model instead of a fresh architecture");
    c_train->add_option("--arch", tr.arch, "desk or simple");
    c_train->add_option("--init-seed", tr.init_seed);
    c_train->add_option("--epochs", tr.cfg.epochs);
    c_train->add_option("--lr", tr.cfg.learning_rate);
    c_train->add_option("--momentum", tr.cfg.momentum);
    c_train->add_option("--batch-size", tr.cfg.batch_size);
    c_train->add_option("--seed", tr.cfg.seed, "Batch-order seed");

    std::string ev_model, ev_data;
    auto* c_eval = app.add_subcommand("eval", "Print accuracy=<float>");
    c_eval->add_option("--model", ev_model)->required();
    c_eval->add_option("--data", ev_data)->required();

    CapacityArgs cap;
    auto* c_cap = app.add_subcommand("capacity", "Measure layer capacities");
    c_cap->add_option("--model", cap.model)->required();
    c_cap->add_option("--data", cap.data)->required();
    c_cap->add_option("--out", cap.out)->required();
    c_cap->add_option("--layers", cap.layers, "Comma-separated ids (default: prunable layers)");
    c_cap->add_option("--subsample", cap.subsample, "Use n seeded random samples");
    c_cap->add_option("--seed", cap.seed, "Subsample seed");

    AllocateArgs al;
    auto* c_alloc = app.add_subcommand("allocate", "Compute per-layer sparsities");
    c_alloc->add_option("--model", al.model)->required();
    c_alloc->add_option("--capacity", al.capacity)->required();
    c_alloc->add_option("--target", al.target)->required();
    c_alloc->add_option("--out", al.out)->required();
    c_alloc->add_flag("--uniform", al.uniform, "Set s_l = s for every layer");
    c_alloc->add_option("--floor-multiplier", al.floor_multiplier);

    PruneArgs pr;
    auto* c_prune = app.add_subcommand("prune", "Apply a sparsity plan");
    c_prune->add_option("--model", pr.model)->required();
    c_prune->add_option("--plan", pr.plan)->required();
    c_prune->add_option("--out", pr.out)->required();
    c_prune->add_option("--method", pr.method, "weight-magnitude, channel-l1 or channel-random");
    c_prune->add_option("--seed", pr.seed, "channel-random seed");

    FinetuneArgs ft;
    auto* c_ft = app.add_subcommand("finetune", "Retrain a pruned model, keeping pruned weights at zero");
    c_ft->add_option("--model", ft.model)->required();
    c_ft->add_option("--data", ft.data)->required();
    c_ft->add_option("--out", ft.out)->required();
    c_ft->add_option("--epochs", ft.cfg.epochs);
    c_ft->add_option("--lr", ft.cfg.learning_rate);
    c_ft->add_option("--momentum", ft.cfg.momentum);
    c_ft->add_option("--batch-size", ft.cfg.batch_size);
    c_ft->add_option("--seed", ft.cfg.seed);

    CalibrateArgs cal;
    auto* c_cal = app.add_subcommand("calibrate", "Find s_hat for channel pruning");
    c_cal->add_option("--model", cal.model)->required();
    c_cal->add_option("--capacity", cal.capacity)->required();
    c_cal->add_option("--target", cal.target)->required();
    c_cal->add_option("--method", cal.method);
    c_cal->add_option("--seed", cal.seed);
    c_cal->add_flag("--uniform", cal.uniform);
    c_cal->add_option("--floor-multiplier", cal.floor_multiplier);

    SweepArgs sw;
    auto* c_sweep = app.add_subcommand("sweep", "Uniform vs layer-wise comparison over a sparsity grid");
    c_sweep->add_option("--model", sw.model)->required();
    c_sweep->add_option("--data", sw.data, "Calibration and finetuning set")->required();
    c_sweep->add_option("--eval-data", sw.eval_data, "Evaluation set (default: --data)");
    c_sweep->add_option("--out", sw.out, "CSV file")->required();
    c_sweep->add_option("--grid", sw.grid, "Comma-separated sparsities");
    c_sweep->add_option("--methods", sw.methods, "Comma-separated pruning methods");
    c_sweep->add_option("--baseline", sw.baseline, "uniform, layerwise or both");
    c_sweep->add_option("--trials", sw.trials, "channel-random repetitions");
    c_sweep->add_option("--seeds", sw.seeds, "Comma-separated channel-random seeds");
    c_sweep->add_option("--layers", sw.layers);
    c_sweep->add_option("--subsample", sw.subsample);
    c_sweep->add_flag("--finetune", sw.finetune);
    c_sweep->add_option("--ft-epochs", sw.ft.epochs);
    c_sweep->add_option("--ft-lr", sw.ft.learning_rate);
    c_sweep->add_option("--ft-seed", sw.ft.seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(ErrorKind::Validation);
    }

    try {
        if (*c_synth) return cmd_synth(synth);
        if (*c_train) return cmd_train(tr);
        if (*c_eval) return cmd_eval(ev_model, ev_data);
        if (*c_cap) return cmd_capacity(cap);
        if (*c_alloc) return cmd_allocate(al);
        if (*c_prune) return cmd_prune(pr);
        if (*c_ft) return cmd_finetune(ft);
        if (*c_cal) return cmd_calibrate(cal);
        if (*c_sweep) return cmd_sweep(sw);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
