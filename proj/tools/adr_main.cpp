// Command-line front end: train / eval / sweep / diagnose / landscape.
// Exit codes: 0 success, 2 invalid config or arguments, 3 numeric failure
// (diagnostic snapshot path in the message), 4 unreadable checkpoint.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "adr/attack.hpp"
#include "adr/checkpoint.hpp"
#include "adr/config.hpp"
#include "adr/diagnostics.hpp"
#include "adr/train.hpp"

namespace {

struct DatasetFlags {
    std::string kind;
    std::string images, labels;
    std::vector<std::string> files;
    std::uint64_t blob_seed = 0;
    std::int64_t blob_classes = 10;
    std::int64_t blob_per_class = 50;
    std::vector<std::int64_t> blob_shape = {1, 8, 8};
    double blob_sigma = 0.1;

    adr::DatasetConfig to_config() const {
        adr::DatasetConfig d;
        d.kind = kind;
        d.images = images;
        d.labels = labels;
        d.files = files;
        d.seed = blob_seed;
        d.num_classes = blob_classes;
        d.n_per_class = blob_per_class;
        if (blob_shape.size() != 3) throw adr::config_error("--blob-shape: expected C H W");
        d.c = blob_shape[0];
        d.h = blob_shape[1];
        d.w = blob_shape[2];
        d.sigma = blob_sigma;
        return d;
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["kind"] = kind;
        if (kind == "mnist") {
            j["images"] = images;
            j["labels"] = labels;
        } else if (kind == "cifar10") {
            j["files"] = files;
        } else {
            j["seed"] = blob_seed;
            j["num_classes"] = blob_classes;
            j["n_per_class"] = blob_per_class;
            j["shape"] = blob_shape;
            j["sigma"] = blob_sigma;
        }
        return j;
    }
};

void add_dataset_flags(CLI::App* cmd, DatasetFlags& f) {
    cmd->add_option("--dataset", f.kind, "Dataset kind: mnist, cifar10 or blobs")
        ->required()
        ->check(CLI::IsMember({"mnist", "cifar10", "blobs"}));
    cmd->add_option("--images", f.images, "MNIST IDX image file");
    cmd->add_option("--labels", f.labels, "MNIST IDX label file");
    cmd->add_option("--files", f.files, "CIFAR-10 binary batch files");
    cmd->add_option("--blob-seed", f.blob_seed, "Blobs generator seed");
    cmd->add_option("--blob-classes", f.blob_classes, "Blobs class count");
    cmd->add_option("--blob-per-class", f.blob_per_class, "Blobs examples per class");
    cmd->add_option("--blob-shape", f.blob_shape, "Blobs image shape C H W")->expected(3);
    cmd->add_option("--blob-sigma", f.blob_sigma, "Blobs noise sigma");
}

int resolve_threads(int flag_value) {
    if (const char* env = std::getenv("ADR_THREADS")) {
        try {
            return std::max(1, std::stoi(env));
        } catch (const std::exception&) {
            throw adr::config_error("ADR_THREADS: not an integer");
        }
    }
    return std::max(1, flag_value);
}

std::vector<double> parse_number_list(const std::string& csv, const std::string& field) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos <= csv.size()) {
        const std::size_t comma = csv.find(',', pos);
        const std::string tok =
            csv.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        if (!tok.empty()) out.push_back(adr::detail::parse_number(nlohmann::json(tok), field));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (out.empty()) throw adr::config_error(field + ": empty list");
    return out;
}

void write_manifest(const std::string& artifact_path, const nlohmann::ordered_json& manifest) {
    std::ofstream f(artifact_path + ".manifest.json");
    if (!f) throw adr::config_error("cannot write manifest for " + artifact_path);
    f << manifest.dump(2) << "\n";
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed,
              const std::string& out_dir, const std::string& resume_path, int threads_flag) {
    adr::RunConfig rc = adr::parse_run_config(config_path);
    if (seed) rc.train.seed = *seed;
    if (!out_dir.empty()) rc.output_dir = out_dir;
    if (rc.output_dir.empty())
        throw adr::config_error("no output directory (set output_dir in the config or pass --out)");
    adr::set_thread_count(resolve_threads(threads_flag > 0 ? threads_flag : rc.threads));

    adr::Dataset pool = adr::load_dataset(rc.dataset);
    pool.validate();
    if (pool.c != rc.model.in_c || pool.h != rc.model.in_h || pool.w != rc.model.in_w)
        throw adr::config_error("dataset shape does not match model input_shape");

    std::filesystem::create_directories(rc.output_dir);
    {
        std::ofstream f(rc.output_dir + "/resolved_config.json");
        f << adr::run_config_to_json(rc).dump(2) << "\n";
    }

    std::optional<adr::Checkpoint> resume;
    if (!resume_path.empty()) resume = adr::load_checkpoint(resume_path);

    adr::TrainIo io;
    io.out_dir = rc.output_dir;
    adr::RunState state = rc.train.use_adr
                              ? adr::train_adr(rc.model, rc.train, pool, io,
                                               resume ? &*resume : nullptr)
                              : adr::train_at(rc.model, rc.train, pool, io,
                                              resume ? &*resume : nullptr);

    nlohmann::ordered_json summary;
    summary["epochs"] = state.epoch;
    summary["best_robust_acc"] = state.best_robust_acc;
    summary["best_epoch"] = state.best_epoch;
    summary["final_robust_acc"] = state.history.empty() ? 0.0 : state.history.back().val_rob_acc;
    summary["best_final_gap"] = adr::best_final_gap(state);
    summary["metrics"] = io.metrics_path();
    summary["best_checkpoint"] = io.best_path();
    summary["final_checkpoint"] = io.final_path();
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const DatasetFlags& df, double eps, double alpha,
             std::int64_t steps, bool random_init, bool use_ema, std::uint64_t seed,
             std::int64_t batch, int threads_flag) {
    adr::set_thread_count(resolve_threads(threads_flag));
    const adr::Checkpoint ck = adr::load_checkpoint(ckpt_path);
    const adr::ParamSet& params = use_ema ? ck.teacher : ck.student;
    adr::Dataset ds = adr::load_dataset(df.to_config());

    adr::AttackConfig cfg;
    cfg.epsilon = eps;
    cfg.alpha = alpha > 0.0 ? alpha : std::max(eps / 4.0, 1e-12);
    cfg.steps = eps == 0.0 ? 0 : steps;
    cfg.random_init = random_init;
    const adr::EvalResult r =
        adr::validate(ck.spec, params, ds, cfg, seed, "val-attack", batch);

    nlohmann::ordered_json report;
    report["standard_acc"] = r.standard_acc;
    report["robust_acc"] = r.robust_acc;
    report["n_examples"] = ds.n;
    nlohmann::ordered_json used;
    used["checkpoint"] = ckpt_path;
    used["use_ema"] = use_ema;
    used["epsilon"] = cfg.epsilon;
    used["alpha"] = cfg.alpha;
    used["steps"] = cfg.steps;
    used["random_init"] = cfg.random_init;
    used["seed"] = seed;
    used["dataset"] = df.to_json();
    report["config"] = used;
    std::cout << report.dump(2) << "\n";
    return 0;
}

int cmd_sweep(const std::string& mode, const std::string& ckpt_path, const DatasetFlags& df,
              const std::string& out_csv, const std::string& eps_list_csv,
              const std::string& steps_list_csv, double base_eps, double base_alpha,
              std::int64_t base_steps, bool use_ema, std::uint64_t seed, std::int64_t batch,
              int threads_flag) {
    adr::set_thread_count(resolve_threads(threads_flag));
    const adr::Checkpoint ck = adr::load_checkpoint(ckpt_path);
    const adr::ParamSet& params = use_ema ? ck.teacher : ck.student;
    adr::Dataset ds = adr::load_dataset(df.to_config());

    adr::AttackConfig base;
    base.epsilon = base_eps;
    base.alpha = base_alpha;
    base.steps = base_steps;

    std::vector<adr::SweepRow> rows;
    if (mode == "eps") {
        rows = adr::eps_sweep(ck.spec, params, ds, parse_number_list(eps_list_csv, "--eps-list"),
                              base, seed, batch);
        adr::write_sweep_csv(out_csv, "epsilon", rows);
    } else {
        const auto ks = parse_number_list(steps_list_csv, "--steps-list");
        std::vector<std::int64_t> step_list;
        for (double k : ks) step_list.push_back(static_cast<std::int64_t>(k));
        rows = adr::steps_sweep(ck.spec, params, ds, step_list, base, seed, batch);
        adr::write_sweep_csv(out_csv, "steps", rows);
    }

    nlohmann::ordered_json manifest;
    manifest["command"] = "sweep";
    manifest["mode"] = mode;
    manifest["checkpoint"] = ckpt_path;
    manifest["use_ema"] = use_ema;
    manifest["base_attack"] = adr::detail::attack_to_json(base);
    manifest["eps_list"] = eps_list_csv;
    manifest["steps_list"] = steps_list_csv;
    manifest["seed"] = seed;
    manifest["dataset"] = df.to_json();
    write_manifest(out_csv, manifest);
    std::cout << "wrote " << rows.size() << " rows to " << out_csv << "\n";
    return 0;
}

int cmd_diagnose(const std::string& report, const std::string& ckpt_path, const DatasetFlags& df,
                 const std::string& out_prefix, double eps, double alpha, std::int64_t steps,
                 bool use_ema, std::uint64_t seed, std::int64_t bins, std::int64_t batch,
                 int threads_flag) {
    adr::set_thread_count(resolve_threads(threads_flag));
    const adr::Checkpoint ck = adr::load_checkpoint(ckpt_path);
    const adr::ParamSet& params = use_ema ? ck.teacher : ck.student;
    adr::Dataset ds = adr::load_dataset(df.to_config());

    nlohmann::ordered_json summary;
    summary["command"] = "diagnose";
    summary["report"] = report;
    summary["checkpoint"] = ckpt_path;
    summary["use_ema"] = use_ema;
    summary["seed"] = seed;
    summary["dataset"] = df.to_json();

    if (report == "entropy") {
        std::vector<double> ent;
        for (std::int64_t start = 0; start < ds.n; start += batch) {
            std::vector<std::int64_t> idx;
            for (std::int64_t i = start; i < std::min(start + batch, ds.n); ++i) idx.push_back(i);
            adr::Tensor logits = adr::forward(ck.spec, params, ds.batch(idx));
            adr::Tensor probs = adr::softmax(logits);
            const std::int64_t c = probs.shape[1];
            for (std::int64_t r = 0; r < probs.shape[0]; ++r)
                ent.push_back(adr::entropy(std::vector<double>(
                    probs.data.begin() + r * c, probs.data.begin() + (r + 1) * c)));
        }
        const auto rep = adr::make_entropy_report(
            ent, 0.0, std::log(static_cast<double>(ck.spec.num_classes)), bins, "all");
        adr::write_values_csv(out_prefix + "_values.csv", "entropy", rep.entropies);
        adr::write_histogram_csv(out_prefix + "_hist.csv", rep);
        summary["entropy"] = adr::values_summary_json(rep.entropies);
    } else if (report == "js") {
        adr::AttackConfig cfg;
        cfg.epsilon = eps;
        cfg.alpha = alpha > 0.0 ? alpha : std::max(eps / 4.0, 1e-12);
        cfg.steps = eps == 0.0 ? 0 : steps;
        const auto rep = adr::consistency_report(ck.spec, params, ds, cfg, seed, bins, batch);
        adr::write_values_csv(out_prefix + "_values.csv", "js", rep.js);
        adr::write_histogram_csv(out_prefix + "_clean_entropy.csv", rep.clean_entropy);
        adr::write_histogram_csv(out_prefix + "_adv_entropy.csv", rep.adv_entropy);
        summary["attack"] = adr::detail::attack_to_json(cfg);
        summary["js"] = adr::values_summary_json(rep.js);
        summary["js_upper_bound"] = std::log(2.0);
    } else { // split
        const auto sp = adr::confidence_split(ck.spec, params, ds, bins, batch);
        adr::write_histogram_csv(out_prefix + "_correct.csv", sp.correct);
        adr::write_histogram_csv(out_prefix + "_misclassified.csv", sp.misclassified);
        summary["correct"] = adr::values_summary_json(sp.correct.entropies);
        summary["misclassified"] = adr::values_summary_json(sp.misclassified.entropies);
    }
    std::ofstream f(out_prefix + "_summary.json");
    if (!f) throw adr::config_error("cannot write " + out_prefix + "_summary.json");
    f << summary.dump(2) << "\n";
    std::cout << "wrote " << out_prefix << "_* artifacts\n";
    return 0;
}

int cmd_landscape(const std::string& mode, const std::string& ckpt_path, const DatasetFlags& df,
                  const std::string& out_csv, double alpha_min, double alpha_max,
                  std::int64_t alpha_points, double eps, double alpha, std::int64_t steps,
                  double input_range, std::int64_t input_points, std::int64_t example_index,
                  bool use_ema, std::uint64_t seed, std::int64_t batch, int threads_flag) {
    adr::set_thread_count(resolve_threads(threads_flag));
    const adr::Checkpoint ck = adr::load_checkpoint(ckpt_path);
    const adr::ParamSet& params = use_ema ? ck.teacher : ck.student;
    adr::Dataset ds = adr::load_dataset(df.to_config());

    adr::LandscapeGrid grid;
    if (mode == "weight") {
        std::vector<double> alphas;
        for (std::int64_t i = 0; i < alpha_points; ++i)
            alphas.push_back(alpha_points == 1
                                 ? alpha_min
                                 : alpha_min + (alpha_max - alpha_min) * static_cast<double>(i) /
                                       static_cast<double>(alpha_points - 1));
        adr::AttackConfig cfg;
        cfg.epsilon = eps;
        cfg.alpha = alpha > 0.0 ? alpha : std::max(eps / 4.0, 1e-12);
        cfg.steps = steps;
        grid = adr::weight_landscape(ck.spec, params, ds, alphas, seed, cfg, batch);
    } else {
        if (example_index < 0 || example_index >= ds.n)
            throw adr::config_error("--index out of dataset range");
        std::vector<double> axis;
        for (std::int64_t i = 0; i < input_points; ++i)
            axis.push_back(input_points == 1
                               ? 0.0
                               : -input_range + 2.0 * input_range * static_cast<double>(i) /
                                     static_cast<double>(input_points - 1));
        grid = adr::input_landscape(ck.spec, params, ds.image(example_index),
                                    ds.labels[static_cast<std::size_t>(example_index)], axis,
                                    axis, seed);
    }
    adr::write_grid_csv(out_csv, grid);

    nlohmann::ordered_json manifest;
    manifest["command"] = "landscape";
    manifest["mode"] = grid.mode;
    manifest["checkpoint"] = ckpt_path;
    manifest["use_ema"] = use_ema;
    manifest["seed"] = seed;
    manifest["dataset"] = df.to_json();
    manifest["warnings"] = grid.warnings;
    if (mode == "weight") {
        manifest["alpha_min"] = alpha_min;
        manifest["alpha_max"] = alpha_max;
        manifest["alpha_points"] = alpha_points;
        manifest["attack"] = nlohmann::ordered_json{{"epsilon", eps},
                                                    {"alpha", alpha},
                                                    {"steps", steps}};
    } else {
        manifest["range"] = input_range;
        manifest["points"] = input_points;
        manifest["example_index"] = example_index;
    }
    write_manifest(out_csv, manifest);
    std::cout << "wrote " << grid.loss.size() << " grid points to " << out_csv << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Annealing self-distillation rectification training engine"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "Run adversarial training from a JSON config");
    std::string config_path, out_dir, resume_path;
    std::uint64_t seed_flag = 0;
    bool seed_given = false;
    int threads_flag = 0;
    train->add_option("--config", config_path, "JSON run config")->required();
    train->add_option("--seed", seed_flag, "Override the config seed")
        ->each([&](const std::string&) { seed_given = true; });
    train->add_option("--out", out_dir, "Output directory (overrides config)");
    train->add_option("--resume", resume_path, "Checkpoint to resume from");
    train->add_option("--threads", threads_flag, "Worker threads (ADR_THREADS overrides)");

    // eval
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint (standard + PGD accuracy)");
    DatasetFlags eval_ds;
    std::string eval_ckpt;
    double eval_eps = 8.0 / 255.0, eval_alpha = 0.0;
    std::int64_t eval_steps = 10, eval_batch = 128;
    bool eval_use_ema = false, eval_no_rand = false;
    std::uint64_t eval_seed = 1;
    int eval_threads = 0;
    eval->add_option("--ckpt", eval_ckpt, "Checkpoint path")->required();
    add_dataset_flags(eval, eval_ds);
    eval->add_option("--eps", eval_eps, "Attack radius");
    eval->add_option("--alpha", eval_alpha, "Attack step size (default eps/4)");
    eval->add_option("--steps", eval_steps, "PGD steps");
    eval->add_flag("--no-random-init", eval_no_rand, "Disable PGD random start");
    eval->add_flag("--use-ema", eval_use_ema, "Evaluate the EMA teacher weights");
    eval->add_option("--seed", eval_seed, "Attack RNG seed");
    eval->add_option("--batch", eval_batch, "Evaluation batch size");
    eval->add_option("--threads", eval_threads, "Worker threads");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "Attack sanity sweeps (radius or step count)");
    DatasetFlags sweep_ds;
    std::string sweep_mode, sweep_ckpt, sweep_out = "sweep.csv";
    std::string sweep_eps_list = "0,2/255,8/255,0.5";
    std::string sweep_steps_list = "0,1,2,4,8,16,32,64,100";
    double sweep_eps = 8.0 / 255.0, sweep_alpha = 2.0 / 255.0;
    std::int64_t sweep_steps = 10, sweep_batch = 128;
    bool sweep_use_ema = false;
    std::uint64_t sweep_seed = 1;
    int sweep_threads = 0;
    sweep->add_option("--mode", sweep_mode, "eps or steps")
        ->required()
        ->check(CLI::IsMember({"eps", "steps"}));
    sweep->add_option("--ckpt", sweep_ckpt, "Checkpoint path")->required();
    add_dataset_flags(sweep, sweep_ds);
    sweep->add_option("--out", sweep_out, "Output CSV path");
    sweep->add_option("--eps-list", sweep_eps_list, "Comma list of radii (rationals allowed)");
    sweep->add_option("--steps-list", sweep_steps_list, "Comma list of PGD step counts");
    sweep->add_option("--eps", sweep_eps, "Base attack radius");
    sweep->add_option("--alpha", sweep_alpha, "Base attack step size");
    sweep->add_option("--steps", sweep_steps, "Base PGD steps");
    sweep->add_flag("--use-ema", sweep_use_ema, "Use the EMA teacher weights");
    sweep->add_option("--seed", sweep_seed, "Attack RNG seed");
    sweep->add_option("--batch", sweep_batch, "Batch size");
    sweep->add_option("--threads", sweep_threads, "Worker threads");

    // diagnose
    auto* diag = app.add_subcommand("diagnose", "Entropy / JS / confidence-split reports");
    DatasetFlags diag_ds;
    std::string diag_report, diag_ckpt, diag_out = "diagnose";
    double diag_eps = 8.0 / 255.0, diag_alpha = 0.0;
    std::int64_t diag_steps = 10, diag_bins = 30, diag_batch = 128;
    bool diag_use_ema = false;
    std::uint64_t diag_seed = 1;
    int diag_threads = 0;
    diag->add_option("--report", diag_report, "entropy, js or split")
        ->required()
        ->check(CLI::IsMember({"entropy", "js", "split"}));
    diag->add_option("--ckpt", diag_ckpt, "Checkpoint path")->required();
    add_dataset_flags(diag, diag_ds);
    diag->add_option("--out", diag_out, "Output file prefix");
    diag->add_option("--eps", diag_eps, "Attack radius (js report)");
    diag->add_option("--alpha", diag_alpha, "Attack step size (default eps/4)");
    diag->add_option("--steps", diag_steps, "PGD steps (js report)");
    diag->add_flag("--use-ema", diag_use_ema, "Use the EMA teacher weights");
    diag->add_option("--seed", diag_seed, "Attack RNG seed");
    diag->add_option("--bins", diag_bins, "Histogram bins");
    diag->add_option("--batch", diag_batch, "Batch size");
    diag->add_option("--threads", diag_threads, "Worker threads");

    // landscape
    auto* land = app.add_subcommand("landscape", "Weight-space or input-space loss landscape");
    DatasetFlags land_ds;
    std::string land_mode, land_ckpt, land_out = "landscape.csv";
    double land_alpha_min = -1.0, land_alpha_max = 1.0;
    std::int64_t land_alpha_points = 21;
    double land_eps = 8.0 / 255.0, land_alpha = 0.0;
    std::int64_t land_steps = 10;
    double land_range = 0.1;
    std::int64_t land_points = 11, land_index = 0, land_batch = 128;
    bool land_use_ema = false;
    std::uint64_t land_seed = 1;
    int land_threads = 0;
    land->add_option("--mode", land_mode, "weight or input")
        ->required()
        ->check(CLI::IsMember({"weight", "input"}));
    land->add_option("--ckpt", land_ckpt, "Checkpoint path")->required();
    add_dataset_flags(land, land_ds);
    land->add_option("--out", land_out, "Output CSV path");
    land->add_option("--alpha-min", land_alpha_min, "Weight mode: grid start");
    land->add_option("--alpha-max", land_alpha_max, "Weight mode: grid end");
    land->add_option("--alpha-points", land_alpha_points, "Weight mode: grid points");
    land->add_option("--eps", land_eps, "Weight mode: attack radius");
    land->add_option("--alpha", land_alpha, "Weight mode: attack step size");
    land->add_option("--steps", land_steps, "Weight mode: PGD steps");
    land->add_option("--range", land_range, "Input mode: perturbation magnitude range");
    land->add_option("--points", land_points, "Input mode: points per axis");
    land->add_option("--index", land_index, "Input mode: example index");
    land->add_flag("--use-ema", land_use_ema, "Use the EMA teacher weights");
    land->add_option("--seed", land_seed, "Direction RNG seed");
    land->add_option("--batch", land_batch, "Batch size");
    land->add_option("--threads", land_threads, "Worker threads");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (train->parsed())
            return cmd_train(config_path,
                             seed_given ? std::optional<std::uint64_t>(seed_flag) : std::nullopt,
                             out_dir, resume_path, threads_flag);
        if (eval->parsed())
            return cmd_eval(eval_ckpt, eval_ds, eval_eps, eval_alpha, eval_steps, !eval_no_rand,
                            eval_use_ema, eval_seed, eval_batch, eval_threads);
        if (sweep->parsed())
            return cmd_sweep(sweep_mode, sweep_ckpt, sweep_ds, sweep_out, sweep_eps_list,
                             sweep_steps_list, sweep_eps, sweep_alpha, sweep_steps, sweep_use_ema,
                             sweep_seed, sweep_batch, sweep_threads);
        if (diag->parsed())
            return cmd_diagnose(diag_report, diag_ckpt, diag_ds, diag_out, diag_eps, diag_alpha,
                                diag_steps, diag_use_ema, diag_seed, diag_bins, diag_batch,
                                diag_threads);
        if (land->parsed())
            return cmd_landscape(land_mode, land_ckpt, land_ds, land_out, land_alpha_min,
                                 land_alpha_max, land_alpha_points, land_eps, land_alpha,
                                 land_steps, land_range, land_points, land_index, land_use_ema,
                                 land_seed, land_batch, land_threads);
    } catch (const adr::checkpoint_error& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return 4;
    } catch (const adr::numeric_error& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const adr::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const adr::parse_error& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 2;
    } catch (const adr::parameter_error& e) {
        std::cerr << "parameter error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
