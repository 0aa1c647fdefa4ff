// srcnet command line: dynamics traces, spiking-network training,
// checkpoint evaluation and noise sweeps.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "srcnet/commands.hpp"

namespace {

// the leak default follows the coding scheme unless --alpha is given
void finish_run_config(CLI::App* cmd, srcnet::RunConfig& cfg, const std::string& coding,
                       const std::string& neuron) {
    cfg.coding = srcnet::coding_from_name(coding);
    cfg.neuron = srcnet::neuron_from_name(neuron);
    if (cmd->count("--alpha") == 0 && cfg.coding == srcnet::CodingKind::latency)
        cfg.alpha = 0.99;
}

void add_run_options(CLI::App* cmd, srcnet::RunConfig& cfg, std::string& coding,
                     std::string& neuron) {
    cmd->add_option("--images", cfg.train_images, "training images (IDX, optionally .gz)");
    cmd->add_option("--labels", cfg.train_labels, "training labels (IDX, optionally .gz)");
    cmd->add_option("--test-images", cfg.test_images, "test images (IDX)");
    cmd->add_option("--test-labels", cfg.test_labels, "test labels (IDX)");
    cmd->add_flag("--synthetic", cfg.synthetic, "use the builtin synthetic dataset");
    cmd->add_option("--samples", cfg.synth_samples, "synthetic: sample count");
    cmd->add_option("--classes", cfg.synth_classes, "synthetic: class count");
    cmd->add_option("--image-size", cfg.synth_image_size, "synthetic: image side length");
    cmd->add_option("--subset-train", cfg.subset_train,
                    "cap the training set at N samples (seeded shuffle)");
    cmd->add_option("--subset-test", cfg.subset_test, "cap the test set at N samples");

    cmd->add_option("--coding", coding, "spike encoding: rate or latency")
        ->check(CLI::IsMember({"rate", "latency"}));
    cmd->add_option("--timesteps,-T", cfg.coding_cfg.T, "spike train length");
    cmd->add_option("--gain", cfg.coding_cfg.gain, "rate coding gain");
    cmd->add_option("--tau", cfg.coding_cfg.tau, "latency coding time constant");
    cmd->add_option("--v-th", cfg.coding_cfg.v_th, "latency coding threshold");

    cmd->add_option("--neuron", neuron, "neuron kind: src or lif")
        ->check(CLI::IsMember({"src", "lif"}));
    cmd->add_option("--layers", cfg.layers, "number of spiking layers");
    cmd->add_option("--width", cfg.hidden_width, "hidden layer width");
    cmd->add_option("--alpha", cfg.alpha,
                    "integrator / membrane leak (default 0.9; 0.99 for latency)");
    cmd->add_option("--noise-sigma", cfg.noise_sigma, "SRC feedback noise sigma");

    cmd->add_option("--epochs", cfg.train_cfg.epochs, "training epochs");
    cmd->add_option("--batch", cfg.train_cfg.batch_size, "batch size");
    cmd->add_option("--lr", cfg.train_cfg.lr_init, "initial learning rate");
    cmd->add_option("--clip", cfg.train_cfg.clip_norm, "gradient clipping norm");
    cmd->add_option("--valid-fraction", cfg.train_cfg.valid_fraction,
                    "validation split fraction");
    cmd->add_option("--threads", cfg.train_cfg.threads, "worker threads (0 = auto)");

    cmd->add_option("--seed", cfg.seed, "master seed");
    cmd->add_option("--outdir,-o", cfg.out_dir,
                    "output directory (default $SRCNET_OUT or .)");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"spiking recurrent cell networks"};
    app.require_subcommand(1);

    // simulate ------------------------------------------------------------
    srcnet::SimulateConfig sim_cfg;
    std::string sim_out = "trace.csv";
    double sim_bias = 0.0;
    auto* sim = app.add_subcommand("simulate", "emit a single-neuron dynamics trace");
    sim->add_option("--protocol", sim_cfg.protocol, "builtin protocol: fig1, appendixB");
    auto* bias_opt = sim->add_option("--bias", sim_bias, "b_h override");
    sim->add_option("--steps", sim_cfg.steps, "trace length");
    sim->add_option("--noise-sigma", sim_cfg.noise_sigma, "feedback noise sigma");
    sim->add_option("--seed", sim_cfg.seed, "noise seed");
    sim->add_option("--out,-o", sim_out, "trace CSV path");

    // train ---------------------------------------------------------------
    srcnet::RunConfig train_cfg;
    std::string train_coding = "rate", train_neuron = "src";
    auto* tr = app.add_subcommand("train", "train a spiking network");
    add_run_options(tr, train_cfg, train_coding, train_neuron);

    // eval ----------------------------------------------------------------
    std::string eval_ckpt, eval_images, eval_labels, eval_out = "metrics.json";
    std::string eval_coding = "rate";
    srcnet::CodingConfig eval_coding_cfg;
    std::uint64_t eval_seed = 1;
    std::size_t eval_threads = 0;
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    ev->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required();
    ev->add_option("--images", eval_images, "images (IDX)")->required();
    ev->add_option("--labels", eval_labels, "labels (IDX)")->required();
    ev->add_option("--coding", eval_coding, "rate or latency")
        ->check(CLI::IsMember({"rate", "latency"}));
    ev->add_option("--timesteps,-T", eval_coding_cfg.T, "spike train length");
    ev->add_option("--gain", eval_coding_cfg.gain, "rate coding gain");
    ev->add_option("--tau", eval_coding_cfg.tau, "latency coding time constant");
    ev->add_option("--v-th", eval_coding_cfg.v_th, "latency coding threshold");
    ev->add_option("--seed", eval_seed, "encoding seed");
    ev->add_option("--threads", eval_threads, "worker threads (0 = auto)");
    ev->add_option("--out,-o", eval_out, "metrics JSON path");

    // noise-sweep ----------------------------------------------------------
    srcnet::RunConfig sweep_cfg;
    std::string sweep_coding = "rate", sweep_neuron = "src";
    std::vector<double> sigmas;
    std::string sweep_out = "sweep.csv";
    auto* sw = app.add_subcommand("noise-sweep",
                                  "train one model per noise level, report accuracy");
    add_run_options(sw, sweep_cfg, sweep_coding, sweep_neuron);
    sw->add_option("--sigmas", sigmas, "noise sigmas to sweep")
        ->required()
        ->delimiter(',');
    sw->add_option("--sweep-out", sweep_out, "sweep CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (sim->parsed()) {
            if (bias_opt->count() > 0) sim_cfg.bias = sim_bias;
            srcnet::cmd_simulate(sim_cfg, sim_out);
        } else if (tr->parsed()) {
            finish_run_config(tr, train_cfg, train_coding, train_neuron);
            srcnet::cmd_train(train_cfg);
        } else if (ev->parsed()) {
            srcnet::cmd_eval(eval_ckpt, eval_images, eval_labels,
                             srcnet::coding_from_name(eval_coding), eval_coding_cfg,
                             eval_seed, eval_out, eval_threads);
        } else if (sw->parsed()) {
            finish_run_config(sw, sweep_cfg, sweep_coding, sweep_neuron);
            srcnet::cmd_noise_sweep(sweep_cfg, sigmas,
                                    sweep_cfg.resolved_out_dir() + "/" + sweep_out);
        }
    } catch (const srcnet::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
