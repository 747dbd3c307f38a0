// burstlab command-line harness: dataset generation, baseline and diffusion
// training, sampling from an intermediate step, evaluation, tau sweeps and the
// ablation grid. Exit codes: 0 success, 2 config error, 3 IO error, 4 numeric
// failure.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "burstlab/baseline.hpp"
#include "burstlab/burst.hpp"
#include "burstlab/checkpoint.hpp"
#include "burstlab/diffusion.hpp"
#include "burstlab/image_io.hpp"
#include "burstlab/image_ops.hpp"
#include "burstlab/metrics.hpp"
#include "burstlab/runconfig.hpp"
#include "burstlab/sampler.hpp"
#include "burstlab/schedule.hpp"
#include "burstlab/trainer.hpp"

namespace fs = std::filesystem;
using namespace burstlab;

namespace {

// ---------------------------------------------------------------------------
// shared helpers
// ---------------------------------------------------------------------------

void dump_effective_config(const CLI::App& app, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw io_error(io_error::code::open_failed, "cannot write config dump: " + path);
    os << app.config_to_str(true, true);
}

std::string sample_name(const char* prefix, int index) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%04d.png", prefix, index);
    return buf;
}

std::vector<Tensor> load_hr_pool(const std::string& dir, int hr_size) {
    if (!fs::is_directory(dir))
        throw io_error(io_error::code::open_failed, "HR image directory not found: " + dir);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && has_image_extension(e.path())) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty())
        throw io_error(io_error::code::open_failed, "no .png/.ppm images in " + dir);
    std::vector<Tensor> pool;
    for (const auto& f : files) {
        Tensor img = read_image(f.string());
        if (img.h != hr_size || img.w != hr_size)
            img = clamp01(resize_bicubic(img, hr_size, hr_size));
        pool.push_back(std::move(img));
    }
    return pool;
}

std::vector<BurstSample> load_dataset_checked(const std::string& path) {
    if (!fs::exists(path)) throw io_error(io_error::code::open_failed, "dataset not found: " + path);
    return read_dataset(path);
}

struct EvalPoint {
    double psnr_mean = 0.0;
    double ssim_mean = 0.0;
    bool warned = false;
};

/// Samples every burst in the set at the given reverse start and averages
/// PSNR/SSIM against the ground truth. Per-sample seeds derive from
/// (seed, index), so the result is independent of the thread count.
EvalPoint evaluate_point(const std::vector<BurstSample>& samples, const DiffusionModel& model,
                         const BaselineNet* baseline, const NoiseSchedule& sched,
                         const ReverseStartConfig& rsc, int downscale, uint64_t seed, int threads,
                         std::vector<SampleOutput>* outputs = nullptr) {
    const int n = static_cast<int>(samples.size());
    if (outputs) outputs->resize(n);
    std::vector<double> psnrs(n, 0.0), ssims(n, 0.0);
    bool warned = false;
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, threads))
    for (int i = 0; i < n; ++i) {
        RandomSource rng(RandomSource::mix(seed, static_cast<uint64_t>(i)));
        bool local_warn = false;
        SampleOutput out = run_sampler(samples[i], model, baseline, sched, rsc, downscale, rng,
                                       [&](const std::string&) { local_warn = true; });
        psnrs[i] = psnr(out.sr, samples[i].hr);
        ssims[i] = ssim(out.sr, samples[i].hr);
        if (local_warn) {
#pragma omp atomic write
            warned = true;
        }
        if (outputs) (*outputs)[i] = std::move(out);
    }
    EvalPoint pt;
    for (int i = 0; i < n; ++i) {
        pt.psnr_mean += psnrs[i];
        pt.ssim_mean += ssims[i];
    }
    if (n > 0) {
        pt.psnr_mean /= n;
        pt.ssim_mean /= n;
    }
    pt.warned = warned;
    return pt;
}

void write_loss_log(const std::string& path, const std::vector<std::pair<int64_t, double>>& rows) {
    std::ofstream os(path);
    if (!os) throw io_error(io_error::code::open_failed, "cannot write loss log: " + path);
    os << "iter,loss\n";
    os.precision(10);
    for (const auto& [it, loss] : rows) os << it << "," << loss << "\n";
}

// ---------------------------------------------------------------------------
// option blocks
// ---------------------------------------------------------------------------

void add_degradation_options(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--burst-size", cfg.burst_size, "frames per burst");
    cmd->add_option("--hr-size", cfg.hr_size, "HR image side length");
    cmd->add_option("--downscale", cfg.downscale, "HR -> LR downscale factor");
    cmd->add_option("--max-shift", cfg.max_shift, "max per-frame translation in HR pixels");
    cmd->add_option("--max-rot", cfg.max_rot, "max per-frame rotation in degrees");
    cmd->add_option("--noise-shot", cfg.noise_shot, "signal-dependent noise gain");
    cmd->add_option("--noise-read", cfg.noise_read, "signal-independent noise floor");
    cmd->add_flag("--no-noise", cfg.no_noise, "disable RAW noise");
}

void add_model_options(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--feat-dim", cfg.feat_dim, "burst feature channels f");
    cmd->add_option("--cond-channels", cfg.cond_channels, "conditioning channels per level");
    cmd->add_option("--widths", cfg.widths, "U-Net level widths")->delimiter(',');
    cmd->add_option("--temb-dim", cfg.temb_dim, "timestep embedding dim (0 = 4*widths[0])");
    cmd->add_option("--groups", cfg.groups, "group-norm groups");
    cmd->add_option("--baseline-hidden", cfg.baseline_hidden, "baseline hidden channels");
    cmd->add_option("--align-radius", cfg.align_radius, "alignment search radius (RAW px)");
}

void add_schedule_options(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--schedule", cfg.schedule, "noise schedule: linear | sigmoid");
    cmd->add_option("--T", cfg.T, "diffusion step count");
    cmd->add_option("--beta1", cfg.beta_1, "first-step variance");
    cmd->add_option("--betaT", cfg.beta_T, "last-step variance");
}

void add_train_options(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--lr", cfg.lr, "AdamW step size");
    cmd->add_option("--weight-decay", cfg.weight_decay, "AdamW decoupled weight decay");
    cmd->add_option("--grad-clip", cfg.grad_clip, "global grad-norm clip (0 = off)");
    cmd->add_option("--batch", cfg.batch, "mini-batch size");
    cmd->add_option("--iters", cfg.iters, "optimizer steps");
    cmd->add_option("--log-every", cfg.log_every, "loss log period");
    cmd->add_option("--ckpt-every", cfg.ckpt_every, "checkpoint period (0 = final only)");
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

struct GenerateArgs {
    RunConfig cfg;
    std::string hr_dir, out;
    int count = 64;
};

int cmd_generate(const CLI::App& app, const GenerateArgs& a) {
    a.cfg.degradation().validate();
    if (a.count < 0) throw param_error("--count must be nonnegative");
    std::vector<BurstSample> samples;
    if (a.count > 0) {
        auto pool = load_hr_pool(a.hr_dir, a.cfg.hr_size);
        samples = synthesize_dataset(pool, a.cfg.degradation(), a.cfg.seed, a.count, a.cfg.threads);
    }
    write_dataset(samples, a.out);
    dump_effective_config(app, a.out + ".effective.cfg");
    std::cout << "wrote " << samples.size() << " samples to " << a.out << "\n";
    return 0;
}

struct TrainArgs {
    RunConfig cfg;
    std::string data, out, resume, log;
};

template <class Trainer>
int run_training(const CLI::App& app, const TrainArgs& a, const char* what) {
    a.cfg.validate();
    auto samples = load_dataset_checked(a.data);
    Trainer trainer(a.cfg, samples);
    if (!a.resume.empty()) trainer.resume(a.resume);

    std::vector<std::pair<int64_t, double>> log_rows;
    const int64_t target = trainer.iteration() + a.cfg.iters;
    while (trainer.iteration() < target) {
        double loss = trainer.step();
        int64_t it = trainer.iteration();
        if (a.cfg.log_every > 0 && (it % a.cfg.log_every == 0 || it == target)) {
            log_rows.emplace_back(it, loss);
            std::cout << what << " iter " << it << "/" << target << " loss " << loss << std::endl;
        }
        if (a.cfg.ckpt_every > 0 && it % a.cfg.ckpt_every == 0 && it != target)
            trainer.save(a.out);
    }
    trainer.save(a.out);
    if (!a.log.empty()) write_loss_log(a.log, log_rows);
    dump_effective_config(app, a.out + ".effective.cfg");
    std::cout << "checkpoint written to " << a.out << "\n";
    return 0;
}

struct SampleArgs {
    std::string data, diffusion_ckpt, baseline_ckpt, out_dir;
    std::string init = "baseline-sr";
    int tau = -1; // -1: use the checkpoint's configured tau
    int count = -1;
    uint64_t seed = 0;
    int threads = 1;
    bool no_grid = false;
};

int cmd_sample(const CLI::App& app, const SampleArgs& a) {
    auto samples = load_dataset_checked(a.data);
    DiffusionModel model;
    RunConfig mcfg = load_diffusion_model(a.diffusion_ckpt, model);

    BaselineNet baseline;
    bool have_baseline = !a.baseline_ckpt.empty();
    if (have_baseline) load_baseline_model(a.baseline_ckpt, baseline);

    InitKind init = init_kind_from_string(a.init);
    if (init == InitKind::baseline_sr && !have_baseline)
        throw param_error("--init baseline-sr requires --baseline-ckpt");

    NoiseSchedule sched = mcfg.make_noise_schedule();
    ReverseStartConfig rsc;
    rsc.tau = a.tau >= 0 ? a.tau : mcfg.tau;
    rsc.tau_L = mcfg.tau_train;
    rsc.initializer = init;
    if (rsc.tau < 0 || rsc.tau > sched.steps) throw param_error("--tau must lie in [0, T]");
    if (init == InitKind::random_noise && rsc.tau != sched.steps)
        throw param_error("--init random-noise forces --tau == T (" + std::to_string(sched.steps) + ")");

    int n = a.count >= 0 ? std::min<int>(a.count, samples.size()) : static_cast<int>(samples.size());
    samples.resize(n);
    fs::create_directories(a.out_dir);

    std::vector<SampleOutput> outputs;
    EvalPoint pt = evaluate_point(samples, model, have_baseline ? &baseline : nullptr, sched, rsc,
                                  mcfg.downscale, a.seed, a.threads, &outputs);
    if (pt.warned)
        std::cerr << "warning: tau=" << rsc.tau << " exceeds the trained range tau_L=" << rsc.tau_L
                  << "\n";

    for (int i = 0; i < n; ++i) {
        const fs::path dir(a.out_dir);
        write_png_rgb8((dir / sample_name("gt", i)).string(), samples[i].hr);
        write_png_rgb8((dir / sample_name("init", i)).string(), outputs[i].init);
        write_png_rgb8((dir / sample_name("sr", i)).string(), outputs[i].sr);
        if (!a.no_grid) {
            std::vector<Tensor> cols = {samples[i].hr,
                                        bicubic_init(samples[i].raw, mcfg.downscale).image};
            if (have_baseline) cols.push_back(baseline_forward(samples[i].raw, baseline).image);
            cols.push_back(outputs[i].sr);
            write_png_rgb8((dir / sample_name("grid", i)).string(), hcat_images(cols));
        }
    }

    nlohmann::json run;
    run["tau"] = rsc.tau;
    run["tau_train"] = rsc.tau_L;
    run["schedule"] = mcfg.schedule;
    run["initializer"] = to_string(init);
    run["seed"] = a.seed;
    run["count"] = n;
    run["psnr_mean"] = pt.psnr_mean;
    run["ssim_mean"] = pt.ssim_mean;
    std::ofstream((fs::path(a.out_dir) / "run.json").string()) << run.dump(2) << "\n";
    dump_effective_config(app, (fs::path(a.out_dir) / "effective.cfg").string());
    std::cout << "sampled " << n << " images at tau=" << rsc.tau << " (PSNR " << pt.psnr_mean
              << " dB, SSIM " << pt.ssim_mean << ")\n";
    return 0;
}

struct EvaluateArgs {
    std::string data, images, out;
    std::vector<std::string> plugins;
};

int cmd_evaluate(const CLI::App& app, const EvaluateArgs& a) {
    auto samples = load_dataset_checked(a.data);
    if (!fs::is_directory(a.images))
        throw io_error(io_error::code::open_failed, "image directory not found: " + a.images);

    std::vector<PerceptualPlugin> plugins;
    for (const auto& spec : a.plugins) plugins.push_back(PerceptualPlugin::parse(spec));

    MetricReport rep;
    rep.metric_names = {"psnr", "ssim"};
    for (const auto& p : plugins)
        if (!p.is_distribution()) rep.metric_names.push_back(p.name());

    // experiment identifiers from the sampling run, when present
    fs::path run_meta = fs::path(a.images) / "run.json";
    if (fs::exists(run_meta)) {
        nlohmann::json j = nlohmann::json::parse(std::ifstream(run_meta.string()));
        rep.tau = j.value("tau", 0);
        rep.schedule = j.value("schedule", "");
        rep.initializer = j.value("initializer", "");
        rep.seed = j.value("seed", uint64_t(0));
    }

    int n = 0;
    for (size_t i = 0; i < samples.size(); ++i) {
        fs::path sr = fs::path(a.images) / sample_name("sr", static_cast<int>(i));
        if (!fs::exists(sr)) break;
        fs::path gt = fs::path(a.images) / sample_name("gt", static_cast<int>(i));
        if (!fs::exists(gt)) write_png_rgb8(gt.string(), samples[i].hr);
        // both sides decoded from the 8-bit files, so external plug-ins see
        // exactly what the internal metrics see
        Tensor sr_img = read_image(sr.string());
        Tensor gt_img = read_image(gt.string());
        MetricReport::Row row;
        row.index = static_cast<int>(i);
        row.values["psnr"] = MetricValue::ok_value(psnr(sr_img, gt_img));
        row.values["ssim"] = MetricValue::ok_value(ssim(sr_img, gt_img));
        for (const auto& p : plugins)
            if (!p.is_distribution()) row.values[p.name()] = p.run_pair(sr.string(), gt.string());
        rep.add_row(row);
        ++n;
    }
    if (n == 0) throw io_error(io_error::code::open_failed, "no sr_*.png images in " + a.images);

    for (const auto& p : plugins)
        if (p.is_distribution()) rep.aggregates[p.name()] = p.run_dirs(a.images, a.images);
    for (const auto& p : plugins)
        if (p.is_distribution()) rep.metric_names.push_back(p.name());

    rep.finalize();
    std::ofstream csv(a.out + ".csv");
    if (!csv) throw io_error(io_error::code::open_failed, "cannot write report: " + a.out + ".csv");
    rep.write_csv(csv);
    std::ofstream js(a.out + ".json");
    js << rep.to_json().dump(2) << "\n";
    dump_effective_config(app, a.out + ".effective.cfg");

    std::cout << "evaluated " << n << " samples";
    for (const auto& [name, mv] : rep.aggregates) {
        std::cout << "  " << name << "=";
        if (mv.status == MetricValue::Status::ok)
            std::cout << mv.value;
        else
            std::cout << to_string(mv.status);
    }
    std::cout << "\n";
    return 0;
}

struct SweepArgs {
    std::string data, diffusion_ckpt, baseline_ckpt, out;
    std::string init = "baseline-sr";
    std::vector<int> taus;
    int count = -1;
    uint64_t seed = 0;
    int threads = 1;
};

int cmd_sweep_tau(const CLI::App& app, const SweepArgs& a) {
    if (a.taus.empty()) throw param_error("--tau-list must name at least one step");
    auto samples = load_dataset_checked(a.data);
    DiffusionModel model;
    RunConfig mcfg = load_diffusion_model(a.diffusion_ckpt, model);
    BaselineNet baseline;
    bool have_baseline = !a.baseline_ckpt.empty();
    if (have_baseline) load_baseline_model(a.baseline_ckpt, baseline);

    InitKind init = init_kind_from_string(a.init);
    if (init == InitKind::baseline_sr && !have_baseline)
        throw param_error("--init baseline-sr requires --baseline-ckpt");
    NoiseSchedule sched = mcfg.make_noise_schedule();

    int n = a.count >= 0 ? std::min<int>(a.count, samples.size()) : static_cast<int>(samples.size());
    samples.resize(n);

    std::ofstream csv(a.out);
    if (!csv) throw io_error(io_error::code::open_failed, "cannot write sweep CSV: " + a.out);
    csv << "tau,samples,psnr,ssim,in_trained_range\n";
    csv.precision(10);
    for (int tau : a.taus) {
        if (tau < 0 || tau > sched.steps) throw param_error("tau out of [0, T] in --tau-list");
        if (init == InitKind::random_noise && tau != sched.steps)
            throw param_error("random-noise rows require tau == T");
        ReverseStartConfig rsc{tau, mcfg.tau_train, init};
        EvalPoint pt = evaluate_point(samples, model, have_baseline ? &baseline : nullptr, sched,
                                      rsc, mcfg.downscale, a.seed, a.threads);
        bool in_range = tau <= mcfg.tau_train;
        if (!in_range)
            std::cerr << "warning: tau=" << tau << " is outside the trained range (tau_L="
                      << mcfg.tau_train << ")\n";
        csv << tau << "," << n << "," << pt.psnr_mean << "," << pt.ssim_mean << ","
            << (in_range ? 1 : 0) << "\n";
        std::cout << "tau=" << tau << " psnr=" << pt.psnr_mean << " ssim=" << pt.ssim_mean
                  << (in_range ? "" : "  [out of trained range]") << "\n";
    }
    dump_effective_config(app, a.out + ".effective.cfg");
    return 0;
}

struct AblateArgs {
    std::string data, ckpt_full, ckpt_restricted, baseline_ckpt, out;
    std::string rows = "a,b,c,d,e";
    int tau_low = 5;
    int count = -1;
    uint64_t seed = 0;
    int threads = 1;
};

int cmd_ablate(const CLI::App& app, const AblateArgs& a) {
    std::vector<char> rows;
    {
        std::stringstream ss(a.rows);
        std::string tok;
        while (std::getline(ss, tok, ','))
            if (!tok.empty()) rows.push_back(tok[0]);
    }
    if (rows.empty()) throw param_error("--rows selected no ablation rows");
    for (char r : rows)
        if (r < 'a' || r > 'e') throw param_error(std::string("unknown ablation row '") + r + "'");

    auto needs_full = [&](char r) { return r == 'a' || r == 'b' || r == 'd'; };
    auto needs_restricted = [&](char r) { return r == 'c' || r == 'e'; };
    auto needs_baseline = [&](char r) { return r == 'd' || r == 'e'; };
    std::vector<std::string> missing;
    for (char r : rows) {
        if (needs_full(r) && a.ckpt_full.empty())
            missing.push_back(std::string("row ") + r + ": --ckpt-full");
        if (needs_restricted(r) && a.ckpt_restricted.empty())
            missing.push_back(std::string("row ") + r + ": --ckpt-restricted");
        if (needs_baseline(r) && a.baseline_ckpt.empty())
            missing.push_back(std::string("row ") + r + ": --baseline-ckpt");
    }
    if (!missing.empty()) {
        std::string msg = "missing prerequisite checkpoints:";
        for (const auto& m : missing) msg += "\n  " + m;
        throw param_error(msg);
    }

    auto samples = load_dataset_checked(a.data);
    int n = a.count >= 0 ? std::min<int>(a.count, samples.size()) : static_cast<int>(samples.size());
    samples.resize(n);

    DiffusionModel full, restricted;
    RunConfig full_cfg, restr_cfg;
    bool used_full = std::any_of(rows.begin(), rows.end(), needs_full);
    bool used_restricted = std::any_of(rows.begin(), rows.end(), needs_restricted);
    if (used_full) full_cfg = load_diffusion_model(a.ckpt_full, full);
    if (used_restricted) restr_cfg = load_diffusion_model(a.ckpt_restricted, restricted);
    BaselineNet baseline;
    if (std::any_of(rows.begin(), rows.end(), needs_baseline))
        load_baseline_model(a.baseline_ckpt, baseline);

    std::ofstream csv(a.out);
    if (!csv) throw io_error(io_error::code::open_failed, "cannot write ablation CSV: " + a.out);
    csv << "row,initializer,tau_L,tau,psnr,ssim,note\n";
    csv.precision(10);
    std::cout << "row  init           tau_L  tau    PSNR      SSIM    note\n";

    for (char r : rows) {
        const bool restricted_row = needs_restricted(r);
        const DiffusionModel& model = restricted_row ? restricted : full;
        const RunConfig& mcfg = restricted_row ? restr_cfg : full_cfg;
        NoiseSchedule sched = mcfg.make_noise_schedule();
        InitKind init = r == 'a'   ? InitKind::random_noise
                        : (r == 'b' || r == 'c') ? InitKind::bicubic
                                                 : InitKind::baseline_sr;
        int tau = r == 'a'   ? sched.steps
                  : r == 'b' ? std::max(1, static_cast<int>(std::lround(0.4 * sched.steps)))
                             : std::min(a.tau_low, sched.steps);
        std::string note = r == 'c' ? "expected-degraded (weak init, small tau)" : "";
        ReverseStartConfig rsc{tau, mcfg.tau_train, init};
        EvalPoint pt = evaluate_point(samples, model, &baseline, sched, rsc, mcfg.downscale,
                                      a.seed, a.threads);
        csv << r << "," << to_string(init) << "," << mcfg.tau_train << "," << tau << ","
            << pt.psnr_mean << "," << pt.ssim_mean << "," << note << "\n";
        std::printf("(%c)  %-14s %5d  %4d  %8.3f  %6.4f  %s\n", r, to_string(init), mcfg.tau_train,
                    tau, pt.psnr_mean, pt.ssim_mean, note.c_str());
    }
    dump_effective_config(app, a.out + ".effective.cfg");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"burstlab: burst super-resolution diffusion laboratory"};
    app.require_subcommand(1);
    app.set_config("--config", "", "read options from a key/value config file with [subcommand] sections");

    GenerateArgs gen;
    auto* g = app.add_subcommand("generate", "synthesize a RAW burst dataset from HR images");
    g->add_option("--hr-dir", gen.hr_dir, "directory of HR images (.png/.ppm)")->required();
    g->add_option("--out", gen.out, "output dataset file")->required();
    g->add_option("--count", gen.count, "number of samples");
    g->add_option("--seed", gen.cfg.seed, "base RNG seed");
    g->add_option("--threads", gen.cfg.threads, "parallel generation threads");
    add_degradation_options(g, gen.cfg);

    TrainArgs tb;
    auto* b = app.add_subcommand("train-baseline", "train the deterministic MSE burst SR baseline");
    b->add_option("--data", tb.data, "training dataset")->required();
    b->add_option("--out", tb.out, "checkpoint path")->required();
    b->add_option("--resume", tb.resume, "resume from checkpoint");
    b->add_option("--log", tb.log, "loss log CSV");
    b->add_option("--seed", tb.cfg.seed, "RNG seed");
    b->add_option("--threads", tb.cfg.threads, "batch-parallel threads");
    add_degradation_options(b, tb.cfg);
    add_model_options(b, tb.cfg);
    add_train_options(b, tb.cfg);

    TrainArgs td;
    auto* d = app.add_subcommand("train-diffusion", "train the conditioned epsilon predictor");
    d->add_option("--data", td.data, "training dataset")->required();
    d->add_option("--out", td.out, "checkpoint path")->required();
    d->add_option("--resume", td.resume, "resume from checkpoint");
    d->add_option("--log", td.log, "loss log CSV");
    d->add_option("--seed", td.cfg.seed, "RNG seed");
    d->add_option("--threads", td.cfg.threads, "batch-parallel threads");
    d->add_option("--tau-train", td.cfg.tau_train, "largest training step tau_L");
    add_schedule_options(d, td.cfg);
    add_degradation_options(d, td.cfg);
    add_model_options(d, td.cfg);
    add_train_options(d, td.cfg);

    SampleArgs sa;
    auto* s = app.add_subcommand("sample", "run the reverse process from an intermediate step");
    s->add_option("--data", sa.data, "evaluation dataset")->required();
    s->add_option("--diffusion-ckpt", sa.diffusion_ckpt, "diffusion checkpoint")->required();
    s->add_option("--baseline-ckpt", sa.baseline_ckpt, "baseline checkpoint");
    s->add_option("--init", sa.init, "initializer: baseline-sr | bicubic | random-noise");
    s->add_option("--tau", sa.tau, "reverse start step (default: checkpoint value)");
    s->add_option("--count", sa.count, "samples to process (default: all)");
    s->add_option("--seed", sa.seed, "sampling seed");
    s->add_option("--threads", sa.threads, "parallel sampling threads");
    s->add_option("--out-dir", sa.out_dir, "output directory")->required();
    s->add_flag("--no-grid", sa.no_grid, "skip side-by-side comparison grids");

    EvaluateArgs ev;
    auto* e = app.add_subcommand("evaluate", "compute metrics for sampled images");
    e->add_option("--data", ev.data, "dataset with ground truth")->required();
    e->add_option("--images", ev.images, "directory with sr_*.png outputs")->required();
    e->add_option("--out", ev.out, "report path prefix (.csv/.json)")->required();
    e->add_option("--plugin", ev.plugins,
                  "external metric 'name:cmd {a} {b}' or 'name:cmd {dir_a} {dir_b}'");

    SweepArgs sw;
    auto* w = app.add_subcommand("sweep-tau", "metrics as a function of the reverse start step");
    w->add_option("--data", sw.data, "evaluation dataset")->required();
    w->add_option("--diffusion-ckpt", sw.diffusion_ckpt, "diffusion checkpoint")->required();
    w->add_option("--baseline-ckpt", sw.baseline_ckpt, "baseline checkpoint");
    w->add_option("--init", sw.init, "initializer");
    w->add_option("--tau-list", sw.taus, "reverse start steps")->delimiter(',')->required();
    w->add_option("--count", sw.count, "samples per point (default: all)");
    w->add_option("--seed", sw.seed, "sampling seed");
    w->add_option("--threads", sw.threads, "parallel sampling threads");
    w->add_option("--out", sw.out, "output CSV")->required();

    AblateArgs ab;
    auto* t = app.add_subcommand("ablate", "run the five-row start/initializer ablation");
    t->add_option("--data", ab.data, "evaluation dataset")->required();
    t->add_option("--ckpt-full", ab.ckpt_full, "diffusion checkpoint trained on all steps");
    t->add_option("--ckpt-restricted", ab.ckpt_restricted,
                  "diffusion checkpoint trained on steps 1..tau_L only");
    t->add_option("--baseline-ckpt", ab.baseline_ckpt, "baseline checkpoint");
    t->add_option("--rows", ab.rows, "subset of rows a..e");
    t->add_option("--tau-low", ab.tau_low, "tau for rows c/d/e");
    t->add_option("--count", ab.count, "samples per row (default: all)");
    t->add_option("--seed", ab.seed, "sampling seed");
    t->add_option("--threads", ab.threads, "parallel sampling threads");
    t->add_option("--out", ab.out, "output CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::CallForAllHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::CallForVersion& ex) {
        return app.exit(ex);
    } catch (const CLI::ParseError& ex) {
        app.exit(ex);
        return 2;
    }

    try {
        if (g->parsed()) return cmd_generate(app, gen);
        if (b->parsed()) return run_training<BaselineTrainer>(app, tb, "baseline");
        if (d->parsed()) return run_training<DiffusionTrainer>(app, td, "diffusion");
        if (s->parsed()) return cmd_sample(app, sa);
        if (e->parsed()) return cmd_evaluate(app, ev);
        if (w->parsed()) return cmd_sweep_tau(app, sw);
        if (t->parsed()) return cmd_ablate(app, ab);
    } catch (const param_error& ex) {
        std::cerr << "config error: " << ex.what() << "\n";
        return 2;
    } catch (const io_error& ex) {
        std::cerr << "io error: " << ex.what() << "\n";
        return 3;
    } catch (const numeric_error& ex) {
        std::cerr << "numeric failure: " << ex.what() << "\n";
        return 4;
    } catch (const nlohmann::json::exception& ex) {
        std::cerr << "io error: malformed metadata: " << ex.what() << "\n";
        return 3;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 0;
}
