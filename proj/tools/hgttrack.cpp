#include <cstdio>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "hgt/io.hpp"
#include "hgt/metrics.hpp"
#include "hgt/tracker.hpp"
#include "hgt/train.hpp"

using namespace hgt;
namespace fs = std::filesystem;

namespace {

struct ModelFlags {
    int layers = 1;
    bool no_hgt = false;
    bool hgt_s = false;
    bool single_class = false;

    void attach(CLI::App* cmd) {
        cmd->add_option("--layers", layers, "HGT layers")->check(CLI::Range(1, 4));
        cmd->add_flag("--no-hgt", no_hgt, "disable graph attention entirely");
        cmd->add_flag("--hgt-s", hgt_s, "single-modality variant (no cross-modal edges)");
        cmd->add_flag("--single-class", single_class, "one-channel heatmap");
    }
    ModelConfig config() const {
        ModelConfig c;
        c.layers = layers;
        c.use_hgt = !no_hgt;
        c.use_dh_edges = !hgt_s;
        c.single_class = single_class;
        return c;
    }
};

struct TrackFlags {
    double det_threshold = 0.4;
    double radius = 20.0;
    double tau = 0.3;
    bool no_redet = false;
    std::string redet_mode = "affinity";

    void attach(CLI::App* cmd) {
        cmd->add_option("--det-threshold", det_threshold, "detection score threshold");
        cmd->add_option("--radius", radius, "association radius, feature-grid units");
        cmd->add_option("--tau", tau, "re-detection IoU threshold");
        cmd->add_flag("--no-redet", no_redet, "disable cross-modal re-detection");
        cmd->add_option("--redet-mode", redet_mode, "affinity or heatmap")
            ->check(CLI::IsMember({"affinity", "heatmap"}));
    }
    TrackerConfig config() const {
        TrackerConfig c;
        c.det_threshold = det_threshold;
        c.radius_d = radius;
        c.iou_tau = tau;
        c.redet_enabled = !no_redet;
        c.redet_mode = redet_mode == "heatmap" ? TrackerConfig::RedetMode::Heatmap
                                               : TrackerConfig::RedetMode::Affinity;
        return c;
    }
};

ScenarioSpec load_spec(const std::string& path, unsigned seed_override, bool has_seed) {
    ScenarioSpec s = ScenarioSpec::parse(read_file(path));
    if (has_seed) s.seed = seed_override;
    return s;
}

Tensor gray_to_rgb(const Tensor& g) {
    int h = g.dim(0), w = g.dim(1);
    std::vector<double> d(static_cast<size_t>(h) * w * 3);
    for (int i = 0; i < h * w; ++i) d[i * 3] = d[i * 3 + 1] = d[i * 3 + 2] = g.data()[i];
    return Tensor({h, w, 3}, std::move(d));
}

int cmd_synth(const std::string& config, const std::string& out, const std::string& name,
              unsigned seed, bool has_seed) {
    ScenarioSpec s = load_spec(config, seed, has_seed);
    SynthResult r = synth(s);
    std::string seq_name = name.empty() ? fs::path(config).stem().string() : name;
    SequenceManifest m = write_sequence(r, out, seq_name);
    std::cout << out << "/" << seq_name << "/manifest.txt"
              << " (" << m.frames << " frames, " << m.width << "x" << m.height << ")\n";
    return 0;
}

int cmd_train(const std::string& config, const std::string& out, int steps, double lr,
              unsigned seed, bool has_seed, const ModelFlags& mf, double radius) {
    ScenarioSpec s = load_spec(config, seed, has_seed);
    SynthResult r = synth(s);
    Model model(mf.config(), has_seed ? seed : s.seed);
    fs::create_directories(out);
    TrainResult tr = train(model, r, steps, lr, 0.9, LossWeights{}, out + "/curve.txt",
                           out + "/model.ckpt", radius);
    if (tr.curve.empty()) {
        std::cerr << "training diverged on the first step\n";
        return 3;
    }
    std::cout << "steps " << tr.steps_run << " initial " << tr.curve.front() << " final "
              << tr.curve.back() << "\n";
    if (tr.diverged) {
        std::cerr << "loss went non-finite after step " << tr.steps_run
                  << "; kept the last finite checkpoint\n";
        return 3;
    }
    return 0;
}

int cmd_track(const std::string& data, const std::string& ckpt, const std::string& out,
              const ModelFlags& mf, const TrackFlags& tf, int jobs) {
    (void)jobs;  // one sequence per invocation; jobs kept for interface parity
    SequenceManifest man = SequenceManifest::load(data);
    std::string dir = SequenceManifest::dir_of(data);

    Model model(mf.config(), 1);
    auto params = model.named_params();
    load_into(params, checkpoint_load(ckpt));

    TrackerConfig cfg = tf.config();
    NetworkPerception perception(model, cfg);
    Tracker tracker(perception, cfg);
    for (int f = 1; f <= man.frames; ++f) {
        char fn[32];
        std::snprintf(fn, sizeof(fn), "%06d.pgm", f);
        StepInput in;
        in.frame = f;
        in.frame_v = gray_to_rgb(read_pgm(dir + "/" + man.frames_v + "/" + fn));
        in.frame_t = read_pgm(dir + "/" + man.frames_t + "/" + fn);
        tracker.step(in);
    }

    fs::create_directories(out);
    write_mot(tracker.results(Mod::V), out + "/results_v.txt");
    write_mot(tracker.results(Mod::T), out + "/results_t.txt");
    std::string events;
    for (const std::string& e : tracker.events()) events += e + "\n";
    write_file(out + "/events.txt", events);
    std::cout << "tracked " << man.frames << " frames, " << tracker.tracks().size()
              << " tracklets\n";
    return 0;
}

int cmd_eval(const std::string& gt_path, const std::string& pred_path, double iou_thresh,
             const std::string& out) {
    AnnSequence gt = parse_mot(gt_path);
    AnnSequence pred = parse_mot(pred_path);
    MetricsReport rep = evaluate(gt, pred, iou_thresh);
    std::cout << format_table(rep);
    if (!out.empty())
        write_file(out, format_kv(rep));
    else
        std::cout << format_kv(rep);
    return 0;
}

int cmd_ablate(const std::string& config, const std::string& out, double iou_thresh,
               unsigned seed, bool has_seed) {
    ScenarioSpec s = load_spec(config, seed, has_seed);
    SynthResult r = synth(s);

    struct Variant {
        std::string name;
        TrackerConfig cfg;
    };
    std::vector<Variant> variants;
    variants.push_back({"full", TrackerConfig{}});
    {
        TrackerConfig c;
        c.redet_enabled = false;
        variants.push_back({"no-redet", c});
    }
    {
        TrackerConfig c;
        c.redet_mode = TrackerConfig::RedetMode::Heatmap;
        variants.push_back({"heat", c});
    }

    std::ostringstream kv;
    std::printf("%-10s %8s %6s %6s %5s %8s %8s\n", "variant", "MOTA", "FP", "FN", "IDs",
                "IDF1", "HOTA");
    for (const Variant& v : variants) {
        SyntheticOraclePerception p(r);
        Tracker trk(p, v.cfg);
        for (int f = 1; f <= s.duration; ++f) trk.step(StepInput{f, Tensor(), Tensor()});
        MetricsReport rep = evaluate(r.gt_v, trk.results(Mod::V), iou_thresh);
        std::printf("%-10s %8.4f %6lld %6lld %5lld %8.4f %8.4f\n", v.name.c_str(),
                    rep.clear.mota, rep.clear.fp, rep.clear.fn, rep.clear.ids, rep.idf1,
                    rep.hota);
        kv << v.name << ".MOTA " << rep.clear.mota << "\n"
           << v.name << ".FP " << rep.clear.fp << "\n"
           << v.name << ".FN " << rep.clear.fn << "\n"
           << v.name << ".IDs " << rep.clear.ids << "\n"
           << v.name << ".IDF1 " << rep.idf1 << "\n"
           << v.name << ".HOTA " << rep.hota << "\n";
    }
    if (!out.empty())
        write_file(out, kv.str());
    else
        std::cout << kv.str();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"joint detection and tracking for paired visible/thermal sequences"};
    app.require_subcommand(1);

    std::string config, out, name, data, ckpt, gt_path, pred_path;
    unsigned seed = 0;
    int steps = 500, jobs = 1;
    double lr = 1e-3, iou_thresh = 0.3;
    ModelFlags train_mf, track_mf;
    TrackFlags track_tf;
    double train_radius = 20.0;

    CLI::App* c_synth = app.add_subcommand("synth", "generate a synthetic sequence");
    c_synth->add_option("--config", config, "scenario file")->required();
    c_synth->add_option("--out", out, "output directory")->required();
    c_synth->add_option("--name", name, "sequence name (default: config stem)");
    CLI::Option* synth_seed = c_synth->add_option("--seed", seed, "seed override");

    CLI::App* c_train = app.add_subcommand("train", "fit the model on one scenario");
    c_train->add_option("--config", config, "scenario file")->required();
    c_train->add_option("--out", out, "output directory")->required();
    c_train->add_option("--steps", steps, "sgd steps")->check(CLI::PositiveNumber);
    c_train->add_option("--lr", lr, "learning rate");
    CLI::Option* train_seed = c_train->add_option("--seed", seed, "seed override");
    c_train->add_option("--radius", train_radius, "association radius, grid units");
    train_mf.attach(c_train);

    CLI::App* c_track = app.add_subcommand("track", "run the tracker over a sequence");
    c_track->add_option("--data", data, "manifest path")->required();
    c_track->add_option("--ckpt", ckpt, "model checkpoint")->required();
    c_track->add_option("--out", out, "output directory")->required();
    c_track->add_option("--jobs", jobs, "parallel sequences")->check(CLI::PositiveNumber);
    track_mf.attach(c_track);
    track_tf.attach(c_track);

    CLI::App* c_eval = app.add_subcommand("eval", "score results against ground truth");
    c_eval->add_option("--gt", gt_path, "ground-truth annotations")->required();
    c_eval->add_option("--pred", pred_path, "tracker results")->required();
    c_eval->add_option("--iou", iou_thresh, "matching IoU threshold");
    c_eval->add_option("--out", out, "write the key-value report here");

    CLI::App* c_ablate = app.add_subcommand("ablate", "tracker-variant comparison table");
    c_ablate->add_option("--config", config, "scenario file")->required();
    c_ablate->add_option("--out", out, "write the key-value table here");
    c_ablate->add_option("--iou", iou_thresh, "matching IoU threshold");
    CLI::Option* ablate_seed = c_ablate->add_option("--seed", seed, "seed override");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (app.got_subcommand(c_synth))
            return cmd_synth(config, out, name, seed, !synth_seed->empty());
        if (app.got_subcommand(c_train))
            return cmd_train(config, out, steps, lr, seed, !train_seed->empty(), train_mf,
                             train_radius);
        if (app.got_subcommand(c_track))
            return cmd_track(data, ckpt, out, track_mf, track_tf, jobs);
        if (app.got_subcommand(c_eval)) return cmd_eval(gt_path, pred_path, iou_thresh, out);
        if (app.got_subcommand(c_ablate))
            return cmd_ablate(config, out, iou_thresh, seed, !ablate_seed->empty());
    } catch (const TensorError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
