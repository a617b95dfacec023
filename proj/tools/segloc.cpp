#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "segloc/corpus.hpp"
#include "segloc/encoder.hpp"
#include "segloc/png_io.hpp"
#include "segloc/synth.hpp"
#include "segloc/train.hpp"

namespace {

using namespace segloc;

int run_gen_toy(const std::string& out, int classes, int instances, int backgrounds,
                std::uint64_t seed, const ToyOptions& opts) {
    gen_toy_corpus(out, classes, instances, backgrounds, seed, opts);
    std::printf("wrote toy corpus to %s: %d classes x %d instances, %d backgrounds\n",
                out.c_str(), classes, instances, backgrounds);
    return 0;
}

ForegroundCorpus load_fore_root(const std::filesystem::path& root) {
    const ClassRegistry registry = load_registry(root / "classes.json");
    return load_foregrounds(root, registry);
}

int run_synth(const std::string& fore_dir, const std::string& back_dir, const std::string& out,
              int pairs, const SynthConfig& scfg, int workers) {
    validate(scfg);
    const ForegroundCorpus fores = load_fore_root(fore_dir);
    const BackgroundCorpus backs = load_backgrounds(back_dir, true);
    const SynthSummary s = synthesize_dataset(fores, backs, scfg, pairs, out, workers);
    std::printf("wrote %d pairs to %s (backgrounds rejected: %d, rescales: %d)\n",
                s.pairs_written, out.c_str(), s.backgrounds_rejected, s.retries);
    return 0;
}

int run_region(const std::string& image_path) {
    const RasterImage img = read_png_rgb(image_path);
    const BBox box = authentic_region(img);
    std::printf("%d %d %d %d\n", box.x, box.y, box.w, box.h);
    return 0;
}

int run_pretrain(const std::string& dataset, const std::string& fore_dir,
                 const std::string& back_dir, const std::string& out, const TrainConfig& cfg,
                 const SynthConfig& scfg) {
    validate(scfg);
    validate(cfg);
    const bool corpus_mode = !fore_dir.empty() || !back_dir.empty();
    require(dataset.empty() != !corpus_mode, ErrorKind::InvalidArgument,
            "pass either --dataset or both --foregrounds and --backgrounds");
    if (corpus_mode) {
        require(!fore_dir.empty() && !back_dir.empty(), ErrorKind::InvalidArgument,
                "corpus mode needs both --foregrounds and --backgrounds");
        const ForegroundCorpus fores = load_fore_root(fore_dir);
        const BackgroundCorpus backs = load_backgrounds(back_dir, true);
        SynthConfig run_cfg = scfg;
        run_cfg.seed = cfg.seed;
        const SynthPairSource source(fores, backs, run_cfg);
        const SynthPairSource init_source(fores, backs, run_cfg, stream::bank_source);
        const TrainResult r = pretrain(source, cfg, out, &init_source);
        std::printf("pretrained %zu steps, final loss %.6f\n", r.metrics.size(),
                    r.metrics.empty() ? 0.0 : r.metrics.back().loss);
    } else {
        const DatasetPairSource source(dataset, cfg.seed);
        const TrainResult r = pretrain(source, cfg, out, &source);
        std::printf("pretrained %zu steps, final loss %.6f\n", r.metrics.size(),
                    r.metrics.empty() ? 0.0 : r.metrics.back().loss);
    }
    return 0;
}

int run_probe(const std::string& ckpt, const std::string& dataset, std::uint64_t seed) {
    const double acc = linear_probe(std::filesystem::path(ckpt), dataset, seed);
    std::printf("accuracy %.6f\n", acc);
    return 0;
}

// Quick finite-difference audit of the analytic gradients; the encoder check
// samples a handful of components per tensor, the loss check sweeps all of q.
int run_gradcheck(std::uint64_t seed) {
    Rng rng(mix_seed(seed, 1000));
    RasterImage img(48, 48);
    for (auto& px : img.data) px = static_cast<std::uint8_t>(rng.below(256));
    const BBox roi{6, 6, 30, 30};
    EncoderParams params = init_params(seed);

    Embedding direction{};
    double len = 0.0;
    for (double& d : direction) {
        d = rng.normal();
        len += d * d;
    }
    len = std::sqrt(len);
    for (double& d : direction) d /= len;

    auto scalar = [&](const EncoderParams& p) {
        const Embedding e = encode(p, img, roi);
        return dot(e, direction);
    };
    EncodeCache cache;
    encode(params, img, roi, &cache);
    const EncoderParams analytic = backprop(params, cache, direction);

    const double h = 1e-5;
    double enc_max_rel = 0.0;
    for (int id = 0; id < kTensorCount; ++id) {
        const std::size_t n = params.t[id].size();
        const std::size_t samples = std::min<std::size_t>(8, n);
        for (std::size_t s = 0; s < samples; ++s) {
            const std::size_t i = rng.below(n);
            const double saved = params.t[id][i];
            params.t[id][i] = saved + h;
            const double up = scalar(params);
            params.t[id][i] = saved - h;
            const double down = scalar(params);
            params.t[id][i] = saved;
            const double fd = (up - down) / (2.0 * h);
            const double a = analytic.t[id][i];
            const double rel = std::fabs(a - fd) / std::max({std::fabs(a), std::fabs(fd), 1e-3});
            enc_max_rel = std::max(enc_max_rel, rel);
        }
    }

    Embedding q{}, k{};
    std::vector<Embedding> negs(8);
    auto unit = [&](Embedding& e) {
        double s = 0.0;
        for (double& d : e) {
            d = rng.normal();
            s += d * d;
        }
        s = std::sqrt(s);
        for (double& d : e) d /= s;
    };
    unit(q);
    unit(k);
    for (Embedding& n : negs) unit(n);
    const double tau = 0.2;
    const InfoNceResult r = info_nce(q, k, negs, tau);
    double loss_max_rel = 0.0;
    for (int d = 0; d < kEmbedDim; ++d) {
        Embedding qp = q, qm = q;
        qp[d] += h;
        qm[d] -= h;
        const double fd = (info_nce(qp, k, negs, tau).loss - info_nce(qm, k, negs, tau).loss) /
                          (2.0 * h);
        const double a = r.grad_q[d];
        const double rel = std::fabs(a - fd) / std::max({std::fabs(a), std::fabs(fd), 1.0});
        loss_max_rel = std::max(loss_max_rel, rel);
    }

    std::printf("encoder max relative error: %.3e (tolerance 1e-05)\n", enc_max_rel);
    std::printf("loss max relative error: %.3e (tolerance 1e-08)\n", loss_max_rel);
    return (enc_max_rel <= 1e-5 && loss_max_rel <= 1e-8) ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"copy-paste pretext pipeline: corpus generation, pair synthesis, pre-training, probing"};
    app.require_subcommand(1);
    app.set_config("--config", "", "flat key=value config file; command-line flags win");

    // gen-toy
    auto* gen = app.add_subcommand("gen-toy", "generate a synthetic toy corpus");
    std::string gen_out;
    int gen_classes = 4, gen_instances = 8, gen_backgrounds = 16;
    std::uint64_t gen_seed = 0;
    segloc::ToyOptions toy_opts;
    gen->add_option("--out", gen_out, "output corpus root")->required();
    gen->add_option("--classes", gen_classes, "number of classes")->capture_default_str();
    gen->add_option("--instances", gen_instances, "instances per class")->capture_default_str();
    gen->add_option("--backgrounds", gen_backgrounds, "background count")->capture_default_str();
    gen->add_option("--seed", gen_seed, "master seed")->capture_default_str();
    gen->add_option("--back-width", toy_opts.back_w, "background width")->capture_default_str();
    gen->add_option("--back-height", toy_opts.back_h, "background height")->capture_default_str();
    gen->add_option("--fore-min", toy_opts.fore_lo, "min foreground canvas side")->capture_default_str();
    gen->add_option("--fore-max", toy_opts.fore_hi, "max foreground canvas side")->capture_default_str();

    // shared synthesis flags (synth + pretrain)
    segloc::SynthConfig scfg;
    auto add_synth_flags = [&](CLI::App* sub) {
        sub->add_option("--coeff-min", scfg.c_min, "min blend coefficient")->capture_default_str();
        sub->add_option("--coeff-max", scfg.c_max, "max blend coefficient")->capture_default_str();
        sub->add_option("--target-width", scfg.target_width, "output image width")->capture_default_str();
        sub->add_option("--angle-min", scfg.angle_lo, "min rotation (degrees)")->capture_default_str();
        sub->add_option("--angle-max", scfg.angle_hi, "max rotation (degrees)")->capture_default_str();
        sub->add_option("--scale-min", scfg.scale_lo, "min segment scale")->capture_default_str();
        sub->add_option("--scale-max", scfg.scale_hi, "max segment scale")->capture_default_str();
        sub->add_option("--bright-min", scfg.bright_lo, "min brightness factor")->capture_default_str();
        sub->add_option("--bright-max", scfg.bright_hi, "max brightness factor")->capture_default_str();
        sub->add_option("--contrast-min", scfg.contrast_lo, "min contrast factor")->capture_default_str();
        sub->add_option("--contrast-max", scfg.contrast_hi, "max contrast factor")->capture_default_str();
    };

    // synth
    auto* synth = app.add_subcommand("synth", "synthesize a positive-pair dataset");
    std::string synth_fores, synth_backs, synth_out;
    int synth_pairs = 1000, synth_workers = 1;
    std::uint64_t synth_seed = 0;
    synth->add_option("--foregrounds", synth_fores, "foreground corpus root")->required();
    synth->add_option("--backgrounds", synth_backs, "background directory")->required();
    synth->add_option("--out", synth_out, "output dataset directory")->required();
    synth->add_option("--pairs", synth_pairs, "number of pairs")->capture_default_str();
    synth->add_option("--seed", synth_seed, "master seed")->capture_default_str();
    synth->add_option("--workers", synth_workers, "worker threads")->capture_default_str();
    add_synth_flags(synth);

    // region
    auto* region = app.add_subcommand("region", "print the authentic region of one image");
    std::string region_image;
    region->add_option("--image", region_image, "PNG to inspect")->required();

    // pretrain
    auto* pre = app.add_subcommand("pretrain", "run contrastive pre-training");
    std::string pre_dataset, pre_fores, pre_backs, pre_out;
    std::string pre_queue_init = "model";
    segloc::TrainConfig tcfg;
    pre->add_option("--dataset", pre_dataset, "materialized pair dataset");
    pre->add_option("--foregrounds", pre_fores, "foreground corpus root (on-the-fly mode)");
    pre->add_option("--backgrounds", pre_backs, "background directory (on-the-fly mode)");
    pre->add_option("--out", pre_out, "run directory for metrics and checkpoints")->required();
    pre->add_option("--temperature", tcfg.temperature, "softmax temperature")->capture_default_str();
    pre->add_option("--key-momentum", tcfg.key_momentum, "key encoder momentum")->capture_default_str();
    pre->add_option("--lr", tcfg.lr, "learning rate")->capture_default_str();
    pre->add_option("--sgd-momentum", tcfg.sgd_momentum, "SGD momentum")->capture_default_str();
    pre->add_option("--weight-decay", tcfg.weight_decay, "weight decay")->capture_default_str();
    pre->add_option("--batch", tcfg.batch, "pairs per micro-batch")->capture_default_str();
    pre->add_option("--accum", tcfg.accum, "micro-batches per optimizer step")->capture_default_str();
    pre->add_option("--epochs", tcfg.epochs, "epochs")->capture_default_str();
    pre->add_option("--steps-per-epoch", tcfg.steps_per_epoch, "steps per epoch (0 = derive)")
        ->capture_default_str();
    pre->add_option("--queue-size", tcfg.queue_size, "negatives per class queue")->capture_default_str();
    pre->add_option("--queue-init", pre_queue_init, "queue fill mode: model|random")
        ->capture_default_str();
    pre->add_option("--freeze", tcfg.freeze, "conv stages to freeze (0..3)")->capture_default_str();
    pre->add_option("--seed", tcfg.seed, "master seed")->capture_default_str();
    pre->add_option("--workers", tcfg.workers, "worker threads")->capture_default_str();
    pre->add_flag("--check-invariants", tcfg.check_invariants, "enable per-step invariant checks");
    add_synth_flags(pre);

    // probe
    auto* probe = app.add_subcommand("probe", "linear evaluation of a checkpoint");
    std::string probe_ckpt, probe_dataset;
    std::uint64_t probe_seed = 0;
    probe->add_option("--checkpoint", probe_ckpt, "checkpoint path")->required();
    probe->add_option("--dataset", probe_dataset, "materialized pair dataset")->required();
    probe->add_option("--seed", probe_seed, "split seed")->capture_default_str();

    // gradcheck
    auto* grad = app.add_subcommand("gradcheck", "finite-difference audit of analytic gradients");
    std::uint64_t grad_seed = 0;
    grad->add_option("--seed", grad_seed, "audit seed")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return run_gen_toy(gen_out, gen_classes, gen_instances, gen_backgrounds,
                                              gen_seed, toy_opts);
        if (synth->parsed()) {
            scfg.seed = synth_seed;
            return run_synth(synth_fores, synth_backs, synth_out, synth_pairs, scfg, synth_workers);
        }
        if (region->parsed()) return run_region(region_image);
        if (pre->parsed()) {
            if (pre_queue_init == "model") {
                tcfg.queue_init = segloc::QueueInit::model;
            } else if (pre_queue_init == "random") {
                tcfg.queue_init = segloc::QueueInit::random;
            } else {
                segloc::fail(segloc::ErrorKind::InvalidArgument,
                             "--queue-init must be 'model' or 'random'");
            }
            return run_pretrain(pre_dataset, pre_fores, pre_backs, pre_out, tcfg, scfg);
        }
        if (probe->parsed()) return run_probe(probe_ckpt, probe_dataset, probe_seed);
        if (grad->parsed()) return run_gradcheck(grad_seed);
    } catch (const segloc::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
