#pragma once

#include <array>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "segloc/bank.hpp"
#include "segloc/checkpoint.hpp"
#include "segloc/corpus.hpp"
#include "segloc/encoder.hpp"
#include "segloc/synth.hpp"

namespace segloc {

enum class QueueInit { model, random };

struct TrainConfig {
    double temperature = 0.2;
    double key_momentum = 0.999;
    double lr = 0.03;
    double sgd_momentum = 0.9;
    double weight_decay = 1e-4;
    int batch = 64;            // pairs per micro-batch
    int accum = 1;             // micro-batches per optimizer step
    int epochs = 30;
    int steps_per_epoch = 0;   // 0: dataset size / (accum*batch), or 100 when unbounded
    int queue_size = 512;      // negatives per class queue (full scale: 16384)
    QueueInit queue_init = QueueInit::model;
    int freeze = 0;            // conv stages frozen, 0..3
    std::uint64_t seed = 0;
    int workers = 1;
    bool check_invariants = false; // per-step exclusion/purity assertions
};

void validate(const TrainConfig& cfg);
std::string config_hash(const TrainConfig& cfg);

struct StepMetrics {
    int step = 0;
    double loss = 0.0;
    double pos_logit_mean = 0.0; // mean q.k_pos before temperature scaling
    double acc1 = 0.0;           // fraction where the positive logit ranked first
    std::vector<int> queue_fill;
};

struct InfoNceResult {
    double loss = 0.0;
    Embedding grad_q{};
    double pos_logit = 0.0;
    bool top1 = false;
};

/// logits = [q.k_pos, q.n_i] / tau; loss = -log softmax[0]; the gradient flows
/// to q only. Negatives must be nonempty.
InfoNceResult info_nce(const Embedding& q, const Embedding& k_pos,
                       const std::vector<Embedding>& negs, double tau);
InfoNceResult info_nce(const Embedding& q, const Embedding& k_pos,
                       const std::deque<BankKey>& negs, double tau);

/// g' = g + weight_decay*theta; v <- momentum*v + g'; theta <- theta - lr*v.
/// Tensors with trainable=false are left untouched, velocity included.
void sgd_step(EncoderParams& params, const EncoderParams& grads, EncoderParams& velocity,
              double lr, double momentum, double weight_decay,
              const std::array<bool, kTensorCount>& trainable);

struct TrainingPair {
    RasterImage image[2];
    BBox roi[2];
    int class_id = 0;
};

/// Index-addressed supply of training pairs. get() must be pure with respect
/// to the index and safe to call from multiple threads, which is what makes
/// training trajectories independent of the worker count.
class PairSource {
public:
    virtual ~PairSource() = default;
    virtual std::size_t pair_count() const = 0; // 0 when unbounded
    virtual int class_count() const = 0;
    virtual TrainingPair get(std::uint64_t index) const = 0;
};

/// Synthesizes pairs on the fly; pair index i runs on sub-seed
/// (cfg.seed, stream_tag, i).
class SynthPairSource : public PairSource {
public:
    SynthPairSource(const ForegroundCorpus& fores, const BackgroundCorpus& backs, SynthConfig cfg,
                    std::uint64_t stream_tag = stream::synth_pair);
    std::size_t pair_count() const override { return 0; }
    int class_count() const override { return fores_.registry.size(); }
    TrainingPair get(std::uint64_t index) const override;

private:
    const ForegroundCorpus& fores_;
    const BackgroundCorpus& backs_;
    SynthConfig cfg_;
    std::uint64_t stream_tag_;
};

/// Replays a materialized dataset (pairs.jsonl + images) with a seeded
/// per-epoch shuffle; index = epoch * n + position.
class DatasetPairSource : public PairSource {
public:
    DatasetPairSource(const std::filesystem::path& dir, std::uint64_t seed);
    std::size_t pair_count() const override { return records_.size(); }
    int class_count() const override { return class_count_; }
    TrainingPair get(std::uint64_t index) const override;

private:
    struct Record {
        std::string image[2];
        BBox roi[2];
        int class_id = 0;
    };
    const std::vector<std::uint32_t>& epoch_order(std::uint64_t epoch) const;

    std::filesystem::path dir_;
    std::uint64_t seed_;
    std::vector<Record> records_;
    int class_count_ = 0;
    mutable std::mutex order_mutex_;
    mutable std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> orders_;
};

struct TrainResult {
    EncoderParams query;
    EncoderParams key;
    EncoderParams velocity;
    ClassQueueBank bank;
    std::vector<StepMetrics> metrics;
};

/// MoCo-style pre-training over the class-queue bank. Per optimizer step:
/// accumulate accum*batch pairs, encode queries (with grad) and keys (without),
/// take negatives from the query-class queue, average the InfoNCE gradients,
/// one SGD step, momentum-update the key encoder, then enqueue the step's
/// keys. The bank is filled per cfg.queue_init before step 1. When out_dir is
/// nonempty, metrics.jsonl and per-epoch checkpoints land there.
TrainResult pretrain(const PairSource& source, const TrainConfig& cfg,
                     const std::filesystem::path& out_dir = {},
                     const PairSource* init_source = nullptr);

/// Frozen-encoder evaluation: embed every view of a materialized dataset,
/// train a multinomial logistic regression (full-batch GD, 500 iterations,
/// lr 0.5) on a seeded 80/20 split, return held-out accuracy.
double linear_probe(const EncoderParams& params, const std::filesystem::path& dataset_dir,
                    std::uint64_t seed);
double linear_probe(const std::filesystem::path& ckpt_path,
                    const std::filesystem::path& dataset_dir, std::uint64_t seed);

} // namespace segloc
