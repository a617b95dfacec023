#include "segloc/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>

#include "json.hpp"

#include "segloc/png_io.hpp"

namespace segloc {

void validate(const TrainConfig& cfg) {
    require(cfg.temperature > 0.0, ErrorKind::InvalidArgument, "temperature must be positive");
    require(cfg.key_momentum >= 0.0 && cfg.key_momentum <= 1.0, ErrorKind::InvalidArgument,
            "key momentum must lie in [0, 1]");
    require(cfg.lr >= 0.0, ErrorKind::InvalidArgument, "learning rate must be nonnegative");
    require(cfg.sgd_momentum >= 0.0 && cfg.sgd_momentum < 1.0, ErrorKind::InvalidArgument,
            "sgd momentum must lie in [0, 1)");
    require(cfg.weight_decay >= 0.0, ErrorKind::InvalidArgument, "weight decay must be nonnegative");
    require(cfg.batch >= 1, ErrorKind::InvalidArgument, "batch must be >= 1");
    require(cfg.accum >= 1, ErrorKind::InvalidArgument, "accum must be >= 1");
    require(cfg.epochs >= 1, ErrorKind::InvalidArgument, "epochs must be >= 1");
    require(cfg.steps_per_epoch >= 0, ErrorKind::InvalidArgument,
            "steps_per_epoch must be >= 0 (0 = derive)");
    require(cfg.queue_size >= 1, ErrorKind::InvalidArgument, "queue_size must be >= 1");
    require(cfg.freeze >= 0 && cfg.freeze <= 3, ErrorKind::InvalidArgument,
            "freeze must lie in 0..3");
    require(cfg.workers >= 1, ErrorKind::InvalidArgument, "workers must be >= 1");
}

std::string config_hash(const TrainConfig& cfg) {
    // Worker count and instrumentation do not shape the trajectory, so they
    // stay out of the hash; checkpoints from different worker counts match.
    nlohmann::json j = {{"temperature", cfg.temperature},
                        {"key_momentum", cfg.key_momentum},
                        {"lr", cfg.lr},
                        {"sgd_momentum", cfg.sgd_momentum},
                        {"weight_decay", cfg.weight_decay},
                        {"batch", cfg.batch},
                        {"accum", cfg.accum},
                        {"epochs", cfg.epochs},
                        {"steps_per_epoch", cfg.steps_per_epoch},
                        {"queue_size", cfg.queue_size},
                        {"queue_init", cfg.queue_init == QueueInit::model ? "model" : "random"},
                        {"freeze", cfg.freeze},
                        {"seed", cfg.seed}};
    const std::string s = j.dump();
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001B3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

template <typename NegAt>
InfoNceResult info_nce_impl(const Embedding& q, const Embedding& k_pos, std::size_t n_negs,
                            NegAt&& neg_at, double tau) {
    require(tau > 0.0, ErrorKind::InvalidArgument, "temperature must be positive");
    require(n_negs >= 1, ErrorKind::Contract, "InfoNCE needs at least one negative");

    InfoNceResult r;
    r.pos_logit = dot(q, k_pos);
    const double l0 = r.pos_logit / tau;
    std::vector<double> logits(n_negs);
    double max_logit = l0;
    for (std::size_t i = 0; i < n_negs; ++i) {
        logits[i] = dot(q, neg_at(i)) / tau;
        max_logit = std::max(max_logit, logits[i]);
    }
    double denom = std::exp(l0 - max_logit);
    for (std::size_t i = 0; i < n_negs; ++i) denom += std::exp(logits[i] - max_logit);
    r.loss = -l0 + max_logit + std::log(denom);

    // grad wrt q: (sum_i p_i k_i - k_pos) / tau, with k_0 the positive.
    const double p0 = std::exp(l0 - max_logit) / denom;
    Embedding g{};
    for (int d = 0; d < kEmbedDim; ++d) g[d] = (p0 - 1.0) * k_pos[d];
    bool strictly_top = true;
    for (std::size_t i = 0; i < n_negs; ++i) {
        const double pi = std::exp(logits[i] - max_logit) / denom;
        const Embedding& n = neg_at(i);
        for (int d = 0; d < kEmbedDim; ++d) g[d] += pi * n[d];
        if (logits[i] >= l0) strictly_top = false;
    }
    for (int d = 0; d < kEmbedDim; ++d) g[d] /= tau;
    r.grad_q = g;
    r.top1 = strictly_top;
    return r;
}

} // namespace

InfoNceResult info_nce(const Embedding& q, const Embedding& k_pos,
                       const std::vector<Embedding>& negs, double tau) {
    return info_nce_impl(q, k_pos, negs.size(),
                         [&](std::size_t i) -> const Embedding& { return negs[i]; }, tau);
}

InfoNceResult info_nce(const Embedding& q, const Embedding& k_pos, const std::deque<BankKey>& negs,
                       double tau) {
    return info_nce_impl(q, k_pos, negs.size(),
                         [&](std::size_t i) -> const Embedding& { return negs[i].emb; }, tau);
}

void sgd_step(EncoderParams& params, const EncoderParams& grads, EncoderParams& velocity,
              double lr, double momentum, double weight_decay,
              const std::array<bool, kTensorCount>& trainable) {
    require(params.shapes_valid() && grads.shapes_valid() && velocity.shapes_valid(),
            ErrorKind::Contract, "optimizer tensor shapes do not match the architecture");
    for (int id = 0; id < kTensorCount; ++id) {
        if (!trainable[id]) continue;
        double* th = params.t[id].data();
        const double* g = grads.t[id].data();
        double* v = velocity.t[id].data();
        const std::size_t n = params.t[id].size();
        for (std::size_t i = 0; i < n; ++i) {
            const double adjusted = g[i] + weight_decay * th[i];
            v[i] = momentum * v[i] + adjusted;
            th[i] -= lr * v[i];
        }
    }
}

SynthPairSource::SynthPairSource(const ForegroundCorpus& fores, const BackgroundCorpus& backs,
                                 SynthConfig cfg, std::uint64_t stream_tag)
    : fores_(fores), backs_(backs), cfg_(cfg), stream_tag_(stream_tag) {}

TrainingPair SynthPairSource::get(std::uint64_t index) const {
    Rng rng(mix_seed(cfg_.seed, stream_tag_, index));
    PositivePair pair = synthesize_pair(fores_, backs_, cfg_, rng);
    TrainingPair tp;
    tp.class_id = pair.class_id;
    for (int v = 0; v < 2; ++v) {
        tp.image[v] = std::move(pair.views[v].image);
        tp.roi[v] = pair.views[v].paste_box;
    }
    return tp;
}

DatasetPairSource::DatasetPairSource(const std::filesystem::path& dir, std::uint64_t seed)
    : dir_(dir), seed_(seed) {
    std::ifstream in(dir / "pairs.jsonl");
    if (!in) fail(ErrorKind::InvalidDataset, "cannot open " + (dir / "pairs.jsonl").string());
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        require(!j.is_discarded(), ErrorKind::InvalidDataset, "malformed manifest line");
        Record rec;
        rec.class_id = j.at("class_id").get<int>();
        const auto& views = j.at("views");
        require(views.is_array() && views.size() == 2, ErrorKind::InvalidDataset,
                "manifest pair must list exactly 2 views");
        for (int v = 0; v < 2; ++v) {
            rec.image[v] = views[v].at("image").get<std::string>();
            const auto& bb = views[v].at("bbox");
            rec.roi[v] = BBox{bb[0].get<int>(), bb[1].get<int>(), bb[2].get<int>(), bb[3].get<int>()};
        }
        class_count_ = std::max(class_count_, rec.class_id + 1);
        records_.push_back(std::move(rec));
    }
    require(!records_.empty(), ErrorKind::InvalidDataset, "dataset manifest is empty");
}

const std::vector<std::uint32_t>& DatasetPairSource::epoch_order(std::uint64_t epoch) const {
    std::lock_guard<std::mutex> lock(order_mutex_);
    auto it = orders_.find(epoch);
    if (it != orders_.end()) return it->second;
    std::vector<std::uint32_t> order(records_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::uint32_t>(i);
    Rng rng(mix_seed(seed_, stream::train_order, epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
        const std::size_t j = rng.below(i);
        std::swap(order[i - 1], order[j]);
    }
    return orders_.emplace(epoch, std::move(order)).first->second;
}

TrainingPair DatasetPairSource::get(std::uint64_t index) const {
    const std::uint64_t n = records_.size();
    const Record& rec = records_[epoch_order(index / n)[index % n]];
    TrainingPair tp;
    tp.class_id = rec.class_id;
    for (int v = 0; v < 2; ++v) {
        tp.image[v] = read_png_rgb(dir_ / rec.image[v]);
        tp.roi[v] = rec.roi[v];
        require(tp.roi[v].inside(tp.image[v].width, tp.image[v].height), ErrorKind::InvalidDataset,
                "manifest bbox falls outside its image");
    }
    return tp;
}

namespace {

struct PreparedSample {
    int class_id = 0;
    Embedding q{};
    Embedding k{};
    EncodeCache cache;
};

// Computes pure per-sample values (synthesis + both encodes) for global pair
// indices [begin, begin+count). Worker count affects scheduling only.
void prepare_samples(const PairSource& source, const EncoderParams& query,
                     const EncoderParams& key, std::uint64_t begin, int count, int workers,
                     std::vector<PreparedSample>& out) {
    out.resize(count);
    auto work = [&](int offset, int stride) {
        for (int j = offset; j < count; j += stride) {
            TrainingPair pair = source.get(begin + j);
            PreparedSample& s = out[j];
            s.class_id = pair.class_id;
            s.q = encode(query, pair.image[0], pair.roi[0], &s.cache);
            s.k = encode(key, pair.image[1], pair.roi[1]);
        }
    };
    const int n_threads = std::min(workers, count);
    if (n_threads <= 1) {
        work(0, 1);
        return;
    }
    std::vector<std::thread> pool;
    std::exception_ptr first_error;
    std::mutex error_mutex;
    for (int t = 0; t < n_threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                work(t, n_threads);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

void accumulate(EncoderParams& sum, const EncoderParams& g) {
    for (int id = 0; id < kTensorCount; ++id) {
        double* a = sum.t[id].data();
        const double* b = g.t[id].data();
        const std::size_t n = sum.t[id].size();
        for (std::size_t i = 0; i < n; ++i) a[i] += b[i];
    }
}

} // namespace

TrainResult pretrain(const PairSource& source, const TrainConfig& cfg,
                     const std::filesystem::path& out_dir, const PairSource* init_source) {
    validate(cfg);
    const int C = source.class_count();
    require(C >= 2, ErrorKind::Initialization, "pre-training requires at least 2 classes");

    TrainResult result;
    result.query = init_params(cfg.seed);
    result.key = result.query;
    result.velocity = zero_params();
    const std::array<bool, kTensorCount> trainable = freeze_stages(cfg.freeze);

    result.bank = ClassQueueBank(C, cfg.queue_size);
    const PairSource& init_src = init_source ? *init_source : source;
    if (cfg.queue_init == QueueInit::random) {
        init_bank(result.bank, random_key_source(C, mix_seed(cfg.seed, stream::bank_random)));
    } else {
        std::uint64_t init_index = 0;
        init_bank(result.bank, [&]() {
            TrainingPair pair = init_src.get(init_index++);
            std::vector<std::pair<Embedding, int>> chunk;
            chunk.emplace_back(encode(result.key, pair.image[0], pair.roi[0]), pair.class_id);
            chunk.emplace_back(encode(result.key, pair.image[1], pair.roi[1]), pair.class_id);
            return chunk;
        });
    }

    int steps_per_epoch = cfg.steps_per_epoch;
    if (steps_per_epoch <= 0) {
        const std::size_t n_pairs = source.pair_count();
        const std::size_t per_step = static_cast<std::size_t>(cfg.accum) * cfg.batch;
        steps_per_epoch = n_pairs > 0 ? static_cast<int>(std::max<std::size_t>(1, n_pairs / per_step))
                                      : 100;
    }
    const long total_steps = static_cast<long>(cfg.epochs) * steps_per_epoch;
    const int samples_per_step = cfg.accum * cfg.batch;
    const std::string cfg_hash = config_hash(cfg);

    std::ofstream metrics_out;
    if (!out_dir.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(out_dir, ec);
        require(!ec, ErrorKind::Io, "cannot create " + out_dir.string());
        metrics_out.open(out_dir / "metrics.jsonl", std::ios::binary);
        if (!metrics_out) fail(ErrorKind::Io, "cannot write metrics.jsonl");
    }

    std::uint64_t key_stamp = cfg.check_invariants ? params_fingerprint(result.key) : 0;
    std::uint64_t next_index = 0;
    std::vector<PreparedSample> prepared;
    // Caches are heavy, so samples are prepared in bounded chunks; backprop
    // accumulation always runs in global sample order regardless of chunking.
    const int chunk_size = std::min(samples_per_step, std::max(4, 2 * cfg.workers));

    for (long step = 0; step < total_steps; ++step) {
        EncoderParams grad_sum = zero_params();
        double loss_sum = 0.0, pos_sum = 0.0;
        int top1_count = 0;
        std::vector<std::pair<Embedding, int>> step_keys;
        step_keys.reserve(samples_per_step);

        for (int done = 0; done < samples_per_step; done += chunk_size) {
            const int count = std::min(chunk_size, samples_per_step - done);
            prepare_samples(source, result.query, result.key, next_index + done, count,
                            cfg.workers, prepared);
            for (int j = 0; j < count; ++j) {
                const PreparedSample& s = prepared[j];
                const std::deque<BankKey>& negs = result.bank.negatives_for(s.class_id);
                if (cfg.check_invariants) {
                    for (const BankKey& nk : negs) {
                        require(nk.class_id != s.class_id, ErrorKind::Contract,
                                "a negative shares the query's class");
                    }
                }
                const InfoNceResult nce = info_nce(s.q, s.k, negs, cfg.temperature);
                loss_sum += nce.loss;
                pos_sum += nce.pos_logit;
                top1_count += nce.top1 ? 1 : 0;
                accumulate(grad_sum, backprop(result.query, s.cache, nce.grad_q));
                step_keys.emplace_back(s.k, s.class_id);
            }
        }
        next_index += samples_per_step;

        const double inv_n = static_cast<double>(samples_per_step);
        for (int id = 0; id < kTensorCount; ++id) {
            for (double& v : grad_sum.t[id]) v /= inv_n;
        }

        sgd_step(result.query, grad_sum, result.velocity, cfg.lr, cfg.sgd_momentum,
                 cfg.weight_decay, trainable);

        if (cfg.check_invariants) {
            require(params_fingerprint(result.key) == key_stamp, ErrorKind::Contract,
                    "key encoder changed outside momentum_update");
        }
        momentum_update(result.key, result.query, cfg.key_momentum);
        if (cfg.check_invariants) key_stamp = params_fingerprint(result.key);

        result.bank.enqueue_keys(step_keys);

        StepMetrics m;
        m.step = static_cast<int>(step) + 1; // 1-based: optimizer steps completed
        m.loss = loss_sum / inv_n;
        m.pos_logit_mean = pos_sum / inv_n;
        m.acc1 = static_cast<double>(top1_count) / inv_n;
        m.queue_fill = result.bank.fill_levels();
        if (metrics_out.is_open()) {
            nlohmann::json line = {{"step", m.step},
                                   {"loss", m.loss},
                                   {"pos_logit_mean", m.pos_logit_mean},
                                   {"acc1", m.acc1},
                                   {"queue_fill", m.queue_fill}};
            metrics_out << line.dump() << "\n";
        }
        result.metrics.push_back(std::move(m));

        if (!out_dir.empty() && (step + 1) % steps_per_epoch == 0) {
            const long epoch = (step + 1) / steps_per_epoch;
            TrainCheckpoint ckpt{result.query, result.key, result.velocity, result.bank,
                                 static_cast<int>(step + 1), cfg_hash};
            save_checkpoint(out_dir / ("ckpt_epoch_" + std::to_string(epoch)), ckpt);
        }
    }
    if (metrics_out.is_open()) {
        metrics_out.flush();
        require(metrics_out.good(), ErrorKind::Io, "short write to metrics.jsonl");
    }
    return result;
}

} // namespace segloc
