#include "segloc/bank.hpp"

#include <cmath>
#include <memory>

namespace segloc {

ClassQueueBank::ClassQueueBank(int C, int K) : C_(C), K_(K) {
    require(C >= 1, ErrorKind::InvalidArgument, "class count must be >= 1");
    require(K >= 1, ErrorKind::InvalidArgument, "queue capacity must be >= 1");
    queues_.resize(static_cast<std::size_t>(C));
}

void ClassQueueBank::check_key(const Embedding& emb, int class_id) const {
    require(class_id >= 0 && class_id < C_, ErrorKind::Contract,
            "key class " + std::to_string(class_id) + " out of range for C=" + std::to_string(C_));
    require(std::fabs(norm(emb) - 1.0) <= 1e-6, ErrorKind::Contract, "key embedding is not unit norm");
}

void ClassQueueBank::enqueue_keys(const std::vector<std::pair<Embedding, int>>& keys) {
    for (const auto& [emb, class_id] : keys) {
        check_key(emb, class_id);
        const std::uint64_t seq = next_seq_++;
        for (int c = 0; c < C_; ++c) {
            if (c == class_id) continue;
            queues_[c].push_back(BankKey{emb, class_id, seq});
            while (static_cast<int>(queues_[c].size()) > K_) queues_[c].pop_front();
        }
    }
}

const std::deque<BankKey>& ClassQueueBank::negatives_for(int class_id) const {
    const std::deque<BankKey>& q = queue(class_id);
    if (q.empty()) {
        fail(ErrorKind::EmptyNegatives,
             "queue " + std::to_string(class_id) + " holds no negatives yet");
    }
    return q;
}

const std::deque<BankKey>& ClassQueueBank::queue(int class_id) const {
    require(class_id >= 0 && class_id < C_, ErrorKind::Contract,
            "class " + std::to_string(class_id) + " out of range for C=" + std::to_string(C_));
    return queues_[static_cast<std::size_t>(class_id)];
}

std::vector<int> ClassQueueBank::fill_levels() const {
    std::vector<int> fills(static_cast<std::size_t>(C_));
    for (int c = 0; c < C_; ++c) fills[c] = static_cast<int>(queues_[c].size());
    return fills;
}

bool ClassQueueBank::full() const {
    for (const auto& q : queues_) {
        if (static_cast<int>(q.size()) != K_) return false;
    }
    return true;
}

void ClassQueueBank::restore(std::vector<std::deque<BankKey>> queues, std::uint64_t next_seq) {
    require(static_cast<int>(queues.size()) == C_, ErrorKind::Checkpoint,
            "restored bank has the wrong queue count");
    for (int c = 0; c < C_; ++c) {
        require(static_cast<int>(queues[c].size()) <= K_, ErrorKind::Checkpoint,
                "restored queue exceeds capacity");
        for (const BankKey& key : queues[c]) {
            check_key(key.emb, key.class_id);
            require(key.class_id != c, ErrorKind::Checkpoint,
                    "restored queue violates the class-exclusion rule");
        }
    }
    queues_ = std::move(queues);
    next_seq_ = next_seq;
}

void init_bank(ClassQueueBank& bank, const KeyChunkSource& next_chunk) {
    const int C = bank.class_count();
    require(C >= 2, ErrorKind::Initialization,
            "cannot fill per-class queues with fewer than 2 classes");
    const std::uint64_t budget =
        64ull * static_cast<std::uint64_t>(C) * static_cast<std::uint64_t>(bank.capacity()) + 1024;
    std::uint64_t consumed = 0;
    while (!bank.full()) {
        std::vector<std::pair<Embedding, int>> chunk = next_chunk();
        if (chunk.empty()) fail(ErrorKind::Initialization, "key source exhausted before queues filled");
        consumed += chunk.size();
        require(consumed <= budget, ErrorKind::Initialization,
                "queues failed to fill within the key budget");
        bank.enqueue_keys(chunk);
    }
}

KeyChunkSource random_key_source(int C, std::uint64_t seed) {
    auto rng = std::make_shared<Rng>(seed);
    return [rng, C]() {
        std::vector<std::pair<Embedding, int>> chunk;
        chunk.reserve(64);
        for (int i = 0; i < 64; ++i) {
            Embedding e{};
            double len = 0.0;
            do {
                for (int d = 0; d < kEmbedDim; ++d) e[d] = rng->normal();
                len = norm(e);
            } while (len < 1e-12);
            for (int d = 0; d < kEmbedDim; ++d) e[d] /= len;
            chunk.emplace_back(e, static_cast<int>(rng->below(static_cast<std::uint64_t>(C))));
        }
        return chunk;
    };
}

} // namespace segloc
