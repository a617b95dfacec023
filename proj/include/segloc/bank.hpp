#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <utility>
#include <vector>

#include "segloc/encoder.hpp"

namespace segloc {

struct BankKey {
    Embedding emb{};
    int class_id = 0;
    std::uint64_t seq = 0; // global enqueue order, assigned by the bank
};

/// One fixed-capacity FIFO queue of negative keys per class. Queue c only ever
/// holds keys whose class differs from c, so a class-c query drawn against it
/// sees true negatives only.
class ClassQueueBank {
public:
    ClassQueueBank() = default;
    ClassQueueBank(int C, int K);

    int class_count() const { return C_; }
    int capacity() const { return K_; }

    /// Appends each key to every queue except its own class's, in input order,
    /// evicting from the front once a queue exceeds capacity.
    void enqueue_keys(const std::vector<std::pair<Embedding, int>>& keys);

    /// Current contents of queue class_id, oldest first. Throws EmptyNegatives
    /// when the queue is empty: training must not proceed with zero negatives.
    const std::deque<BankKey>& negatives_for(int class_id) const;

    /// Same view without the emptiness check (serialization, tests).
    const std::deque<BankKey>& queue(int class_id) const;

    std::vector<int> fill_levels() const;
    bool full() const;
    std::uint64_t seq_counter() const { return next_seq_; }

    /// Wholesale replacement used by checkpoint restore; revalidates exclusion,
    /// capacity, and unit norms.
    void restore(std::vector<std::deque<BankKey>> queues, std::uint64_t next_seq);

private:
    void check_key(const Embedding& emb, int class_id) const;

    int C_ = 0;
    int K_ = 0;
    std::uint64_t next_seq_ = 0;
    std::vector<std::deque<BankKey>> queues_;
};

/// Produces the next batch of (embedding, class) keys; an empty batch means
/// the source is exhausted.
using KeyChunkSource = std::function<std::vector<std::pair<Embedding, int>>()>;

/// Feeds chunks into the bank until every queue holds exactly its capacity.
/// Throws Initialization if the source runs dry or the fill budget is blown
/// (with one class the exclusion rule starves the only queue forever).
void init_bank(ClassQueueBank& bank, const KeyChunkSource& next_chunk);

/// Unbounded source of unit-normalized standard-normal keys with uniformly
/// random class ids.
KeyChunkSource random_key_source(int C, std::uint64_t seed);

} // namespace segloc
