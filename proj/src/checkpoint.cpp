#include "segloc/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"

namespace segloc {

namespace {

// Serialized tensors are raw doubles; integers (class ids, sequence tags) ride
// along as exactly representable doubles.
struct BlobWriter {
    std::vector<double> blob;
    nlohmann::json tensors = nlohmann::json::array();

    void add(const std::string& name, const std::vector<int>& shape, const double* data,
             std::size_t n) {
        tensors.push_back({{"name", name},
                           {"shape", shape},
                           {"offset", blob.size() * sizeof(double)}});
        blob.insert(blob.end(), data, data + n);
    }
};

struct BlobReader {
    std::vector<double> blob;
    nlohmann::json tensors;

    // Finds a tensor entry, checks its shape, and returns its data pointer.
    const double* get(const std::string& name, const std::vector<int>& want_shape) const {
        for (const auto& t : tensors) {
            if (t.at("name").get<std::string>() != name) continue;
            const std::vector<int> shape = t.at("shape").get<std::vector<int>>();
            require(shape == want_shape, ErrorKind::Checkpoint,
                    "tensor " + name + " has an unexpected shape");
            std::size_t n = 1;
            for (int d : shape) n *= static_cast<std::size_t>(d);
            const std::size_t offset = t.at("offset").get<std::size_t>();
            require(offset % sizeof(double) == 0 && offset / sizeof(double) + n <= blob.size(),
                    ErrorKind::Checkpoint, "tensor " + name + " overruns the blob");
            return blob.data() + offset / sizeof(double);
        }
        fail(ErrorKind::Checkpoint, "checkpoint is missing tensor " + name);
    }

    std::vector<int> shape_of(const std::string& name) const {
        for (const auto& t : tensors) {
            if (t.at("name").get<std::string>() == name) {
                return t.at("shape").get<std::vector<int>>();
            }
        }
        fail(ErrorKind::Checkpoint, "checkpoint is missing tensor " + name);
    }
};

void add_params(BlobWriter& w, const std::string& prefix, const EncoderParams& p) {
    require(p.shapes_valid(), ErrorKind::Contract, "cannot serialize malformed parameters");
    for (int id = 0; id < kTensorCount; ++id) {
        w.add(prefix + "/" + tensor_name(id), tensor_shape(id), p.t[id].data(), p.t[id].size());
    }
}

EncoderParams read_params(const BlobReader& r, const std::string& prefix) {
    EncoderParams p;
    for (int id = 0; id < kTensorCount; ++id) {
        const double* data = r.get(prefix + "/" + tensor_name(id), tensor_shape(id));
        p.t[id].assign(data, data + tensor_size(id));
    }
    return p;
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, const TrainCheckpoint& ckpt) {
    BlobWriter w;
    add_params(w, "query", ckpt.query);
    add_params(w, "key", ckpt.key);
    add_params(w, "opt", ckpt.velocity);

    const int C = ckpt.bank.class_count();
    for (int c = 0; c < C; ++c) {
        const auto& q = ckpt.bank.queue(c);
        const int n = static_cast<int>(q.size());
        std::vector<double> emb(static_cast<std::size_t>(n) * kEmbedDim);
        std::vector<double> cls(static_cast<std::size_t>(n));
        std::vector<double> seq(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            std::memcpy(emb.data() + static_cast<std::size_t>(i) * kEmbedDim, q[i].emb.data(),
                        kEmbedDim * sizeof(double));
            cls[i] = static_cast<double>(q[i].class_id);
            seq[i] = static_cast<double>(q[i].seq);
        }
        const std::string base = "bank/q" + std::to_string(c);
        w.add(base + "/emb", {n, kEmbedDim}, emb.data(), emb.size());
        w.add(base + "/class", {n}, cls.data(), cls.size());
        w.add(base + "/seq", {n}, seq.data(), seq.size());
    }

    nlohmann::json header = {{"step", ckpt.step},
                             {"config_hash", ckpt.config_hash},
                             {"C", C},
                             {"K", ckpt.bank.capacity()},
                             {"seq_counter", ckpt.bank.seq_counter()},
                             {"tensors", w.tensors}};
    const std::string header_text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
    const std::uint64_t header_len = header_text.size();
    out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    out.write(reinterpret_cast<const char*>(w.blob.data()),
              static_cast<std::streamsize>(w.blob.size() * sizeof(double)));
    require(out.good(), ErrorKind::Io, "short write to " + path.string());
}

TrainCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Checkpoint, "cannot open " + path.string());

    std::uint64_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
    require(in.good() && header_len > 0 && header_len < (1ull << 30), ErrorKind::Checkpoint,
            "corrupt checkpoint header length");
    std::string header_text(header_len, '\0');
    in.read(header_text.data(), static_cast<std::streamsize>(header_len));
    require(in.good(), ErrorKind::Checkpoint, "truncated checkpoint header");

    nlohmann::json header = nlohmann::json::parse(header_text, nullptr, false);
    require(!header.is_discarded(), ErrorKind::Checkpoint, "malformed checkpoint header");

    BlobReader r;
    r.tensors = header.at("tensors");
    {
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        require(bytes.size() % sizeof(double) == 0, ErrorKind::Checkpoint,
                "checkpoint blob is not a whole number of doubles");
        r.blob.resize(bytes.size() / sizeof(double));
        std::memcpy(r.blob.data(), bytes.data(), bytes.size());
    }

    TrainCheckpoint ckpt;
    ckpt.step = header.at("step").get<int>();
    ckpt.config_hash = header.at("config_hash").get<std::string>();
    ckpt.query = read_params(r, "query");
    ckpt.key = read_params(r, "key");
    ckpt.velocity = read_params(r, "opt");

    const int C = header.at("C").get<int>();
    const int K = header.at("K").get<int>();
    ckpt.bank = ClassQueueBank(C, K);
    std::vector<std::deque<BankKey>> queues(static_cast<std::size_t>(C));
    for (int c = 0; c < C; ++c) {
        const std::string base = "bank/q" + std::to_string(c);
        const std::vector<int> emb_shape = r.shape_of(base + "/emb");
        require(emb_shape.size() == 2 && emb_shape[1] == kEmbedDim && emb_shape[0] >= 0,
                ErrorKind::Checkpoint, "bank tensor " + base + " has an unexpected shape");
        const int n = emb_shape[0];
        const double* emb = r.get(base + "/emb", {n, kEmbedDim});
        const double* cls = r.get(base + "/class", {n});
        const double* seq = r.get(base + "/seq", {n});
        for (int i = 0; i < n; ++i) {
            BankKey key;
            std::memcpy(key.emb.data(), emb + static_cast<std::size_t>(i) * kEmbedDim,
                        kEmbedDim * sizeof(double));
            key.class_id = static_cast<int>(cls[i]);
            key.seq = static_cast<std::uint64_t>(seq[i]);
            queues[c].push_back(key);
        }
    }
    ckpt.bank.restore(std::move(queues), header.at("seq_counter").get<std::uint64_t>());
    return ckpt;
}

} // namespace segloc
