#include "optbench/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "optbench/errors.hpp"

namespace optbench {

namespace {

class Writer {
  public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        out_.insert(out_.end(), s.begin(), s.end());
    }
    std::vector<std::uint8_t> take() { return std::move(out_); }

  private:
    std::vector<std::uint8_t> out_;
};

class Reader {
  public:
    explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

    std::uint8_t u8() {
        need(1);
        return in_[pos_++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_++]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::size_t remaining() const noexcept { return in_.size() - pos_; }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    void need(std::size_t n) const {
        if (in_.size() - pos_ < n) {
            throw TruncationError("checkpoint truncated at byte " + std::to_string(pos_) + " (needed " +
                                  std::to_string(n) + " more)");
        }
    }

  private:
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    Writer w;
    for (char c : std::string_view("OBCK")) w.u8(static_cast<std::uint8_t>(c));
    w.u32(kCheckpointVersion);
    w.str(ckpt.model_name);
    w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& t : ckpt.tensors) {
        w.str(t.name);
        w.u8(kDtypeF64);
        w.u32(static_cast<std::uint32_t>(t.value.rank()));
        for (std::size_t d : t.value.shape()) w.u64(d);
        for (double v : t.value.data()) w.f64(v);
    }
    return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    r.need(4);
    char magic[4];
    for (char& c : magic) c = static_cast<char>(r.u8());
    if (std::string_view(magic, 4) != "OBCK") throw FormatError("not a checkpoint file (bad magic)");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint ckpt;
    ckpt.model_name = r.str();
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensor t;
        t.name = r.str();
        const std::uint8_t dtype = r.u8();
        if (dtype != kDtypeF64) {
            throw FormatError("tensor '" + t.name + "' has unsupported dtype tag " + std::to_string(dtype));
        }
        const std::uint32_t rank = r.u32();
        Shape shape(rank);
        for (auto& d : shape) d = static_cast<std::size_t>(r.u64());
        const std::size_t n = shape_numel(shape);
        r.need(n * 8);
        std::vector<double> data(n);
        for (double& v : data) v = r.f64();
        t.value = Tensor(std::move(shape), std::move(data));
        ckpt.tensors.push_back(std::move(t));
    }
    if (r.remaining() != 0) {
        throw FormatError("checkpoint has " + std::to_string(r.remaining()) + " trailing bytes");
    }
    return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const auto bytes = encode_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

Checkpoint checkpoint_of(const Model& model) {
    Checkpoint ckpt{model.config().name, {}};
    for (const Parameter& p : model.parameters()) ckpt.tensors.push_back({p.name, p.value});
    const auto& bn = model.batch_norm_buffers();
    for (std::size_t i = 0; i < bn.size(); ++i) {
        ckpt.tensors.push_back({"bn" + std::to_string(i) + ".running_mean", bn[i].running_mean});
        ckpt.tensors.push_back({"bn" + std::to_string(i) + ".running_var", bn[i].running_var});
    }
    return ckpt;
}

void load_checkpoint(Model& model, const Checkpoint& ckpt) {
    if (ckpt.model_name != model.config().name) {
        throw DataError("checkpoint is for model '" + ckpt.model_name + "', not '" + model.config().name + "'");
    }
    std::map<std::string, const Tensor*> by_name;
    for (const auto& t : ckpt.tensors) by_name[t.name] = &t.value;
    auto assign = [&](const std::string& name, Tensor& dst) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw DataError("checkpoint lacks tensor '" + name + "'");
        if (it->second->shape() != dst.shape()) {
            throw DataError("tensor '" + name + "' has shape " + shape_string(it->second->shape()) + ", model expects " +
                            shape_string(dst.shape()));
        }
        dst = *it->second;
    };
    for (Parameter& p : model.parameters()) assign(p.name, p.value);
    auto& bn = model.batch_norm_buffers();
    for (std::size_t i = 0; i < bn.size(); ++i) {
        assign("bn" + std::to_string(i) + ".running_mean", bn[i].running_mean);
        assign("bn" + std::to_string(i) + ".running_var", bn[i].running_var);
    }
}

}  // namespace optbench
