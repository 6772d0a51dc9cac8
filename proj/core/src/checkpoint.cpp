#include "ratelab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ratelab/error.hpp"

namespace ratelab {

namespace {

constexpr char kMagic[8] = {'R', 'L', 'A', 'B', 'C', 'K', 'P', 'T'};
enum SectionKind : std::uint8_t { kNetwork = 1, kOptimizer = 2, kText = 3 };

class Writer {
 public:
  void bytes(const void* data, std::size_t n) { out_.append(static_cast<const char*>(data), n); }
  template <typename T>
  void uint(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void str32(const std::string& s) {
    uint<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void matrix(const Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
    }
  }
  void vector(const Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) f64(v(i));
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& data) : data_(data) {}
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw InvalidArgument("checkpoint truncated");
  }
  template <typename T>
  T uint() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return v;
  }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  std::string raw(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string str32() { return raw(uint<std::uint32_t>()); }
  Eigen::MatrixXd matrix(std::uint32_t rows, std::uint32_t cols) {
    need(static_cast<std::size_t>(rows) * cols * 8);
    Eigen::MatrixXd m(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r) {
      for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = f64();
    }
    return m;
  }
  Eigen::VectorXd vector(std::uint32_t n) {
    need(static_cast<std::size_t>(n) * 8);
    Eigen::VectorXd v(n);
    for (std::uint32_t i = 0; i < n; ++i) v(i) = f64();
    return v;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  const std::string& data_;
  std::size_t pos_ = 0;
};

void write_network(Writer& w, const DenseNetwork& net) {
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(net.layers().size()));
  for (const auto& l : net.layers()) {
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(l.weight.rows()));
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(l.weight.cols()));
    w.uint<std::uint8_t>(static_cast<std::uint8_t>(l.activation));
    w.matrix(l.weight);
    w.vector(l.bias);
  }
}

DenseNetwork read_network(Reader& r) {
  const auto n = r.uint<std::uint32_t>();
  std::vector<DenseLayer> layers;
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto rows = r.uint<std::uint32_t>();
    const auto cols = r.uint<std::uint32_t>();
    const auto act = r.uint<std::uint8_t>();
    if (act > 1) throw InvalidArgument("checkpoint has unknown activation code");
    DenseLayer layer;
    layer.weight = r.matrix(rows, cols);
    layer.bias = r.vector(rows);
    layer.activation = static_cast<Activation>(act);
    layers.push_back(std::move(layer));
  }
  return DenseNetwork(std::move(layers));
}

void write_optimizer(Writer& w, const OptimizerState& s) {
  w.uint<std::uint64_t>(static_cast<std::uint64_t>(s.step));
  w.f64(s.beta1);
  w.f64(s.beta2);
  w.f64(s.epsilon);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(s.first.size()));
  for (std::size_t i = 0; i < s.first.size(); ++i) {
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(s.first[i].weight.rows()));
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(s.first[i].weight.cols()));
    w.matrix(s.first[i].weight);
    w.vector(s.first[i].bias);
    w.matrix(s.second[i].weight);
    w.vector(s.second[i].bias);
  }
}

OptimizerState read_optimizer(Reader& r) {
  OptimizerState s;
  s.step = static_cast<long long>(r.uint<std::uint64_t>());
  s.beta1 = r.f64();
  s.beta2 = r.f64();
  s.epsilon = r.f64();
  const auto n = r.uint<std::uint32_t>();
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto rows = r.uint<std::uint32_t>();
    const auto cols = r.uint<std::uint32_t>();
    LayerGrad m{r.matrix(rows, cols), r.vector(rows)};
    LayerGrad v{r.matrix(rows, cols), r.vector(rows)};
    s.first.push_back(std::move(m));
    s.second.push_back(std::move(v));
  }
  return s;
}

}  // namespace

std::string Checkpoint::serialize() const {
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.uint<std::uint32_t>(kCheckpointVersion);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(networks.size() + optimizers.size() + texts.size()));
  for (const auto& [name, net] : networks) {
    w.uint<std::uint8_t>(kNetwork);
    w.str32(name);
    write_network(w, net);
  }
  for (const auto& [name, opt] : optimizers) {
    w.uint<std::uint8_t>(kOptimizer);
    w.str32(name);
    write_optimizer(w, opt);
  }
  for (const auto& [name, text] : texts) {
    w.uint<std::uint8_t>(kText);
    w.str32(name);
    w.uint<std::uint64_t>(text.size());
    w.bytes(text.data(), text.size());
  }
  return w.take();
}

Checkpoint Checkpoint::deserialize(const std::string& bytes) {
  Reader r(bytes);
  if (r.raw(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw InvalidArgument("not a checkpoint file (bad magic)");
  }
  const auto version = r.uint<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw VersionMismatch("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ckpt;
  const auto count = r.uint<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto kind = r.uint<std::uint8_t>();
    auto name = r.str32();
    switch (kind) {
      case kNetwork:
        ckpt.networks.emplace(std::move(name), read_network(r));
        break;
      case kOptimizer:
        ckpt.optimizers.emplace(std::move(name), read_optimizer(r));
        break;
      case kText: {
        const auto len = r.uint<std::uint64_t>();
        ckpt.texts.emplace(std::move(name), r.raw(static_cast<std::size_t>(len)));
        break;
      }
      default:
        throw InvalidArgument("checkpoint has unknown section kind");
    }
  }
  if (!r.done()) throw InvalidArgument("checkpoint has trailing bytes");
  return ckpt;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  const auto bytes = serialize();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

}  // namespace ratelab
