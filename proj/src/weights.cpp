#include "psm/weights.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace psm {

void WeightBundle::add(std::string name, Matrix m) {
  if (items_.count(name))
    throw ManifestError("duplicate weight name: " + name);
  order_.push_back(name);
  items_.emplace(std::move(name), std::move(m));
}

bool WeightBundle::contains(const std::string& name) const {
  return items_.count(name) != 0;
}

const Matrix& WeightBundle::at(const std::string& name) const {
  auto it = items_.find(name);
  if (it == items_.end()) throw ManifestError("missing weight: " + name);
  return it->second;
}

std::vector<WeightBundle::Entry> WeightBundle::manifest() const {
  std::vector<Entry> out;
  out.reserve(order_.size());
  for (const auto& name : order_) {
    const Matrix& m = items_.at(name);
    out.push_back({name, m.rows, m.cols});
  }
  return out;
}

namespace {

const std::array<std::uint32_t, 256>& crc_table() {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k)
        c = (c & 1) ? 0xedb88320u ^ (c >> 1) : (c >> 1);
      t[i] = c;
    }
    return t;
  }();
  return table;
}

struct ByteSink {
  std::vector<std::uint8_t> bytes;

  void put(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
  void put_u32(std::uint32_t v) {
    std::uint8_t b[4] = {static_cast<std::uint8_t>(v),
                         static_cast<std::uint8_t>(v >> 8),
                         static_cast<std::uint8_t>(v >> 16),
                         static_cast<std::uint8_t>(v >> 24)};
    put(b, 4);
  }
  void put_f64(double v) {
    const auto u = std::bit_cast<std::uint64_t>(v);
    std::uint8_t b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(u >> (8 * i));
    put(b, 8);
  }
};

struct ByteSource {
  const std::uint8_t* p;
  std::size_t left;

  void get(void* out, std::size_t n) {
    if (n > left) throw CorruptFileError("weight file truncated");
    std::memcpy(out, p, n);
    p += n;
    left -= n;
  }
  std::uint32_t get_u32() {
    std::uint8_t b[4];
    get(b, 4);
    return static_cast<std::uint32_t>(b[0]) |
           (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
  }
  double get_f64() {
    std::uint8_t b[8];
    get(b, 8);
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(u);
  }
};

constexpr char kMagic[4] = {'P', 'S', 'M', 'W'};

}  // namespace

std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t crc) {
  const auto& t = crc_table();
  std::uint32_t c = crc ^ 0xffffffffu;
  const auto* p = static_cast<const std::uint8_t*>(data);
  for (std::size_t i = 0; i < len; ++i) c = t[(c ^ p[i]) & 0xffu] ^ (c >> 8);
  return c ^ 0xffffffffu;
}

void save_weights(const WeightBundle& w, const std::string& path) {
  ByteSink sink;
  sink.put(kMagic, 4);
  sink.put_u32(kWeightFormatVersion);
  sink.put_u32(static_cast<std::uint32_t>(w.size()));
  for (const auto& name : w.names()) {
    const Matrix& m = w.at(name);
    sink.put_u32(static_cast<std::uint32_t>(name.size()));
    sink.put(name.data(), name.size());
    sink.put_u32(static_cast<std::uint32_t>(m.rows));
    sink.put_u32(static_cast<std::uint32_t>(m.cols));
    for (double x : m.data) sink.put_f64(x);
  }
  const std::uint32_t crc = crc32(sink.bytes.data(), sink.bytes.size());
  sink.put_u32(crc);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(sink.bytes.data()),
            static_cast<std::streamsize>(sink.bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

WeightBundle load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() < 12 + 4) throw CorruptFileError("weight file truncated");

  const std::size_t body_len = bytes.size() - 4;
  ByteSource crc_src{bytes.data() + body_len, 4};
  const std::uint32_t stored_crc = crc_src.get_u32();
  if (crc32(bytes.data(), body_len) != stored_crc)
    throw CorruptFileError("weight file checksum mismatch: " + path);

  ByteSource src{bytes.data(), body_len};
  char magic[4];
  src.get(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("not a PSMW weight file: " + path);
  const std::uint32_t version = src.get_u32();
  if (version != kWeightFormatVersion)
    throw FormatError("unsupported weight format version " +
                      std::to_string(version));
  const std::uint32_t count = src.get_u32();

  WeightBundle w;
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::uint32_t name_len = src.get_u32();
    std::string name(name_len, '\0');
    src.get(name.data(), name_len);
    const std::uint32_t rows = src.get_u32();
    const std::uint32_t cols = src.get_u32();
    Matrix m(rows, cols);
    for (double& x : m.data) x = src.get_f64();
    w.add(std::move(name), std::move(m));
  }
  if (src.left != 0) throw CorruptFileError("trailing bytes in weight file");
  return w;
}

void check_manifest(const WeightBundle& w,
                    const std::vector<WeightBundle::Entry>& expected) {
  if (w.size() != expected.size())
    throw ManifestError("weight count mismatch: have " +
                        std::to_string(w.size()) + ", expected " +
                        std::to_string(expected.size()));
  for (const auto& e : expected) {
    const Matrix& m = w.at(e.name);  // throws on missing name
    if (m.rows != e.rows || m.cols != e.cols)
      throw ManifestError("shape mismatch for " + e.name + ": have " +
                          std::to_string(m.rows) + "x" + std::to_string(m.cols) +
                          ", expected " + std::to_string(e.rows) + "x" +
                          std::to_string(e.cols));
  }
}

}  // namespace psm
