#include "pcattn/dataset.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <stdexcept>

namespace pcattn {

namespace {

uint32_t read_be32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("idx: truncated header");
  return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | uint32_t(b[3]);
}

void append_le32(std::string& out, uint32_t v) {
  char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff), char((v >> 24) & 0xff)};
  out.append(b, 4);
}

uint32_t read_le32(const char* p) {
  return uint32_t(uint8_t(p[0])) | (uint32_t(uint8_t(p[1])) << 8) | (uint32_t(uint8_t(p[2])) << 16) |
         (uint32_t(uint8_t(p[3])) << 24);
}

void append_f64(std::string& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  for (int i = 0; i < 8; ++i) out.push_back(char((bits >> (8 * i)) & 0xff));
}

double read_f64(const char* p) {
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= uint64_t(uint8_t(p[i])) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

std::vector<Array<double>> read_idx_images(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("idx: cannot open " + path);
  const uint32_t magic = read_be32(in);
  if (magic != 0x00000803u) throw std::runtime_error("idx: bad image magic in " + path);
  const uint32_t n = read_be32(in), rows = read_be32(in), cols = read_be32(in);
  std::vector<Array<double>> out;
  out.reserve(n);
  std::vector<unsigned char> buf(static_cast<size_t>(rows) * cols);
  for (uint32_t i = 0; i < n; ++i) {
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) throw std::runtime_error("idx: truncated image data in " + path);
    Array<double> img(rows, cols);
    for (size_t j = 0; j < buf.size(); ++j) img.data[j] = buf[j] / 255.0;
    out.push_back(std::move(img));
  }
  return out;
}

std::vector<int> read_idx_labels(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("idx: cannot open " + path);
  const uint32_t magic = read_be32(in);
  if (magic != 0x00000801u) throw std::runtime_error("idx: bad label magic in " + path);
  const uint32_t n = read_be32(in);
  std::vector<int> out(n);
  for (uint32_t i = 0; i < n; ++i) {
    char c;
    in.read(&c, 1);
    if (!in) throw std::runtime_error("idx: truncated label data in " + path);
    out[i] = static_cast<unsigned char>(c);
  }
  return out;
}

const MnistData& mnist_cache(const std::string& dir, bool train) {
  static std::mutex mu;
  static std::map<std::string, MnistData> cache;
  const std::string key = dir + (train ? "#train" : "#test");
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  MnistData data;
  const std::string img = dir + (train ? "/train-images-idx3-ubyte" : "/t10k-images-idx3-ubyte");
  const std::string lbl = dir + (train ? "/train-labels-idx1-ubyte" : "/t10k-labels-idx1-ubyte");
  data.images = read_idx_images(img);
  data.labels = read_idx_labels(lbl);
  if (data.images.size() != data.labels.size())
    throw std::runtime_error("mnist: image/label count mismatch under " + dir);
  return cache.emplace(key, std::move(data)).first->second;
}

std::string encode_record(const TaskSample& s) {
  std::string out;
  append_le32(out, static_cast<uint32_t>(s.n));
  append_le32(out, static_cast<uint32_t>(s.tokens.size()));
  append_le32(out, static_cast<uint32_t>(s.values.size()));
  append_le32(out, static_cast<uint32_t>(s.target.size()));
  append_le32(out, static_cast<uint32_t>(s.loss_mask.size()));
  append_le32(out, s.multilabel ? 1u : 0u);
  for (int32_t t : s.tokens) append_le32(out, static_cast<uint32_t>(t));
  for (const auto& v : s.values) {
    append_f64(out, v.real());
    append_f64(out, v.imag());
  }
  for (int32_t t : s.target) append_le32(out, static_cast<uint32_t>(t));
  for (int32_t t : s.loss_mask) append_le32(out, static_cast<uint32_t>(t));
  return out;
}

TaskSample decode_record(const std::string& payload) {
  if (payload.size() < 24) throw std::runtime_error("record: truncated header");
  const char* p = payload.data();
  TaskSample s;
  s.n = static_cast<int>(read_le32(p));
  const uint32_t nt = read_le32(p + 4), nv = read_le32(p + 8), ng = read_le32(p + 12),
                 nm = read_le32(p + 16);
  s.multilabel = read_le32(p + 20) != 0;
  const size_t need = 24 + 4ull * nt + 16ull * nv + 4ull * ng + 4ull * nm;
  if (payload.size() != need) throw std::runtime_error("record: size mismatch");
  const char* q = p + 24;
  s.tokens.resize(nt);
  for (uint32_t i = 0; i < nt; ++i, q += 4) s.tokens[i] = static_cast<int32_t>(read_le32(q));
  s.values.resize(nv);
  for (uint32_t i = 0; i < nv; ++i, q += 16) s.values[i] = {read_f64(q), read_f64(q + 8)};
  s.target.resize(ng);
  for (uint32_t i = 0; i < ng; ++i, q += 4) s.target[i] = static_cast<int32_t>(read_le32(q));
  s.loss_mask.resize(nm);
  for (uint32_t i = 0; i < nm; ++i, q += 4) s.loss_mask[i] = static_cast<int32_t>(read_le32(q));
  return s;
}

void write_records(const std::string& path, const std::vector<TaskSample>& samples,
                   const std::string& sidecar_json) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("records: cannot write " + path);
  for (const auto& s : samples) {
    const std::string payload = encode_record(s);
    std::string len;
    append_le32(len, static_cast<uint32_t>(payload.size()));
    out.write(len.data(), 4);
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  }
  out.close();
  std::ofstream meta(path + ".meta.json", std::ios::trunc);
  if (!meta) throw std::runtime_error("records: cannot write sidecar for " + path);
  meta << sidecar_json << "\n";
}

std::vector<TaskSample> read_records(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("records: cannot open " + path);
  std::vector<TaskSample> out;
  for (;;) {
    char lenbuf[4];
    in.read(lenbuf, 4);
    if (in.gcount() == 0) break;
    if (in.gcount() != 4) throw std::runtime_error("records: truncated length prefix");
    const uint32_t len = read_le32(lenbuf);
    std::string payload(len, '\0');
    in.read(payload.data(), len);
    if (static_cast<uint32_t>(in.gcount()) != len) throw std::runtime_error("records: truncated record");
    out.push_back(decode_record(payload));
  }
  return out;
}

}  // namespace pcattn
