// Copyright 2026 nextformer.cpp contributors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "nxf/io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

namespace nxf {

namespace {

constexpr char kFeatureMagic[4] = {'N', 'X', 'F', '1'};
constexpr char kCheckpointMagic[4] = {'N', 'X', 'C', 'K'};
constexpr uint8_t kDtypeF32 = 0;

void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

class Reader {
 public:
  Reader(std::string bytes, std::string what)
      : bytes_(std::move(bytes)), what_(std::move(what)) {}

  void expect_magic(const char* magic) {
    if (bytes_.size() < 4 || std::memcmp(bytes_.data(), magic, 4) != 0)
      throw FormatError(what_ + ": bad magic");
    at_ = 4;
  }
  uint8_t u8() {
    need(1);
    return static_cast<uint8_t>(bytes_[at_++]);
  }
  uint16_t u16() {
    need(2);
    uint16_t v = 0;
    for (int i = 0; i < 2; ++i)
      v |= static_cast<uint16_t>(static_cast<uint8_t>(bytes_[at_++])) << (8 * i);
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<uint32_t>(static_cast<uint8_t>(bytes_[at_++])) << (8 * i);
    return v;
  }
  float f32() {
    const uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string str(size_t n) {
    need(n);
    std::string s = bytes_.substr(at_, n);
    at_ += n;
    return s;
  }
  bool done() const { return at_ == bytes_.size(); }
  void expect_done() {
    if (!done()) throw FormatError(what_ + ": trailing bytes after payload");
  }

 private:
  void need(size_t n) {
    if (at_ + n > bytes_.size())
      throw FormatError(what_ + ": truncated payload");
  }
  std::string bytes_;
  std::string what_;
  size_t at_ = 0;
};

std::string slurp(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(std::string(what) + ": cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return bytes;
}

void spit(const std::string& path, const std::string& bytes,
          const char* what) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(std::string(what) + ": cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(std::string(what) + ": short write to " + path);
}

}  // namespace

void write_features(const std::string& path, const Tensor& features) {
  if (features.rank() != 2)
    throw ShapeError("write_features: need [T,F], got " +
                     shape_str(features.shape()));
  std::string out(kFeatureMagic, 4);
  put_u32(out, static_cast<uint32_t>(features.dim(0)));
  put_u32(out, static_cast<uint32_t>(features.dim(1)));
  out.push_back(static_cast<char>(kDtypeF32));
  for (double v : features.data()) put_f32(out, static_cast<float>(v));
  spit(path, out, "feature file");
}

Tensor read_features(const std::string& path) {
  Reader r(slurp(path, "feature file"), "feature file");
  r.expect_magic(kFeatureMagic);
  const int64_t t = r.u32();
  const int64_t f = r.u32();
  const uint8_t tag = r.u8();
  if (tag != kDtypeF32)
    throw FormatError("feature file: unsupported dtype tag " +
                      std::to_string(tag));
  std::vector<double> data(t * f);
  for (double& v : data) v = static_cast<double>(r.f32());
  r.expect_done();
  return Tensor::from_vector({t, f}, std::move(data));
}

Tensor normalize_features(const Tensor& features) {
  if (features.rank() != 2)
    throw ShapeError("normalize_features: need [T,F]");
  const int64_t n = features.numel();
  if (n == 0) return features;
  double mu = 0.0;
  for (double v : features.data()) mu += v;
  mu /= static_cast<double>(n);
  double var = 0.0;
  for (double v : features.data()) var += (v - mu) * (v - mu);
  var /= static_cast<double>(n);
  const double inv = 1.0 / std::sqrt(var + 1e-10);
  std::vector<double> out(features.data());
  for (double& v : out) v = (v - mu) * inv;
  return Tensor::from_vector(features.shape(), std::move(out));
}

void save_checkpoint(const std::string& path, Model& model) {
  std::string out(kCheckpointMagic, 4);
  uint32_t count = 0;
  model.visit([&count](const std::string&, Tensor&) { ++count; });
  put_u32(out, count);
  model.visit([&out](const std::string& name, Tensor& t) {
    if (name.size() > 0xffff)
      throw FormatError("checkpoint: parameter name too long");
    put_u16(out, static_cast<uint16_t>(name.size()));
    out += name;
    out.push_back(static_cast<char>(t.rank()));
    for (int64_t d : t.shape()) put_u32(out, static_cast<uint32_t>(d));
    for (double v : t.data()) put_f32(out, static_cast<float>(v));
  });
  spit(path, out, "checkpoint");
}

void load_checkpoint(const std::string& path, Model& model) {
  Reader r(slurp(path, "checkpoint"), "checkpoint");
  r.expect_magic(kCheckpointMagic);
  const uint32_t count = r.u32();
  std::map<std::string, std::pair<Shape, std::vector<double>>> entries;
  for (uint32_t i = 0; i < count; ++i) {
    const uint16_t name_len = r.u16();
    std::string name = r.str(name_len);
    const uint8_t rank = r.u8();
    Shape shape(rank);
    int64_t numel = 1;
    for (uint8_t a = 0; a < rank; ++a) {
      shape[a] = r.u32();
      numel *= shape[a];
    }
    std::vector<double> data(numel);
    for (double& v : data) v = static_cast<double>(r.f32());
    if (!entries.emplace(name, std::make_pair(std::move(shape),
                                              std::move(data)))
             .second)
      throw FormatError("checkpoint: duplicate entry '" + name + "'");
  }
  r.expect_done();

  // match against the model; report the first offending entry by name
  std::string error;
  std::map<std::string, bool> used;
  model.visit([&](const std::string& name, Tensor& t) {
    if (!error.empty()) return;
    auto it = entries.find(name);
    if (it == entries.end()) {
      error = "checkpoint: missing entry '" + name + "'";
      return;
    }
    if (it->second.first != t.shape()) {
      error = "checkpoint: entry '" + name + "' has shape " +
              shape_str(it->second.first) + ", model expects " +
              shape_str(t.shape());
      return;
    }
    t.mutable_data() = it->second.second;
    used[name] = true;
  });
  if (!error.empty()) throw FormatError(error);
  for (const auto& [name, payload] : entries) {
    (void)payload;
    if (!used.count(name))
      throw FormatError("checkpoint: entry '" + name +
                        "' does not exist in this model");
  }
}

}  // namespace nxf
