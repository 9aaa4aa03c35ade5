#include "cgnn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

namespace cgnn {

namespace {

constexpr char kMagic[4] = {'C', 'G', 'N', 'N'};

void write_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void write_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

struct Reader {
  const std::uint8_t* p;
  std::size_t left;

  void need(std::size_t n) {
    if (left < n) throw DataError("checkpoint file truncated");
  }
  std::uint8_t u8() {
    need(1);
    --left;
    return *p++;
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    p += 2;
    left -= 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    p += 4;
    left -= 4;
    return v;
  }
  std::vector<std::uint8_t> bytes(std::size_t n) {
    need(n);
    std::vector<std::uint8_t> out(p, p + n);
    p += n;
    left -= n;
    return out;
  }
};

template <class Real>
std::vector<std::uint8_t> to_le_bytes(const Tensor<Real>& t) {
  static_assert(std::endian::native == std::endian::little,
                "big-endian hosts need byte swaps here");
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(t.numel()) * sizeof(Real));
  std::memcpy(raw.data(), t.data().data(), raw.size());
  return raw;
}

template <class Real>
CheckpointEntry make_entry(const Tensor<Real>& t, DtypeCode code) {
  if (t.rank() > 255) throw ContractError("checkpoint entries support rank <= 255");
  for (std::int64_t d : t.shape()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) {
      throw ContractError("checkpoint dims must fit in u32");
    }
  }
  CheckpointEntry e;
  e.dtype = code;
  e.shape = t.shape();
  e.raw = to_le_bytes(t);
  return e;
}

std::size_t dtype_size(DtypeCode code) { return code == DtypeCode::F32 ? 4 : 8; }

}  // namespace

void Checkpoint::put(const std::string& name, const Tensor<float>& t) {
  if (name.empty() || name.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw ContractError("checkpoint entry name must be 1..65535 bytes");
  }
  entries_[name] = make_entry(t, DtypeCode::F32);
}

void Checkpoint::put(const std::string& name, const Tensor<double>& t) {
  if (name.empty() || name.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw ContractError("checkpoint entry name must be 1..65535 bytes");
  }
  entries_[name] = make_entry(t, DtypeCode::F64);
}

void Checkpoint::put_scalar(const std::string& name, double v) {
  put(name, Tensor<double>::scalar(v));
}

const CheckpointEntry& Checkpoint::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw DataError("checkpoint has no entry \"" + name + "\"");
  return it->second;
}

std::vector<std::string> Checkpoint::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, entry] : entries_) out.push_back(name);
  return out;
}

template <class Real>
Tensor<Real> Checkpoint::get(const std::string& name) const {
  const CheckpointEntry& e = entry(name);
  const std::int64_t n = shape_numel(e.shape);
  std::vector<Real> data(static_cast<std::size_t>(n));
  if (e.dtype == DtypeCode::F32) {
    const auto* src = reinterpret_cast<const float*>(e.raw.data());
    for (std::int64_t i = 0; i < n; ++i) data[static_cast<std::size_t>(i)] = static_cast<Real>(src[i]);
  } else {
    const auto* src = reinterpret_cast<const double*>(e.raw.data());
    for (std::int64_t i = 0; i < n; ++i) data[static_cast<std::size_t>(i)] = static_cast<Real>(src[i]);
  }
  return Tensor<Real>(e.shape, std::move(data));
}

template Tensor<float> Checkpoint::get<float>(const std::string&) const;
template Tensor<double> Checkpoint::get<double>(const std::string&) const;

double Checkpoint::get_scalar(const std::string& name) const {
  Tensor<double> t = get<double>(name);
  if (t.numel() != 1) throw DataError("checkpoint entry \"" + name + "\" is not a scalar");
  return t[0];
}

void Checkpoint::save(const std::string& path) const {
  if (entries_.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw ContractError("too many checkpoint entries");
  }
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  write_u16(out, kVersion);
  write_u32(out, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& [name, e] : entries_) {
    write_u16(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(static_cast<std::uint8_t>(e.dtype));
    out.push_back(static_cast<std::uint8_t>(e.shape.size()));
    for (std::int64_t d : e.shape) write_u32(out, static_cast<std::uint32_t>(d));
    out.insert(out.end(), e.raw.begin(), e.raw.end());
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open \"" + path + "\" for writing");
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("failed writing checkpoint \"" + path + "\"");
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint \"" + path + "\"");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());

  Reader r{bytes.data(), bytes.size()};
  const auto magic = r.bytes(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw DataError("\"" + path + "\" is not a checkpoint file (bad magic)");
  }
  const std::uint16_t version = r.u16();
  if (version != kVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();

  Checkpoint ck;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t name_len = r.u16();
    const auto name_bytes = r.bytes(name_len);
    std::string name(name_bytes.begin(), name_bytes.end());
    const std::uint8_t dtype_code = r.u8();
    if (dtype_code > 1) throw DataError("checkpoint entry \"" + name + "\": bad dtype code");
    CheckpointEntry e;
    e.dtype = static_cast<DtypeCode>(dtype_code);
    const std::uint8_t rank = r.u8();
    std::int64_t numel = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      const std::uint32_t dim = r.u32();
      if (dim == 0) throw DataError("checkpoint entry \"" + name + "\": zero dim");
      e.shape.push_back(static_cast<std::int64_t>(dim));
      numel *= static_cast<std::int64_t>(dim);
    }
    e.raw = r.bytes(static_cast<std::size_t>(numel) * dtype_size(e.dtype));
    if (!ck.entries_.emplace(std::move(name), std::move(e)).second) {
      throw DataError("checkpoint has duplicate entry names");
    }
  }
  if (r.left != 0) throw DataError("checkpoint has trailing bytes");
  return ck;
}

}  // namespace cgnn
