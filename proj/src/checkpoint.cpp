#include "amsrc/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace amsrc {

namespace {

constexpr char kMagic[4] = {'A', 'M', 'C', 'K'};
constexpr std::uint8_t kVersion = 1;
constexpr std::uint8_t kDtypeF32 = 0;

void put_u8(std::string& out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t compute_crc(const std::string& buf) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size())));
}

struct Reader {
  const char* p;
  const char* end;
  const std::string& path;

  void need(std::size_t n) const {
    if (static_cast<std::size_t>(end - p) < n)
      throw CorruptCheckpoint("truncated checkpoint: " + path);
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(*p++);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    std::memcpy(&v, p, 4);
    p += 4;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(p, n);
    p += n;
    return s;
  }
};

}  // namespace

void save_checkpoint(const AmsrcModel<float>& model, const std::filesystem::path& path) {
  const ArchConfig& arch = model.arch();
  std::string buf;
  buf.append(kMagic, 4);
  put_u8(buf, kVersion);
  put_u32(buf, static_cast<std::uint32_t>(arch.window));
  put_u32(buf, static_cast<std::uint32_t>(arch.patch));
  put_u8(buf, static_cast<std::uint8_t>(arch.variant));
  put_u8(buf, static_cast<std::uint8_t>(arch.blocks()));
  for (int c : arch.channels) put_u32(buf, static_cast<std::uint32_t>(c));

  put_u32(buf, static_cast<std::uint32_t>(model.params().size()));
  for (const auto& p : model.params()) {
    put_u32(buf, static_cast<std::uint32_t>(p.name.size()));
    buf.append(p.name);
    put_u8(buf, kDtypeF32);
    put_u8(buf, p.is_weight ? 1 : 0);
    put_u8(buf, static_cast<std::uint8_t>(p.tensor.shape().rank()));
    for (int d : p.tensor.shape().dims()) put_u32(buf, static_cast<std::uint32_t>(d));
    buf.append(reinterpret_cast<const char*>(p.tensor.value().data()),
               static_cast<std::size_t>(p.tensor.numel()) * sizeof(float));
  }
  put_u32(buf, compute_crc(buf));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

AmsrcModel<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string pstr = path.string();

  if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0)
    throw CorruptCheckpoint("not an AMCK checkpoint: " + pstr);
  if (buf.size() < 5) throw CorruptCheckpoint("truncated checkpoint: " + pstr);
  const std::uint8_t version = static_cast<std::uint8_t>(buf[4]);
  if (version != kVersion)
    throw VersionMismatch("checkpoint version " + std::to_string(version) + " unsupported (" +
                          pstr + ")");
  if (buf.size() < 9) throw CorruptCheckpoint("truncated checkpoint: " + pstr);
  std::uint32_t stored_crc = 0;
  std::memcpy(&stored_crc, buf.data() + buf.size() - 4, 4);
  std::string body = buf.substr(0, buf.size() - 4);
  if (compute_crc(body) != stored_crc)
    throw CorruptCheckpoint("checksum failure: " + pstr);

  Reader r{body.data() + 5, body.data() + body.size(), pstr};
  ArchConfig arch;
  arch.window = static_cast<int>(r.u32());
  arch.patch = static_cast<int>(r.u32());
  const std::uint8_t variant = r.u8();
  if (variant > 2) throw CorruptCheckpoint("unknown variant tag in " + pstr);
  arch.variant = static_cast<Variant>(variant);
  const int blocks = r.u8();
  arch.channels.clear();
  for (int i = 0; i < blocks; ++i) arch.channels.push_back(static_cast<int>(r.u32()));

  AmsrcModel<float> model(arch);

  const std::uint32_t n_params = r.u32();
  if (n_params != model.params().size())
    throw CorruptCheckpoint("parameter count mismatch in " + pstr);
  for (auto& p : model.params()) {
    const std::uint32_t name_len = r.u32();
    const std::string name = r.str(name_len);
    if (name != p.name)
      throw CorruptCheckpoint("unexpected parameter '" + name + "' in " + pstr);
    if (r.u8() != kDtypeF32) throw CorruptCheckpoint("unsupported dtype in " + pstr);
    const bool is_weight = r.u8() != 0;
    if (is_weight != p.is_weight) throw CorruptCheckpoint("weight flag mismatch in " + pstr);
    const int ndim = r.u8();
    std::vector<int> dims;
    for (int i = 0; i < ndim; ++i) dims.push_back(static_cast<int>(r.u32()));
    if (Shape(dims) != p.tensor.shape())
      throw CorruptCheckpoint("shape mismatch for '" + name + "' in " + pstr);
    const std::size_t bytes = static_cast<std::size_t>(p.tensor.numel()) * sizeof(float);
    r.need(bytes);
    std::memcpy(p.tensor.mutable_value().data(), r.p, bytes);
    r.p += bytes;
    if (!p.tensor.value().isFinite().all())
      throw CorruptCheckpoint("non-finite values in '" + name + "' in " + pstr);
  }
  if (r.p != r.end) throw CorruptCheckpoint("trailing bytes in " + pstr);
  return model;
}

}  // namespace amsrc
