#include "recon/field_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace recon {

namespace {

constexpr uint32_t kMagic = 0x46444F41u;  // "AODF" little-endian
constexpr uint32_t kVersion = 1;
constexpr uint32_t kKindField = 0;
constexpr uint32_t kKindMask = 1;

void put_u32(std::vector<uint8_t>& buf, uint32_t v) {
  buf.push_back(static_cast<uint8_t>(v & 0xFF));
  buf.push_back(static_cast<uint8_t>((v >> 8) & 0xFF));
  buf.push_back(static_cast<uint8_t>((v >> 16) & 0xFF));
  buf.push_back(static_cast<uint8_t>((v >> 24) & 0xFF));
}

uint32_t get_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

void write_bytes(const std::string& path, const std::vector<uint8_t>& buf) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::IoError, "cannot open for write: " + path);
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
  require(out.good(), ErrorKind::IoError, "short write: " + path);
}

std::vector<uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  require(in.good(), ErrorKind::IoError, "cannot open for read: " + path);
  const std::streamsize size = in.tellg();
  in.seekg(0);
  std::vector<uint8_t> buf(static_cast<std::size_t>(size));
  in.read(reinterpret_cast<char*>(buf.data()), size);
  require(in.good(), ErrorKind::IoError, "short read: " + path);
  return buf;
}

struct Header {
  GridSpec spec;
  uint32_t kind;
};

Header parse_header(const std::vector<uint8_t>& buf, const std::string& path) {
  require(buf.size() >= 24, ErrorKind::FormatError, "truncated header: " + path);
  require(get_u32(buf.data()) == kMagic, ErrorKind::FormatError,
          "bad magic: " + path);
  require(get_u32(buf.data() + 4) == kVersion, ErrorKind::FormatError,
          "unsupported version: " + path);
  Header h;
  h.spec.n_time = static_cast<int>(get_u32(buf.data() + 8));
  h.spec.height = static_cast<int>(get_u32(buf.data() + 12));
  h.spec.width = static_cast<int>(get_u32(buf.data() + 16));
  h.kind = get_u32(buf.data() + 20);
  require(h.kind == kKindField || h.kind == kKindMask, ErrorKind::FormatError,
          "unknown payload kind: " + path);
  return h;
}

std::vector<uint8_t> make_header(const GridSpec& spec, uint32_t kind) {
  std::vector<uint8_t> buf;
  buf.reserve(24 + spec.cells() * (kind == kKindField ? 4 : 1));
  put_u32(buf, kMagic);
  put_u32(buf, kVersion);
  put_u32(buf, static_cast<uint32_t>(spec.n_time));
  put_u32(buf, static_cast<uint32_t>(spec.height));
  put_u32(buf, static_cast<uint32_t>(spec.width));
  put_u32(buf, kind);
  return buf;
}

}  // namespace

void write_field(const Field& x, const std::string& path) {
  std::vector<uint8_t> buf = make_header(x.spec, kKindField);
  for (double v : x.values) {
    const float f = static_cast<float>(v);
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(buf, bits);
  }
  write_bytes(path, buf);
}

Field read_field(const std::string& path) {
  const std::vector<uint8_t> buf = read_bytes(path);
  const Header h = parse_header(buf, path);
  require(h.kind == kKindField, ErrorKind::FormatError,
          "expected field payload (kind 0): " + path);
  const std::size_t n = h.spec.cells();
  require(buf.size() == 24 + 4 * n, ErrorKind::FormatError,
          "payload size does not match header dims: " + path);
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    const uint32_t bits = get_u32(buf.data() + 24 + 4 * i);
    float f;
    std::memcpy(&f, &bits, 4);
    values[i] = static_cast<double>(f);
  }
  try {
    return Field(h.spec, std::move(values));
  } catch (const Error& e) {
    raise(ErrorKind::FormatError, std::string("invalid field payload: ") + e.what());
  }
}

void write_mask(const MaskField& m, const std::string& path) {
  std::vector<uint8_t> buf = make_header(m.spec, kKindMask);
  buf.insert(buf.end(), m.flags.begin(), m.flags.end());
  write_bytes(path, buf);
}

MaskField read_mask(const std::string& path) {
  const std::vector<uint8_t> buf = read_bytes(path);
  const Header h = parse_header(buf, path);
  require(h.kind == kKindMask, ErrorKind::FormatError,
          "expected mask payload (kind 1): " + path);
  const std::size_t n = h.spec.cells();
  require(buf.size() == 24 + n, ErrorKind::FormatError,
          "payload size does not match header dims: " + path);
  std::vector<uint8_t> flags(buf.begin() + 24, buf.end());
  try {
    return MaskField(h.spec, std::move(flags));
  } catch (const Error& e) {
    raise(ErrorKind::FormatError, std::string("invalid mask payload: ") + e.what());
  }
}

int aodf_payload_kind(const std::string& path) {
  const std::vector<uint8_t> buf = read_bytes(path);
  return static_cast<int>(parse_header(buf, path).kind);
}

}  // namespace recon
