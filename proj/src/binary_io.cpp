#include "binary_io.hpp"

#include <fstream>
#include <iterator>

namespace posendf::detail {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path);
}

void check_crc_trailer(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4) throw TruncatedFile("file too short for checksum");
  const std::size_t body = bytes.size() - 4;
  ByteReader trailer(bytes.data() + body, 4);
  if (trailer.u32() != ByteWriter::crc32_of(bytes.data(), body)) {
    throw ChecksumMismatch("CRC-32 mismatch");
  }
}

}  // namespace posendf::detail
