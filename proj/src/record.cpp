// SPDX-License-Identifier: Apache-2.0
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>

#include "layerfreeze/cache.hpp"

namespace lf::cache {

namespace {

template <class T>
void put_le(std::vector<unsigned char>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
  }
}

template <class T>
T get_le(const unsigned char* p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
  return v;
}

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open record file " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spill(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write record file " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

}  // namespace

void encode_record(const CacheRecord& rec, std::vector<unsigned char>& out) {
  out.reserve(out.size() + record_bytes(rec.payload.size()));
  out.insert(out.end(), std::begin(kRecordMagic), std::end(kRecordMagic));
  put_le<std::uint16_t>(out, kRecordVersion);
  put_le<std::uint64_t>(out, rec.original_index);
  put_le<std::uint16_t>(out, rec.depth);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(rec.payload.size()));
  for (double v : rec.payload) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
}

std::size_t decode_record(std::span<const unsigned char> bytes, CacheRecord& rec) {
  if (bytes.size() < kRecordHeaderBytes) throw std::runtime_error("truncated record header");
  if (std::memcmp(bytes.data(), kRecordMagic, 4) != 0) throw std::runtime_error("bad record magic");
  const auto version = get_le<std::uint16_t>(bytes.data() + 4);
  if (version != kRecordVersion) {
    throw std::runtime_error("unsupported record version " + std::to_string(version));
  }
  rec.original_index = get_le<std::uint64_t>(bytes.data() + 6);
  rec.depth = get_le<std::uint16_t>(bytes.data() + 14);
  const auto dim = get_le<std::uint32_t>(bytes.data() + 16);
  if (bytes.size() < record_bytes(dim)) throw std::runtime_error("truncated record payload");
  rec.payload.resize(dim);
  const unsigned char* p = bytes.data() + kRecordHeaderBytes;
  for (std::uint32_t i = 0; i < dim; ++i) {
    rec.payload[i] = std::bit_cast<double>(get_le<std::uint64_t>(p + 8 * i));
  }
  return record_bytes(dim);
}

void write_record_file(const std::filesystem::path& path, const CacheRecord& rec) {
  std::vector<unsigned char> bytes;
  encode_record(rec, bytes);
  spill(path, bytes);
}

CacheRecord read_record_file(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  CacheRecord rec;
  if (decode_record(bytes, rec) != bytes.size()) {
    throw std::runtime_error("trailing bytes in record file " + path.string());
  }
  return rec;
}

void write_records_file(const std::filesystem::path& path, std::span<const CacheRecord> recs) {
  std::vector<unsigned char> bytes;
  for (const auto& r : recs) encode_record(r, bytes);
  spill(path, bytes);
}

std::vector<CacheRecord> read_records_file(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  std::vector<CacheRecord> recs;
  std::size_t off = 0;
  while (off < bytes.size()) {
    CacheRecord r;
    off += decode_record(std::span(bytes).subspan(off), r);
    recs.push_back(std::move(r));
  }
  return recs;
}

}  // namespace lf::cache
