#include "s2s/io.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "s2s/errors.hpp"

namespace s2s::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

fs::path with_ext(const fs::path& prefix, const char* ext) {
  fs::path p = prefix;
  p += ext;
  return p;
}

fs::path header_path(const fs::path& p) { return p.extension() == ".json" ? p : with_ext(p, ".json"); }

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw Error("write failed: " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open header " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("malformed header " + path.string() + ": " + e.what());
  }
}

template <class T>
T field(const json& j, const char* key, const fs::path& path) {
  if (!j.contains(key)) throw FormatError(path.string() + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw FormatError(path.string() + ": field '" + std::string(key) + "' has the wrong type");
  }
}

// float32 values to little-endian bytes, whatever the host order.
std::vector<char> to_le_bytes(const std::vector<float>& v) {
  std::vector<char> bytes(v.size() * 4);
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::uint32_t u = std::bit_cast<std::uint32_t>(v[i]);
    for (int k = 0; k < 4; ++k) bytes[4 * i + k] = char((u >> (8 * k)) & 0xffu);
  }
  return bytes;
}

std::vector<float> from_le_bytes(const std::vector<char>& bytes) {
  std::vector<float> v(bytes.size() / 4);
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::uint32_t u = 0;
    for (int k = 0; k < 4; ++k) u |= std::uint32_t(static_cast<unsigned char>(bytes[4 * i + k])) << (8 * k);
    v[i] = std::bit_cast<float>(u);
  }
  return v;
}

void write_payload(const fs::path& path, const std::vector<float>& values) {
  const auto bytes = to_le_bytes(values);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

std::vector<float> read_payload(const fs::path& path, std::size_t expected_values) {
  std::error_code ec;
  const auto size = fs::file_size(path, ec);
  if (ec) throw FormatError("cannot stat payload " + path.string());
  const std::uintmax_t expected = std::uintmax_t(expected_values) * 4;
  if (size != expected) {
    throw FormatError("payload " + path.string() + " holds " + std::to_string(size) + " bytes, header implies " +
                      std::to_string(expected) + (size < expected ? " (truncated at byte offset " + std::to_string(size) + ")" : ""));
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open payload " + path.string());
  std::vector<char> bytes(expected);
  in.read(bytes.data(), std::streamsize(bytes.size()));
  if (std::size_t(in.gcount()) != bytes.size()) throw FormatError("short read on " + path.string());
  return from_le_bytes(bytes);
}

void check_common(const json& h, const fs::path& path, const char* kind, const char* dtype) {
  const auto k = field<std::string>(h, "kind", path);
  if (k != kind) throw FormatError(path.string() + ": expected kind '" + kind + "', found '" + k + "'");
  const auto order = field<std::string>(h, "byte_order", path);
  if (order != "little") throw FormatError(path.string() + ": unsupported byte order '" + order + "' (only 'little')");
  const auto dt = field<std::string>(h, "dtype", path);
  if (dt != dtype) throw FormatError(path.string() + ": unsupported dtype '" + dt + "' (expected '" + dtype + "')");
  const int version = field<int>(h, "format_version", path);
  if (version != kFormatVersion) throw FormatError(path.string() + ": unsupported format_version " + std::to_string(version));
}

fs::path payload_of(const json& h, const fs::path& header) {
  return header.parent_path() / field<std::string>(h, "payload", header);
}

int positive(const json& h, const char* key, const fs::path& path) {
  const int v = field<int>(h, key, path);
  if (v < 1) throw FormatError(path.string() + ": field '" + std::string(key) + "' must be >= 1");
  return v;
}

}  // namespace

void write_stack(const SlcStack& stack, const fs::path& prefix) {
  stack.validate();
  if (!prefix.parent_path().empty()) fs::create_directories(prefix.parent_path());
  std::vector<float> values(stack.data.size() * 2);
  for (std::size_t i = 0; i < stack.data.size(); ++i) {
    values[2 * i] = stack.data[i].real();
    values[2 * i + 1] = stack.data[i].imag();
  }
  const fs::path bin = with_ext(prefix, ".bin");
  write_payload(bin, values);
  const json h = {{"kind", "slc_stack"},
                  {"format_version", kFormatVersion},
                  {"n_acquisitions", stack.n_acquisitions},
                  {"rows", stack.rows},
                  {"cols", stack.cols},
                  {"dtype", "complex64"},
                  {"byte_order", "little"},
                  {"layout", "acquisition-major, interleaved re/im"},
                  {"payload", bin.filename().string()},
                  {"provenance", stack.provenance}};
  write_json(with_ext(prefix, ".json"), h);
}

SlcStack read_stack(const fs::path& p) {
  const fs::path header = header_path(p);
  const json h = read_json(header);
  check_common(h, header, "slc_stack", "complex64");
  SlcStack s(positive(h, "n_acquisitions", header), positive(h, "rows", header), positive(h, "cols", header));
  if (h.contains("provenance") && h["provenance"].is_string()) s.provenance = h["provenance"].get<std::string>();
  const auto values = read_payload(payload_of(h, header), s.data.size() * 2);
  for (std::size_t i = 0; i < s.data.size(); ++i) s.data[i] = {values[2 * i], values[2 * i + 1]};
  return s;
}

void write_raster(const Raster& raster, const fs::path& prefix, const std::string& description) {
  raster.validate();
  if (!prefix.parent_path().empty()) fs::create_directories(prefix.parent_path());
  std::vector<float> values(raster.data.begin(), raster.data.end());
  const fs::path bin = with_ext(prefix, ".bin");
  write_payload(bin, values);
  const json h = {{"kind", "raster"},
                  {"format_version", kFormatVersion},
                  {"bands", raster.bands},
                  {"rows", raster.rows},
                  {"cols", raster.cols},
                  {"dtype", "float32"},
                  {"byte_order", "little"},
                  {"layout", "band-major"},
                  {"payload", bin.filename().string()},
                  {"description", description}};
  write_json(with_ext(prefix, ".json"), h);
}

Raster read_raster(const fs::path& p) {
  const fs::path header = header_path(p);
  const json h = read_json(header);
  check_common(h, header, "raster", "float32");
  Raster r(positive(h, "bands", header), positive(h, "rows", header), positive(h, "cols", header));
  const auto values = read_payload(payload_of(h, header), r.data.size());
  std::copy(values.begin(), values.end(), r.data.begin());
  return r;
}

std::string format_number(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

void write_csv_text(const fs::path& path, const std::vector<std::string>& columns,
                    const std::vector<std::vector<std::string>>& rows) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  for (std::size_t k = 0; k < columns.size(); ++k) out << (k ? "," : "") << columns[k];
  out << '\n';
  for (const auto& row : rows) {
    if (row.size() != columns.size()) throw InvalidArgument("write_csv: row width does not match the header");
    for (std::size_t k = 0; k < row.size(); ++k) out << (k ? "," : "") << row[k];
    out << '\n';
  }
  if (!out) throw Error("write failed: " + path.string());
}

void write_csv(const fs::path& path, const std::vector<std::string>& columns, const std::vector<std::vector<double>>& rows) {
  std::vector<std::vector<std::string>> text;
  text.reserve(rows.size());
  for (const auto& row : rows) {
    std::vector<std::string> cells;
    for (double v : row) cells.push_back(format_number(v));
    text.push_back(std::move(cells));
  }
  write_csv_text(path, columns, text);
}

}  // namespace s2s::io
