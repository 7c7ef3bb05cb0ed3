#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "s2s/raster.hpp"

// Flat binary products with JSON sidecars. A product `name` is the header
// `name.json` plus the payload named inside it (by default `name.bin`, in the
// same directory). Payloads are little-endian float32, acquisition-major;
// complex samples are interleaved (re, im).
namespace s2s::io {

/// Writes `<prefix>.json` and `<prefix>.bin`.
void write_stack(const SlcStack& stack, const std::filesystem::path& prefix);

/// Reads a stack from its header path (`.json` may be omitted). Throws
/// FormatError on a malformed header, unsupported byte order or dtype, or a
/// payload whose size does not match the header.
SlcStack read_stack(const std::filesystem::path& header);

/// Raster values are stored as float32.
void write_raster(const Raster& raster, const std::filesystem::path& prefix, const std::string& description = "");
Raster read_raster(const std::filesystem::path& header);

/// Comma-separated table with a header row; numbers use %.17g.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& columns,
               const std::vector<std::vector<double>>& rows);

/// Same, with cells already formatted (use format_number for values).
void write_csv_text(const std::filesystem::path& path, const std::vector<std::string>& columns,
                    const std::vector<std::vector<std::string>>& rows);

/// Shortest text that reads back to the same double (%.17g).
std::string format_number(double value);

}  // namespace s2s::io
