#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "owdet/dataset.hpp"

namespace owdet {

void write_png(const std::filesystem::path& path, const Raster& raster);
Raster read_png(const std::filesystem::path& path);

/// Single-file archive of rasters keyed by image_id. Layout: magic "OWRA",
/// u32 version, u32 count, then per entry u32 id length, id bytes,
/// u32 w/h/c, pixel bytes. All integers little-endian.
void write_raster_archive(const std::filesystem::path& path,
                          const std::map<std::string, Raster>& rasters);
std::map<std::string, Raster> read_raster_archive(const std::filesystem::path& path);

} // namespace owdet
