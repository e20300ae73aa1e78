#include "owdet/raster_io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>

namespace owdet {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("raster archive: truncated");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

} // namespace

void write_png(const std::filesystem::path& path, const Raster& raster) {
    if (raster.channels != 1 && raster.channels != 3)
        throw std::invalid_argument("write_png: only 1- or 3-channel rasters supported");
    FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) throw std::runtime_error("write_png: cannot open " + path.string());

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info) throw std::runtime_error("write_png: libpng init failed");
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("write_png: libpng error on " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(raster.width),
                 static_cast<png_uint_32>(raster.height), 8,
                 raster.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(static_cast<size_t>(raster.height));
    const size_t stride = static_cast<size_t>(raster.width) * raster.channels;
    for (int y = 0; y < raster.height; ++y)
        rows[static_cast<size_t>(y)] =
            const_cast<png_bytep>(raster.pixels.data() + static_cast<size_t>(y) * stride);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Raster read_png(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) throw std::runtime_error("read_png: cannot open " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info) throw std::runtime_error("read_png: libpng init failed");
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("read_png: libpng error on " + path.string());
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    // normalize to 8-bit RGB or gray
    png_set_strip_16(png);
    png_set_packing(png);
    const png_byte color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);

    Raster r;
    r.width = static_cast<int>(png_get_image_width(png, info));
    r.height = static_cast<int>(png_get_image_height(png, info));
    r.channels = static_cast<int>(png_get_channels(png, info));
    r.pixels.resize(static_cast<size_t>(r.width) * r.height * r.channels);
    std::vector<png_bytep> rows(static_cast<size_t>(r.height));
    const size_t stride = static_cast<size_t>(r.width) * r.channels;
    for (int y = 0; y < r.height; ++y)
        rows[static_cast<size_t>(y)] = r.pixels.data() + static_cast<size_t>(y) * stride;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
    return r;
}

void write_raster_archive(const std::filesystem::path& path,
                          const std::map<std::string, Raster>& rasters) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("raster archive: cannot open " + path.string());
    os.write("OWRA", 4);
    write_u32(os, 1u);
    write_u32(os, static_cast<std::uint32_t>(rasters.size()));
    for (const auto& [id, r] : rasters) {
        write_u32(os, static_cast<std::uint32_t>(id.size()));
        os.write(id.data(), static_cast<std::streamsize>(id.size()));
        write_u32(os, static_cast<std::uint32_t>(r.width));
        write_u32(os, static_cast<std::uint32_t>(r.height));
        write_u32(os, static_cast<std::uint32_t>(r.channels));
        os.write(reinterpret_cast<const char*>(r.pixels.data()),
                 static_cast<std::streamsize>(r.pixels.size()));
    }
    if (!os) throw std::runtime_error("raster archive: write failed for " + path.string());
}

std::map<std::string, Raster> read_raster_archive(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("raster archive: cannot open " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "OWRA", 4) != 0)
        throw std::runtime_error("raster archive: bad magic in " + path.string());
    const std::uint32_t version = read_u32(is);
    if (version != 1u) throw std::runtime_error("raster archive: unsupported version");
    const std::uint32_t count = read_u32(is);
    std::map<std::string, Raster> out;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t id_len = read_u32(is);
        std::string id(id_len, '\0');
        is.read(id.data(), id_len);
        Raster r;
        r.width = static_cast<int>(read_u32(is));
        r.height = static_cast<int>(read_u32(is));
        r.channels = static_cast<int>(read_u32(is));
        r.pixels.resize(static_cast<size_t>(r.width) * r.height * r.channels);
        is.read(reinterpret_cast<char*>(r.pixels.data()),
                static_cast<std::streamsize>(r.pixels.size()));
        if (!is) throw std::runtime_error("raster archive: truncated entry " + id);
        out.emplace(std::move(id), std::move(r));
    }
    return out;
}

} // namespace owdet
