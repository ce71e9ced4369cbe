#include "lff/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

#include "lff/serialize.hpp"

namespace lff {
namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_fail(png_structp, png_const_charp message) {
    throw IoError(std::string("libpng: ") + message);
}

void png_warn(png_structp, png_const_charp) {}

void check_dims(std::span<const double> pixels, int height, int width) {
    if (height < 1 || width < 1 || pixels.size() != static_cast<std::size_t>(height) * width) {
        throw ValidationError("image buffer does not match " + std::to_string(height) + "x" + std::to_string(width));
    }
}

}  // namespace

void write_png(const std::filesystem::path& path, std::span<const double> pixels, int height, int width) {
    check_dims(pixels, height, width);
    FilePtr file(std::fopen(path.string().c_str(), "wb"));
    if (!file) throw IoError("cannot open for writing: " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("libpng initialisation failed");
    }
    std::vector<png_byte> row(width);
    try {
        png_init_io(png, file.get());
        png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                     PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                const double v = std::clamp(pixels[static_cast<std::size_t>(y) * width + x], 0.0, 1.0);
                row[x] = static_cast<png_byte>(std::lround(v * 255.0));
            }
            png_write_row(png, row.data());
        }
        png_write_end(png, nullptr);
    } catch (...) {
        png_destroy_write_struct(&png, &info);
        throw;
    }
    png_destroy_write_struct(&png, &info);
}

GrayImage read_png(const std::filesystem::path& path) {
    FilePtr file(std::fopen(path.string().c_str(), "rb"));
    if (!file) throw FormatError("missing image file: " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("libpng initialisation failed");
    }
    GrayImage img;
    try {
        png_init_io(png, file.get());
        png_read_info(png, info);
        const png_byte color = png_get_color_type(png, info);
        const png_byte depth = png_get_bit_depth(png, info);
        if (color != PNG_COLOR_TYPE_GRAY || depth != 8) {
            throw FormatError("expected an 8-bit grayscale PNG: " + path.string());
        }
        img.width = static_cast<int>(png_get_image_width(png, info));
        img.height = static_cast<int>(png_get_image_height(png, info));
        img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
        std::vector<png_byte> row(img.width);
        for (int y = 0; y < img.height; ++y) {
            png_read_row(png, row.data(), nullptr);
            for (int x = 0; x < img.width; ++x) img.pixels[static_cast<std::size_t>(y) * img.width + x] = row[x] / 255.0;
        }
        png_read_end(png, nullptr);
    } catch (const IoError& e) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("unreadable PNG " + path.string() + ": " + e.what());
    } catch (...) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_pfm(const std::filesystem::path& path, std::span<const double> pixels, int height, int width) {
    check_dims(pixels, height, width);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "Pf\n" << width << " " << height << "\n-1.0\n";
    std::vector<char> row(static_cast<std::size_t>(width) * 4);
    for (int y = height - 1; y >= 0; --y) {
        for (int x = 0; x < width; ++x) {
            const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(pixels[static_cast<std::size_t>(y) * width + x]));
            for (int b = 0; b < 4; ++b) row[4 * x + b] = static_cast<char>((u >> (8 * b)) & 0xffu);
        }
        out.write(row.data(), static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw IoError("failed writing " + path.string());
}

GrayImage read_pfm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("missing image file: " + path.string());
    std::string magic;
    GrayImage img;
    double scale = 0.0;
    in >> magic >> img.width >> img.height >> scale;
    if (!in || magic != "Pf" || img.width < 1 || img.height < 1) {
        throw FormatError("not a grayscale PFM file: " + path.string());
    }
    if (scale >= 0.0) throw FormatError("big-endian PFM files are not supported: " + path.string());
    in.get();  // single whitespace byte after the scale
    const std::size_t count = static_cast<std::size_t>(img.width) * img.height;
    std::vector<unsigned char> bytes(count * 4);
    if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
        throw FormatError("truncated PFM file: " + path.string());
    }
    img.pixels.resize(count);
    for (int y = 0; y < img.height; ++y) {
        const std::size_t disk_row = static_cast<std::size_t>(img.height - 1 - y);
        for (int x = 0; x < img.width; ++x) {
            const std::size_t k = (disk_row * img.width + x) * 4;
            std::uint32_t u = 0;
            for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(bytes[k + b]) << (8 * b);
            img.pixels[static_cast<std::size_t>(y) * img.width + x] = std::bit_cast<float>(u);
        }
    }
    return img;
}

namespace {

std::string view_stem(int a, int b) { return "view_" + std::to_string(a) + "_" + std::to_string(b); }

void check_version(const nlohmann::json& doc, const std::filesystem::path& where) {
    const int version = doc.at("format_version").get<int>();
    if (version != kImageDirFormatVersion) {
        throw FormatError("unsupported format version " + std::to_string(version) + " in " + where.string());
    }
}

void check_image(const GrayImage& img, int height, int width, const std::filesystem::path& path) {
    if (img.height != height || img.width != width) {
        throw FormatError("image " + path.string() + " is " + std::to_string(img.height) + "x" +
                          std::to_string(img.width) + ", expected " + std::to_string(height) + "x" +
                          std::to_string(width));
    }
}

}  // namespace

void write_lightfield(const std::filesystem::path& dir, const LightField& lf, bool with_pfm,
                      const std::optional<DisplayGeometry>& geometry) {
    std::filesystem::create_directories(dir);
    nlohmann::json doc = {{"format_version", kImageDirFormatVersion},
                          {"views_u", lf.views_u()},
                          {"views_v", lf.views_v()},
                          {"height", lf.height()},
                          {"width", lf.width()},
                          {"pfm", with_pfm}};
    if (geometry) doc["geometry"] = *geometry;
    for (int b = 0; b < lf.views_v(); ++b) {
        for (int a = 0; a < lf.views_u(); ++a) {
            write_png(dir / (view_stem(a, b) + ".png"), lf.view(a, b), lf.height(), lf.width());
            if (with_pfm) write_pfm(dir / (view_stem(a, b) + ".pfm"), lf.view(a, b), lf.height(), lf.width());
        }
    }
    write_json(dir / "lightfield.json", doc);
}

LoadedLightField read_lightfield(const std::filesystem::path& dir) {
    const nlohmann::json doc = read_json(dir / "lightfield.json");
    try {
        check_version(doc, dir / "lightfield.json");
        LoadedLightField out;
        out.lf = LightField(doc.at("views_u").get<int>(), doc.at("views_v").get<int>(), doc.at("height").get<int>(),
                            doc.at("width").get<int>());
        if (doc.contains("geometry")) out.geometry = doc.at("geometry").get<DisplayGeometry>();
        for (int b = 0; b < out.lf.views_v(); ++b) {
            for (int a = 0; a < out.lf.views_u(); ++a) {
                const auto pfm = dir / (view_stem(a, b) + ".pfm");
                const auto png = dir / (view_stem(a, b) + ".png");
                const bool use_pfm = std::filesystem::exists(pfm);
                const GrayImage img = use_pfm ? read_pfm(pfm) : read_png(png);
                check_image(img, out.lf.height(), out.lf.width(), use_pfm ? pfm : png);
                std::copy(img.pixels.begin(), img.pixels.end(), out.lf.view(a, b).begin());
            }
        }
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed light field descriptor in " + dir.string() + ": " + e.what());
    }
}

void write_layers(const std::filesystem::path& dir, const LayerStack& stack) {
    std::filesystem::create_directories(dir);
    for (std::size_t l = 0; l < stack.layers(); ++l) {
        write_png(dir / ("layer_" + std::to_string(l) + ".png"), stack.layer(l), stack.height(), stack.width());
        write_pfm(dir / ("layer_" + std::to_string(l) + ".pfm"), stack.layer(l), stack.height(), stack.width());
    }
    write_json(dir / "layers.json", {{"format_version", kImageDirFormatVersion},
                                     {"layers", stack.layers()},
                                     {"height", stack.height()},
                                     {"width", stack.width()},
                                     {"mode", to_string(stack.mode())}});
}

LayerStack read_layers(const std::filesystem::path& dir) {
    const nlohmann::json doc = read_json(dir / "layers.json");
    try {
        check_version(doc, dir / "layers.json");
        LayerStack stack(doc.at("layers").get<std::size_t>(), doc.at("height").get<int>(), doc.at("width").get<int>(),
                         parse_modulation(doc.at("mode").get<std::string>()));
        for (std::size_t l = 0; l < stack.layers(); ++l) {
            const auto pfm = dir / ("layer_" + std::to_string(l) + ".pfm");
            const auto png = dir / ("layer_" + std::to_string(l) + ".png");
            const bool use_pfm = std::filesystem::exists(pfm);
            const GrayImage img = use_pfm ? read_pfm(pfm) : read_png(png);
            check_image(img, stack.height(), stack.width(), use_pfm ? pfm : png);
            std::copy(img.pixels.begin(), img.pixels.end(), stack.layer(l).begin());
        }
        return stack;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed layer descriptor in " + dir.string() + ": " + e.what());
    }
}

}  // namespace lff
