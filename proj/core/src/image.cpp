#include "tetrec/image.hpp"

#include "tetrec/errors.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>

#include <zlib.h>

namespace tetrec {

namespace {
constexpr uint32_t kImageMagic = 0x46474d49u; // "IMGF"
constexpr uint32_t kImageVersion = 1;

template <typename T>
void write_le(std::ofstream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::ifstream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    return value;
}
} // namespace

void save_image_raw(const Image& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    write_le<uint32_t>(out, kImageMagic);
    write_le<uint32_t>(out, kImageVersion);
    write_le<uint32_t>(out, static_cast<uint32_t>(img.height));
    write_le<uint32_t>(out, static_cast<uint32_t>(img.width));
    write_le<uint32_t>(out, static_cast<uint32_t>(img.channels));
    std::vector<float> buf(img.data.size());
    for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(img.data[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!out) throw IoError("short write: " + path);
}

Image load_image_raw(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    if (read_le<uint32_t>(in) != kImageMagic) throw ParseError("bad image magic: " + path);
    const uint32_t version = read_le<uint32_t>(in);
    if (version != kImageVersion) throw ParseError("unsupported image version: " + path);
    const uint32_t h = read_le<uint32_t>(in);
    const uint32_t w = read_le<uint32_t>(in);
    const uint32_t c = read_le<uint32_t>(in);
    if (!in || h == 0 || w == 0 || c == 0 || c > 16)
        throw ParseError("bad image header: " + path);
    Image img(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
    std::vector<float> buf(img.data.size());
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw ParseError("truncated image payload: " + path);
    for (size_t i = 0; i < buf.size(); ++i) img.data[i] = buf[i];
    return img;
}

namespace {

void png_write_chunk(std::ofstream& out, const char type[4], const std::vector<uint8_t>& payload) {
    auto write_be32 = [&](uint32_t v) {
        uint8_t b[4] = {static_cast<uint8_t>(v >> 24), static_cast<uint8_t>(v >> 16),
                        static_cast<uint8_t>(v >> 8), static_cast<uint8_t>(v)};
        out.write(reinterpret_cast<const char*>(b), 4);
    };
    write_be32(static_cast<uint32_t>(payload.size()));
    out.write(type, 4);
    if (!payload.empty())
        out.write(reinterpret_cast<const char*>(payload.data()),
                  static_cast<std::streamsize>(payload.size()));
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(type), 4);
    if (!payload.empty()) crc = crc32(crc, payload.data(), static_cast<uInt>(payload.size()));
    write_be32(static_cast<uint32_t>(crc));
}

} // namespace

void save_image_png(const Image& img, const std::string& path) {
    if (img.channels != 1 && img.channels != 3 && img.channels != 4)
        throw DimensionMismatch("PNG preview supports 1, 3 or 4 channels");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);

    static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    out.write(reinterpret_cast<const char*>(sig), 8);

    std::vector<uint8_t> ihdr(13);
    auto put_be32 = [](uint8_t* p, uint32_t v) {
        p[0] = static_cast<uint8_t>(v >> 24);
        p[1] = static_cast<uint8_t>(v >> 16);
        p[2] = static_cast<uint8_t>(v >> 8);
        p[3] = static_cast<uint8_t>(v);
    };
    put_be32(ihdr.data(), static_cast<uint32_t>(img.width));
    put_be32(ihdr.data() + 4, static_cast<uint32_t>(img.height));
    ihdr[8] = 8; // bit depth
    ihdr[9] = img.channels == 1 ? 0 : (img.channels == 3 ? 2 : 6);
    ihdr[10] = ihdr[11] = ihdr[12] = 0;
    png_write_chunk(out, "IHDR", ihdr);

    // Filter byte 0 per scanline, then zlib deflate.
    const size_t stride = static_cast<size_t>(img.width) * img.channels;
    std::vector<uint8_t> scanlines;
    scanlines.reserve((stride + 1) * img.height);
    for (int y = 0; y < img.height; ++y) {
        scanlines.push_back(0);
        for (size_t i = 0; i < stride; ++i) {
            double v = img.data[static_cast<size_t>(y) * stride + i];
            v = std::clamp(v, 0.0, 1.0);
            scanlines.push_back(static_cast<uint8_t>(v * 255.0 + 0.5));
        }
    }
    uLongf bound = compressBound(static_cast<uLong>(scanlines.size()));
    std::vector<uint8_t> compressed(bound);
    if (compress2(compressed.data(), &bound, scanlines.data(),
                  static_cast<uLong>(scanlines.size()), 6) != Z_OK)
        throw IoError("zlib compression failed for " + path);
    compressed.resize(bound);
    png_write_chunk(out, "IDAT", compressed);
    png_write_chunk(out, "IEND", {});
    if (!out) throw IoError("short write: " + path);
}

} // namespace tetrec
