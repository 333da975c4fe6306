#include "ccvit/imaging/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>

#include "ccvit/common/error.hpp"

namespace ccvit::imaging {
namespace fs = std::filesystem;
namespace {

std::string lower_ext(const fs::path& p) {
    auto e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return e;
}

Image from_interleaved(const std::vector<unsigned char>& buf, std::size_t h, std::size_t w, std::size_t src_channels) {
    Image img(3, h, w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                const std::size_t sc = src_channels == 1 ? 0 : c;
                img.at(c, y, x) = static_cast<float>(buf[(y * w + x) * src_channels + sc]) / 255.0f;
            }
    return img;
}

std::vector<unsigned char> to_interleaved(const Image& img) {
    if (img.channels != 3 && img.channels != 1) throw InvalidArgument("only 1- or 3-channel images can be written");
    std::vector<unsigned char> buf(img.height * img.width * 3);
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                const float v = std::clamp(img.at(img.channels == 1 ? 0 : c, y, x), 0.0f, 1.0f);
                buf[(y * img.width + x) * 3 + c] = static_cast<unsigned char>(std::lround(v * 255.0f));
            }
    return buf;
}

Image read_png(const fs::path& path) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.string().c_str()))
        throw FormatError("cannot decode PNG " + path.string() + ": " + image.message);
    image.format = PNG_FORMAT_RGB;
    std::vector<unsigned char> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        throw FormatError("cannot decode PNG " + path.string() + ": " + msg);
    }
    return from_interleaved(buf, image.height, image.width, 3);
}

// Reads one whitespace/comment separated header token of a PNM file.
std::string pnm_token(std::istream& in) {
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {
            }
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(static_cast<char>(ch));
    }
    return tok;
}

Image read_pnm(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    const std::string magic = pnm_token(in);
    if (magic != "P6" && magic != "P5") throw FormatError(path.string() + ": only binary PPM (P6) and PGM (P5) are supported");
    std::size_t w = 0, h = 0, maxval = 0;
    try {
        w = std::stoul(pnm_token(in));
        h = std::stoul(pnm_token(in));
        maxval = std::stoul(pnm_token(in));
    } catch (const std::exception&) {
        throw FormatError(path.string() + ": malformed PNM header");
    }
    if (w == 0 || h == 0 || maxval == 0 || maxval > 255) throw FormatError(path.string() + ": unsupported PNM dimensions or depth");
    const std::size_t ch = magic == "P6" ? 3 : 1;
    std::vector<unsigned char> buf(w * h * ch);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(in.gcount()) != buf.size()) throw FormatError(path.string() + ": truncated pixel data");
    if (maxval != 255)
        for (auto& v : buf) v = static_cast<unsigned char>(std::lround(255.0 * v / static_cast<double>(maxval)));
    return from_interleaved(buf, h, w, ch);
}

} // namespace

Image read_image(const fs::path& path) {
    if (!fs::exists(path)) throw FormatError("no such image: " + path.string());
    const auto ext = lower_ext(path);
    if (ext == ".png") return read_png(path);
    if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") return read_pnm(path);
    throw FormatError("unsupported image format: " + path.string());
}

Image load_image(const fs::path& path, std::size_t resolution) {
    return resize_bilinear(read_image(path), resolution, resolution);
}

void write_image(const fs::path& path, const Image& img) {
    const auto buf = to_interleaved(img);
    const auto ext = lower_ext(path);
    if (ext == ".png") {
        png_image image;
        std::memset(&image, 0, sizeof image);
        image.version = PNG_IMAGE_VERSION;
        image.width = static_cast<png_uint_32>(img.width);
        image.height = static_cast<png_uint_32>(img.height);
        image.format = PNG_FORMAT_RGB;
        if (!png_image_write_to_file(&image, path.string().c_str(), 0, buf.data(), 0, nullptr))
            throw Error("cannot write PNG " + path.string() + ": " + image.message);
        return;
    }
    if (ext == ".ppm") {
        std::ofstream out(path, std::ios::binary);
        out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
        out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (!out) throw Error("cannot write " + path.string());
        return;
    }
    throw InvalidArgument("unsupported output format: " + path.string());
}

std::vector<fs::path> list_images(const fs::path& root) {
    if (!fs::is_directory(root)) throw FormatError("not a directory: " + root.string());
    std::vector<fs::path> out;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        const auto ext = lower_ext(entry.path());
        if (ext == ".png" || ext == ".ppm" || ext == ".pgm" || ext == ".pnm") out.push_back(entry.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace ccvit::imaging
