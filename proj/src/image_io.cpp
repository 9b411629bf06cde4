#include "found/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "found/errors.hpp"
#include "found/fsutil.hpp"

namespace found::imageio {

namespace {

unsigned char encode_u8(double v) {
    const double scaled = (std::min(1.0, std::max(-1.0, v)) + 1.0) * 0.5 * 255.0;
    return static_cast<unsigned char>(std::lround(scaled));
}

std::string lower_ext(const std::string& path) {
    const auto dot = path.find_last_of('.');
    if (dot == std::string::npos) return "";
    std::string ext = path.substr(dot + 1);
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return ext;
}

}  // namespace

void write_ppm(const std::string& path, const Tensor& image,
               const std::vector<std::string>& comments) {
    if (image.b != 1 || image.c != 3)
        throw ShapeError("write_ppm: expected (1,3,H,W), got " + image.shape_str());
    std::ostringstream os;
    os << "P6\n";
    for (const std::string& c : comments) os << "# " << c << "\n";
    os << image.w << " " << image.h << "\n255\n";
    std::string bytes = os.str();
    bytes.reserve(bytes.size() + static_cast<size_t>(image.h) * image.w * 3);
    for (int y = 0; y < image.h; ++y)
        for (int x = 0; x < image.w; ++x)
            for (int c = 0; c < 3; ++c)
                bytes.push_back(static_cast<char>(encode_u8(image.at(0, c, y, x))));
    fsutil::atomic_write(path, bytes);
}

Tensor read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_ppm: cannot open '" + path + "'");
    std::string magic;
    in >> magic;
    if (magic != "P6") throw FormatError("read_ppm: '" + path + "' is not a binary PPM");
    auto next_token = [&in, &path]() {
        std::string tok;
        while (in >> tok) {
            if (tok[0] == '#') {
                std::string rest;
                std::getline(in, rest);
                continue;
            }
            return tok;
        }
        throw FormatError("read_ppm: truncated header in '" + path + "'");
    };
    const int w = std::stoi(next_token());
    const int h = std::stoi(next_token());
    const int maxval = std::stoi(next_token());
    if (w < 1 || h < 1 || maxval != 255)
        throw FormatError("read_ppm: unsupported header in '" + path + "'");
    in.get();  // single whitespace after maxval
    std::vector<char> raw(static_cast<size_t>(w) * h * 3);
    in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size()))
        throw FormatError("read_ppm: truncated pixel data in '" + path + "'");
    Tensor img(1, 3, h, w);
    size_t i = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                const double u = static_cast<unsigned char>(raw[i++]);
                img.at(0, c, y, x) = u / 255.0 * 2.0 - 1.0;
            }
    return img;
}

bool is_lossy_extension(const std::string& path) {
    const std::string ext = lower_ext(path);
    return ext == "jpg" || ext == "jpeg" || ext == "webp" || ext == "gif";
}

bool is_supported_extension(const std::string& path) { return lower_ext(path) == "ppm"; }

}  // namespace found::imageio
