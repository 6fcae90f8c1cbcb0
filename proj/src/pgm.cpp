#include "uat/pgm.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace uat {

namespace {

// Skips whitespace and '#' comment lines between header tokens.
int next_header_int(std::istream& is, const std::string& path) {
    int c = is.get();
    while (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '#') {
        if (c == '#')
            while (c != '\n' && c != EOF) c = is.get();
        c = is.get();
    }
    int value = -1;
    while (c >= '0' && c <= '9') {
        if (value < 0) value = 0;
        value = value * 10 + (c - '0');
        c = is.get();
    }
    if (value < 0) throw std::runtime_error("pgm: malformed header in " + path);
    return value;
}

}  // namespace

Tensor read_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("pgm: cannot open " + path);
    char m0 = 0, m1 = 0;
    is.get(m0);
    is.get(m1);
    if (m0 != 'P' || m1 != '5')
        throw std::runtime_error("pgm: not a binary P5 file: " + path);
    const int w = next_header_int(is, path);
    const int h = next_header_int(is, path);
    const int maxval = next_header_int(is, path);
    if (w <= 0 || h <= 0 || maxval != 255)
        throw std::runtime_error("pgm: unsupported dimensions or maxval in " + path);

    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h);
    if (!is.read(reinterpret_cast<char*>(raw.data()),
                 static_cast<std::streamsize>(raw.size())))
        throw std::runtime_error("pgm: truncated pixel data in " + path);

    Tensor img({1, static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
    for (std::size_t i = 0; i < raw.size(); ++i)
        img.data[i] = static_cast<float>(raw[i]) / 255.0f;
    return img;
}

void write_pgm(const Tensor& image, const std::string& path) {
    if (image.rank() != 3 || image.shape[0] != 1)
        throw std::invalid_argument("pgm: image must have shape [1,H,W]");
    const std::size_t h = image.shape[1], w = image.shape[2];

    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw std::runtime_error("pgm: cannot open " + tmp);
        os << "P5\n" << w << " " << h << "\n255\n";
        std::vector<unsigned char> raw(h * w);
        for (std::size_t i = 0; i < raw.size(); ++i) {
            const float v = std::round(image.data[i] * 255.0f);
            raw[i] = static_cast<unsigned char>(std::min(255.0f, std::max(0.0f, v)));
        }
        os.write(reinterpret_cast<const char*>(raw.data()),
                 static_cast<std::streamsize>(raw.size()));
        if (!os) throw std::runtime_error("pgm: write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace uat
