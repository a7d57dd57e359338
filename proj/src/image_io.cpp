#include "stseg/image.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace stseg {

namespace {

[[noreturn]] void io_fail(const std::string& what, const std::string& path) {
    throw std::runtime_error(what + ": " + path);
}

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) io_fail("cannot open for writing", path);
    return f;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) io_fail("cannot open for reading", path);
    return f;
}

// Reads one whitespace-separated PNM header token, skipping '#' comments.
std::string pnm_token(std::istream& in, const std::string& path) {
    std::string tok;
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (!std::isspace(c)) {
            break;
        }
        c = in.get();
    }
    while (c != EOF && !std::isspace(c)) {
        tok.push_back(static_cast<char>(c));
        c = in.get();
    }
    if (tok.empty()) io_fail("truncated PNM header", path);
    return tok;
}

int pnm_int(std::istream& in, const std::string& path) {
    const std::string tok = pnm_token(in, path);
    try {
        return std::stoi(tok);
    } catch (const std::exception&) {
        io_fail("bad PNM header value '" + tok + "'", path);
    }
}

void pnm_header(std::istream& in, const std::string& path, const char* magic, int& w, int& h) {
    if (pnm_token(in, path) != magic) io_fail(std::string("not a ") + magic + " file", path);
    w = pnm_int(in, path);
    h = pnm_int(in, path);
    const int maxval = pnm_int(in, path);
    if (w <= 0 || h <= 0) io_fail("non-positive PNM dimensions", path);
    if (maxval != 255) io_fail("unsupported PNM maxval " + std::to_string(maxval), path);
    // header ends with exactly one whitespace byte, already consumed by pnm_token
}

}  // namespace

void write_ppm(const std::string& path, const Image& img) {
    auto f = open_out(path);
    f << "P6\n" << img.width << " " << img.height << "\n255\n";
    f.write(reinterpret_cast<const char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
    if (!f) io_fail("write failed", path);
}

Image read_ppm(const std::string& path) {
    auto f = open_in(path);
    int w = 0, h = 0;
    pnm_header(f, path, "P6", w, h);
    Image img(w, h);
    f.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
    if (f.gcount() != static_cast<std::streamsize>(img.rgb.size())) io_fail("truncated PPM payload", path);
    return img;
}

void write_pgm(const std::string& path, const Mask& mask) {
    auto f = open_out(path);
    f << "P5\n" << mask.width << " " << mask.height << "\n255\n";
    f.write(reinterpret_cast<const char*>(mask.ids.data()), static_cast<std::streamsize>(mask.ids.size()));
    if (!f) io_fail("write failed", path);
}

Mask read_pgm(const std::string& path) {
    auto f = open_in(path);
    int w = 0, h = 0;
    pnm_header(f, path, "P5", w, h);
    Mask mask(w, h);
    f.read(reinterpret_cast<char*>(mask.ids.data()), static_cast<std::streamsize>(mask.ids.size()));
    if (f.gcount() != static_cast<std::streamsize>(mask.ids.size())) io_fail("truncated PGM payload", path);
    return mask;
}

void write_flo(const std::string& path, const FlowField& flow) {
    auto f = open_out(path);
    const float magic = 202021.25f;
    const int32_t w = flow.width, h = flow.height;
    f.write(reinterpret_cast<const char*>(&magic), 4);
    f.write(reinterpret_cast<const char*>(&w), 4);
    f.write(reinterpret_cast<const char*>(&h), 4);
    std::vector<float> row(static_cast<size_t>(flow.width) * 2);
    for (int y = 0; y < flow.height; ++y) {
        for (int x = 0; x < flow.width; ++x) {
            const size_t i = flow.idx(x, y);
            const bool ok = flow.valid[i] != 0;
            row[static_cast<size_t>(x) * 2] = ok ? flow.u[i] : kInvalidFlow;
            row[static_cast<size_t>(x) * 2 + 1] = ok ? flow.v[i] : kInvalidFlow;
        }
        f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * 4));
    }
    if (!f) io_fail("write failed", path);
}

FlowField read_flo(const std::string& path) {
    auto f = open_in(path);
    float magic = 0.0f;
    int32_t w = 0, h = 0;
    f.read(reinterpret_cast<char*>(&magic), 4);
    f.read(reinterpret_cast<char*>(&w), 4);
    f.read(reinterpret_cast<char*>(&h), 4);
    if (!f || magic != 202021.25f) io_fail("not a .flo file (bad magic)", path);
    if (w <= 0 || h <= 0) io_fail("non-positive .flo dimensions", path);
    FlowField flow(w, h);
    std::vector<float> row(static_cast<size_t>(w) * 2);
    for (int y = 0; y < h; ++y) {
        f.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * 4));
        if (f.gcount() != static_cast<std::streamsize>(row.size() * 4)) io_fail("truncated .flo payload", path);
        for (int x = 0; x < w; ++x) {
            const size_t i = flow.idx(x, y);
            const float u = row[static_cast<size_t>(x) * 2];
            const float v = row[static_cast<size_t>(x) * 2 + 1];
            if (u == kInvalidFlow && v == kInvalidFlow) {
                flow.valid[i] = 0;
            } else {
                flow.u[i] = u;
                flow.v[i] = v;
            }
        }
    }
    return flow;
}

}  // namespace stseg
