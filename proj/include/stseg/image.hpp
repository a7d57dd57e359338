#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stseg/metrics.hpp"

namespace stseg {

// Interleaved 8-bit RGB image, row-major.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> rgb;

    Image() = default;
    Image(int w, int h, uint8_t fill = 0)
        : width(w), height(h), rgb(static_cast<size_t>(w) * h * 3, fill) {}

    uint8_t* px(int x, int y) { return rgb.data() + (static_cast<size_t>(y) * width + x) * 3; }
    const uint8_t* px(int x, int y) const { return rgb.data() + (static_cast<size_t>(y) * width + x) * 3; }
    bool operator==(const Image& o) const { return width == o.width && height == o.height && rgb == o.rgb; }
};

// Binary PPM (P6, maxval 255).
void write_ppm(const std::string& path, const Image& img);
Image read_ppm(const std::string& path);

// Binary PGM (P5, maxval 255); pixel value is the class id.
void write_pgm(const std::string& path, const Mask& mask);
Mask read_pgm(const std::string& path);

// Middlebury .flo: float32 magic 202021.25, int32 width, int32 height,
// row-major interleaved (u,v) float32. Invalid pixels are stored as
// u = v = kInvalidFlow and restored into the validity flags on read.
void write_flo(const std::string& path, const FlowField& flow);
FlowField read_flo(const std::string& path);

}  // namespace stseg
