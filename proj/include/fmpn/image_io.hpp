#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "fmpn/errors.hpp"
#include "fmpn/tensor.hpp"

namespace fmpn {

/// 8-bit quantization used everywhere an image touches disk.
inline int to_u8(double v) {
    long q = std::lround(v * 255.0);
    return static_cast<int>(std::clamp(q, 0L, 255L));
}

/// Loads an 8-bit PNG/JPEG as planar RGB in [0,1], shape (3, H, W).
inline Tensor load_rgb(const std::string& path) {
    cv::Mat img = cv::imread(path, cv::IMREAD_COLOR);
    if (img.empty()) {
        throw IoError("cannot read image: " + path);
    }
    const int h = img.rows, w = img.cols;
    Tensor out({3, h, w});
    double* r = out.data();
    double* g = r + static_cast<std::size_t>(h) * w;
    double* b = g + static_cast<std::size_t>(h) * w;
    for (int y = 0; y < h; ++y) {
        const unsigned char* row = img.ptr<unsigned char>(y); // BGR
        for (int x = 0; x < w; ++x) {
            b[static_cast<std::size_t>(y) * w + x] = row[3 * x + 0] / 255.0;
            g[static_cast<std::size_t>(y) * w + x] = row[3 * x + 1] / 255.0;
            r[static_cast<std::size_t>(y) * w + x] = row[3 * x + 2] / 255.0;
        }
    }
    return out;
}

/// Loads an image as grayscale in [0,1], shape (H, W).
inline Tensor load_gray(const std::string& path) {
    cv::Mat img = cv::imread(path, cv::IMREAD_GRAYSCALE);
    if (img.empty()) {
        throw IoError("cannot read image: " + path);
    }
    Tensor out({img.rows, img.cols});
    for (int y = 0; y < img.rows; ++y) {
        const unsigned char* row = img.ptr<unsigned char>(y);
        for (int x = 0; x < img.cols; ++x) out.at(y, x) = row[x] / 255.0;
    }
    return out;
}

/// Writes a (H, W) image in [0,1] as 8-bit grayscale PNG.
inline void save_gray_png(const std::string& path, const Tensor& img) {
    if (img.rank() != 2) throw ShapeError("save_gray_png: expected rank-2 image, got " + img.shape_str());
    cv::Mat m(img.dim(0), img.dim(1), CV_8UC1);
    for (int y = 0; y < img.dim(0); ++y) {
        unsigned char* row = m.ptr<unsigned char>(y);
        for (int x = 0; x < img.dim(1); ++x) row[x] = static_cast<unsigned char>(to_u8(img.at(y, x)));
    }
    if (!cv::imwrite(path, m)) {
        throw IoError("cannot write image: " + path);
    }
}

/// Writes a planar RGB (3, H, W) image in [0,1] as 8-bit PNG.
inline void save_rgb_png(const std::string& path, const Tensor& img) {
    if (img.rank() != 3 || img.dim(0) != 3) {
        throw ShapeError("save_rgb_png: expected (3,H,W) image, got " + img.shape_str());
    }
    const int h = img.dim(1), w = img.dim(2);
    cv::Mat m(h, w, CV_8UC3);
    for (int y = 0; y < h; ++y) {
        unsigned char* row = m.ptr<unsigned char>(y); // BGR
        for (int x = 0; x < w; ++x) {
            row[3 * x + 0] = static_cast<unsigned char>(to_u8(img.at(2, y, x)));
            row[3 * x + 1] = static_cast<unsigned char>(to_u8(img.at(1, y, x)));
            row[3 * x + 2] = static_cast<unsigned char>(to_u8(img.at(0, y, x)));
        }
    }
    if (!cv::imwrite(path, m)) {
        throw IoError("cannot write image: " + path);
    }
}

/// Bilinear resize of a (H, W) image. Endpoint-aligned sampling so the four
/// corners map exactly.
inline Tensor bilinear_resize(const Tensor& img, int oh, int ow) {
    if (img.rank() != 2) throw ShapeError("bilinear_resize: expected rank-2 image");
    const int h = img.dim(0), w = img.dim(1);
    if (h == oh && w == ow) return img;
    Tensor out({oh, ow});
    const double sy = oh > 1 ? static_cast<double>(h - 1) / (oh - 1) : 0.0;
    const double sx = ow > 1 ? static_cast<double>(w - 1) / (ow - 1) : 0.0;
    for (int y = 0; y < oh; ++y) {
        double fy = y * sy;
        int y0 = static_cast<int>(fy);
        if (y0 > h - 2) y0 = h - 2 < 0 ? 0 : h - 2;
        double wy = fy - y0;
        for (int x = 0; x < ow; ++x) {
            double fx = x * sx;
            int x0 = static_cast<int>(fx);
            if (x0 > w - 2) x0 = w - 2 < 0 ? 0 : w - 2;
            double wx = fx - x0;
            int x1 = w == 1 ? x0 : x0 + 1;
            int y1 = h == 1 ? y0 : y0 + 1;
            double v = (1 - wy) * ((1 - wx) * img.at(y0, x0) + wx * img.at(y0, x1)) +
                       wy * ((1 - wx) * img.at(y1, x0) + wx * img.at(y1, x1));
            out.at(y, x) = v;
        }
    }
    return out;
}

} // namespace fmpn
