// SPDX-License-Identifier: Apache-2.0
#include "bseg/data/image.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <cstring>
#include <stdexcept>

namespace bseg::data {

namespace {

cv::Mat read_any(const std::filesystem::path& path, int flags) {
    if (!std::filesystem::exists(path)) throw std::runtime_error("no such file: " + path.string());
    cv::Mat m = cv::imread(path.string(), flags);
    if (m.empty()) throw std::runtime_error("cannot decode image: " + path.string());
    return m;
}

void ensure_parent(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
}

const std::vector<int> kPngParams{cv::IMWRITE_PNG_COMPRESSION, 6};

cv::Mat to_mat(const ImageU8& image) {
    cv::Mat rgb(image.height, image.width, CV_8UC(image.channels),
                const_cast<std::uint8_t*>(image.pixels.data()));
    cv::Mat out;
    if (image.channels == 3) {
        cv::cvtColor(rgb, out, cv::COLOR_RGB2BGR);
    } else {
        out = rgb.clone();
    }
    return out;
}

}  // namespace

ImageU8 read_rgb(const std::filesystem::path& path) {
    cv::Mat m = read_any(path, cv::IMREAD_UNCHANGED);
    if (m.depth() == CV_16U) m.convertTo(m, CV_8U, 1.0 / 257.0);
    if (m.depth() != CV_8U) throw std::runtime_error("unsupported pixel depth in " + path.string());
    cv::Mat rgb;
    switch (m.channels()) {
        case 1: cv::cvtColor(m, rgb, cv::COLOR_GRAY2RGB); break;
        case 3: cv::cvtColor(m, rgb, cv::COLOR_BGR2RGB); break;
        case 4: cv::cvtColor(m, rgb, cv::COLOR_BGRA2RGB); break;
        default: throw std::runtime_error("unsupported channel count in " + path.string());
    }
    ImageU8 out(rgb.rows, rgb.cols, 3);
    for (int y = 0; y < rgb.rows; ++y) {
        std::memcpy(out.pixels.data() + static_cast<std::size_t>(y) * rgb.cols * 3, rgb.ptr(y),
                    static_cast<std::size_t>(rgb.cols) * 3);
    }
    return out;
}

LabelRaster read_labels(const std::filesystem::path& path) {
    cv::Mat m = read_any(path, cv::IMREAD_UNCHANGED);
    if (m.channels() != 1) {
        throw std::runtime_error("label raster must be single-channel: " + path.string());
    }
    LabelRaster out{m.rows, m.cols, {}};
    out.ids.resize(static_cast<std::size_t>(m.rows) * m.cols);
    for (int y = 0; y < m.rows; ++y) {
        for (int x = 0; x < m.cols; ++x) {
            std::int32_t v = 0;
            switch (m.depth()) {
                case CV_8U: v = m.at<std::uint8_t>(y, x); break;
                case CV_16U: v = m.at<std::uint16_t>(y, x); break;
                case CV_16S: v = m.at<std::int16_t>(y, x); break;
                case CV_32S: v = m.at<std::int32_t>(y, x); break;
                default: throw std::runtime_error("unsupported label depth in " + path.string());
            }
            out.ids[static_cast<std::size_t>(y) * m.cols + x] = v;
        }
    }
    return out;
}

std::vector<std::uint8_t> read_mask(const std::filesystem::path& path, int* height, int* width) {
    cv::Mat m = read_any(path, cv::IMREAD_GRAYSCALE);
    std::vector<std::uint8_t> out(static_cast<std::size_t>(m.rows) * m.cols);
    for (int y = 0; y < m.rows; ++y) {
        const std::uint8_t* row = m.ptr<std::uint8_t>(y);
        for (int x = 0; x < m.cols; ++x) out[static_cast<std::size_t>(y) * m.cols + x] = row[x] != 0;
    }
    if (height != nullptr) *height = m.rows;
    if (width != nullptr) *width = m.cols;
    return out;
}

void write_png(const std::filesystem::path& path, const ImageU8& image) {
    ensure_parent(path);
    if (!cv::imwrite(path.string(), to_mat(image), kPngParams)) {
        throw std::runtime_error("cannot write " + path.string());
    }
}

void write_mask_png(const std::filesystem::path& path, const std::vector<std::uint8_t>& mask,
                    int height, int width) {
    if (mask.size() != static_cast<std::size_t>(height) * width) {
        throw std::invalid_argument("write_mask_png: mask size does not match dims");
    }
    ImageU8 img(height, width, 1);
    for (std::size_t i = 0; i < mask.size(); ++i) img.pixels[i] = mask[i] != 0 ? 255 : 0;
    write_png(path, img);
}

std::vector<std::uint8_t> encode_png(const ImageU8& image) {
    std::vector<std::uint8_t> buf;
    if (!cv::imencode(".png", to_mat(image), buf, kPngParams)) {
        throw std::runtime_error("PNG encoding failed");
    }
    return buf;
}

}  // namespace bseg::data
