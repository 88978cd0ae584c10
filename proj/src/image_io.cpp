#include "a3gan/image_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "a3gan/errors.hpp"

namespace a3gan {

cv::Mat to_bgr8(const torch::Tensor& image) {
    if (image.dim() != 3 || image.size(0) != 3) throw DimensionError("to_bgr8: expected [3,H,W]");
    auto hwc = ((image.detach().to(torch::kFloat32).clamp(-1, 1) + 1) * 127.5)
                   .round()
                   .to(torch::kUInt8)
                   .permute({1, 2, 0})
                   .flip({2})  // RGB -> BGR
                   .contiguous();
    cv::Mat mat(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)), CV_8UC3, hwc.data_ptr<uint8_t>());
    return mat.clone();
}

torch::Tensor from_bgr8(const cv::Mat& mat) {
    cv::Mat bgr;
    if (mat.channels() == 1) {
        cv::cvtColor(mat, bgr, cv::COLOR_GRAY2BGR);
    } else if (mat.channels() == 4) {
        cv::cvtColor(mat, bgr, cv::COLOR_BGRA2BGR);
    } else {
        bgr = mat;
    }
    if (bgr.depth() != CV_8U) throw IoError("image: only 8-bit images are supported");
    cv::Mat cont = bgr.isContinuous() ? bgr : bgr.clone();
    auto t = torch::from_blob(cont.data, {cont.rows, cont.cols, 3}, torch::kUInt8)
                 .flip({2})
                 .permute({2, 0, 1})
                 .to(torch::kFloat32);
    return (t / 127.5 - 1).contiguous();
}

torch::Tensor read_image(const std::filesystem::path& path, int64_t size) {
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (m.empty()) throw IoError("image: cannot decode '" + path.string() + "'");
    if (size > 0 && (m.rows != size || m.cols != size)) {
        cv::Mat r;
        const bool shrink = m.rows > size || m.cols > size;
        cv::resize(m, r, cv::Size(static_cast<int>(size), static_cast<int>(size)), 0, 0,
                   shrink ? cv::INTER_AREA : cv::INTER_LINEAR);
        m = r;
    }
    return from_bgr8(m);
}

void write_mat(const cv::Mat& mat, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    bool ok = false;
    try {
        ok = cv::imwrite(path.string(), mat);
    } catch (const cv::Exception& e) {
        throw IoError("image: cannot write '" + path.string() + "': " + e.what());
    }
    if (!ok) throw IoError("image: cannot write '" + path.string() + "'");
}

void write_image(const torch::Tensor& image, const std::filesystem::path& path) {
    write_mat(to_bgr8(image), path);
}

cv::Mat normalized_gray8(const torch::Tensor& plane) {
    if (plane.dim() != 2) throw DimensionError("normalized_gray8: expected [H,W]");
    auto p = plane.detach().to(torch::kFloat64);
    const double lo = p.min().item<double>(), hi = p.max().item<double>();
    auto scaled = hi > lo ? (p - lo) / (hi - lo) * 255.0 : torch::zeros_like(p);
    auto u8 = scaled.round().to(torch::kUInt8).contiguous();
    cv::Mat mat(static_cast<int>(u8.size(0)), static_cast<int>(u8.size(1)), CV_8UC1, u8.data_ptr<uint8_t>());
    return mat.clone();
}

}  // namespace a3gan
