#pragma once

#include <filesystem>

#include <opencv2/core.hpp>
#include <torch/torch.h>

namespace a3gan {

/// [3, H, W] tensor in [-1, 1] -> 8-bit BGR image.
cv::Mat to_bgr8(const torch::Tensor& image);
/// 8-bit BGR (or grayscale) image -> [3, H, W] float32 tensor in [-1, 1].
torch::Tensor from_bgr8(const cv::Mat& mat);

/// Decodes PNG/JPEG, resizes to size x size when size > 0.
torch::Tensor read_image(const std::filesystem::path& path, int64_t size = 0);
void write_image(const torch::Tensor& image, const std::filesystem::path& path);
/// Writes an 8-bit PNG/JPEG, raising IoError on failure.
void write_mat(const cv::Mat& mat, const std::filesystem::path& path);

/// [H, W] array, min-max normalized to 0..255 (constant arrays map to 0).
cv::Mat normalized_gray8(const torch::Tensor& plane);

}  // namespace a3gan
