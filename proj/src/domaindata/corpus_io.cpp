#include "softmask/domaindata/corpus_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <regex>

#include "softmask/common/errors.hpp"

namespace fs = std::filesystem;

namespace softmask::domaindata {
namespace {

cv::Mat resize_if_needed(const cv::Mat& m, std::int64_t height, std::int64_t width) {
  if (m.rows == height && m.cols == width) return m;
  cv::Mat out;
  cv::resize(m, out, cv::Size(static_cast<int>(width), static_cast<int>(height)), 0, 0, cv::INTER_LINEAR);
  return out;
}

}  // namespace

ParsedName parse_sample_name(const std::string& filename) {
  static const std::regex pattern(R"(^(\d+)_c(\d+)_d(\d+)_(\d+)\.png$)");
  std::smatch m;
  if (!std::regex_match(filename, m, pattern))
    throw ParseError("malformed sample file name '" + filename + "' (expected <id>_c<camera>_d<domain>_<seq>.png)");
  try {
    return {std::stoi(m[1]), std::stoi(m[2]), std::stoi(m[3]), std::stoi(m[4])};
  } catch (const std::out_of_range&) {
    throw ParseError("label out of range in sample file name '" + filename + "'");
  }
}

void write_image_png(const torch::Tensor& image, const fs::path& path) {
  if (image.dim() != 3 || image.size(0) != 3) throw ArgumentError("write_image_png: expected [3, H, W]");
  // [-1, 1] -> [0, 255], CHW RGB -> HWC BGR
  auto bytes = ((image.detach().to(torch::kCPU).clamp(-1, 1) + 1.0) * 127.5)
                   .round()
                   .to(torch::kUInt8)
                   .flip({0})
                   .permute({1, 2, 0})
                   .contiguous();
  cv::Mat mat(static_cast<int>(bytes.size(0)), static_cast<int>(bytes.size(1)), CV_8UC3, bytes.data_ptr());
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), mat)) throw DataError("cannot write " + path.string());
}

torch::Tensor read_image_png(const fs::path& path, std::int64_t height, std::int64_t width) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw DataError("cannot read image " + path.string());
  bgr = resize_if_needed(bgr, height, width);
  auto t = torch::from_blob(bgr.data, {bgr.rows, bgr.cols, 3}, torch::kUInt8)
               .permute({2, 0, 1})
               .flip({0})
               .to(torch::kFloat32);
  return (t * (2.0 / 255.0) - 1.0).contiguous();
}

void write_mask_png(const torch::Tensor& mask, const fs::path& path) {
  if (mask.dim() != 2) throw ArgumentError("write_mask_png: expected [H, W]");
  auto bytes = (mask.detach().to(torch::kCPU).clamp(0, 1) * 255.0).round().to(torch::kUInt8).contiguous();
  cv::Mat mat(static_cast<int>(bytes.size(0)), static_cast<int>(bytes.size(1)), CV_8UC1, bytes.data_ptr());
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), mat)) throw DataError("cannot write " + path.string());
}

torch::Tensor read_mask_png(const fs::path& path, std::int64_t height, std::int64_t width) {
  cv::Mat gray = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (gray.empty()) throw DataError("cannot read mask " + path.string());
  gray = resize_if_needed(gray, height, width);
  auto t = torch::from_blob(gray.data, {gray.rows, gray.cols}, torch::kUInt8).to(torch::kFloat32);
  return (t / 255.0).contiguous();
}

Corpus load_corpus(const fs::path& root, const LayoutSpec& layout) {
  if (!fs::is_directory(root)) throw DataError("corpus directory does not exist: " + root.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
  if (files.empty()) throw DataError("no samples in " + root.string());
  std::sort(files.begin(), files.end());

  std::vector<ImageSample> samples;
  samples.reserve(files.size());
  int max_domain = 0;
  for (const auto& file : files) {
    const auto parsed = parse_sample_name(file.filename().string());
    ImageSample s;
    s.identity = parsed.identity;
    s.camera = parsed.camera;
    s.domain = parsed.domain;
    s.sequence = parsed.sequence;
    s.image = read_image_png(file, layout.height, layout.width);
    const auto mask_path = root / "masks" / file.filename();
    if (fs::exists(mask_path)) {
      s.mask = read_mask_png(mask_path, layout.height, layout.width);
    } else if (layout.masks_required) {
      throw DataError("missing mask for " + file.filename().string() + " (expected " + mask_path.string() + ")");
    }
    max_domain = std::max(max_domain, s.domain);
    samples.push_back(std::move(s));
  }
  const int K = layout.num_domains > 0 ? layout.num_domains : max_domain + 1;
  return Corpus(std::move(samples), K);
}

void write_corpus(const Corpus& corpus, const fs::path& root) {
  fs::create_directories(root);
  for (const auto& s : corpus.samples()) {
    const auto name = s.stem() + ".png";
    write_image_png(s.image, root / name);
    if (s.mask) write_mask_png(*s.mask, root / "masks" / name);
  }
}

}  // namespace softmask::domaindata
