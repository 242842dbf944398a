#include "softmask/cli/plot.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>

#include "softmask/common/errors.hpp"

namespace softmask::cli {
namespace {

constexpr int kWidth = 800, kHeight = 500;
constexpr int kLeft = 80, kRight = 180, kTop = 40, kBottom = 60;

const std::vector<cv::Scalar> kPalette = {
    {180, 119, 31}, {14, 127, 255}, {44, 160, 44}, {40, 39, 214},
    {189, 103, 148}, {75, 86, 140}, {194, 119, 227}, {34, 189, 188},
};

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish() {
    if (!std::isfinite(lo)) lo = 0, hi = 1;
    if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
};

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

struct Canvas {
  cv::Mat img{kHeight, kWidth, CV_8UC3, cv::Scalar(255, 255, 255)};
  Range xr, yr;

  cv::Point map(double x, double y) const {
    const double px = kLeft + (x - xr.lo) / (xr.hi - xr.lo) * (kWidth - kLeft - kRight);
    const double py = kHeight - kBottom - (y - yr.lo) / (yr.hi - yr.lo) * (kHeight - kTop - kBottom);
    return {static_cast<int>(std::lround(px)), static_cast<int>(std::lround(py))};
  }

  void axes(const PlotLabels& labels) {
    const cv::Scalar grey(200, 200, 200), black(0, 0, 0);
    for (int i = 0; i <= 5; ++i) {
      const double x = xr.lo + (xr.hi - xr.lo) * i / 5.0;
      const double y = yr.lo + (yr.hi - yr.lo) * i / 5.0;
      auto px = map(x, yr.lo), py = map(xr.lo, y);
      cv::line(img, {px.x, kTop}, {px.x, kHeight - kBottom}, grey, 1);
      cv::line(img, {kLeft, py.y}, {kWidth - kRight, py.y}, grey, 1);
      cv::putText(img, tick(x), {px.x - 15, kHeight - kBottom + 18}, cv::FONT_HERSHEY_SIMPLEX, 0.4, black, 1,
                  cv::LINE_AA);
      cv::putText(img, tick(y), {8, py.y + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.4, black, 1, cv::LINE_AA);
    }
    cv::rectangle(img, {kLeft, kTop}, {kWidth - kRight, kHeight - kBottom}, black, 1);
    cv::putText(img, labels.title, {kLeft, 25}, cv::FONT_HERSHEY_SIMPLEX, 0.6, black, 1, cv::LINE_AA);
    cv::putText(img, labels.x_label, {(kWidth - kRight + kLeft) / 2 - 30, kHeight - 15}, cv::FONT_HERSHEY_SIMPLEX,
                0.5, black, 1, cv::LINE_AA);
    cv::putText(img, labels.y_label, {8, kTop - 8}, cv::FONT_HERSHEY_SIMPLEX, 0.45, black, 1, cv::LINE_AA);
  }

  void legend(int row, const std::string& name, const cv::Scalar& colour) {
    const int y = kTop + 15 + row * 20;
    cv::line(img, {kWidth - kRight + 10, y - 4}, {kWidth - kRight + 30, y - 4}, colour, 2);
    cv::putText(img, name, {kWidth - kRight + 36, y}, cv::FONT_HERSHEY_SIMPLEX, 0.42, {0, 0, 0}, 1, cv::LINE_AA);
  }

  void save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), img)) throw DataError("cannot write plot " + path.string());
  }
};

}  // namespace

void plot_lines(const std::vector<Series>& series, const PlotLabels& labels, const std::filesystem::path& path) {
  Canvas c;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw ArgumentError("plot series '" + s.name + "' has misaligned x and y");
    for (std::size_t i = 0; i < s.x.size(); ++i)
      if (std::isfinite(s.y[i])) c.xr.add(s.x[i]), c.yr.add(s.y[i]);
  }
  c.xr.finish();
  c.yr.finish();
  c.axes(labels);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& colour = kPalette[k % kPalette.size()];
    const auto& s = series[k];
    std::vector<cv::Point> run;
    auto flush = [&] {
      if (run.size() == 1) cv::circle(c.img, run[0], 2, colour, cv::FILLED, cv::LINE_AA);
      if (run.size() > 1) cv::polylines(c.img, run, false, colour, 2, cv::LINE_AA);
      run.clear();
    };
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (std::isfinite(s.y[i])) run.push_back(c.map(s.x[i], s.y[i]));
      else flush();
    }
    flush();
    c.legend(static_cast<int>(k), s.name, colour);
  }
  c.save(path);
}

void plot_scatter(const std::vector<reideval::ScatterPoint>& points, const std::array<double, 2>& centroid_a,
                  const std::array<double, 2>& centroid_b, const std::array<std::string, 2>& names,
                  const PlotLabels& labels, const std::filesystem::path& path) {
  Canvas c;
  for (const auto& p : points) c.xr.add(p.x), c.yr.add(p.y);
  for (const auto* ctr : {&centroid_a, &centroid_b}) c.xr.add((*ctr)[0]), c.yr.add((*ctr)[1]);
  c.xr.finish();
  c.yr.finish();
  c.axes(labels);
  for (const auto& p : points)
    cv::circle(c.img, c.map(p.x, p.y), 3, kPalette[p.domain == 0 ? 0 : 1], cv::FILLED, cv::LINE_AA);
  for (int k = 0; k < 2; ++k) {
    const auto& ctr = k == 0 ? centroid_a : centroid_b;
    cv::drawMarker(c.img, c.map(ctr[0], ctr[1]), {0, 0, 0}, cv::MARKER_CROSS, 18, 2);
    c.legend(k, names[static_cast<std::size_t>(k)], kPalette[static_cast<std::size_t>(k)]);
  }
  c.save(path);
}

std::vector<double> moving_average(const std::vector<double>& values, std::size_t window) {
  std::vector<double> out(values.size(), std::nan(""));
  std::deque<double> buf;
  double sum = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) continue;
    buf.push_back(values[i]);
    sum += values[i];
    if (buf.size() > window) {
      sum -= buf.front();
      buf.pop_front();
    }
    out[i] = sum / static_cast<double>(buf.size());
  }
  return out;
}

}  // namespace softmask::cli
