#include "mgnet/plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

#include <png.h>

namespace fs = std::filesystem;

namespace mgnet {

Image::Image(int w, int h, Rgb fill) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3) {
  for (std::size_t i = 0; i < pixels.size(); i += 3) {
    pixels[i] = fill.r;
    pixels[i + 1] = fill.g;
    pixels[i + 2] = fill.b;
  }
}

Rgb Image::at(int x, int y) const {
  const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
  return {pixels[i], pixels[i + 1], pixels[i + 2]};
}

void Image::set(int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= width || y >= height) return;
  const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
  pixels[i] = c.r;
  pixels[i + 1] = c.g;
  pixels[i + 2] = c.b;
}

std::size_t Image::count(Rgb c) const {
  std::size_t n = 0;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) n += at(x, y) == c;
  return n;
}

void write_png(const fs::path& path, const Image& image) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw std::runtime_error("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw std::runtime_error("png encoding failed for " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y)
    png_write_row(png, image.pixels.data() + static_cast<std::size_t>(y) * image.width * 3);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

Image read_png(const fs::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str()))
    throw std::runtime_error("cannot read png " + path.string());
  img.format = PNG_FORMAT_RGB;
  Image out;
  out.width = static_cast<int>(img.width);
  out.height = static_cast<int>(img.height);
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&img);
    throw std::runtime_error("cannot decode png " + path.string());
  }
  return out;
}

namespace {

// 5x7 glyphs, one byte per row, bit 4 leftmost.
const std::map<char, std::array<std::uint8_t, 7>>& glyphs() {
  static const std::map<char, std::array<std::uint8_t, 7>> g{
      {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}}, {'D', {0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E}},
      {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}}, {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
      {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}}, {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
      {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}}, {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
      {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}}, {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
      {'N', {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11}}, {' ', {0, 0, 0, 0, 0, 0, 0}}};
  return g;
}

void draw_text(Image& img, int x, int y, const std::string& text, Rgb c, int scale = 2) {
  for (char ch : text) {
    auto it = glyphs().find(ch);
    if (it != glyphs().end())
      for (int r = 0; r < 7; ++r)
        for (int col = 0; col < 5; ++col)
          if (it->second[static_cast<std::size_t>(r)] & (0x10 >> col))
            for (int dy = 0; dy < scale; ++dy)
              for (int dx = 0; dx < scale; ++dx) img.set(x + col * scale + dx, y + r * scale + dy, c);
    x += 6 * scale;
  }
}

void draw_line(Image& img, double x0, double y0, double x1, double y1, Rgb c, int thickness) {
  const double len = std::max(std::abs(x1 - x0), std::abs(y1 - y0));
  const int steps = std::max(1, static_cast<int>(std::ceil(len)));
  const int lo = -(thickness - 1) / 2, hi = thickness / 2;
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    const int x = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
    const int y = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
    for (int dy = lo; dy <= hi; ++dy)
      for (int dx = lo; dx <= hi; ++dx) img.set(x + dx, y + dy, c);
  }
}

struct View {
  double x0, y0, scale, ox, oy;
  double px(double x) const { return ox + (x - x0) * scale; }
  double py(double y) const { return oy + (y - y0) * scale; }
};

void draw_box(Image& img, const View& v, const Eigen::RowVector4d& b, Rgb c) {
  const double x1 = v.px(b(0) - b(2) / 2), x2 = v.px(b(0) + b(2) / 2);
  const double y1 = v.py(b(1) - b(3) / 2), y2 = v.py(b(1) + b(3) / 2);
  draw_line(img, x1, y1, x2, y1, c, 1);
  draw_line(img, x2, y1, x2, y2, c, 1);
  draw_line(img, x2, y2, x1, y2, c, 1);
  draw_line(img, x1, y2, x1, y1, c, 1);
}

void draw_path(Image& img, const View& v, const BoxSequence& s, Rgb c) {
  for (Index i = 1; i < s.rows(); ++i) draw_line(img, v.px(s(i - 1, 0)), v.py(s(i - 1, 1)), v.px(s(i, 0)), v.py(s(i, 1)), c, 3);
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' ? c : '_';
  return out;
}

}  // namespace

Image render_trajectory(const PlotRecord& rec, int width, int height, double fps) {
  if (rec.past.rows() == 0 || rec.truth.rows() == 0 || rec.pred.rows() != rec.truth.rows())
    throw std::invalid_argument("plot: record " + rec.name + " has mismatched sequences");
  Image img(width, height, kBackground);
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const BoxSequence* s : {&rec.past, &rec.truth, &rec.pred})
    for (Index i = 0; i < s->rows(); ++i) {
      xmin = std::min(xmin, (*s)(i, 0) - (*s)(i, 2) / 2);
      xmax = std::max(xmax, (*s)(i, 0) + (*s)(i, 2) / 2);
      ymin = std::min(ymin, (*s)(i, 1) - (*s)(i, 3) / 2);
      ymax = std::max(ymax, (*s)(i, 1) + (*s)(i, 3) / 2);
    }
  const int margin = 20, legend = 40;
  const double span_x = std::max(xmax - xmin, 1.0), span_y = std::max(ymax - ymin, 1.0);
  const double scale = std::min((width - 2.0 * margin) / span_x, (height - 2.0 * margin - legend) / span_y);
  const View v{xmin, ymin, scale, margin + (width - 2.0 * margin - span_x * scale) / 2,
               legend + margin + (height - 2.0 * margin - legend - span_y * scale) / 2};

  for (double s : {0.5, 1.0, 1.5}) {
    const Index step = static_cast<Index>(std::lround(s * fps));
    if (step > rec.truth.rows()) continue;
    draw_box(img, v, rec.truth.row(step - 1), kTruthColor);
    draw_box(img, v, rec.pred.row(step - 1), kPredColor);
  }
  // Connect the past to the first future step so the three paths are continuous.
  BoxSequence truth(rec.truth.rows() + 1, 4), pred(rec.pred.rows() + 1, 4);
  truth << rec.past.bottomRows(1), rec.truth;
  pred << rec.past.bottomRows(1), rec.pred;
  draw_path(img, v, rec.past, kPastColor);
  draw_path(img, v, truth, kTruthColor);
  draw_path(img, v, pred, kPredColor);

  int x = 10;
  for (auto [label, color] : {std::pair{"PAST", kPastColor}, std::pair{"TRUTH", kTruthColor},
                              std::pair{"PRED", kPredColor}}) {
    for (int dy = 0; dy < 14; ++dy)
      for (int dx = 0; dx < 14; ++dx) img.set(x + dx, 10 + dy, color);
    draw_text(img, x + 20, 10, label, color);
    x += 20 + 12 * static_cast<int>(std::string(label).size()) + 20;
  }
  return img;
}

std::vector<fs::path> plot_trajectories(const std::vector<PlotRecord>& records, const fs::path& out_dir, double fps) {
  std::vector<fs::path> paths;
  if (records.empty()) return paths;
  fs::create_directories(out_dir);
  for (std::size_t i = 0; i < records.size(); ++i) {
    char prefix[16];
    std::snprintf(prefix, sizeof prefix, "%05zu_", i);
    const fs::path p = out_dir / (prefix + sanitize(records[i].name) + ".png");
    write_png(p, render_trajectory(records[i], 640, 480, fps));
    paths.push_back(p);
  }
  return paths;
}

std::vector<PlotRecord> match_predictions(const std::vector<TrajectoryWindow>& windows,
                                          const std::vector<PredictionRecord>& predictions) {
  std::map<std::tuple<std::string, std::string, int>, const TrajectoryWindow*> index;
  for (const auto& w : windows) index[{w.video_id, w.track_id, w.frame}] = &w;
  std::vector<PlotRecord> out;
  for (const auto& p : predictions) {
    auto it = index.find({p.video_id, p.track_id, p.t});
    if (it == index.end())
      throw std::invalid_argument("plot: no ground truth for prediction " + p.video_id + "/" + p.track_id + " at t=" +
                                  std::to_string(p.t));
    const TrajectoryWindow& w = *it->second;
    if (w.normalized) throw std::invalid_argument("plot: windows must be in pixel space");
    if (w.rho() != p.boxes.rows())
      throw std::invalid_argument("plot: prediction length differs from ground truth for " + p.video_id + "/" +
                                  p.track_id);
    out.push_back({p.video_id + "_" + p.track_id + "_t" + std::to_string(p.t), w.observed, w.future, p.boxes});
  }
  return out;
}

}  // namespace mgnet
