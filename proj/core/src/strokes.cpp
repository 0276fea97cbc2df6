#include "hiermatch/strokes.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hiermatch/tensor.hpp"

namespace hiermatch {

namespace {

Stroke parse_stroke_line(const std::string& line, std::size_t line_no) {
  Stroke stroke;
  std::istringstream in(line);
  std::string pair;
  while (std::getline(in, pair, ';')) {
    std::istringstream ps(pair);
    Point pt;
    char comma = 0;
    if (!(ps >> pt.x >> comma >> pt.y) || comma != ',' || (ps >> std::ws, !ps.eof()))
      throw DataError("stroke file line " + std::to_string(line_no) +
                      ": expected x,y;x,y;... got '" + pair + "'");
    if (!std::isfinite(pt.x) || !std::isfinite(pt.y))
      throw DataError("stroke file line " + std::to_string(line_no) +
                      ": non-finite coordinate");
    stroke.points.push_back(pt);
  }
  if (stroke.points.size() < 2)
    throw DataError("stroke file line " + std::to_string(line_no) +
                    ": a stroke needs at least two points");
  return stroke;
}

}  // namespace

StrokeFile parse_stroke_file(std::istream& in) {
  StrokeFile file;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    file.strokes.push_back(parse_stroke_line(line, line_no));
  }
  if (file.strokes.empty()) throw DataError("stroke file contains no strokes");
  return file;
}

StrokeFile parse_stroke_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open stroke file: " + path);
  return parse_stroke_file(in);
}

std::vector<Box> stroke_bboxes(const StrokeFile& file) {
  std::vector<Box> boxes;
  boxes.reserve(file.strokes.size());
  for (const auto& stroke : file.strokes) {
    Box box{stroke.points[0].x, stroke.points[0].y, stroke.points[0].x,
            stroke.points[0].y};
    for (const auto& p : stroke.points) {
      box.min_x = std::min(box.min_x, p.x);
      box.min_y = std::min(box.min_y, p.y);
      box.max_x = std::max(box.max_x, p.x);
      box.max_y = std::max(box.max_y, p.y);
    }
    boxes.push_back(box);
  }
  return boxes;
}

std::vector<Box> grid_regions(double width, double height, std::size_t k) {
  if (k == 0) throw ShapeError("grid_regions: k must be positive");
  if (width <= 0.0 || height <= 0.0)
    throw ShapeError("grid_regions: canvas must have positive area");
  if (static_cast<double>(k) > width * height)
    throw ShapeError("grid_regions: k exceeds tile capacity of the canvas");
  // Most-square factorization: largest divisor of k not above sqrt(k).
  std::size_t rows = 1;
  for (std::size_t r = 1; r * r <= k; ++r)
    if (k % r == 0) rows = r;
  const std::size_t cols = k / rows;
  std::vector<Box> tiles;
  tiles.reserve(k);
  const double tile_w = width / static_cast<double>(cols);
  const double tile_h = height / static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      tiles.push_back(Box{static_cast<double>(c) * tile_w,
                          static_cast<double>(r) * tile_h,
                          static_cast<double>(c + 1) * tile_w,
                          static_cast<double>(r + 1) * tile_h});
  return tiles;
}

std::vector<double> stroke_region_features(const Stroke& stroke,
                                           const Box& box, std::size_t d_raw) {
  if (d_raw < 9)
    throw ConfigError("stroke features need d_raw >= 9, got " +
                      std::to_string(d_raw));
  std::vector<double> f(d_raw, 0.0);
  const double w = box.width(), h = box.height();
  double path_len = 0.0;
  for (std::size_t i = 1; i < stroke.points.size(); ++i)
    path_len += std::hypot(stroke.points[i].x - stroke.points[i - 1].x,
                           stroke.points[i].y - stroke.points[i - 1].y);
  f[0] = 0.5 * (box.min_x + box.max_x);
  f[1] = 0.5 * (box.min_y + box.max_y);
  f[2] = w;
  f[3] = h;
  f[4] = w * h;
  f[5] = h > 0.0 ? w / h : 0.0;
  f[6] = static_cast<double>(stroke.points.size());
  f[7] = path_len;
  f[8] = (w + h) > 0.0 ? path_len / (w + h) : 0.0;

  const std::size_t slots = d_raw - 9;
  const std::size_t g = static_cast<std::size_t>(
      std::floor(std::sqrt(static_cast<double>(slots))));
  if (g >= 1) {
    const double cell_w = w > 0.0 ? w / static_cast<double>(g) : 1.0;
    const double cell_h = h > 0.0 ? h / static_cast<double>(g) : 1.0;
    for (const auto& p : stroke.points) {
      std::size_t cx = w > 0.0 ? static_cast<std::size_t>(
                                     std::min(static_cast<double>(g - 1),
                                              (p.x - box.min_x) / cell_w))
                               : 0;
      std::size_t cy = h > 0.0 ? static_cast<std::size_t>(
                                     std::min(static_cast<double>(g - 1),
                                              (p.y - box.min_y) / cell_h))
                               : 0;
      f[9 + cy * g + cx] += 1.0;
    }
    const double inv = 1.0 / static_cast<double>(stroke.points.size());
    for (std::size_t i = 9; i < 9 + g * g; ++i) f[i] *= inv;
  }
  return f;
}

std::vector<double> stroke_file_features(const StrokeFile& file,
                                         std::size_t d_raw) {
  const std::vector<Box> boxes = stroke_bboxes(file);
  std::vector<double> rows;
  rows.reserve(file.strokes.size() * d_raw);
  for (std::size_t i = 0; i < file.strokes.size(); ++i) {
    const auto f = stroke_region_features(file.strokes[i], boxes[i], d_raw);
    rows.insert(rows.end(), f.begin(), f.end());
  }
  return rows;
}

}  // namespace hiermatch
