#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hiermatch {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// One pen stroke: at least two finite coordinate points.
struct Stroke {
  std::vector<Point> points;
};

struct StrokeFile {
  std::vector<Stroke> strokes;
};

struct Box {
  double min_x = 0.0, min_y = 0.0, max_x = 0.0, max_y = 0.0;
  double width() const { return max_x - min_x; }
  double height() const { return max_y - min_y; }
};

/// Text format: one stroke per line, `x1,y1;x2,y2;...`. Blank lines and
/// `#` comments are skipped. Malformed lines raise DataError with the line
/// number.
StrokeFile parse_stroke_file(std::istream& in);
StrokeFile parse_stroke_file(const std::string& path);

/// One axis-aligned box per stroke, in stroke order. Degenerate (zero-area)
/// boxes are allowed.
std::vector<Box> stroke_bboxes(const StrokeFile& file);

/// Deterministic tiling of a width x height canvas into k rectangles using
/// the most-square factorization of k. Tiles cover the canvas exactly with
/// no overlap. k must be in [1, width*height].
std::vector<Box> grid_regions(double width, double height, std::size_t k);

/// Hand-crafted region descriptor of width d_raw: box geometry and stroke
/// statistics in the first slots, then a point-density histogram over a
/// square grid inside the box. Requires d_raw >= 9.
std::vector<double> stroke_region_features(const Stroke& stroke,
                                           const Box& box, std::size_t d_raw);

/// Full stroke file -> N x d_raw feature rows (one per stroke).
std::vector<double> stroke_file_features(const StrokeFile& file,
                                         std::size_t d_raw);

}  // namespace hiermatch
