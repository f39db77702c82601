// Copyright 2026 The OASIS Engine Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "oasis/worldgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "oasis/error.hpp"

namespace oasis {
namespace {

constexpr double kPi = 3.14159265358979323846;

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t hash_of(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0,
                      std::uint64_t d = 0) {
  return mix64(mix64(mix64(mix64(a) ^ b) ^ c) ^ d);
}

// Uniform in [0, 1).
double unit(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

double unit_of(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0,
               std::uint64_t d = 0) {
  return unit(hash_of(a, b, c, d));
}

std::uint64_t as_key(long v) { return static_cast<std::uint64_t>(v); }

using Rgb = std::array<double, 3>;

struct Layout {
  double horizon;        // fraction of H where the street level starts
  double road_top;       // fraction of H
  double sidewalk_depth; // fraction of H
  double building_cell;  // world pixels per building slot (at H=48)
  double building_prob;
  double building_min, building_max;  // height above street, fraction of H
  double tree_prob;
  double pole_prob;
  double car_prob;
  double ped_prob;
  double speed;          // camera drift, world pixels per frame
  Rgb building;
  Rgb vegetation;
  Rgb road;
  Rgb sidewalk;
};

// Geometry and palette per environment.
const Layout& layout_of(Environment env) {
  static const std::array<Layout, kNumEnvironments> kLayouts = {{
      // boulevard
      {0.42, 0.66, 0.10, 18, 0.75, 0.15, 0.35, 0.45, 0.30, 0.45, 0.40, 0.9,
       {0.64, 0.42, 0.32}, {0.22, 0.52, 0.20}, {0.33, 0.33, 0.35}, {0.64, 0.60, 0.53}},
      // suburb
      {0.46, 0.70, 0.09, 22, 0.55, 0.10, 0.22, 0.70, 0.25, 0.35, 0.40, 0.8,
       {0.78, 0.70, 0.58}, {0.25, 0.56, 0.22}, {0.36, 0.36, 0.37}, {0.66, 0.62, 0.56}},
      // old town
      {0.40, 0.67, 0.11, 14, 0.90, 0.18, 0.38, 0.30, 0.35, 0.40, 0.45, 0.8,
       {0.58, 0.50, 0.42}, {0.26, 0.48, 0.18}, {0.30, 0.30, 0.31}, {0.60, 0.56, 0.50}},
      // harbor
      {0.48, 0.68, 0.08, 26, 0.60, 0.12, 0.28, 0.35, 0.45, 0.50, 0.35, 1.0,
       {0.52, 0.56, 0.62}, {0.20, 0.50, 0.24}, {0.34, 0.34, 0.36}, {0.62, 0.60, 0.56}},
      // downtown
      {0.38, 0.64, 0.10, 16, 0.95, 0.25, 0.40, 0.25, 0.40, 0.55, 0.50, 1.1,
       {0.70, 0.70, 0.72}, {0.24, 0.50, 0.22}, {0.31, 0.31, 0.33}, {0.66, 0.63, 0.58}},
      // industrial
      {0.44, 0.69, 0.09, 28, 0.70, 0.14, 0.30, 0.40, 0.40, 0.50, 0.40, 0.9,
       {0.46, 0.36, 0.30}, {0.36, 0.48, 0.16}, {0.35, 0.35, 0.35}, {0.60, 0.57, 0.52}},
  }};
  return kLayouts.at(static_cast<std::size_t>(env));
}

const std::array<Rgb, 3> kCarColors = {{
    {0.76, 0.12, 0.10}, {0.12, 0.22, 0.72}, {0.06, 0.46, 0.46}}};
const std::array<Rgb, 3> kClothing = {{
    {0.48, 0.14, 0.52}, {0.70, 0.20, 0.56}, {0.36, 0.10, 0.40}}};
const Rgb kSkin = {0.86, 0.66, 0.52};
const Rgb kPole = {0.76, 0.68, 0.26};

struct Painter {
  Image& image;
  Mask& mask;

  void put(long y, long x, int cls, const Rgb& c) {
    if (y < 0 || x < 0 || y >= static_cast<long>(image.height) ||
        x >= static_cast<long>(image.width)) {
      return;
    }
    const auto yy = static_cast<std::size_t>(y), xx = static_cast<std::size_t>(x);
    for (std::size_t k = 0; k < 3; ++k) image.at(yy, xx, k) = c[k];
    mask.at(yy, xx) = cls;
  }
};

Rgb shade(const Rgb& c, double f) { return {c[0] * f, c[1] * f, c[2] * f}; }
Rgb add(const Rgb& c, double d) { return {c[0] + d, c[1] + d, c[2] + d}; }

bool dropped(const std::vector<int>& classes, SceneClass c) {
  return std::find(classes.begin(), classes.end(), static_cast<int>(c)) != classes.end();
}

void clamp_unit(Image& image) {
  for (double& v : image.rgb) v = std::clamp(v, 0.0, 1.0);
}

double luminance(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

}  // namespace

std::string_view class_name(int class_id) {
  static constexpr std::array<std::string_view, kNumClasses> kNames = {
      "sky", "road", "sidewalk", "building", "vegetation", "pole", "car", "pedestrian"};
  if (class_id < 0 || class_id >= kNumClasses) return "unknown";
  return kNames[static_cast<std::size_t>(class_id)];
}

std::string_view environment_name(Environment e) {
  static constexpr std::array<std::string_view, kNumEnvironments> kNames = {
      "boulevard", "suburb", "oldtown", "harbor", "downtown", "industrial"};
  return kNames.at(static_cast<std::size_t>(e));
}

std::string_view condition_name(Condition c) {
  static constexpr std::array<std::string_view, kNumConditions> kNames = {
      "clear", "dusk", "overcast", "night", "fog", "rain", "winter"};
  return kNames.at(static_cast<std::size_t>(c));
}

Environment parse_environment(std::string_view name) {
  for (int i = 0; i < kNumEnvironments; ++i) {
    if (environment_name(static_cast<Environment>(i)) == name) {
      return static_cast<Environment>(i);
    }
  }
  throw Error(ErrorKind::kConfig, "unknown environment '" + std::string(name) + "'");
}

Condition parse_condition(std::string_view name) {
  for (int i = 0; i < kNumConditions; ++i) {
    if (condition_name(static_cast<Condition>(i)) == name) {
      return static_cast<Condition>(i);
    }
  }
  throw Error(ErrorKind::kConfig, "unknown condition '" + std::string(name) + "'");
}

bool is_train_environment(Environment e) {
  return e == Environment::kBoulevard || e == Environment::kSuburb;
}
bool is_val_environment(Environment e) {
  return e == Environment::kOldTown || e == Environment::kHarbor;
}
bool is_val_condition(Condition c) {
  return c == Condition::kClear || c == Condition::kDusk || c == Condition::kOvercast;
}

int EpisodeSpec::frame_count() const {
  int n = 0;
  for (const auto& s : subsequences) n += s.frame_count;
  return n;
}

std::pair<std::size_t, int> EpisodeSpec::locate(int frame) const {
  int remaining = frame;
  for (std::size_t i = 0; i < subsequences.size(); ++i) {
    if (remaining < subsequences[i].frame_count) return {i, remaining};
    remaining -= subsequences[i].frame_count;
  }
  throw Error(ErrorKind::kShape, "frame " + std::to_string(frame) +
                                     " beyond episode length " +
                                     std::to_string(frame_count()));
}

LabeledFrame render(const DomainSpec& spec, int t, std::uint64_t seed,
                    std::size_t height, std::size_t width,
                    const std::vector<int>& dropped_classes) {
  if (height < 8 || width < 8) {
    throw Error(ErrorKind::kConfig, "frames must be at least 8x8");
  }
  const Layout& lay = layout_of(spec.environment);
  const double H = static_cast<double>(height);
  const double scale = H / 48.0;
  const std::uint64_t env_key = hash_of(seed, static_cast<std::uint64_t>(spec.environment));

  LabeledFrame frame;
  frame.image = Image(height, width);
  frame.mask = Mask(height, width);
  frame.domain = spec;
  Painter paint{frame.image, frame.mask};

  // Smooth camera drift: horizontal scroll plus a slow vertical sway.
  const double phase = unit_of(env_key, 1) * 2.0 * kPi;
  const double cam_x = t * lay.speed * scale + unit_of(env_key, 2) * 4000.0;
  const double sway = 0.025 * std::sin(0.045 * t + phase) * H;
  const long street = std::lround(lay.horizon * H + sway);
  const long road_top = std::lround(lay.road_top * H + sway);
  const long sidewalk_top = std::max(street, road_top - std::lround(lay.sidewalk_depth * H));
  const long cam = static_cast<long>(std::floor(cam_x));
  const long W = static_cast<long>(width);
  const long Hl = static_cast<long>(height);

  // Background: sky above the street level, sidewalk band, road.
  for (long y = 0; y < Hl; ++y) {
    for (long x = 0; x < W; ++x) {
      const long wx = x + cam;
      const double n = unit_of(env_key, 10, as_key(wx), as_key(y)) - 0.5;
      if (y < sidewalk_top) {
        const double g = static_cast<double>(y) / std::max(1.0, static_cast<double>(sidewalk_top));
        const Rgb sky = {0.52 + 0.22 * g, 0.70 + 0.14 * g, 0.93 + 0.02 * g};
        paint.put(y, x, static_cast<int>(SceneClass::kSky), add(sky, 0.02 * n));
      } else if (y < road_top) {
        const bool joint = (wx % 7 == 0) || ((y - sidewalk_top) % 5 == 0);
        const Rgb c = joint ? shade(lay.sidewalk, 0.88) : lay.sidewalk;
        paint.put(y, x, static_cast<int>(SceneClass::kSidewalk), add(c, 0.04 * n));
      } else {
        paint.put(y, x, static_cast<int>(SceneClass::kRoad), add(lay.road, 0.08 * n));
      }
    }
  }

  // Buildings occupy slots of world-x; facades carry a window grid.
  const double cell = lay.building_cell * scale;
  const long first_cell = static_cast<long>(std::floor(cam_x / cell)) - 1;
  const long last_cell = static_cast<long>(std::floor((cam_x + W) / cell)) + 1;
  for (long c = first_cell; c <= last_cell; ++c) {
    const std::uint64_t key = hash_of(env_key, 20, as_key(c));
    if (unit_of(key, 1) >= lay.building_prob) continue;
    const double rise = lay.building_min + (lay.building_max - lay.building_min) * unit_of(key, 2);
    const long top = street - std::lround(rise * H);
    const double x0 = c * cell + unit_of(key, 3) * 2.0 * scale;
    const double x1 = (c + 1) * cell - unit_of(key, 4) * 2.0 * scale;
    const double tint = 0.9 + 0.2 * unit_of(key, 5);
    for (long x = std::max(0L, static_cast<long>(std::ceil(x0 - cam_x)));
         x < std::min(W, static_cast<long>(std::ceil(x1 - cam_x))); ++x) {
      const long wx = x + cam;
      for (long y = std::max(0L, top); y < sidewalk_top; ++y) {
        const bool window = ((wx % 5) >= 2) && (((y - top) % 6) >= 2) && ((y - top) % 6) < 5;
        const double n = unit_of(env_key, 21, as_key(wx), as_key(y)) - 0.5;
        const Rgb base = shade(lay.building, tint);
        paint.put(y, x, static_cast<int>(SceneClass::kBuilding),
                  add(window ? shade(base, 0.72) : base, 0.04 * n));
      }
    }
  }

  // Trees: elliptical crowns standing on the sidewalk.
  if (!dropped(dropped_classes, SceneClass::kVegetation)) {
    const double tcell = 16.0 * scale;
    const long c0 = static_cast<long>(std::floor(cam_x / tcell)) - 1;
    const long c1 = static_cast<long>(std::floor((cam_x + W) / tcell)) + 1;
    for (long c = c0; c <= c1; ++c) {
      const std::uint64_t key = hash_of(env_key, 30, as_key(c));
      if (unit_of(key, 1) >= lay.tree_prob) continue;
      const double cx = c * tcell + tcell * (0.2 + 0.6 * unit_of(key, 2)) - cam_x;
      const double rx = (3.5 + 3.0 * unit_of(key, 3)) * scale;
      const double ry = rx * (1.0 + 0.4 * unit_of(key, 4));
      const double cy = static_cast<double>(sidewalk_top) - ry * 0.8;
      for (long y = static_cast<long>(std::floor(cy - ry)); y <= static_cast<long>(std::ceil(cy + ry)); ++y) {
        for (long x = static_cast<long>(std::floor(cx - rx)); x <= static_cast<long>(std::ceil(cx + rx)); ++x) {
          const double dx = (x - cx) / rx, dy = (y - cy) / ry;
          if (dx * dx + dy * dy > 1.0) continue;
          const double n = unit_of(env_key, 31, as_key(x + cam), as_key(y)) - 0.5;
          paint.put(y, x, static_cast<int>(SceneClass::kVegetation),
                    shade(lay.vegetation, 0.8 + 0.5 * (n + 0.5)));
        }
      }
    }
  }

  // Poles: thin strips from the curb upwards.
  if (!dropped(dropped_classes, SceneClass::kPole)) {
    const double pcell = 20.0 * scale;
    const long c0 = static_cast<long>(std::floor(cam_x / pcell)) - 1;
    const long c1 = static_cast<long>(std::floor((cam_x + W) / pcell)) + 1;
    for (long c = c0; c <= c1; ++c) {
      const std::uint64_t key = hash_of(env_key, 40, as_key(c));
      if (unit_of(key, 1) >= lay.pole_prob) continue;
      const long px = std::lround(c * pcell + pcell * unit_of(key, 2) - cam_x);
      const long pw = std::max(1L, std::lround((1.0 + unit_of(key, 3)) * scale));
      const long top = street - std::lround((0.18 + 0.12 * unit_of(key, 4)) * H);
      for (long y = top; y < road_top - 1; ++y) {
        for (long x = px; x < px + pw; ++x) {
          paint.put(y, x, static_cast<int>(SceneClass::kPole),
                    shade(kPole, 0.92 + 0.08 * ((y % 3) == 0)));
        }
      }
    }
  }

  // Cars on the road, a darker window band on top.
  if (!dropped(dropped_classes, SceneClass::kCar)) {
    const double ccell = 30.0 * scale;
    const long c0 = static_cast<long>(std::floor(cam_x / ccell)) - 1;
    const long c1 = static_cast<long>(std::floor((cam_x + W) / ccell)) + 1;
    for (long c = c0; c <= c1; ++c) {
      const std::uint64_t key = hash_of(env_key, 50, as_key(c));
      if (unit_of(key, 1) >= lay.car_prob) continue;
      const long x0 = std::lround(c * ccell + ccell * 0.3 * unit_of(key, 2) - cam_x);
      const long w = std::lround((14.0 + 6.0 * unit_of(key, 3)) * scale);
      const long h = std::lround((6.0 + 3.0 * unit_of(key, 4)) * scale);
      const long y0 = road_top + std::lround((1.0 + 4.0 * unit_of(key, 5)) * scale);
      const Rgb& color = kCarColors[hash_of(key, 6) % kCarColors.size()];
      for (long y = y0; y < y0 + h; ++y) {
        for (long x = x0; x < x0 + w; ++x) {
          const bool roof_corner = (y == y0) && (x < x0 + 2 || x >= x0 + w - 2);
          if (roof_corner) continue;
          const bool glass = (y - y0) < h / 3 && x > x0 + 2 && x < x0 + w - 3;
          paint.put(y, x, static_cast<int>(SceneClass::kCar),
                    glass ? shade(color, 0.55) : color);
        }
      }
    }
  }

  // Pedestrians standing at the curb: head then clothing.
  if (!dropped(dropped_classes, SceneClass::kPedestrian)) {
    const double pcell = 18.0 * scale;
    const long c0 = static_cast<long>(std::floor(cam_x / pcell)) - 1;
    const long c1 = static_cast<long>(std::floor((cam_x + W) / pcell)) + 1;
    for (long c = c0; c <= c1; ++c) {
      const std::uint64_t key = hash_of(env_key, 60, as_key(c));
      if (unit_of(key, 1) >= lay.ped_prob) continue;
      const long x0 = std::lround(c * pcell + pcell * unit_of(key, 2) - cam_x);
      const long w = std::max(2L, std::lround((3.0 + 1.5 * unit_of(key, 3)) * scale));
      const long h = std::lround((9.0 + 4.0 * unit_of(key, 4)) * scale);
      const long feet = road_top - std::lround(unit_of(key, 5) * 2.0 * scale);
      const long top = feet - h;
      const Rgb& cloth = kClothing[hash_of(key, 7) % kClothing.size()];
      const long head = std::max(2L, std::lround(2.0 * scale));
      for (long y = top; y < feet; ++y) {
        for (long x = x0; x < x0 + w; ++x) {
          const bool is_head = y < top + head && x > x0 - 1 && x < x0 + w;
          paint.put(y, x, static_cast<int>(SceneClass::kPedestrian),
                    is_head ? kSkin : cloth);
        }
      }
    }
  }

  clamp_unit(frame.image);
  apply_condition(frame.image, spec.condition, spec.severity,
                  hash_of(seed, 70, static_cast<std::uint64_t>(t)));
  return frame;
}

LabeledFrame render_episode_frame(const EpisodeSpec& episode, int frame,
                                  std::size_t height, std::size_t width) {
  const auto [index, local] = episode.locate(frame);
  const SubSequence& sub = episode.subsequences[index];
  return render(sub.domain, local, sub.seed, height, width, sub.dropped_classes);
}

void apply_condition(Image& image, Condition condition, double severity,
                     std::uint64_t noise_seed) {
  const double s = std::max(0.0, severity);
  const std::size_t H = image.height, W = image.width;
  auto lerp = [](double a, double b, double f) { return a + (b - a) * f; };
  switch (condition) {
    case Condition::kClear:
      return;
    case Condition::kDusk:
      for (std::size_t p = 0; p < image.pixels(); ++p) {
        double* px = &image.rgb[p * 3];
        px[0] = lerp(px[0], 0.62 * px[0] + 0.06, s);
        px[1] = lerp(px[1], 0.50 * px[1] + 0.03, s);
        px[2] = lerp(px[2], 0.42 * px[2] + 0.02, s);
      }
      break;
    case Condition::kOvercast:
      for (std::size_t p = 0; p < image.pixels(); ++p) {
        double* px = &image.rgb[p * 3];
        const double l = luminance(px[0], px[1], px[2]);
        for (int k = 0; k < 3; ++k) {
          const double flat = 0.58 + 0.45 * (0.35 * px[k] + 0.65 * l - 0.5);
          px[k] = lerp(px[k], flat, s);
        }
      }
      break;
    case Condition::kNight:
      // Drastic shift: global gain 0.25 and a blue cast.
      for (std::size_t p = 0; p < image.pixels(); ++p) {
        double* px = &image.rgb[p * 3];
        px[0] = lerp(px[0], 0.25 * px[0] * 0.85, s);
        px[1] = lerp(px[1], 0.25 * px[1], s);
        px[2] = lerp(px[2], 0.25 * px[2] + 0.08, s);
      }
      break;
    case Condition::kFog:
      for (std::size_t y = 0; y < H; ++y) {
        const double depth = 0.35 + 0.45 * (1.0 - static_cast<double>(y) / static_cast<double>(H));
        for (std::size_t x = 0; x < W; ++x) {
          for (std::size_t k = 0; k < 3; ++k) {
            double& v = image.at(y, x, k);
            v = lerp(v, 0.78, std::min(1.0, depth * s));
          }
        }
      }
      break;
    case Condition::kRain:
      for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
          const double l = luminance(image.at(y, x, 0), image.at(y, x, 1), image.at(y, x, 2));
          const bool streak = unit_of(noise_seed, 80, x, y / 3) < 0.06;
          const double speck = unit_of(noise_seed, 81, x, y) - 0.5;
          for (std::size_t k = 0; k < 3; ++k) {
            double& v = image.at(y, x, k);
            double wet = 0.72 * (0.6 * v + 0.4 * l) + 0.10 * speck;
            if (streak) wet += 0.25;
            v = lerp(v, wet, s);
          }
        }
      }
      break;
    case Condition::kWinter:
      for (std::size_t p = 0; p < image.pixels(); ++p) {
        double* px = &image.rgb[p * 3];
        const double l = luminance(px[0], px[1], px[2]);
        for (int k = 0; k < 3; ++k) {
          const double snow = 0.55 * (0.4 * px[k] + 0.6 * l) + 0.38 + (k == 2 ? 0.05 : 0.0);
          px[k] = lerp(px[k], snow, s);
        }
      }
      break;
  }
  clamp_unit(image);
}

DrTransform parse_dr_transform(std::string_view name) {
  for (int i = 0; i < kNumDrTransforms; ++i) {
    if (dr_transform_name(static_cast<DrTransform>(i)) == name) {
      return static_cast<DrTransform>(i);
    }
  }
  throw Error(ErrorKind::kConfig, "unknown transform '" + std::string(name) + "'");
}

std::string_view dr_transform_name(DrTransform t) {
  static constexpr std::array<std::string_view, kNumDrTransforms> kNames = {
      "identity", "brightness", "color", "contrast", "rgb_shift", "grayscale"};
  const auto i = static_cast<std::size_t>(t);
  if (i >= kNames.size()) {
    throw Error(ErrorKind::kConfig, "unknown transform id " + std::to_string(i));
  }
  return kNames[i];
}

Image apply_dr_transform(const Image& image, DrTransform transform,
                         const std::array<double, 3>& intensity) {
  Image out = image;
  const std::size_t n = image.pixels();
  switch (transform) {
    case DrTransform::kIdentity:
      return out;
    case DrTransform::kBrightness:
      for (double& v : out.rgb) v *= intensity[0];
      break;
    case DrTransform::kColor:
      // Saturation: blend with the pixel's luminance.
      for (std::size_t p = 0; p < n; ++p) {
        double* px = &out.rgb[p * 3];
        const double l = luminance(px[0], px[1], px[2]);
        for (int k = 0; k < 3; ++k) px[k] = l + intensity[0] * (px[k] - l);
      }
      break;
    case DrTransform::kContrast: {
      // Blend with the image's mean luminance.
      double mean = 0.0;
      for (std::size_t p = 0; p < n; ++p) {
        mean += luminance(image.rgb[p * 3], image.rgb[p * 3 + 1], image.rgb[p * 3 + 2]);
      }
      mean /= static_cast<double>(n);
      for (double& v : out.rgb) v = mean + intensity[0] * (v - mean);
      break;
    }
    case DrTransform::kRgbShift:
      for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t k = 0; k < 3; ++k) out.rgb[p * 3 + k] += intensity[k];
      }
      break;
    case DrTransform::kGrayscale:
      for (std::size_t p = 0; p < n; ++p) {
        double* px = &out.rgb[p * 3];
        const double l = luminance(px[0], px[1], px[2]);
        px[0] = px[1] = px[2] = l;
      }
      break;
    default:
      throw Error(ErrorKind::kConfig,
                  "unknown transform id " + std::to_string(static_cast<int>(transform)));
  }
  clamp_unit(out);
  return out;
}

Image apply_dr_transform(const Image& image, DrTransform transform, std::mt19937_64& rng) {
  std::array<double, 3> intensity{1.0, 1.0, 1.0};
  switch (transform) {
    case DrTransform::kBrightness:
    case DrTransform::kColor:
    case DrTransform::kContrast: {
      std::uniform_real_distribution<double> factor(0.2, 1.8);
      intensity[0] = factor(rng);
      break;
    }
    case DrTransform::kRgbShift: {
      std::uniform_real_distribution<double> shift(0.0, 120.0 / 255.0);
      for (double& v : intensity) v = shift(rng);
      break;
    }
    default:
      break;
  }
  return apply_dr_transform(image, transform, intensity);
}

std::vector<DrTransform> sample_dr_transforms(int k, std::mt19937_64& rng) {
  if (k < 1 || k > kNumDrTransforms) {
    throw Error(ErrorKind::kConfig, "K must lie in [1, 6], got " + std::to_string(k));
  }
  std::vector<int> ids(kNumDrTransforms);
  std::iota(ids.begin(), ids.end(), 0);
  // Partial Fisher-Yates: the first k entries are the sample, in draw order.
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<int> pick(i, kNumDrTransforms - 1);
    std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(pick(rng))]);
  }
  std::vector<DrTransform> out;
  for (int i = 0; i < k; ++i) out.push_back(static_cast<DrTransform>(ids[static_cast<std::size_t>(i)]));
  return out;
}

Image randomize(const Image& image, int k, std::mt19937_64& rng) {
  Image out = image;
  for (DrTransform t : sample_dr_transforms(k, rng)) out = apply_dr_transform(out, t, rng);
  return out;
}

namespace {

std::vector<EpisodeSpec> make_episodes(const WorldConfig& cfg, std::uint64_t seed,
                                       const std::string& prefix,
                                       const std::vector<Environment>& envs,
                                       const std::vector<Condition>& conds,
                                       int count, bool with_dropout) {
  std::mt19937_64 rng(seed);
  std::vector<EpisodeSpec> out;
  for (int e = 0; e < count; ++e) {
    EpisodeSpec ep;
    ep.id = prefix + std::to_string(e);
    ep.seed = rng();
    // Environment/condition pairs are drawn independently; repeats allowed.
    for (int s = 0; s < cfg.subsequences; ++s) {
      SubSequence sub;
      sub.domain.environment = envs[rng() % envs.size()];
      sub.domain.condition = conds[rng() % conds.size()];
      sub.domain.severity = cfg.severity;
      sub.frame_count = cfg.frames_per_subsequence;
      sub.seed = rng();
      ep.subsequences.push_back(std::move(sub));
    }
    if (with_dropout && e == 0 && cfg.subsequences >= 2) {
      // Pedestrians vanish for every sub-sequence but the first and the last,
      // then come back.
      const int last = cfg.subsequences - 1;
      const int absent_until = std::max(1, last);
      for (int s = 1; s < absent_until; ++s) {
        ep.subsequences[static_cast<std::size_t>(s)].dropped_classes = {
            static_cast<int>(SceneClass::kPedestrian)};
      }
      if (absent_until == 1) {
        ep.subsequences[0].dropped_classes = {static_cast<int>(SceneClass::kPedestrian)};
      }
    }
    out.push_back(std::move(ep));
  }
  return out;
}

std::vector<LabeledFrame> source_frames(const WorldConfig& cfg, std::uint64_t seed, int count) {
  std::vector<LabeledFrame> out;
  out.reserve(static_cast<std::size_t>(count));
  std::mt19937_64 rng(seed);
  for (int i = 0; i < count; ++i) {
    DomainSpec spec;
    spec.environment = (rng() % 2 == 0) ? Environment::kBoulevard : Environment::kSuburb;
    spec.condition = Condition::kClear;
    const std::uint64_t stream = rng();
    const int t = static_cast<int>(rng() % 100000);
    out.push_back(render(spec, t, stream, cfg.height, cfg.width));
  }
  return out;
}

}  // namespace

std::vector<EpisodeSpec> make_val_episodes(const WorldConfig& cfg, std::uint64_t seed) {
  return make_episodes(cfg, hash_of(seed, 101), "val", {Environment::kOldTown, Environment::kHarbor},
                       {Condition::kClear, Condition::kDusk, Condition::kOvercast},
                       cfg.val_episodes, false);
}

std::vector<EpisodeSpec> make_deploy_episodes(const WorldConfig& cfg, std::uint64_t seed) {
  return make_episodes(cfg, hash_of(seed, 102),
                       "deploy", {Environment::kDowntown, Environment::kIndustrial},
                       {Condition::kNight, Condition::kFog, Condition::kRain, Condition::kWinter},
                       cfg.deploy_episodes, true);
}

std::vector<LabeledFrame> make_train_set(const WorldConfig& cfg, std::uint64_t seed) {
  return source_frames(cfg, hash_of(seed, 103), cfg.train_frames);
}

std::vector<LabeledFrame> make_source_memory(const WorldConfig& cfg, std::uint64_t seed) {
  return source_frames(cfg, hash_of(seed, 104), cfg.source_memory);
}

Benchmark make_benchmark(const WorldConfig& cfg, std::uint64_t seed) {
  Benchmark b;
  b.train_set = make_train_set(cfg, seed);
  b.val_episodes = make_val_episodes(cfg, seed);
  b.deploy_episodes = make_deploy_episodes(cfg, seed);
  b.source_memory = make_source_memory(cfg, seed);
  return b;
}

void write_ppm(const Image& image, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  os << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  for (double v : image.rgb) {
    os.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
  }
  if (!os) throw Error(ErrorKind::kIo, "failed writing " + path.string());
}

void write_pgm(const Mask& mask, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  os << "P5\n" << mask.width << ' ' << mask.height << "\n255\n";
  for (int v : mask.labels) os.put(static_cast<char>(static_cast<unsigned char>(v)));
  if (!os) throw Error(ErrorKind::kIo, "failed writing " + path.string());
}

namespace {

void read_netpbm_header(std::istream& is, const std::string& magic, std::size_t& w,
                        std::size_t& h, const std::filesystem::path& path) {
  std::string m;
  int maxval = 0;
  is >> m >> w >> h >> maxval;
  is.get();
  if (!is || m != magic || maxval != 255) {
    throw Error(ErrorKind::kIo, path.string() + " is not a " + magic + " file");
  }
}

}  // namespace

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::size_t w = 0, h = 0;
  read_netpbm_header(is, "P6", w, h, path);
  Image img(h, w);
  for (double& v : img.rgb) {
    const int c = is.get();
    if (c == EOF) throw Error(ErrorKind::kIo, path.string() + " truncated");
    v = static_cast<double>(c) / 255.0;
  }
  return img;
}

Mask read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::size_t w = 0, h = 0;
  read_netpbm_header(is, "P5", w, h, path);
  Mask m(h, w);
  for (int& v : m.labels) {
    const int c = is.get();
    if (c == EOF) throw Error(ErrorKind::kIo, path.string() + " truncated");
    v = c;
  }
  return m;
}

std::string episode_manifest(const std::vector<EpisodeSpec>& episodes) {
  std::ostringstream os;
  os << "episode,subsequence,environment,condition,severity,frame_count,seed,dropped\n";
  for (const auto& ep : episodes) {
    for (std::size_t i = 0; i < ep.subsequences.size(); ++i) {
      const auto& s = ep.subsequences[i];
      os << ep.id << ',' << i << ',' << environment_name(s.domain.environment) << ','
         << condition_name(s.domain.condition) << ',' << s.domain.severity << ','
         << s.frame_count << ',' << s.seed << ',';
      for (std::size_t k = 0; k < s.dropped_classes.size(); ++k) {
        if (k) os << ';';
        os << class_name(s.dropped_classes[k]);
      }
      os << '\n';
    }
  }
  return os.str();
}

}  // namespace oasis
