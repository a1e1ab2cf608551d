#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "textsplat/decoder/decoder.hpp"
#include "textsplat/diff/rng.hpp"

namespace textsplat::splat {

using diff::Tensor;
using Vec3 = std::array<double, 3>;

inline constexpr double kSh0 = 0.28209479177;
inline constexpr double kDilation = 0.3;      // pixels^2 added to the screen covariance
inline constexpr double kMaxAlpha = 0.99;
inline constexpr double kMinAlpha = 1.0 / 255.0;
inline constexpr double kMinDeterminant = 1e-12;
inline constexpr std::size_t kTileSize = 16;

// Pinhole camera looking at look_at. Camera space is x right, y down, z
// forward; pixel centers sit at integer + 0.5.
struct Camera {
  Vec3 position{0, 0, 0};
  Vec3 look_at{0, 0, 0};
  Vec3 up{0, 0, 1};
  double fov_y = 49.1;  // degrees
  std::size_t width = 64;
  std::size_t height = 64;
  double near = 0.01;
  double far = 100.0;
  double azimuth_deg = 0.0;    // orbit angles this camera was built from
  double elevation_deg = 0.0;

  void validate() const;
  // Rows: right, down, forward.
  std::array<Vec3, 3> world_to_camera() const;
  double focal() const;  // same for x and y
};

// Camera on a sphere around look_at: azimuth 0 lies on +x, elevation lifts
// toward +z.
Camera orbit_camera(double azimuth_deg, double elevation_deg, double radius, double fov_y, std::size_t width,
                    std::size_t height, double near = 0.01, double far = 100.0);

// Azimuth in [0,360), elevation in [0,90), radius in [r_min, r_max].
Camera sample_camera(diff::Rng& rng, double r_min, double r_max, double fov_y, std::size_t width, std::size_t height,
                     double near = 0.01, double far = 100.0);

template <typename T>
struct RenderedImage {
  std::size_t width = 0, height = 0;
  Tensor<T> pixels;                   // [H,W,3], part of the graph
  std::vector<double> alpha;          // sum of composited weights per pixel
  std::vector<double> transmittance;  // light left for the background
  std::size_t visible = 0;            // Gaussians that survived culling

  std::vector<std::uint8_t> to_rgb8() const;
};

// Differentiable w.r.t. centers, scaling_raw, rotation, opacity and sh_dc.
// The depth order is treated as constant.
template <typename T>
RenderedImage<T> render(const decoder::GaussianSet<T>& g, const Camera& cam, const Vec3& background = {0, 0, 0});

void write_ppm(const std::filesystem::path& path, std::size_t width, std::size_t height,
               const std::vector<std::uint8_t>& rgb);
// "IMGF" | W u32 | H u32 | RGB8 payload
void write_imgf(const std::filesystem::path& path, std::size_t width, std::size_t height,
                const std::vector<std::uint8_t>& rgb);
struct Rgb8Image {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> rgb;
};
Rgb8Image read_imgf(const std::filesystem::path& path);

}  // namespace textsplat::splat
