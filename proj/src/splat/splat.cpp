#include "textsplat/splat/splat.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "textsplat/util/binary_io.hpp"

namespace textsplat::splat {

namespace {

using Mat3 = std::array<std::array<double, 3>, 3>;
using Mat23 = std::array<std::array<double, 3>, 2>;

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
Vec3 normalized(const Vec3& a) {
  const double n = std::sqrt(dot(a, a));
  return {a[0] / n, a[1] / n, a[2] / n};
}
double radians(double deg) { return deg * std::numbers::pi / 180.0; }

Mat3 quat_to_rot(double w, double x, double y, double z) {
  return {{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
           {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
           {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}}};
}

// Everything the backward pass needs about one projected Gaussian.
struct Splat {
  bool visible = false;
  double depth = 0;
  double mean[2] = {0, 0};
  double conic[3] = {0, 0, 0};  // inverse screen covariance (a, b, c)
  double opacity = 0;
  double color[3] = {0, 0, 0};
  bool color_live[3] = {false, false, false};  // false where the clamp is active
  double radius = 0;

  Vec3 pc{};     // camera-space center
  double q[4] = {1, 0, 0, 0};  // normalized quaternion
  double qnorm = 0;
  Mat3 rot{};
  double s[3] = {0, 0, 0};  // exp(scaling_raw)
  Mat3 cov3{};
  Mat23 jw{};               // J * W
  double cov2[3] = {0, 0, 0};
};

struct Frame {
  std::size_t width = 0, height = 0;
  std::size_t tiles_x = 0, tiles_y = 0;
  std::array<Vec3, 3> w{};
  double fx = 0, fy = 0, cx = 0, cy = 0;
  Vec3 background{};
  std::vector<Splat> splats;
  std::vector<std::vector<std::uint32_t>> tiles;  // depth-ordered Gaussian ids per tile
};

struct Contribution {
  std::uint32_t id;
  double alpha;
  double raw;  // opacity * weight before the ceiling
  double weight;
  double trans;  // transmittance in front of this Gaussian
  double dx, dy;
};

// Walks the depth-ordered list of a tile for one pixel and calls fn for every
// Gaussian that passes the weight and alpha tests.
template <typename Fn>
double composite_pixel(const Frame& f, const std::vector<std::uint32_t>& list, double px, double py, Fn&& fn) {
  double trans = 1.0;
  for (std::uint32_t id : list) {
    const Splat& s = f.splats[id];
    const double dx = px - s.mean[0], dy = py - s.mean[1];
    const double power = -0.5 * (s.conic[0] * dx * dx + 2 * s.conic[1] * dx * dy + s.conic[2] * dy * dy);
    if (power > 0.0) continue;
    const double weight = std::exp(power);
    const double raw = s.opacity * weight;
    const double alpha = std::min(kMaxAlpha, raw);
    if (alpha < kMinAlpha) continue;
    fn(Contribution{id, alpha, raw, weight, trans, dx, dy});
    trans *= 1.0 - alpha;
  }
  return trans;
}

template <typename T>
void project_all(Frame& f, const decoder::GaussianSet<T>& g, const Camera& cam) {
  const std::size_t m = g.count();
  f.splats.assign(m, Splat{});
  const auto& w = f.w;
  for (std::size_t i = 0; i < m; ++i) {
    Splat& s = f.splats[i];
    const Vec3 p{static_cast<double>(g.centers[i * 3]), static_cast<double>(g.centers[i * 3 + 1]),
                 static_cast<double>(g.centers[i * 3 + 2])};
    const Vec3 rel = sub(p, cam.position);
    s.pc = {dot(w[0], rel), dot(w[1], rel), dot(w[2], rel)};
    const double z = s.pc[2];
    if (z < cam.near || z > cam.far) continue;
    s.opacity = static_cast<double>(g.opacity[i]);
    if (255.0 * s.opacity < 1.0) continue;

    double q[4];
    for (int k = 0; k < 4; ++k) q[k] = static_cast<double>(g.rotation[i * 4 + k]);
    s.qnorm = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    if (s.qnorm >= 1e-8) {
      for (int k = 0; k < 4; ++k) s.q[k] = q[k] / s.qnorm;
    }
    s.rot = quat_to_rot(s.q[0], s.q[1], s.q[2], s.q[3]);
    for (int k = 0; k < 3; ++k) s.s[k] = std::exp(static_cast<double>(g.scaling_raw[i * 3 + k]));
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) {
        double acc = 0;
        for (int k = 0; k < 3; ++k) acc += s.rot[a][k] * s.s[k] * s.s[k] * s.rot[b][k];
        s.cov3[a][b] = acc;
      }

    const double x = s.pc[0], y = s.pc[1];
    const Mat23 jac{{{f.fx / z, 0.0, -f.fx * x / (z * z)}, {0.0, f.fy / z, -f.fy * y / (z * z)}}};
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 3; ++c) s.jw[r][c] = jac[r][0] * w[0][c] + jac[r][1] * w[1][c] + jac[r][2] * w[2][c];
    double tmp[2][3];
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 3; ++c) tmp[r][c] = s.jw[r][0] * s.cov3[0][c] + s.jw[r][1] * s.cov3[1][c] + s.jw[r][2] * s.cov3[2][c];
    auto quad = [&](int r, int c) { return tmp[r][0] * s.jw[c][0] + tmp[r][1] * s.jw[c][1] + tmp[r][2] * s.jw[c][2]; };
    s.cov2[0] = quad(0, 0) + kDilation;
    s.cov2[1] = quad(0, 1);
    s.cov2[2] = quad(1, 1) + kDilation;
    const double det = s.cov2[0] * s.cov2[2] - s.cov2[1] * s.cov2[1];
    if (!(det >= kMinDeterminant)) continue;
    s.conic[0] = s.cov2[2] / det;
    s.conic[1] = -s.cov2[1] / det;
    s.conic[2] = s.cov2[0] / det;
    s.mean[0] = f.fx * x / z + f.cx;
    s.mean[1] = f.fy * y / z + f.cy;

    // Any pixel with alpha >= 1/255 satisfies |d|^2 <= 2 lambda_max ln(255 opacity).
    const double mid = 0.5 * (s.cov2[0] + s.cov2[2]);
    const double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
    s.radius = std::sqrt(2.0 * lambda_max * std::log(255.0 * s.opacity)) * (1.0 + 1e-9) + 1e-9;

    for (int k = 0; k < 3; ++k) {
      const double v = kSh0 * static_cast<double>(g.sh_dc[i * 3 + k]) + 0.5;
      s.color[k] = std::clamp(v, 0.0, 1.0);
      s.color_live[k] = v > 0.0 && v < 1.0;
    }
    s.depth = z;
    s.visible = std::isfinite(s.mean[0]) && std::isfinite(s.mean[1]) && std::isfinite(s.radius);
  }
}

void bin_tiles(Frame& f) {
  std::vector<std::uint32_t> order;
  for (std::uint32_t i = 0; i < f.splats.size(); ++i)
    if (f.splats[i].visible) order.push_back(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return f.splats[a].depth < f.splats[b].depth; });
  f.tiles.assign(f.tiles_x * f.tiles_y, {});
  const double ts = static_cast<double>(kTileSize);
  for (std::uint32_t id : order) {
    const Splat& s = f.splats[id];
    // Pixel centers are at i + 0.5; keep every pixel whose center lies in the box.
    const double x0 = s.mean[0] - s.radius - 0.5, x1 = s.mean[0] + s.radius - 0.5;
    const double y0 = s.mean[1] - s.radius - 0.5, y1 = s.mean[1] + s.radius - 0.5;
    if (x1 < 0 || y1 < 0 || x0 > double(f.width - 1) || y0 > double(f.height - 1)) continue;
    const auto tx0 = static_cast<std::size_t>(std::max(0.0, std::ceil(x0)) / ts);
    const auto ty0 = static_cast<std::size_t>(std::max(0.0, std::ceil(y0)) / ts);
    const auto tx1 = static_cast<std::size_t>(std::min(double(f.width - 1), std::floor(x1)) / ts);
    const auto ty1 = static_cast<std::size_t>(std::min(double(f.height - 1), std::floor(y1)) / ts);
    for (std::size_t ty = ty0; ty <= ty1; ++ty)
      for (std::size_t tx = tx0; tx <= tx1; ++tx) f.tiles[ty * f.tiles_x + tx].push_back(id);
  }
}

template <typename Fn>
void for_each_pixel(const Frame& f, Fn&& fn) {
  for (std::size_t ty = 0; ty < f.tiles_y; ++ty)
    for (std::size_t tx = 0; tx < f.tiles_x; ++tx) {
      const auto& list = f.tiles[ty * f.tiles_x + tx];
      const std::size_t ye = std::min(f.height, (ty + 1) * kTileSize), xe = std::min(f.width, (tx + 1) * kTileSize);
      for (std::size_t py = ty * kTileSize; py < ye; ++py)
        for (std::size_t px = tx * kTileSize; px < xe; ++px) fn(list, px, py);
    }
}

struct SplatGrad {
  double mean[2] = {0, 0};
  double conic[3] = {0, 0, 0};  // w.r.t. a, the shared off-diagonal b, and c
  double opacity = 0;
  double color[3] = {0, 0, 0};
};

// Chain rule from screen-space quantities back to the five attribute inputs.
template <typename T>
void backprop_splat(const Frame& f, const Splat& s, const SplatGrad& gs, std::size_t i, T* d_center, T* d_scale,
                    T* d_rot, T* d_opacity, T* d_sh) {
  if (d_opacity) d_opacity[i] += static_cast<T>(gs.opacity);
  if (d_sh) {
    for (int k = 0; k < 3; ++k)
      if (s.color_live[k]) d_sh[i * 3 + k] += static_cast<T>(kSh0 * gs.color[k]);
  }
  if (!d_center && !d_scale && !d_rot) return;

  // conic = inverse(cov2): dCov = -K G K with G the full symmetric gradient.
  const double k[2][2] = {{s.conic[0], s.conic[1]}, {s.conic[1], s.conic[2]}};
  const double gk[2][2] = {{gs.conic[0], 0.5 * gs.conic[1]}, {0.5 * gs.conic[1], gs.conic[2]}};
  double kg[2][2], dcov2[2][2];
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) kg[r][c] = k[r][0] * gk[0][c] + k[r][1] * gk[1][c];
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) dcov2[r][c] = -(kg[r][0] * k[0][c] + kg[r][1] * k[1][c]);

  // cov2 = JW cov3 (JW)^T: d(JW) = 2 dcov2 JW cov3, dcov3 = (JW)^T dcov2 JW.
  Mat3 dcov3{};
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      double acc = 0;
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) acc += s.jw[r][a] * dcov2[r][c] * s.jw[c][b];
      dcov3[a][b] = acc;
    }

  if (d_scale || d_rot) {
    // cov3 = M M^T with M = R diag(s): dM = 2 dcov3 M.
    Mat3 mm{}, dm{};
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) mm[a][b] = s.rot[a][b] * s.s[b];
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) dm[a][b] = 2.0 * (dcov3[a][0] * mm[0][b] + dcov3[a][1] * mm[1][b] + dcov3[a][2] * mm[2][b]);
    if (d_scale) {
      for (int b = 0; b < 3; ++b) {
        double ds = 0;
        for (int a = 0; a < 3; ++a) ds += dm[a][b] * s.rot[a][b];
        d_scale[i * 3 + b] += static_cast<T>(ds * s.s[b]);
      }
    }
    if (d_rot && s.qnorm >= 1e-8) {
      Mat3 dr{};
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) dr[a][b] = dm[a][b] * s.s[b];
      const double w = s.q[0], x = s.q[1], y = s.q[2], z = s.q[3];
      double dq[4];
      dq[0] = 2 * (-z * dr[0][1] + y * dr[0][2] + z * dr[1][0] - x * dr[1][2] - y * dr[2][0] + x * dr[2][1]);
      dq[1] = 2 * (y * dr[0][1] + z * dr[0][2] + y * dr[1][0] - 2 * x * dr[1][1] - w * dr[1][2] + z * dr[2][0] +
                   w * dr[2][1] - 2 * x * dr[2][2]);
      dq[2] = 2 * (-2 * y * dr[0][0] + x * dr[0][1] + w * dr[0][2] + x * dr[1][0] + z * dr[1][2] - w * dr[2][0] +
                   z * dr[2][1] - 2 * y * dr[2][2]);
      dq[3] = 2 * (-2 * z * dr[0][0] - w * dr[0][1] + x * dr[0][2] + w * dr[1][0] - 2 * z * dr[1][1] + y * dr[1][2] +
                   x * dr[2][0] + y * dr[2][1]);
      const double along = dq[0] * s.q[0] + dq[1] * s.q[1] + dq[2] * s.q[2] + dq[3] * s.q[3];
      for (int c = 0; c < 4; ++c) d_rot[i * 4 + c] += static_cast<T>((dq[c] - along * s.q[c]) / s.qnorm);
    }
  }

  if (!d_center) return;
  double djw[2][3];
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c) {
      double acc = 0;
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 3; ++b) acc += dcov2[r][a] * s.jw[a][b] * s.cov3[b][c];
      djw[r][c] = 2.0 * acc;
    }
  // JW = J W with W fixed: dJ = d(JW) W^T.
  double dj[2][3];
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c) dj[r][c] = djw[r][0] * f.w[c][0] + djw[r][1] * f.w[c][1] + djw[r][2] * f.w[c][2];
  const double x = s.pc[0], y = s.pc[1], z = s.pc[2];
  const double z2 = z * z, z3 = z2 * z;
  Vec3 dpc{0, 0, 0};
  dpc[0] += dj[0][2] * (-f.fx / z2);
  dpc[1] += dj[1][2] * (-f.fy / z2);
  dpc[2] += dj[0][0] * (-f.fx / z2) + dj[0][2] * (2 * f.fx * x / z3) + dj[1][1] * (-f.fy / z2) +
            dj[1][2] * (2 * f.fy * y / z3);
  dpc[0] += gs.mean[0] * f.fx / z;
  dpc[1] += gs.mean[1] * f.fy / z;
  dpc[2] += -gs.mean[0] * f.fx * x / z2 - gs.mean[1] * f.fy * y / z2;
  for (int c = 0; c < 3; ++c)
    d_center[i * 3 + c] += static_cast<T>(f.w[0][c] * dpc[0] + f.w[1][c] * dpc[1] + f.w[2][c] * dpc[2]);
}

template <typename T>
T* grad_ptr(const std::shared_ptr<diff::TensorImpl<T>>& t) {
  return t->requires_grad ? t->grad_buffer().data() : nullptr;
}

}  // namespace

void Camera::validate() const {
  const Vec3 d = sub(look_at, position);
  if (dot(d, d) == 0.0) throw std::invalid_argument("camera: position equals look_at");
  if (!(near > 0.0 && near < far)) throw std::invalid_argument("camera: need 0 < near < far");
  if (!(fov_y > 0.0 && fov_y < 180.0)) throw std::invalid_argument("camera: fov_y must lie in (0,180)");
  if (width == 0 || height == 0) throw std::invalid_argument("camera: empty image");
}

std::array<Vec3, 3> Camera::world_to_camera() const {
  const Vec3 fwd = normalized(sub(look_at, position));
  Vec3 right = cross(fwd, up);
  if (dot(right, right) < 1e-20) right = cross(fwd, Vec3{1, 0, 0});  // looking straight along up
  right = normalized(right);
  const Vec3 down = cross(fwd, right);
  return {right, down, fwd};
}

double Camera::focal() const { return 0.5 * static_cast<double>(height) / std::tan(0.5 * radians(fov_y)); }

Camera orbit_camera(double azimuth_deg, double elevation_deg, double radius, double fov_y, std::size_t width,
                    std::size_t height, double near, double far) {
  const double az = radians(azimuth_deg), el = radians(elevation_deg);
  Camera c;
  c.position = {radius * std::cos(el) * std::cos(az), radius * std::cos(el) * std::sin(az), radius * std::sin(el)};
  c.fov_y = fov_y;
  c.width = width;
  c.height = height;
  c.near = near;
  c.far = far;
  c.azimuth_deg = azimuth_deg;
  c.elevation_deg = elevation_deg;
  c.validate();
  return c;
}

Camera sample_camera(diff::Rng& rng, double r_min, double r_max, double fov_y, std::size_t width, std::size_t height,
                     double near, double far) {
  if (!(r_min > 0.0 && r_min <= r_max)) throw std::invalid_argument("sample_camera: need 0 < r_min <= r_max");
  const double az = rng.uniform(0.0, 360.0);
  const double el = rng.uniform(0.0, 90.0);
  const double r = rng.uniform(r_min, r_max);
  return orbit_camera(az, el, r, fov_y, width, height, near, far);
}

template <typename T>
std::vector<std::uint8_t> RenderedImage<T>::to_rgb8() const {
  std::vector<std::uint8_t> out(pixels.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = std::clamp(static_cast<double>(pixels[i]), 0.0, 1.0);
    out[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return out;
}

template <typename T>
RenderedImage<T> render(const decoder::GaussianSet<T>& g, const Camera& cam, const Vec3& background) {
  cam.validate();
  if (g.count() == 0) throw std::invalid_argument("render: empty Gaussian set");
  const std::size_t m = g.count();
  auto check = [&](const Tensor<T>& t, std::size_t cols, const char* name) {
    if (t.rank() != 2 || t.dim(0) != m || t.dim(1) != cols) {
      throw diff::ShapeError(std::string("render: ") + name + " has shape " + diff::shape_str(t.shape()));
    }
  };
  check(g.centers, 3, "centers");
  check(g.scaling_raw, 3, "scaling_raw");
  check(g.rotation, 4, "rotation");
  check(g.opacity, 1, "opacity");
  check(g.sh_dc, 3, "sh_dc");

  auto frame = std::make_shared<Frame>();
  Frame& f = *frame;
  f.width = cam.width;
  f.height = cam.height;
  f.tiles_x = (f.width + kTileSize - 1) / kTileSize;
  f.tiles_y = (f.height + kTileSize - 1) / kTileSize;
  f.w = cam.world_to_camera();
  f.fx = f.fy = cam.focal();
  f.cx = 0.5 * static_cast<double>(f.width);
  f.cy = 0.5 * static_cast<double>(f.height);
  f.background = background;
  project_all(f, g, cam);
  bin_tiles(f);

  RenderedImage<T> img;
  img.width = f.width;
  img.height = f.height;
  img.alpha.assign(f.width * f.height, 0.0);
  img.transmittance.assign(f.width * f.height, 1.0);
  img.visible = static_cast<std::size_t>(std::count_if(f.splats.begin(), f.splats.end(), [](const Splat& s) { return s.visible; }));
  std::vector<T> out(f.width * f.height * 3);
  for_each_pixel(f, [&](const std::vector<std::uint32_t>& list, std::size_t px, std::size_t py) {
    double rgb[3] = {0, 0, 0}, acc = 0;
    const double trans = composite_pixel(f, list, px + 0.5, py + 0.5, [&](const Contribution& c) {
      const double wgt = c.alpha * c.trans;
      for (int k = 0; k < 3; ++k) rgb[k] += f.splats[c.id].color[k] * wgt;
      acc += wgt;
    });
    const std::size_t p = py * f.width + px;
    for (int k = 0; k < 3; ++k) out[p * 3 + k] = static_cast<T>(rgb[k] + trans * background[k]);
    img.alpha[p] = acc;
    img.transmittance[p] = trans;
  });

  auto ci = g.centers.impl(), si = g.scaling_raw.impl(), ri = g.rotation.impl(), oi = g.opacity.impl(),
       hi = g.sh_dc.impl();
  img.pixels = diff::make_result<T>(
      {f.height, f.width, 3}, std::move(out), {ci, si, ri, oi, hi},
      [frame, ci, si, ri, oi, hi](const diff::TensorImpl<T>& o) {
        const Frame& f = *frame;
        std::vector<SplatGrad> grads(f.splats.size());
        std::vector<Contribution> contribs;
        for_each_pixel(f, [&](const std::vector<std::uint32_t>& list, std::size_t px, std::size_t py) {
          const std::size_t p = py * f.width + px;
          const double go[3] = {static_cast<double>(o.grad[p * 3]), static_cast<double>(o.grad[p * 3 + 1]),
                                static_cast<double>(o.grad[p * 3 + 2])};
          if (go[0] == 0.0 && go[1] == 0.0 && go[2] == 0.0) return;
          contribs.clear();
          const double final_trans =
              composite_pixel(f, list, px + 0.5, py + 0.5, [&](const Contribution& c) { contribs.push_back(c); });
          // behind = color arriving from everything after the current Gaussian,
          // background included, as seen through the transmittance in front.
          double behind[3] = {final_trans * f.background[0], final_trans * f.background[1],
                              final_trans * f.background[2]};
          for (auto it = contribs.rbegin(); it != contribs.rend(); ++it) {
            const Splat& s = f.splats[it->id];
            SplatGrad& gs = grads[it->id];
            const double wgt = it->alpha * it->trans;
            double dalpha = 0;
            for (int k = 0; k < 3; ++k) {
              gs.color[k] += go[k] * wgt;
              dalpha += go[k] * (s.color[k] * it->trans - behind[k] / (1.0 - it->alpha));
              behind[k] += s.color[k] * wgt;
            }
            if (it->raw > kMaxAlpha) continue;
            gs.opacity += dalpha * it->weight;
            const double dpower = dalpha * s.opacity * it->weight;
            const double dx = it->dx, dy = it->dy;
            gs.conic[0] += -0.5 * dx * dx * dpower;
            gs.conic[1] += -dx * dy * dpower;
            gs.conic[2] += -0.5 * dy * dy * dpower;
            gs.mean[0] += (s.conic[0] * dx + s.conic[1] * dy) * dpower;
            gs.mean[1] += (s.conic[1] * dx + s.conic[2] * dy) * dpower;
          }
        });
        T* d_center = grad_ptr(ci);
        T* d_scale = grad_ptr(si);
        T* d_rot = grad_ptr(ri);
        T* d_opacity = grad_ptr(oi);
        T* d_sh = grad_ptr(hi);
        for (std::size_t i = 0; i < f.splats.size(); ++i) {
          if (!f.splats[i].visible) continue;
          backprop_splat(f, f.splats[i], grads[i], i, d_center, d_scale, d_rot, d_opacity, d_sh);
        }
      });
  return img;
}

void write_ppm(const std::filesystem::path& path, std::size_t width, std::size_t height,
               const std::vector<std::uint8_t>& rgb) {
  if (rgb.size() != width * height * 3) throw std::invalid_argument("write_ppm: payload size mismatch");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open image for writing: " + path.string());
  os << "P6\n" << width << " " << height << "\n255\n";
  os.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (!os) throw std::runtime_error("failed writing image: " + path.string());
}

void write_imgf(const std::filesystem::path& path, std::size_t width, std::size_t height,
                const std::vector<std::uint8_t>& rgb) {
  if (rgb.size() != width * height * 3) throw std::invalid_argument("write_imgf: payload size mismatch");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open image for writing: " + path.string());
  util::write_magic(os, "IMGF");
  util::write_u32(os, static_cast<std::uint32_t>(width));
  util::write_u32(os, static_cast<std::uint32_t>(height));
  os.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (!os) throw std::runtime_error("failed writing image: " + path.string());
}

Rgb8Image read_imgf(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw util::FormatError("cannot open image: " + path.string());
  util::expect_magic(is, "IMGF", path.string());
  Rgb8Image img;
  img.width = util::read_u32(is, "image width");
  img.height = util::read_u32(is, "image height");
  img.rgb.resize(img.width * img.height * 3);
  is.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (static_cast<std::size_t>(is.gcount()) != img.rgb.size()) {
    throw util::FormatError(path.string() + ": truncated image payload");
  }
  return img;
}

template struct RenderedImage<float>;
template struct RenderedImage<double>;
template RenderedImage<float> render(const decoder::GaussianSet<float>&, const Camera&, const Vec3&);
template RenderedImage<double> render(const decoder::GaussianSet<double>&, const Camera&, const Vec3&);

}  // namespace textsplat::splat
