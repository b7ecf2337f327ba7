#include "etomo/analysis/analysis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <deque>
#include <numbers>
#include <numeric>
#include <queue>
#include <stdexcept>

#include "etomo/autodiff/ops.hpp"

namespace etomo::analysis {
namespace {

// 2D grids are handled as a single slice.
struct Grid {
  int d = 1, h = 0, w = 0;
  bool is3d = false;

  explicit Grid(const std::vector<int>& dims) {
    if (dims.size() == 2) {
      h = dims[0];
      w = dims[1];
    } else if (dims.size() == 3) {
      d = dims[0];
      h = dims[1];
      w = dims[2];
      is3d = true;
    } else {
      throw std::invalid_argument("expected 2 or 3 dims, got " + std::to_string(dims.size()));
    }
  }
  std::size_t size() const { return static_cast<std::size_t>(d) * h * w; }
  std::size_t at(int z, int y, int x) const {
    return (static_cast<std::size_t>(z) * h + y) * w + x;
  }
  void coords(std::size_t i, int& z, int& y, int& x) const {
    x = static_cast<int>(i % w);
    y = static_cast<int>((i / w) % h);
    z = static_cast<int>(i / (static_cast<std::size_t>(w) * h));
  }
  // Face neighbours (4 in 2D, 6 in 3D) in a fixed order.
  template <typename F>
  void faces(std::size_t i, F&& f) const {
    int z, y, x;
    coords(i, z, y, x);
    if (is3d && z > 0) f(at(z - 1, y, x));
    if (y > 0) f(at(z, y - 1, x));
    if (x > 0) f(at(z, y, x - 1));
    if (x + 1 < w) f(at(z, y, x + 1));
    if (y + 1 < h) f(at(z, y + 1, x));
    if (is3d && z + 1 < d) f(at(z + 1, y, x));
  }
};

void check_mask(const Mask& m) {
  if (m.on.size() != product(m.dims)) {
    throw std::invalid_argument("mask has " + std::to_string(m.on.size()) +
                                " elements but its dims imply " + std::to_string(product(m.dims)));
  }
}

// Squared 1D distance transform of a sampled function (lower envelope of
// parabolas). `v` and `zb` are scratch buffers of size n and n + 1.
void edt_1d(std::vector<double>& f, std::vector<double>& out, std::vector<int>& v,
            std::vector<double>& zb) {
  const int n = static_cast<int>(f.size());
  constexpr double inf = std::numeric_limits<double>::infinity();
  int k = 0;
  v[0] = 0;
  zb[0] = -inf;
  zb[1] = inf;
  for (int q = 1; q < n; ++q) {
    if (f[q] == inf) continue;
    if (f[v[k]] == inf) {
      v[k] = q;
      continue;
    }
    double s;
    while (true) {
      s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) / (2.0 * (q - v[k]));
      if (s <= zb[k] && k > 0) {
        --k;
      } else {
        break;
      }
    }
    if (s <= zb[k]) {
      v[k] = q;
      continue;
    }
    ++k;
    v[k] = q;
    zb[k] = s;
    zb[k + 1] = inf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (zb[k + 1] < q) ++k;
    const double dq = q - v[k];
    out[q] = f[v[k]] == inf ? inf : dq * dq + f[v[k]];
  }
}

std::vector<std::int64_t> renumber_scan_order(std::vector<std::int64_t> labels, std::int64_t& count) {
  std::vector<std::int64_t> map;
  count = 0;
  for (auto& l : labels) {
    if (l == 0) continue;
    if (static_cast<std::size_t>(l) >= map.size()) map.resize(static_cast<std::size_t>(l) + 1, 0);
    if (map[l] == 0) map[l] = ++count;
    l = map[l];
  }
  return labels;
}

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

double psnr(const proj::Image2D& x, const proj::Image2D& ref) {
  if (x.height != ref.height || x.width != ref.width) {
    throw std::invalid_argument("psnr: image sizes differ");
  }
  const auto [lo, hi] = std::minmax_element(ref.data.begin(), ref.data.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) throw std::invalid_argument("psnr: reference is constant");
  double mse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) mse += (x.data[i] - ref.data[i]) * (x.data[i] - ref.data[i]);
  mse /= static_cast<double>(x.size());
  if (mse == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(range * range / mse);
}

double ssim_eval(const proj::Image2D& x, const proj::Image2D& ref) {
  if (x.height != ref.height || x.width != ref.width) {
    throw std::invalid_argument("ssim: image sizes differ");
  }
  const auto [lo, hi] = std::minmax_element(ref.data.begin(), ref.data.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) throw std::invalid_argument("ssim: reference is constant");
  ad::Tape<double> tape;
  auto a = ad::make_tensor<double>({1, x.height, x.width}, x.data, false);
  auto b = ad::make_tensor<double>({1, ref.height, ref.width}, ref.data, false);
  return ad::ssim(tape, a, b, range)->item();
}

double ssim_eval(const Volume3D& x, const Volume3D& ref) {
  if (x.depth != ref.depth || x.height != ref.height || x.width != ref.width) {
    throw std::invalid_argument("ssim: volume sizes differ");
  }
  const std::size_t slice = static_cast<std::size_t>(x.height) * x.width;
  double total = 0.0;
  for (int z = 0; z < x.depth; ++z) {
    const auto off = static_cast<std::ptrdiff_t>(z * slice);
    proj::Image2D a(x.height, x.width,
                    std::vector<double>(x.data.begin() + off, x.data.begin() + off + slice));
    proj::Image2D b(x.height, x.width,
                    std::vector<double>(ref.data.begin() + off, ref.data.begin() + off + slice));
    total += ssim_eval(a, b);
  }
  return total / x.depth;
}

OtsuResult otsu_threshold(const std::vector<double>& values, const std::vector<int>& dims) {
  if (values.size() != product(dims)) throw std::invalid_argument("otsu: size/dims mismatch");
  if (values.empty()) throw std::invalid_argument("otsu: empty input");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (!(hi > lo)) throw std::invalid_argument("otsu: input is constant");
  constexpr int kBins = 256;
  const double width = (hi - lo) / kBins;
  std::vector<double> count(kBins, 0.0), mass(kBins, 0.0);
  for (double v : values) {
    const int b = std::min(kBins - 1, static_cast<int>((v - lo) / width));
    count[b] += 1.0;
    mass[b] += v;
  }
  const double n = static_cast<double>(values.size());
  const double total_mass = std::accumulate(mass.begin(), mass.end(), 0.0);
  double n0 = 0.0, s0 = 0.0, best = -1.0;
  int best_k = 0;
  for (int k = 0; k < kBins - 1; ++k) {
    n0 += count[k];
    s0 += mass[k];
    const double n1 = n - n0;
    if (n0 == 0.0 || n1 == 0.0) continue;
    const double m0 = s0 / n0;
    const double m1 = (total_mass - s0) / n1;
    const double var = (n0 / n) * (n1 / n) * (m0 - m1) * (m0 - m1);
    if (var > best) {
      best = var;
      best_k = k;
    }
  }
  OtsuResult r;
  r.threshold = lo + (best_k + 1) * width;
  r.mask.dims = dims;
  r.mask.on.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) r.mask.on[i] = values[i] > r.threshold;
  return r;
}

OtsuResult otsu_threshold(const proj::Image2D& x) {
  return otsu_threshold(x.data, {x.height, x.width});
}

OtsuResult otsu_threshold(const Volume3D& x) {
  return otsu_threshold(x.data, {x.depth, x.height, x.width});
}

LabelMap label_components(const Mask& mask) {
  check_mask(mask);
  const Grid g(mask.dims);
  LabelMap out;
  out.dims = mask.dims;
  out.labels.assign(g.size(), 0);
  std::vector<std::size_t> stack;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!mask.on[i] || out.labels[i] != 0) continue;
    const std::int64_t id = ++out.count;
    out.labels[i] = id;
    stack.push_back(i);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      g.faces(p, [&](std::size_t q) {
        if (mask.on[q] && out.labels[q] == 0) {
          out.labels[q] = id;
          stack.push_back(q);
        }
      });
    }
  }
  return out;
}

std::vector<double> distance_transform(const Mask& mask) {
  check_mask(mask);
  const Grid g(mask.dims);
  constexpr double inf = std::numeric_limits<double>::infinity();
  // One-pixel background frame so the outside of the grid counts as
  // background; in 2D the slice axis is not padded.
  const int pd = g.is3d ? g.d + 2 : 1;
  const int ph = g.h + 2;
  const int pw = g.w + 2;
  const int oz = g.is3d ? 1 : 0;
  auto pidx = [&](int z, int y, int x) {
    return (static_cast<std::size_t>(z) * ph + y) * pw + x;
  };
  std::vector<double> f(static_cast<std::size_t>(pd) * ph * pw, 0.0);
  for (int z = 0; z < g.d; ++z) {
    for (int y = 0; y < g.h; ++y) {
      for (int x = 0; x < g.w; ++x) {
        if (mask.on[g.at(z, y, x)]) f[pidx(z + oz, y + 1, x + 1)] = inf;
      }
    }
  }
  const int longest = std::max({pd, ph, pw});
  std::vector<double> line(longest), out(longest), zb(longest + 1);
  std::vector<int> v(longest);
  // Along x.
  for (int z = 0; z < pd; ++z) {
    for (int y = 0; y < ph; ++y) {
      line.assign(pw, 0.0);
      out.assign(pw, 0.0);
      for (int x = 0; x < pw; ++x) line[x] = f[pidx(z, y, x)];
      edt_1d(line, out, v, zb);
      for (int x = 0; x < pw; ++x) f[pidx(z, y, x)] = out[x];
    }
  }
  // Along y.
  for (int z = 0; z < pd; ++z) {
    for (int x = 0; x < pw; ++x) {
      line.assign(ph, 0.0);
      out.assign(ph, 0.0);
      for (int y = 0; y < ph; ++y) line[y] = f[pidx(z, y, x)];
      edt_1d(line, out, v, zb);
      for (int y = 0; y < ph; ++y) f[pidx(z, y, x)] = out[y];
    }
  }
  // Along z.
  if (g.is3d) {
    for (int y = 0; y < ph; ++y) {
      for (int x = 0; x < pw; ++x) {
        line.assign(pd, 0.0);
        out.assign(pd, 0.0);
        for (int z = 0; z < pd; ++z) line[z] = f[pidx(z, y, x)];
        edt_1d(line, out, v, zb);
        for (int z = 0; z < pd; ++z) f[pidx(z, y, x)] = out[z];
      }
    }
  }
  std::vector<double> dist(g.size(), 0.0);
  for (int z = 0; z < g.d; ++z) {
    for (int y = 0; y < g.h; ++y) {
      for (int x = 0; x < g.w; ++x) {
        dist[g.at(z, y, x)] = std::sqrt(f[pidx(z + oz, y + 1, x + 1)]);
      }
    }
  }
  return dist;
}

LabelMap watershed_separate(const Mask& mask, const WatershedParams& params) {
  check_mask(mask);
  const Grid g(mask.dims);
  const std::size_t n = g.size();
  const auto dist = distance_transform(mask);
  const auto comps = label_components(mask);

  // h-maxima: grayscale reconstruction by dilation of (D - h) under D,
  // restricted to the foreground.
  std::vector<double> rec(n, 0.0);
  std::deque<std::size_t> fifo;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask.on[i]) continue;
    rec[i] = dist[i] - params.h;
    fifo.push_back(i);
  }
  while (!fifo.empty()) {
    const std::size_t p = fifo.front();
    fifo.pop_front();
    g.faces(p, [&](std::size_t q) {
      if (!mask.on[q]) return;
      const double v = std::min(rec[p], dist[q]);
      if (v > rec[q]) {
        rec[q] = v;
        fifo.push_back(q);
      }
    });
  }

  // Regional maxima of the reconstruction become markers.
  std::vector<std::int64_t> marker(n, 0);
  std::vector<std::uint8_t> seen(n, 0);
  std::vector<std::vector<std::size_t>> plateaus;
  std::vector<std::size_t> members;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask.on[i] || seen[i]) continue;
    members.clear();
    members.push_back(i);
    seen[i] = 1;
    bool is_max = true;
    for (std::size_t k = 0; k < members.size(); ++k) {
      const std::size_t p = members[k];
      g.faces(p, [&](std::size_t q) {
        if (!mask.on[q]) return;
        if (rec[q] > rec[p]) is_max = false;
        if (rec[q] == rec[p] && !seen[q]) {
          seen[q] = 1;
          members.push_back(q);
        }
      });
    }
    if (is_max) plateaus.push_back(members);
  }

  // Markers whose centroids are closer than min_separation inside the same
  // connected component are merged.
  const std::size_t m = plateaus.size();
  std::vector<std::array<double, 3>> centroid(m, {0.0, 0.0, 0.0});
  std::vector<std::int64_t> comp_of(m, 0);
  for (std::size_t k = 0; k < m; ++k) {
    for (std::size_t p : plateaus[k]) {
      int z, y, x;
      g.coords(p, z, y, x);
      centroid[k][0] += z;
      centroid[k][1] += y;
      centroid[k][2] += x;
    }
    for (double& c : centroid[k]) c /= static_cast<double>(plateaus[k].size());
    comp_of[k] = comps.labels[plateaus[k].front()];
  }
  UnionFind uf(m);
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = a + 1; b < m; ++b) {
      if (comp_of[a] != comp_of[b]) continue;
      const double dz = centroid[a][0] - centroid[b][0];
      const double dy = centroid[a][1] - centroid[b][1];
      const double dx = centroid[a][2] - centroid[b][2];
      if (std::sqrt(dz * dz + dy * dy + dx * dx) < params.min_separation) uf.unite(a, b);
    }
  }

  // Priority flood from the markers: highest distance first, FIFO among
  // equal distances. Labels are assigned when a pixel is first reached.
  struct Entry {
    double d;
    std::uint64_t seq;
    std::size_t p;
    bool operator<(const Entry& o) const { return d != o.d ? d < o.d : seq > o.seq; }
  };
  std::priority_queue<Entry> pq;
  std::uint64_t seq = 0;
  std::vector<std::int64_t> labels(n, 0);
  for (std::size_t k = 0; k < m; ++k) {
    const auto id = static_cast<std::int64_t>(uf.find(k)) + 1;
    for (std::size_t p : plateaus[k]) labels[p] = id;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != 0) pq.push({dist[i], seq++, i});
  }
  while (!pq.empty()) {
    const Entry e = pq.top();
    pq.pop();
    g.faces(e.p, [&](std::size_t q) {
      if (mask.on[q] && labels[q] == 0) {
        labels[q] = labels[e.p];
        pq.push({dist[q], seq++, q});
      }
    });
  }
  // Components without a marker (not expected, kept for safety) get their
  // own label.
  std::int64_t next = static_cast<std::int64_t>(m) + 1;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask.on[i] && labels[i] == 0) {
      const std::int64_t c = comps.labels[i];
      for (std::size_t j = i; j < n; ++j) {
        if (comps.labels[j] == c && labels[j] == 0) labels[j] = next;
      }
      ++next;
    }
  }

  LabelMap out;
  out.dims = mask.dims;
  out.labels = renumber_scan_order(std::move(labels), out.count);
  return out;
}

double f1_score(const Mask& pred, const Mask& ref) {
  check_mask(pred);
  check_mask(ref);
  if (pred.dims != ref.dims) throw std::invalid_argument("f1: mask sizes differ");
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred.on[i] != 0;
    const bool r = ref.on[i] != 0;
    tp += p && r;
    fp += p && !r;
    fn += !p && r;
  }
  if (tp + fp + fn == 0.0) return 1.0;
  return 2.0 * tp / (2.0 * tp + fp + fn);
}

double ParticleStats::mean_size() const {
  if (particles.empty()) return 0.0;
  double s = 0.0;
  for (const auto& p : particles) s += p.size;
  return s / static_cast<double>(particles.size());
}

double ParticleStats::mean_diameter() const {
  if (particles.empty()) return 0.0;
  double s = 0.0;
  for (const auto& p : particles) s += p.eq_diameter;
  return s / static_cast<double>(particles.size());
}

double ParticleStats::mean_shape() const {
  if (particles.empty()) return 0.0;
  double s = 0.0;
  for (const auto& p : particles) s += p.shape;
  return s / static_cast<double>(particles.size());
}

ParticleStats particle_stats(const LabelMap& labels) {
  const Grid g(labels.dims);
  if (labels.labels.size() != g.size()) throw std::invalid_argument("labelmap size/dims mismatch");
  std::int64_t k = 0;
  for (auto l : labels.labels) {
    if (l < 0) throw std::invalid_argument("negative label");
    k = std::max(k, l);
  }
  const auto nk = static_cast<std::size_t>(k);
  std::vector<double> size(nk + 1, 0.0), boundary(nk + 1, 0.0);
  std::vector<std::array<double, 3>> sums(nk + 1, {0.0, 0.0, 0.0});
  // Crofton intercept counts per direction: 0, 90, 45, 135 degrees.
  std::vector<std::array<double, 4>> entries(nk + 1, {0.0, 0.0, 0.0, 0.0});

  auto label_at = [&](int z, int y, int x) -> std::int64_t {
    if (z < 0 || z >= g.d || y < 0 || y >= g.h || x < 0 || x >= g.w) return 0;
    return labels.labels[g.at(z, y, x)];
  };
  for (int z = 0; z < g.d; ++z) {
    for (int y = 0; y < g.h; ++y) {
      for (int x = 0; x < g.w; ++x) {
        const std::int64_t l = labels.labels[g.at(z, y, x)];
        if (l == 0) continue;
        size[l] += 1.0;
        sums[l][0] += z;
        sums[l][1] += y;
        sums[l][2] += x;
        if (g.is3d) {
          const int faces = (label_at(z - 1, y, x) != l) + (label_at(z + 1, y, x) != l) +
                            (label_at(z, y - 1, x) != l) + (label_at(z, y + 1, x) != l) +
                            (label_at(z, y, x - 1) != l) + (label_at(z, y, x + 1) != l);
          boundary[l] += faces;
        } else {
          entries[l][0] += label_at(z, y, x - 1) != l;
          entries[l][1] += label_at(z, y - 1, x) != l;
          entries[l][2] += label_at(z, y - 1, x - 1) != l;
          entries[l][3] += label_at(z, y - 1, x + 1) != l;
        }
      }
    }
  }

  ParticleStats out;
  out.dims = g.is3d ? 3 : 2;
  const double pi = std::numbers::pi;
  for (std::size_t l = 1; l <= nk; ++l) {
    if (size[l] == 0.0) continue;
    Particle p;
    p.label = static_cast<std::int64_t>(l);
    p.size = size[l];
    if (g.is3d) {
      p.boundary = boundary[l] * 2.0 / 3.0;
      p.eq_diameter = std::cbrt(6.0 * p.size / pi);
      p.shape = std::cbrt(pi) * std::pow(6.0 * p.size, 2.0 / 3.0) / p.boundary;
      p.centroid = {sums[l][0] / p.size, sums[l][1] / p.size, sums[l][2] / p.size};
    } else {
      const auto& e = entries[l];
      p.boundary = pi / 4.0 * (e[0] + e[1] + (e[2] + e[3]) / std::numbers::sqrt2);
      p.eq_diameter = 2.0 * std::sqrt(p.size / pi);
      p.shape = 4.0 * pi * p.size / (p.boundary * p.boundary);
      p.centroid = {sums[l][1] / p.size, sums[l][2] / p.size};
    }
    p.shape = std::min(p.shape, 1.0);
    out.particles.push_back(std::move(p));
  }
  return out;
}

Histogram histogram(const std::vector<double>& values, double lo, double hi, int bins) {
  if (bins < 1) throw std::invalid_argument("histogram needs at least one bin");
  if (!(hi > lo)) throw std::invalid_argument("histogram range is empty");
  Histogram h{lo, hi, std::vector<std::size_t>(static_cast<std::size_t>(bins), 0)};
  const double width = (hi - lo) / bins;
  for (double v : values) {
    const int b = std::clamp(static_cast<int>(std::floor((v - lo) / width)), 0, bins - 1);
    ++h.counts[static_cast<std::size_t>(b)];
  }
  return h;
}

std::string histogram_report(const std::vector<std::pair<std::string, ParticleStats>>& ensemble) {
  if (ensemble.empty()) throw std::invalid_argument("histogram_report: empty ensemble");
  double dlo = std::numeric_limits<double>::infinity();
  double dhi = -dlo;
  for (const auto& [name, stats] : ensemble) {
    for (const auto& p : stats.particles) {
      dlo = std::min(dlo, p.eq_diameter);
      dhi = std::max(dhi, p.eq_diameter);
    }
  }
  if (!std::isfinite(dlo)) {
    dlo = 0.0;
    dhi = 1.0;
  } else if (!(dhi > dlo)) {
    dhi = dlo + 1.0;
  }
  std::string csv = "group,quantity,bin,lo,hi,count\n";
  auto emit = [&](const std::string& group, const std::string& quantity, const Histogram& h) {
    const double width = (h.hi - h.lo) / static_cast<double>(h.counts.size());
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
      csv += group + "," + quantity + "," + std::to_string(b) + "," + fmt(h.lo + b * width) + "," +
             fmt(h.lo + (b + 1) * width) + "," + std::to_string(h.counts[b]) + "\n";
    }
  };
  for (const auto& [name, stats] : ensemble) {
    std::vector<double> shape, diam;
    for (const auto& p : stats.particles) {
      shape.push_back(p.shape);
      diam.push_back(p.eq_diameter);
    }
    emit(name, stats.dims == 3 ? "sphericity" : "circularity", histogram(shape, 0.0, 1.0));
    emit(name, "eq_diameter", histogram(diam, dlo, dhi));
  }
  return csv;
}

std::string particle_table(const ParticleStats& stats) {
  const bool is3d = stats.dims == 3;
  std::string csv = is3d ? "label,volume,surface,eq_diameter,sphericity,cz,cy,cx\n"
                         : "label,area,perimeter,eq_diameter,circularity,cy,cx\n";
  for (const auto& p : stats.particles) {
    csv += std::to_string(p.label) + "," + fmt(p.size) + "," + fmt(p.boundary) + "," +
           fmt(p.eq_diameter) + "," + fmt(p.shape);
    for (double c : p.centroid) csv += "," + fmt(c);
    csv += "\n";
  }
  return csv;
}

}  // namespace etomo::analysis
