#pragma once

// Grayscale image type and binary PGM (P5) I/O.
//
// Intensities live in [0,1] as doubles; 8-bit quantization happens only at
// the file boundary. Written files are always maxval 255 with bytes
// round(v*255), rounding half away from zero, so save/load roundtrips are
// byte-exact.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sss {

enum class PgmErrc {
  missing_file,
  bad_magic,
  bad_header,
  bad_maxval,
  truncated,
  unwritable,
};

class PgmError : public std::runtime_error {
 public:
  PgmError(PgmErrc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  PgmErrc code() const { return code_; }

 private:
  PgmErrc code_;
};

class GrayImage {
 public:
  GrayImage() = default;

  GrayImage(int width, int height, double fill = 0.0)
      : width_(width), height_(height) {
    check_dims(width, height);
    if (fill < 0.0 || fill > 1.0)
      throw std::invalid_argument("GrayImage: fill outside [0,1]");
    data_.assign(static_cast<std::size_t>(width) * height, fill);
  }

  GrayImage(int width, int height, std::vector<double> data)
      : width_(width), height_(height), data_(std::move(data)) {
    check_dims(width, height);
    if (data_.size() != static_cast<std::size_t>(width) * height)
      throw std::invalid_argument("GrayImage: data length != width*height");
    for (double v : data_)
      if (!(v >= 0.0 && v <= 1.0))
        throw std::invalid_argument("GrayImage: intensity outside [0,1]");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::int64_t size() const { return static_cast<std::int64_t>(width_) * height_; }
  bool empty() const { return data_.empty(); }

  double operator()(int x, int y) const { return data_[idx(x, y)]; }
  double& operator()(int x, int y) { return data_[idx(x, y)]; }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  bool operator==(const GrayImage& o) const {
    return width_ == o.width_ && height_ == o.height_ && data_ == o.data_;
  }

 private:
  static void check_dims(int w, int h) {
    if (w < 1 || h < 1) throw std::invalid_argument("GrayImage: nonpositive dims");
  }
  std::size_t idx(int x, int y) const {
    return static_cast<std::size_t>(y) * width_ + x;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// round half away from zero; inputs are nonnegative here
inline std::uint8_t quantize8(double v) {
  long q = std::lround(clamp01(v) * 255.0);
  return static_cast<std::uint8_t>(q);
}

namespace detail {

inline int pnm_read_value(std::istream& in) {
  // skips whitespace and '#' comments, then parses one nonnegative integer
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  if (c == EOF || !std::isdigit(c)) return -1;
  long v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    if (v > 1 << 30) return -1;
    c = in.get();
  }
  if (c != EOF) in.unget();
  return static_cast<int>(v);
}

}  // namespace detail

inline GrayImage load_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw PgmError(PgmErrc::missing_file, "cannot open " + path.string());

  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '5')
    throw PgmError(PgmErrc::bad_magic, "not a binary PGM (P5): " + path.string());

  const int width = detail::pnm_read_value(in);
  const int height = detail::pnm_read_value(in);
  const int maxval = detail::pnm_read_value(in);
  if (width < 1 || height < 1)
    throw PgmError(PgmErrc::bad_header, "bad PGM dimensions in " + path.string());
  if (maxval < 1 || maxval > 255)
    throw PgmError(PgmErrc::bad_maxval, "PGM maxval out of range in " + path.string());

  in.get();  // single whitespace byte separating header from payload

  std::vector<std::uint8_t> raw(static_cast<std::size_t>(width) * height);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size())
    throw PgmError(PgmErrc::truncated, "truncated PGM payload in " + path.string());

  std::vector<double> data(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i)
    data[i] = static_cast<double>(raw[i]) / maxval;
  return GrayImage(width, height, std::move(data));
}

inline void save_pgm(const GrayImage& img, const std::filesystem::path& path) {
  if (img.empty()) throw std::invalid_argument("save_pgm: empty image");
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw PgmError(PgmErrc::unwritable, "cannot write " + path.string());
  out << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(img.size()));
  for (std::int64_t i = 0; i < img.size(); ++i) raw[i] = quantize8(img.data()[i]);
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out)
    throw PgmError(PgmErrc::unwritable, "write failed for " + path.string());
}

inline GrayImage crop(const GrayImage& img, int x, int y, int w, int h) {
  if (w < 1 || h < 1 || x < 0 || y < 0 || x + w > img.width() || y + h > img.height())
    throw std::out_of_range("crop: rectangle outside image");
  std::vector<double> data(static_cast<std::size_t>(w) * h);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      data[static_cast<std::size_t>(r) * w + c] = img(x + c, y + r);
  return GrayImage(w, h, std::move(data));
}

struct PaddedImage {
  GrayImage image;
  int original_width = 0;
  int original_height = 0;
};

namespace detail {

// mirror about the last sample without repeating it: ... 2,1,0,1,2 ...
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  int t = i % period;
  if (t >= n) t = period - t;
  return t;
}

}  // namespace detail

// Pads right/bottom by mirror reflection until both dims are multiples of
// `multiple`. Original dims are kept so the caller can crop back.
inline PaddedImage pad_reflect(const GrayImage& img, int multiple) {
  if (multiple < 1) throw std::invalid_argument("pad_reflect: multiple < 1");
  const int w = img.width(), h = img.height();
  const int pw = ((w + multiple - 1) / multiple) * multiple;
  const int ph = ((h + multiple - 1) / multiple) * multiple;
  if (pw == w && ph == h) return {img, w, h};
  std::vector<double> data(static_cast<std::size_t>(pw) * ph);
  for (int y = 0; y < ph; ++y) {
    const int sy = detail::reflect_index(y, h);
    for (int x = 0; x < pw; ++x)
      data[static_cast<std::size_t>(y) * pw + x] = img(detail::reflect_index(x, w), sy);
  }
  return {GrayImage(pw, ph, std::move(data)), w, h};
}

}  // namespace sss
