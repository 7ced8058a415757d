#include "bicam/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "bicam/error.hpp"

namespace bicam::io {

namespace {

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

// Next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {}
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

std::size_t header_number(std::istream& in, const char* what) {
  const std::string tok = header_token(in);
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); })) {
    throw FormatError(std::string("netpbm header: bad ") + what + " '" + tok + "'");
  }
  return std::stoul(tok);
}

struct NetpbmHeader {
  std::size_t width, height;
};

NetpbmHeader read_header(std::istream& in, const char* magic) {
  const std::string m = header_token(in);
  if (m != magic) {
    throw FormatError(std::string("expected netpbm magic ") + magic + ", got '" + m + "'");
  }
  NetpbmHeader h{header_number(in, "width"), header_number(in, "height")};
  const std::size_t maxval = header_number(in, "maxval");
  if (maxval != 255) throw FormatError("only maxval 255 is supported, got " + std::to_string(maxval));
  if (h.width == 0 || h.height == 0) throw FormatError("netpbm image has zero size");
  return h;
}

std::vector<std::uint8_t> read_payload(std::istream& in, std::size_t n) {
  std::vector<std::uint8_t> data(n);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw FormatError("netpbm payload truncated: expected " + std::to_string(n) + " bytes");
  }
  return data;
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

RgbImage read_ppm(std::istream& in) {
  const auto h = read_header(in, "P6");
  RgbImage img{h.width, h.height, read_payload(in, h.width * h.height * 3)};
  return img;
}

RgbImage read_ppm(const std::filesystem::path& path) {
  auto in = open_in(path);
  try {
    return read_ppm(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_ppm(std::ostream& out, const RgbImage& image) {
  if (image.pixels.size() != image.width * image.height * 3) {
    throw DimensionError("RGB buffer does not match image size");
  }
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
}

void write_ppm(const std::filesystem::path& path, const RgbImage& image) {
  auto out = open_out(path);
  write_ppm(out, image);
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

GrayImage read_pgm(std::istream& in) {
  const auto h = read_header(in, "P5");
  return GrayImage{h.width, h.height, read_payload(in, h.width * h.height)};
}

GrayImage read_pgm(const std::filesystem::path& path) {
  auto in = open_in(path);
  try {
    return read_pgm(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  if (image.pixels.size() != image.width * image.height) {
    throw DimensionError("gray buffer does not match image size");
  }
  auto out = open_out(path);
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

BinaryMask read_mask(const std::filesystem::path& path) {
  const GrayImage g = read_pgm(path);
  BinaryMask m(g.height, g.width);
  for (std::size_t i = 0; i < g.pixels.size(); ++i) m.bits[i] = g.pixels[i] > 127 ? 1 : 0;
  return m;
}

void write_mask(const std::filesystem::path& path, const BinaryMask& mask) {
  GrayImage g{mask.width, mask.height, std::vector<std::uint8_t>(mask.size())};
  for (std::size_t i = 0; i < mask.size(); ++i) g.pixels[i] = mask.bits[i] ? 255 : 0;
  write_pgm(path, g);
}

Tensor to_tensor(const RgbImage& image) {
  const std::size_t H = image.height, W = image.width;
  Tensor t(Shape{1, 3, H, W});
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        t[(c * H + y) * W + x] = static_cast<double>(image.pixels[(y * W + x) * 3 + c]) / 255.0;
  return t;
}

RgbImage to_rgb(const Tensor& image) {
  if (image.rank() != 4 || image.dim(0) != 1 || image.dim(1) != 3) {
    throw DimensionError("to_rgb expects image [1,3,H,W], got " + shape_str(image.shape()));
  }
  const std::size_t H = image.dim(2), W = image.dim(3);
  RgbImage out{W, H, std::vector<std::uint8_t>(W * H * 3)};
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        out.pixels[(y * W + x) * 3 + c] = to_byte(image[(c * H + y) * W + x]);
  return out;
}

Tensor load_image(const std::filesystem::path& path) { return to_tensor(read_ppm(path)); }

void save_image(const std::filesystem::path& path, const Tensor& image) {
  write_ppm(path, to_rgb(image));
}

namespace {

void check_single_map(const Tensor& map) {
  if (map.rank() < 2) throw DimensionError("expected a 2-D map, got " + shape_str(map.shape()));
  for (std::size_t i = 0; i + 2 < map.rank(); ++i) {
    if (map.shape()[i] != 1) throw DimensionError("expected a single map, got " + shape_str(map.shape()));
  }
}

double max_abs(const Tensor& map) {
  double s = 0.0;
  for (double v : map.data()) s = std::max(s, std::abs(v));
  return s;
}

void put_color(std::uint8_t* px, double v) {
  const auto fade = static_cast<std::uint8_t>(255 - std::lround(255.0 * std::min(std::abs(v), 1.0)));
  if (v >= 0.0) {
    px[0] = 255;
    px[1] = fade;
    px[2] = fade;
  } else {
    px[0] = fade;
    px[1] = fade;
    px[2] = 255;
  }
}

}  // namespace

RgbImage render_signed(const Tensor& map, double scale) {
  check_single_map(map);
  const std::size_t H = map.dim(-2), W = map.dim(-1);
  RgbImage out{W, H, std::vector<std::uint8_t>(W * H * 3)};
  for (std::size_t i = 0; i < H * W; ++i) {
    const double v = scale > 0.0 ? map[i] / scale : 0.0;
    put_color(out.pixels.data() + i * 3, v);
  }
  return out;
}

RgbImage render_signed(const Tensor& map) { return render_signed(map, max_abs(map)); }

ChannelRenders render_channels(const Tensor& map) {
  check_single_map(map);
  const double s = max_abs(map);
  Tensor pos(map.shape()), neg(map.shape());
  for (std::size_t i = 0; i < map.size(); ++i) {
    pos[i] = std::max(map[i], 0.0);
    neg[i] = std::min(map[i], 0.0);
  }
  return {render_signed(pos, s), render_signed(neg, s)};
}

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

void write_grid_csv(std::ostream& out, const Tensor& grid) {
  check_single_map(grid);
  const std::size_t H = grid.dim(-2), W = grid.dim(-1);
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      if (x) out << ',';
      out << format_double(grid[y * W + x]);
    }
    out << '\n';
  }
}

void write_grid_csv(const std::filesystem::path& path, const Tensor& grid) {
  auto out = open_out(path);
  write_grid_csv(out, grid);
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Tensor read_grid_csv(std::istream& in) {
  std::vector<double> values;
  std::size_t width = 0, height = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t count = 0;
    while (std::getline(ss, cell, ',')) {
      std::size_t used = 0;
      double v;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        throw FormatError("CSV row " + std::to_string(height + 1) + ": bad number '" + cell + "'");
      }
      if (used != cell.size()) {
        throw FormatError("CSV row " + std::to_string(height + 1) + ": bad number '" + cell + "'");
      }
      values.push_back(v);
      ++count;
    }
    if (height == 0) width = count;
    if (count != width) throw FormatError("CSV grid rows have differing lengths");
    ++height;
  }
  if (height == 0) throw FormatError("empty CSV grid");
  return Tensor(Shape{height, width}, std::move(values));
}

Tensor read_grid_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_grid_csv(in);
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  auto in = open_in(path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

// ---- weights ---------------------------------------------------------------

namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : buf_(b) {}
  void need(std::size_t n, const char* what) const {
    if (buf_.size() - pos_ < n) {
      throw FormatError(std::string("weight file truncated while reading ") + what);
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_++]) << (8 * i);
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(buf_.begin() + static_cast<long>(pos_), buf_.begin() + static_cast<long>(pos_ + n));
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  const std::vector<std::uint8_t>& buf_;
  std::size_t pos_ = 0;
};

std::uint32_t narrow(std::size_t v, const char* what) {
  if (v > 0xffffffffULL) throw FormatError(std::string(what) + " too large for the weight format");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const ViTModel& model) {
  const ViTConfig& c = model.config();
  Writer w;
  w.bytes(kWeightsMagic, 7);
  for (std::size_t v : {c.image_height, c.image_width, c.patch_size, c.num_layers, c.num_heads,
                        c.embed_dim, c.ffn_dim, c.num_classes,
                        static_cast<std::size_t>(c.distillation_token ? 1 : 0), c.layer_window}) {
    w.u32(narrow(v, "config field"));
  }
  w.f64(c.temperature);
  const auto names = model.weights().names();
  w.u32(narrow(names.size(), "tensor count"));
  for (const auto& name : names) {
    const Tensor& t = model.weights().get(name);
    w.u32(narrow(name.size(), "name length"));
    w.bytes(name.data(), name.size());
    w.u32(narrow(t.rank(), "rank"));
    for (auto d : t.shape()) w.u64(d);
    for (double v : t.data()) w.f64(v);
  }
  return w.take();
}

ViTModel deserialize_model(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.str(7, "magic") != std::string(kWeightsMagic, 7)) {
    throw FormatError("not a BICAMW1 weight file (bad magic)");
  }
  ViTConfig c;
  c.image_height = r.u32("config");
  c.image_width = r.u32("config");
  c.patch_size = r.u32("config");
  c.num_layers = r.u32("config");
  c.num_heads = r.u32("config");
  c.embed_dim = r.u32("config");
  c.ffn_dim = r.u32("config");
  c.num_classes = r.u32("config");
  const std::uint32_t distill = r.u32("config");
  if (distill > 1) throw FormatError("distillation_token flag must be 0 or 1");
  c.distillation_token = distill == 1;
  c.layer_window = r.u32("config");
  c.temperature = r.f64("config");
  try {
    c.validate();
  } catch (const ParameterError& e) {
    throw FormatError(std::string("weight file config: ") + e.what());
  }

  const auto expected = ViTWeights::expected_shapes(c);
  ViTWeights weights(c);
  const std::uint32_t count = r.u32("tensor count");
  if (count != expected.size()) {
    throw FormatError("weight file has " + std::to_string(count) + " tensors, config requires " +
                      std::to_string(expected.size()));
  }
  std::vector<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = r.u32("name length");
    std::string name = r.str(len, "tensor name");
    const std::uint32_t rank = r.u32("rank");
    if (rank > 8) throw FormatError("tensor '" + name + "' has implausible rank");
    Shape shape(rank);
    for (auto& d : shape) d = r.u64("dims");
    auto it = expected.find(name);
    if (it == expected.end()) throw FormatError("unexpected tensor '" + name + "'");
    if (it->second != shape) {
      throw FormatError("tensor '" + name + "' has shape " + shape_str(shape) +
                        ", config requires " + shape_str(it->second));
    }
    if (std::find(seen.begin(), seen.end(), name) != seen.end()) {
      throw FormatError("duplicate tensor '" + name + "'");
    }
    seen.push_back(name);
    std::vector<double> data(shape_size(shape));
    for (auto& v : data) v = r.f64("payload");
    weights.set(name, Tensor(shape, std::move(data)));
  }
  if (!r.done()) throw FormatError("trailing bytes after weight payload");
  return ViTModel(c, std::move(weights));
}

void save_model(const std::filesystem::path& path, const ViTModel& model) {
  const auto bytes = serialize_model(model);
  auto out = open_out(path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

ViTModel load_model(const std::filesystem::path& path) {
  try {
    return deserialize_model(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace bicam::io
