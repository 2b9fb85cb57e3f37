#include "exitrack/data/sequence.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "exitrack/numerics/errors.hpp"

namespace exitrack::data {

namespace fs = std::filesystem;

std::array<float, 3> Image::mean() const {
  std::array<double, 3> acc{0, 0, 0};
  for (std::size_t i = 0; i < pixels.size(); ++i) acc[i % 3] += pixels[i];
  const double n = static_cast<double>(height * width);
  return {static_cast<float>(acc[0] / n), static_cast<float>(acc[1] / n), static_cast<float>(acc[2] / n)};
}

void quantize(Image& image) {
  for (auto& v : image.pixels) {
    const long q = std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f);
    v = static_cast<float>(q) / 255.0f;
  }
}

void write_ppm(const Image& image, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  std::vector<unsigned char> bytes(image.pixels.size());
  for (std::size_t i = 0; i < bytes.size(); ++i)
    bytes[i] = static_cast<unsigned char>(std::lround(std::clamp(image.pixels[i], 0.0f, 1.0f) * 255.0f));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

namespace {

// next whitespace-delimited header token, skipping '#' comments
std::string header_token(std::istream& in, const fs::path& path) {
  std::string tok;
  while (in) {
    const int c = in.get();
    if (c == EOF) break;
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  if (tok.empty()) throw ParseError("truncated PPM header in " + path.string());
  return tok;
}

std::size_t header_number(std::istream& in, const fs::path& path) {
  const auto tok = header_token(in, path);
  std::size_t v = 0;
  auto [end, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || end != tok.data() + tok.size()) throw ParseError("bad PPM header field '" + tok + "' in " + path.string());
  return v;
}

}  // namespace

Image read_ppm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  if (header_token(in, path) != "P6") throw ParseError("not a binary PPM: " + path.string());
  const auto width = header_number(in, path);
  const auto height = header_number(in, path);
  const auto maxval = header_number(in, path);
  if (maxval != 255 || width == 0 || height == 0) throw ParseError("unsupported PPM geometry in " + path.string());
  Image image(height, width);
  std::vector<unsigned char> bytes(image.pixels.size());
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw ParseError("truncated PPM payload in " + path.string());
  for (std::size_t i = 0; i < bytes.size(); ++i) image.pixels[i] = static_cast<float>(bytes[i]) / 255.0f;
  return image;
}

PixelBox parse_annotation(const std::string& line, std::size_t line_number) {
  double v[4];
  const char* p = line.data();
  const char* end = line.data() + line.size();
  while (end > p && (end[-1] == '\r' || end[-1] == ' ')) --end;
  for (int i = 0; i < 4; ++i) {
    while (p < end && *p == ' ') ++p;
    auto [next, ec] = std::from_chars(p, end, v[i]);
    if (ec != std::errc()) throw ParseError("malformed annotation '" + line + "'", line_number);
    p = next;
    while (p < end && *p == ' ') ++p;
    if (i < 3) {
      if (p == end || (*p != ',' && *p != '\t')) throw ParseError("malformed annotation '" + line + "'", line_number);
      ++p;
    }
  }
  if (p != end) throw ParseError("trailing characters in annotation '" + line + "'", line_number);
  if (v[2] <= 0 || v[3] <= 0) throw ParseError("non-positive box extent in '" + line + "'", line_number);
  return {v[0], v[1], v[2], v[3]};
}

std::vector<PixelBox> read_groundtruth(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("missing groundtruth file " + file.string());
  std::vector<PixelBox> boxes;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty() || line == "\r") continue;
    boxes.push_back(parse_annotation(line, n));
  }
  return boxes;
}

namespace {

std::string frame_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%08zu.ppm", index + 1);
  return buf;
}

}  // namespace

void write_sequence(const Sequence& seq, const fs::path& dir) {
  fs::create_directories(dir / "img");
  for (std::size_t i = 0; i < seq.frames.size(); ++i) write_ppm(seq.frames[i].image, dir / "img" / frame_name(i));
  std::ofstream gt(dir / "groundtruth.txt", std::ios::trunc);
  if (!gt) throw IoError("cannot write " + (dir / "groundtruth.txt").string());
  for (const auto& f : seq.frames) gt << format_box(f.gt) << '\n';
  std::ofstream meta(dir / "meta.txt", std::ios::trunc);
  if (!meta) throw IoError("cannot write " + (dir / "meta.txt").string());
  meta << "name=" << seq.name << '\n' << "difficulty=" << seq.difficulty << '\n' << "attributes=";
  bool first = true;
  for (const auto& a : seq.attributes) {
    meta << (first ? "" : ",") << a;
    first = false;
  }
  meta << '\n';
}

Sequence read_sequence(const fs::path& dir) {
  Sequence seq;
  seq.name = dir.filename().string();
  const auto boxes = read_groundtruth(dir / "groundtruth.txt");
  const auto meta_path = dir / "meta.txt";
  if (fs::exists(meta_path)) {
    std::ifstream meta(meta_path);
    std::string line;
    std::size_t n = 0;
    while (std::getline(meta, line)) {
      ++n;
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ParseError("expected key=value in " + meta_path.string(), n);
      const auto key = line.substr(0, eq), value = line.substr(eq + 1);
      if (key == "name") {
        seq.name = value;
      } else if (key == "difficulty") {
        try {
          seq.difficulty = std::stoi(value);
        } catch (const std::exception&) {
          throw ParseError("bad difficulty '" + value + "' in " + meta_path.string(), n);
        }
      } else if (key == "attributes") {
        std::stringstream ss(value);
        std::string tag;
        while (std::getline(ss, tag, ','))
          if (!tag.empty()) seq.attributes.insert(tag);
      }
    }
  }
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const auto img = dir / "img" / frame_name(i);
    if (!fs::exists(img)) throw IoError("missing frame " + img.string());
    seq.frames.push_back({read_ppm(img), boxes[i]});
  }
  if (seq.frames.size() < 2) throw ParseError("sequence " + dir.string() + " has fewer than 2 frames");
  return seq;
}

std::vector<Sequence> read_split(const fs::path& root) {
  if (!fs::is_directory(root)) throw IoError("missing dataset directory " + root.string());
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  std::vector<Sequence> out;
  for (const auto& d : dirs) out.push_back(read_sequence(d));
  return out;
}

}  // namespace exitrack::data
