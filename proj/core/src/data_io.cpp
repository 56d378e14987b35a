#include "pdanet/data_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "json.hpp"

namespace pdanet {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<char, 4> kDensityMagic = {'P', 'D', 'M', '1'};

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const std::string& buf, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[off + i])) << (8 * i);
  }
  return v;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed for " + path);
}

}  // namespace

void AnnotatedScene::validate() const {
  if (height < 1 || width < 1) {
    throw std::invalid_argument("scene " + id + ": dimensions must be positive");
  }
  if (!image.empty() && (image.height != height || image.width != width)) {
    throw std::invalid_argument("scene " + id + ": image size does not match annotation");
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Point& p = points[i];
    if (!(p.x >= 0 && p.x < width && p.y >= 0 && p.y < height)) {
      throw std::invalid_argument("point " + std::to_string(i) + " out of bounds");
    }
  }
}

double DensityMap::sum() const {
  double acc = 0.0;
  for (float v : values) acc += v;
  return acc;
}

AnnotatedScene load_annotations(const std::string& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw std::runtime_error("annotations " + path + ": malformed JSON: " + e.what());
  }
  AnnotatedScene scene;
  try {
    scene.id = doc.at("id").get<std::string>();
    scene.image_path = doc.at("image").get<std::string>();
    scene.width = doc.at("width").get<int>();
    scene.height = doc.at("height").get<int>();
    for (const auto& p : doc.at("points")) {
      if (!p.is_array() || p.size() != 2) {
        throw std::runtime_error("each point must be [x, y]");
      }
      scene.points.push_back({p[0].get<double>(), p[1].get<double>()});
    }
  } catch (const json::exception& e) {
    throw std::runtime_error("annotations " + path + ": schema error: " + e.what());
  }
  scene.validate();
  return scene;
}

AnnotatedScene load_scene(const std::string& path) {
  AnnotatedScene scene = load_annotations(path);
  const fs::path image = fs::path(path).parent_path() / scene.image_path;
  scene.image = load_png(image.string());
  scene.validate();
  return scene;
}

void save_annotations(const AnnotatedScene& scene, const std::string& path) {
  scene.validate();
  json pts = json::array();
  for (const Point& p : scene.points) pts.push_back({p.x, p.y});
  json doc = {{"id", scene.id},
              {"image", scene.image_path},
              {"width", scene.width},
              {"height", scene.height},
              {"points", pts}};
  write_file(path, doc.dump(2) + "\n");
}

void save_density_map(const DensityMap& map, const std::string& path) {
  if (map.height < 1 || map.width < 1 || map.stride < 1 ||
      map.values.size() != static_cast<std::size_t>(map.height) * map.width) {
    throw std::invalid_argument("density map: inconsistent dimensions");
  }
  std::string buf(kDensityMagic.begin(), kDensityMagic.end());
  put_u32(buf, static_cast<std::uint32_t>(map.height));
  put_u32(buf, static_cast<std::uint32_t>(map.width));
  put_u32(buf, static_cast<std::uint32_t>(map.stride));
  for (float v : map.values) put_u32(buf, std::bit_cast<std::uint32_t>(v));
  write_file(path, buf);
}

DensityMap load_density_map(const std::string& path) {
  const std::string buf = read_file(path);
  if (buf.size() < 4 || std::memcmp(buf.data(), kDensityMagic.data(), 4) != 0) {
    throw std::runtime_error("density map " + path + ": bad magic");
  }
  if (buf.size() < 16) {
    throw std::runtime_error("density map " + path + ": truncated header (expected 16 bytes, got " +
                             std::to_string(buf.size()) + ")");
  }
  DensityMap map;
  map.height = static_cast<int>(get_u32(buf, 4));
  map.width = static_cast<int>(get_u32(buf, 8));
  map.stride = static_cast<int>(get_u32(buf, 12));
  const std::size_t cells = static_cast<std::size_t>(map.height) * map.width;
  const std::size_t expected = 16 + cells * 4;
  if (buf.size() != expected) {
    throw std::runtime_error("density map " + path + ": truncated payload (expected " +
                             std::to_string(expected) + " bytes, got " + std::to_string(buf.size()) +
                             ")");
  }
  map.values.resize(cells);
  for (std::size_t i = 0; i < cells; ++i) {
    map.values[i] = std::bit_cast<float>(get_u32(buf, 16 + 4 * i));
  }
  return map;
}

void save_manifest(const std::vector<std::string>& entries, const std::string& path) {
  write_file(path, json(entries).dump(2) + "\n");
}

std::vector<std::string> load_manifest(const std::string& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw std::runtime_error("manifest " + path + ": malformed JSON: " + e.what());
  }
  if (!doc.is_array()) throw std::runtime_error("manifest " + path + ": expected a JSON list");
  const fs::path dir = fs::path(path).parent_path();
  std::vector<std::string> out;
  for (const auto& e : doc) {
    if (!e.is_string()) throw std::runtime_error("manifest " + path + ": entries must be strings");
    const fs::path p(e.get<std::string>());
    out.push_back(p.is_absolute() ? p.string() : (dir / p).string());
  }
  return out;
}

}  // namespace pdanet
