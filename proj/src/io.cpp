#include "shapecomp/io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

namespace shapecomp {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s) {
  const std::string t = trim(s);
  double v = 0.0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size()) throw IoError("not a number: '" + t + "'");
  return v;
}

long long parse_int(std::string_view s) {
  const std::string t = trim(s);
  long long v = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size()) throw IoError("not an integer: '" + t + "'");
  return v;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

void write_sg3(const ScalarGrid3& grid, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const auto& s = grid.spec;
  out << "SG3 " << s.dims[0] << ' ' << s.dims[1] << ' ' << s.dims[2] << ' ' << format_double(s.origin.x()) << ' '
      << format_double(s.origin.y()) << ' ' << format_double(s.origin.z()) << ' ' << format_double(s.spacing) << ' '
      << grid.channels << '\n';
  std::vector<char> blob(grid.values.size() * 4);
  for (std::size_t i = 0; i < grid.values.size(); ++i) {
    auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(grid.values[i]));
    for (int b = 0; b < 4; ++b) blob[4 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xFFu);
  }
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

ScalarGrid3 read_sg3(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::string magic;
  hs >> magic;
  if (magic != "SG3") throw IoError("bad sg3 magic in " + path.string());
  GridSpec spec;
  std::string ox, oy, oz, sp;
  int channels = 0;
  hs >> spec.dims[0] >> spec.dims[1] >> spec.dims[2] >> ox >> oy >> oz >> sp >> channels;
  if (!hs || channels <= 0 || spec.dims[0] <= 0 || spec.dims[1] <= 0 || spec.dims[2] <= 0)
    throw IoError("bad sg3 header in " + path.string());
  spec.origin = Vec3(parse_double(ox), parse_double(oy), parse_double(oz));
  spec.spacing = parse_double(sp);
  ScalarGrid3 grid(spec, channels);
  std::vector<unsigned char> blob(grid.values.size() * 4);
  in.read(reinterpret_cast<char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  if (in.gcount() != static_cast<std::streamsize>(blob.size())) throw IoError("truncated sg3 " + path.string());
  for (std::size_t i = 0; i < grid.values.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(blob[4 * i + b]) << (8 * b);
    grid.values[i] = std::bit_cast<float>(bits);
  }
  return grid;
}

void write_region(const Region3& region, const std::filesystem::path& path) {
  write_sg3(region_indicator(region), path);
}

Region3 read_region(const std::filesystem::path& path) {
  const ScalarGrid3 g = read_sg3(path);
  Region3 r(g.spec);
  for (std::size_t n = 0; n < g.spec.node_count(); ++n) r.mask[n] = g.at(n, 0) > 0.5 ? 1 : 0;
  r.relabel();
  return r;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  KeyValues kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

void write_key_values(const KeyValues& kv, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& [k, v] : kv) out << k << " = " << v << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace shapecomp
