#include "tunnelexit/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "tunnelexit/error.hpp"
#include "tunnelexit/hash.hpp"

namespace tunnelexit {

namespace fs = std::filesystem;

std::string to_string(ElementKind kind) { return kind == ElementKind::Real64 ? "real64" : "complex128"; }

std::size_t element_size(ElementKind kind) { return kind == ElementKind::Real64 ? 8 : 16; }

std::size_t ArrayMeta::count() const {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

namespace {

[[noreturn]] void io_error(const std::string& what) { throw ComputeError(ErrorKind::Io, what); }

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(item);
  return out;
}

double to_double(const std::string& s, const std::string& context) {
  const std::string t = trim(s);
  if (t == "nan") return std::nan("");
  if (t == "inf") return HUGE_VAL;
  if (t == "-inf") return -HUGE_VAL;
  double v = 0.0;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || p != t.data() + t.size()) io_error(context + ": not a number: '" + t + "'");
  return v;
}

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap64(v);
  return v;
}

}  // namespace

std::size_t Table::column(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return i;
  io_error("table has no column '" + name + "'");
}

double Table::number(std::size_t row, const std::string& name) const {
  return to_double(rows.at(row).at(column(name)), "column " + name);
}

Table read_table(const fs::path& path) {
  std::ifstream in(path);
  if (!in) io_error("cannot read " + path.string());
  Table t;
  std::string line;
  bool data = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!data && !line.empty() && line[0] == '#') {
      t.comments.push_back(trim(line.substr(1)));
      continue;
    }
    if (line.empty()) continue;
    data = true;
    t.rows.push_back(split(line, '\t'));
  }
  if (!t.comments.empty()) t.columns = split(t.comments.back(), '\t');
  for (auto& c : t.columns) c = trim(c);
  return t;
}

std::vector<std::pair<double, double>> read_two_columns(const fs::path& path) {
  std::ifstream in(path);
  if (!in) io_error("cannot read " + path.string());
  std::vector<std::pair<double, double>> out;
  std::string line;
  for (int number = 1; std::getline(in, line); ++number) {
    const auto hash = line.find('#');
    std::istringstream fields(line.substr(0, hash));
    std::vector<std::string> cells;
    for (std::string cell; fields >> cell;) cells.push_back(cell);
    if (cells.empty()) continue;
    const std::string where = path.string() + " line " + std::to_string(number);
    if (cells.size() != 2) io_error(where + ": expected two columns, got " + std::to_string(cells.size()));
    out.emplace_back(to_double(cells[0], where), to_double(cells[1], where));
  }
  return out;
}

ArrayData read_array(const fs::path& path) {
  fs::path stem = path;
  if (stem.extension() == ".bin" || stem.extension() == ".meta") stem.replace_extension();
  const fs::path meta_path = fs::path(stem).concat(".meta");
  const fs::path bin_path = fs::path(stem).concat(".bin");

  std::ifstream in(meta_path);
  if (!in) io_error("cannot read " + meta_path.string());
  ArrayData out;
  ArrayMeta& m = out.meta;
  std::string line;
  bool has_kind = false;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (trim(line).empty() || eq == std::string::npos) continue;
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string ctx = meta_path.string() + ": " + key;
    if (key == "name") {
      m.name = value;
    } else if (key == "kind") {
      if (value == "real64") m.kind = ElementKind::Real64;
      else if (value == "complex128") m.kind = ElementKind::Complex128;
      else io_error(ctx + ": unknown element kind " + value);
      has_kind = true;
    } else if (key == "endian") {
      if (value != "little") io_error(ctx + ": only little-endian payloads are written");
    } else if (key == "shape") {
      for (const auto& s : split(value, ',')) m.shape.push_back(static_cast<std::size_t>(to_double(s, ctx)));
    } else if (key.rfind("axis.", 0) == 0) {
      const auto parts = split(value, ',');
      if (parts.size() != 4) io_error(ctx + ": expected 'name, unit, start, step'");
      m.axes.push_back({trim(parts[0]), trim(parts[1]), to_double(parts[2], ctx), to_double(parts[3], ctx)});
    } else if (key == "config_digest") {
      m.config_digest = value;
    } else if (key.rfind("param.", 0) == 0) {
      m.params[key.substr(6)] = value;
    }
  }
  if (!has_kind || m.shape.empty()) io_error(meta_path.string() + ": missing kind or shape");

  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) io_error("cannot read " + bin_path.string());
  const auto bytes = fs::file_size(bin_path);
  if (bytes != m.payload_bytes())
    io_error(bin_path.string() + ": payload has " + std::to_string(bytes) + " bytes, shape needs " +
             std::to_string(m.payload_bytes()));
  std::vector<std::uint64_t> raw(bytes / 8);
  bin.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(bytes));
  for (auto& r : raw) r = to_little(r);
  if (m.kind == ElementKind::Real64) {
    out.real.resize(raw.size());
    std::memcpy(out.real.data(), raw.data(), bytes);
  } else {
    out.complex.resize(raw.size() / 2);
    std::memcpy(static_cast<void*>(out.complex.data()), raw.data(), bytes);
  }
  return out;
}

ProductWriter::ProductWriter(fs::path directory, std::string config_digest, int precision)
    : dir_(std::move(directory)), digest_(std::move(config_digest)), precision_(precision) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) io_error("cannot create " + dir_.string() + ": " + ec.message());
}

std::string ProductWriter::format(double v) const {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision_, v);
  return buf;
}

void ProductWriter::record(const std::string& name, const std::string& file, const std::string& kind) {
  const fs::path p = dir_ / file;
  records_.push_back({name, file, kind, stage_, static_cast<std::size_t>(fs::file_size(p)), sha256_file(p)});
}

void ProductWriter::write_payload(const std::string& file, const void* data, std::size_t n_doubles) {
  std::vector<std::uint64_t> raw(n_doubles);
  std::memcpy(raw.data(), data, n_doubles * 8);
  for (auto& r : raw) r = to_little(r);
  std::ofstream out(dir_ / file, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(n_doubles * 8));
  if (!out) io_error("cannot write " + (dir_ / file).string());
}

void ProductWriter::write_meta(const std::string& file, const ArrayMeta& m) {
  std::ostringstream s;
  s << "name = " << m.name << "\n";
  s << "kind = " << to_string(m.kind) << "\n";
  s << "endian = little\n";
  s << "shape = ";
  for (std::size_t i = 0; i < m.shape.size(); ++i) s << (i ? ", " : "") << m.shape[i];
  s << "\n";
  for (std::size_t i = 0; i < m.axes.size(); ++i) {
    const auto& a = m.axes[i];
    s << "axis." << i << " = " << a.name << ", " << a.unit << ", " << fmt17(a.start) << ", " << fmt17(a.step)
      << "\n";
  }
  s << "config_digest = " << m.config_digest << "\n";
  for (const auto& [k, v] : m.params) s << "param." << k << " = " << v << "\n";
  std::ofstream out(dir_ / file, std::ios::trunc);
  out << s.str();
  if (!out) io_error("cannot write " + (dir_ / file).string());
}

void ProductWriter::write_array(const std::string& name, ArrayMeta meta, const std::vector<double>& values) {
  meta.name = name;
  meta.kind = ElementKind::Real64;
  meta.config_digest = digest_;
  if (values.size() != meta.count()) throw ComputeError(ErrorKind::InvalidArgument, name + ": shape mismatch");
  write_payload(name + ".bin", values.data(), values.size());
  write_meta(name + ".meta", meta);
  record(name, name + ".bin", "array-payload");
  record(name, name + ".meta", "array-meta");
}

void ProductWriter::write_array(const std::string& name, ArrayMeta meta, const std::vector<cplx>& values) {
  meta.name = name;
  meta.kind = ElementKind::Complex128;
  meta.config_digest = digest_;
  if (values.size() != meta.count()) throw ComputeError(ErrorKind::InvalidArgument, name + ": shape mismatch");
  write_payload(name + ".bin", values.data(), 2 * values.size());
  write_meta(name + ".meta", meta);
  record(name, name + ".bin", "array-payload");
  record(name, name + ".meta", "array-meta");
}

void ProductWriter::write_table(const std::string& name, const Table& table) {
  std::ostringstream s;
  for (const auto& c : table.comments) s << "# " << c << "\n";
  s << "#";
  for (std::size_t i = 0; i < table.columns.size(); ++i) s << (i ? "\t" : " ") << table.columns[i];
  s << "\n";
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) s << (i ? "\t" : "") << row[i];
    s << "\n";
  }
  const std::string file = name + ".tsv";
  std::ofstream out(dir_ / file, std::ios::trunc);
  out << s.str();
  if (!out) io_error("cannot write " + (dir_ / file).string());
  out.close();
  record(name, file, "table");
}

void ProductWriter::write_text(const std::string& name, const std::string& text, const std::string& kind) {
  std::ofstream out(dir_ / name, std::ios::trunc);
  out << text;
  if (!out) io_error("cannot write " + (dir_ / name).string());
  out.close();
  record(name, name, kind);
}

ArrayMeta grid_meta(const CylGrid& grid, ElementKind kind) {
  ArrayMeta m;
  m.kind = kind;
  m.shape = {grid.n_z, grid.n_rho};
  m.axes = {{"z", "a.u.", grid.z_min, grid.dz()}, {"rho", "a.u.", grid.rho(0), grid.drho()}};
  return m;
}

std::string timed_name(const std::string& prefix, double t) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", t);
  return prefix + "_t" + buf;
}

}  // namespace tunnelexit
