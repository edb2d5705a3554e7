#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tunnelexit/grid.hpp"

namespace tunnelexit {

enum class ElementKind { Real64, Complex128 };

std::string to_string(ElementKind kind);
std::size_t element_size(ElementKind kind);

/// Uniform axis: values start + i * step for i < shape along it.
struct Axis {
  std::string name;
  std::string unit;
  double start = 0.0;
  double step = 0.0;
};

/// Sidecar contents of an array product. The payload is a raw little-endian
/// dump in row-major order (last axis fastest).
struct ArrayMeta {
  std::string name;
  ElementKind kind = ElementKind::Real64;
  std::vector<std::size_t> shape;
  std::vector<Axis> axes;
  std::string config_digest;
  std::map<std::string, std::string> params;

  std::size_t count() const;
  std::size_t payload_bytes() const { return count() * element_size(kind); }
};

struct ArrayData {
  ArrayMeta meta;
  std::vector<double> real;    // Real64
  std::vector<cplx> complex;   // Complex128
};

/// Reads "<stem>.meta" and "<stem>.bin"; either path may be given. Throws
/// ComputeError(Io) on a missing file, a malformed sidecar or a payload whose
/// length disagrees with the shape.
ArrayData read_array(const std::filesystem::path& path);

/// Tab-separated text table. Lines starting with '#' before the data are
/// comments; the last of them names the columns.
struct Table {
  std::vector<std::string> comments;  // without the leading "# "
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;  // throws Io if absent
  double number(std::size_t row, const std::string& name) const;
};

Table read_table(const std::filesystem::path& path);

/// One detector momentum per data line: p_z and p_rho separated by
/// whitespace. Comment ('#') and blank lines are skipped.
std::vector<std::pair<double, double>> read_two_columns(const std::filesystem::path& path);

struct ProductRecord {
  std::string name;
  std::string file;  // relative to the output directory
  std::string kind;  // array-meta, array-payload, table, text, json
  std::string stage;
  std::size_t bytes = 0;
  std::string sha256;
};

/// Writes products into one directory and keeps a record of every file.
class ProductWriter {
 public:
  ProductWriter(std::filesystem::path directory, std::string config_digest, int precision);

  const std::filesystem::path& directory() const { return dir_; }
  const std::string& config_digest() const { return digest_; }
  void set_stage(std::string stage) { stage_ = std::move(stage); }

  /// Writes name.bin and name.meta; meta.name and meta.config_digest are
  /// filled in here.
  void write_array(const std::string& name, ArrayMeta meta, const std::vector<double>& values);
  void write_array(const std::string& name, ArrayMeta meta, const std::vector<cplx>& values);

  void write_table(const std::string& name, const Table& table);
  void write_text(const std::string& name, const std::string& text, const std::string& kind = "text");

  /// Number formatting used for every text product.
  std::string format(double v) const;

  const std::vector<ProductRecord>& records() const { return records_; }

 private:
  void record(const std::string& name, const std::string& file, const std::string& kind);
  void write_payload(const std::string& file, const void* data, std::size_t n_doubles);
  void write_meta(const std::string& file, const ArrayMeta& meta);

  std::filesystem::path dir_;
  std::string digest_;
  int precision_;
  std::string stage_;
  std::vector<ProductRecord> records_;
};

/// Array meta for a full wavefunction-shaped field on the grid.
ArrayMeta grid_meta(const CylGrid& grid, ElementKind kind);

/// Product name for a time, e.g. "snapshot_t150" or "snapshot_t150.5".
std::string timed_name(const std::string& prefix, double t);

}  // namespace tunnelexit
