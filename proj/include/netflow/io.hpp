#pragma once

// CSV and legacy-VTK writers shared by the library and the command-line driver.

#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "netflow/mesh.hpp"
#include "netflow/tensor.hpp"

namespace netflow::io {

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double v);

/// Row-oriented CSV writer. Cells are separated by commas, rows by '\n'.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::span<const std::string_view> header);
  CsvWriter(const std::filesystem::path& path, std::initializer_list<std::string_view> header);

  CsvWriter& operator<<(double v);
  CsvWriter& operator<<(std::string_view s);
  CsvWriter& operator<<(std::size_t v);
  void end_row();
  void close();

 private:
  void separator();

  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t columns_;
  std::size_t in_row_ = 0;
};

struct NamedScalars {
  std::string name;
  std::span<const double> values;
};

/// Legacy ASCII unstructured grid of triangles (cell type 5).
///
/// A cell tensor field with three pieces per triangle is written on the
/// barycentric refinement (one VTK cell per piece, centroids appended as extra
/// points). Each tensor array is emitted as a 3-component array (a, b, c) plus
/// lambda1, lambda2 and frobenius scalars.
void write_vtk(const std::filesystem::path& path, const mesh::TriMesh& mesh,
               const tensor::CellTensorField* cell_tensors,
               std::span<const tensor::SymTensor2> point_tensors = {},
               std::span<const NamedScalars> point_scalars = {},
               std::span<const NamedScalars> cell_scalars = {});

}  // namespace netflow::io
