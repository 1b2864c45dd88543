#include "netflow/io.hpp"

#include <array>
#include <charconv>
#include <system_error>

#include "netflow/error.hpp"

namespace netflow::io {

std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) throw Error("number formatting failed");
  return std::string(buf.data(), ptr);
}

CsvWriter::CsvWriter(const std::filesystem::path& path, std::span<const std::string_view> header)
    : path_(path), out_(path), columns_(header.size()) {
  if (!out_) throw Error("cannot open " + path.string() + " for writing");
  for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
  out_ << '\n';
}

CsvWriter::CsvWriter(const std::filesystem::path& path, std::initializer_list<std::string_view> header)
    : CsvWriter(path, std::span<const std::string_view>(header.begin(), header.size())) {}

void CsvWriter::separator() {
  if (in_row_ == columns_) throw Error("too many CSV cells in a row of " + path_.string());
  if (in_row_++) out_ << ',';
}

CsvWriter& CsvWriter::operator<<(double v) {
  separator();
  out_ << format_double(v);
  return *this;
}

CsvWriter& CsvWriter::operator<<(std::string_view s) {
  separator();
  out_ << s;
  return *this;
}

CsvWriter& CsvWriter::operator<<(std::size_t v) {
  separator();
  out_ << v;
  return *this;
}

void CsvWriter::end_row() {
  if (in_row_ != columns_) throw Error("incomplete CSV row in " + path_.string());
  out_ << '\n';
  in_row_ = 0;
}

void CsvWriter::close() {
  out_.close();
  if (!out_) throw Error("write failed for " + path_.string());
}

namespace {

void write_tensor_arrays(std::ofstream& out, std::string_view prefix,
                         std::span<const tensor::SymTensor2> values) {
  out << "FIELD " << prefix << "_fields 4\n";
  out << prefix << " 3 " << values.size() << " double\n";
  for (const auto& t : values)
    out << format_double(t.a) << ' ' << format_double(t.b) << ' ' << format_double(t.c) << '\n';
  const char* names[] = {"lambda1", "lambda2", "frobenius"};
  for (int which = 0; which < 3; ++which) {
    out << prefix << '_' << names[which] << " 1 " << values.size() << " double\n";
    for (const auto& t : values) {
      const tensor::Eigen2 e = tensor::eig(t);
      const double v = which == 0 ? e.lambda1 : which == 1 ? e.lambda2 : tensor::frobenius(t);
      out << format_double(v) << '\n';
    }
  }
}

void write_scalars(std::ofstream& out, const NamedScalars& s, std::span<const std::size_t> source) {
  out << "SCALARS " << s.name << " double 1\nLOOKUP_TABLE default\n";
  for (std::size_t i : source) out << format_double(s.values[i]) << '\n';
}

}  // namespace

void write_vtk(const std::filesystem::path& path, const mesh::TriMesh& mesh,
               const tensor::CellTensorField* cell_tensors,
               std::span<const tensor::SymTensor2> point_tensors,
               std::span<const NamedScalars> point_scalars,
               std::span<const NamedScalars> cell_scalars) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  const bool refined = cell_tensors && cell_tensors->pieces == 3;
  const std::size_t nv = mesh.vertex_count();
  const std::size_t nt = mesh.triangle_count();
  const auto tris = mesh.triangles();

  out << "# vtk DataFile Version 3.0\nnetflow\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  const std::size_t npoints = refined ? nv + nt : nv;
  out << "POINTS " << npoints << " double\n";
  for (const auto& p : mesh.vertices())
    out << format_double(p.x) << ' ' << format_double(p.y) << " 0\n";
  if (refined)
    for (std::size_t t = 0; t < nt; ++t) {
      const auto c = mesh.centroid(t);
      out << format_double(c.x) << ' ' << format_double(c.y) << " 0\n";
    }

  const std::size_t ncells = refined ? 3 * nt : nt;
  std::vector<std::size_t> cell_source(ncells);
  out << "CELLS " << ncells << ' ' << 4 * ncells << '\n';
  for (std::size_t t = 0; t < nt; ++t) {
    if (refined) {
      for (int k = 0; k < 3; ++k) {
        out << "3 " << tris[t][k] << ' ' << tris[t][(k + 1) % 3] << ' ' << nv + t << '\n';
        cell_source[3 * t + static_cast<std::size_t>(k)] = t;
      }
    } else {
      out << "3 " << tris[t][0] << ' ' << tris[t][1] << ' ' << tris[t][2] << '\n';
      cell_source[t] = t;
    }
  }
  out << "CELL_TYPES " << ncells << '\n';
  for (std::size_t i = 0; i < ncells; ++i) out << "5\n";

  if (cell_tensors || !cell_scalars.empty()) {
    out << "CELL_DATA " << ncells << '\n';
    for (const auto& s : cell_scalars) write_scalars(out, s, cell_source);
    if (cell_tensors) {
      if (refined || cell_tensors->pieces == 1) {
        write_tensor_arrays(out, "tensor", cell_tensors->values);
      } else {
        std::vector<tensor::SymTensor2> means(nt);
        for (std::size_t t = 0; t < nt; ++t) means[t] = cell_tensors->mean(t);
        write_tensor_arrays(out, "tensor", means);
      }
    }
  }

  if (!point_tensors.empty() || !point_scalars.empty()) {
    // Centroid points of the refined grid carry the mean of the triangle's vertices.
    out << "POINT_DATA " << npoints << '\n';
    std::vector<std::size_t> identity(nv);
    for (std::size_t i = 0; i < nv; ++i) identity[i] = i;
    for (const auto& s : point_scalars) {
      if (!refined) {
        write_scalars(out, s, identity);
        continue;
      }
      std::vector<double> ext(s.values.begin(), s.values.end());
      for (std::size_t t = 0; t < nt; ++t)
        ext.push_back((s.values[tris[t][0]] + s.values[tris[t][1]] + s.values[tris[t][2]]) / 3.0);
      std::vector<std::size_t> all(npoints);
      for (std::size_t i = 0; i < npoints; ++i) all[i] = i;
      write_scalars(out, NamedScalars{s.name, ext}, all);
    }
    if (!point_tensors.empty()) {
      std::vector<tensor::SymTensor2> ext(point_tensors.begin(), point_tensors.end());
      if (refined)
        for (std::size_t t = 0; t < nt; ++t)
          ext.push_back((1.0 / 3.0) * (point_tensors[tris[t][0]] + point_tensors[tris[t][1]] +
                                       point_tensors[tris[t][2]]));
      write_tensor_arrays(out, "point_tensor", ext);
    }
  }
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace netflow::io
