#include "verif/npy.hpp"

#include <cstring>
#include <fstream>
#include <regex>
#include <sstream>

#include "verif/error.hpp"

namespace verif {
namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

[[noreturn]] void bad_npy(const std::string& why) { throw Error(ErrorCode::IoError, "invalid NPY data: " + why); }

template <typename T>
void append_values(const char* data, size_t count, std::vector<double>& out) {
  for (size_t i = 0; i < count; ++i) {
    T v;
    std::memcpy(&v, data + i * sizeof(T), sizeof(T));
    out.push_back(static_cast<double>(v));
  }
}

}  // namespace

Tensor parse_npy(const std::string& bytes) {
  if (bytes.size() < 10 || bytes.compare(0, 6, "\x93NUMPY") != 0) bad_npy("missing magic string");
  const auto major = static_cast<unsigned char>(bytes[6]);
  size_t header_len = 0;
  size_t offset = 0;
  if (major == 1) {
    header_len = static_cast<unsigned char>(bytes[8]) | (static_cast<size_t>(static_cast<unsigned char>(bytes[9])) << 8);
    offset = 10;
  } else if (major == 2 || major == 3) {
    if (bytes.size() < 12) bad_npy("truncated header");
    for (int i = 0; i < 4; ++i) header_len |= static_cast<size_t>(static_cast<unsigned char>(bytes[8 + i])) << (8 * i);
    offset = 12;
  } else {
    bad_npy("unsupported version " + std::to_string(major));
  }
  if (bytes.size() < offset + header_len) bad_npy("truncated header");
  const std::string header = bytes.substr(offset, header_len);

  std::smatch m;
  if (!std::regex_search(header, m, std::regex(R"('descr'\s*:\s*'([^']*)')"))) bad_npy("no descr");
  const std::string descr = m[1];
  if (std::regex_search(header, m, std::regex(R"('fortran_order'\s*:\s*(True|False))")) && m[1] == "True") {
    bad_npy("Fortran-ordered arrays are not supported");
  }
  if (!std::regex_search(header, m, std::regex(R"('shape'\s*:\s*\(([^)]*)\))"))) bad_npy("no shape");
  Shape shape;
  const std::string dims = m[1];
  const std::regex digits(R"(\d+)");
  for (std::sregex_iterator it(dims.begin(), dims.end(), digits), end; it != end; ++it) {
    shape.push_back(std::stoll(it->str()));
  }

  const int64_t count = element_count(shape);
  const char* data = bytes.data() + offset + header_len;
  const size_t available = bytes.size() - offset - header_len;
  std::vector<double> values;
  values.reserve(static_cast<size_t>(count));
  auto need = [&](size_t width) {
    if (available < width * static_cast<size_t>(count)) bad_npy("truncated data");
  };
  const auto n = static_cast<size_t>(count);
  DType dtype = DType::Float64;
  if (descr == "<f8") {
    need(8), append_values<double>(data, n, values);
  } else if (descr == "<f4") {
    need(4), append_values<float>(data, n, values);
    dtype = DType::Float32;
  } else if (descr == "<i8") {
    need(8), append_values<int64_t>(data, n, values);
  } else if (descr == "<i4") {
    need(4), append_values<int32_t>(data, n, values);
  } else if (descr == "|u1" || descr == "<u1") {
    need(1), append_values<uint8_t>(data, n, values);
  } else if (descr == "|b1") {
    need(1), append_values<uint8_t>(data, n, values);
  } else {
    bad_npy("unsupported dtype '" + descr + "'");
  }
  return Tensor(std::move(shape), std::move(values), dtype);
}

Tensor load_npy(const std::filesystem::path& path) { return parse_npy(read_file(path)); }

std::string encode_npy(const Tensor& tensor) {
  std::string shape = "(";
  for (size_t i = 0; i < tensor.shape().size(); ++i) {
    shape += std::to_string(tensor.shape()[i]);
    shape += tensor.shape().size() == 1 ? "," : (i + 1 < tensor.shape().size() ? ", " : "");
  }
  shape += ")";
  std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': " + shape + ", }";
  // Pad so that magic + version + length + header is a multiple of 64, ending in '\n'.
  const size_t total = 10 + header.size() + 1;
  header.append((64 - total % 64) % 64, ' ');
  header.push_back('\n');
  std::string out("\x93NUMPY\x01\x00", 8);
  out.push_back(static_cast<char>(header.size() & 0xff));
  out.push_back(static_cast<char>((header.size() >> 8) & 0xff));
  out += header;
  out.append(reinterpret_cast<const char*>(tensor.data().data()), tensor.data().size_bytes());
  return out;
}

void save_npy(const std::filesystem::path& path, const Tensor& tensor) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  const std::string bytes = encode_npy(tensor);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Tensor load_csv(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<double> values;
  int64_t rows = 0;
  int64_t cols = -1;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos || line[line.find_first_not_of(" \t")] == '#') continue;
    std::istringstream fields(line);
    std::string field;
    int64_t n = 0;
    while (std::getline(fields, field, ',')) {
      size_t used = 0;
      double v = 0;
      try {
        v = std::stod(field, &used);
      } catch (const std::exception&) {
        throw Error(ErrorCode::IoError, path.string() + ": non-numeric field '" + field + "'");
      }
      if (field.find_first_not_of(" \t", used) != std::string::npos) {
        throw Error(ErrorCode::IoError, path.string() + ": non-numeric field '" + field + "'");
      }
      values.push_back(v);
      ++n;
    }
    if (cols >= 0 && n != cols) throw Error(ErrorCode::IoError, path.string() + ": ragged rows");
    cols = n;
    ++rows;
  }
  return Tensor({rows, cols < 0 ? 0 : cols}, std::move(values));
}

}  // namespace verif
