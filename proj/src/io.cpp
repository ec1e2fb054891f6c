#include "ufo/io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts need byte swaps");

namespace ufo {

namespace {

struct FileWriter {
  std::ofstream out;
  explicit FileWriter(const std::string& path) : out(path, std::ios::binary) {
    if (!out) throw IoError("cannot open for write: " + path);
  }
  void bytes(const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), std::streamsize(n));
  }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void f32(float v) { bytes(&v, 4); }
};

struct FileReader {
  std::ifstream in;
  std::string path;
  explicit FileReader(const std::string& p) : in(p, std::ios::binary), path(p) {
    if (!in) throw IoError("cannot open for read: " + p);
  }
  void bytes(void* p, std::size_t n) {
    in.read(static_cast<char*>(p), std::streamsize(n));
    if (std::size_t(in.gcount()) != n) throw IoError("truncated file: " + path);
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, 8);
    return v;
  }
  float f32() {
    float v;
    bytes(&v, 4);
    return v;
  }
};

void write_f32_block(FileWriter& w, const double* p, std::size_t n) {
  std::vector<float> buf(n);
  for (std::size_t i = 0; i < n; ++i) buf[i] = float(p[i]);
  w.bytes(buf.data(), n * sizeof(float));
}

void read_f32_block(FileReader& r, double* p, std::size_t n) {
  std::vector<float> buf(n);
  r.bytes(buf.data(), n * sizeof(float));
  for (std::size_t i = 0; i < n; ++i) p[i] = double(buf[i]);
}

void check_magic(FileReader& r, const char magic[4]) {
  char got[4];
  r.bytes(got, 4);
  if (std::memcmp(got, magic, 4) != 0) {
    throw IoError("bad magic in " + r.path + ": expected " + std::string(magic, 4));
  }
}

constexpr std::uint32_t kFormatVersion = 1;

}  // namespace

void write_feature_matrix(const std::string& path, const Mat& rows) {
  FileWriter w(path);
  w.bytes("UFOF", 4);
  w.u32(std::uint32_t(rows.rows()));
  w.u32(std::uint32_t(rows.cols()));
  w.u32(kFormatVersion);
  // Row-major on disk; Mat is column-major in memory.
  std::vector<float> buf(std::size_t(rows.cols()));
  for (Index i = 0; i < rows.rows(); ++i) {
    for (Index j = 0; j < rows.cols(); ++j) buf[std::size_t(j)] = float(rows(i, j));
    w.bytes(buf.data(), buf.size() * sizeof(float));
  }
}

Mat read_feature_matrix(const std::string& path) {
  FileReader r(path);
  check_magic(r, "UFOF");
  const std::uint32_t n = r.u32();
  const std::uint32_t d = r.u32();
  (void)r.u32();  // version
  Mat rows(n, d);
  std::vector<float> buf(d);
  for (std::uint32_t i = 0; i < n; ++i) {
    r.bytes(buf.data(), buf.size() * sizeof(float));
    for (std::uint32_t j = 0; j < d; ++j) rows(i, j) = double(buf[j]);
  }
  return rows;
}

void write_checkpoint(const std::string& path, const char magic[4],
                      const std::vector<const MlpParams*>& mlps) {
  FileWriter w(path);
  w.bytes(magic, 4);
  w.u32(kFormatVersion);
  w.u32(std::uint32_t(mlps.size()));
  for (const MlpParams* p : mlps) {
    w.u32(std::uint32_t(p->layers.size()));
    for (const auto& l : p->layers) {
      w.u32(std::uint32_t(l.W.rows()));
      w.u32(std::uint32_t(l.W.cols()));
      w.u32(std::uint32_t(l.act));
    }
    for (const auto& l : p->layers) {
      // Row-major weight block, then bias.
      Mat wt = l.W.transpose();  // column-major transpose = row-major W
      write_f32_block(w, wt.data(), std::size_t(wt.size()));
      write_f32_block(w, l.b.data(), std::size_t(l.b.size()));
    }
  }
}

std::vector<MlpParams> read_checkpoint(const std::string& path, const char magic[4]) {
  FileReader r(path);
  check_magic(r, magic);
  (void)r.u32();  // version
  const std::uint32_t count = r.u32();
  std::vector<MlpParams> mlps(count);
  for (auto& p : mlps) {
    const std::uint32_t n_layers = r.u32();
    struct Header {
      std::uint32_t out, in, act;
    };
    std::vector<Header> headers(n_layers);
    for (auto& h : headers) {
      h.out = r.u32();
      h.in = r.u32();
      h.act = r.u32();
      if (h.act > 2) throw IoError("bad activation code in " + path);
    }
    for (const auto& h : headers) {
      MlpLayer l;
      Mat wt(h.in, h.out);
      read_f32_block(r, wt.data(), std::size_t(wt.size()));
      l.W = wt.transpose();
      l.b = Vec(h.out);
      read_f32_block(r, l.b.data(), std::size_t(l.b.size()));
      l.act = Activation(h.act);
      p.layers.push_back(std::move(l));
    }
    p.validate();
  }
  return mlps;
}

std::uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot hash missing file: " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[65536];
  while (in) {
    in.read(buf, sizeof(buf));
    h = fnv1a64(buf, std::size_t(in.gcount()), h);
  }
  return h;
}

bool file_exists(const std::string& path) {
  return std::filesystem::exists(path);
}

void write_text_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for write: " + path);
  out << contents;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for read: " + path);
  std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return s;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for read: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    lines.push_back(line);
  }
  return lines;
}

}  // namespace ufo
