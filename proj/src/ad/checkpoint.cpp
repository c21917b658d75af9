#include "icil/ad/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "icil/common/error.hpp"

namespace icil::ad {

namespace {

constexpr char kMagic[8] = {'I', 'C', 'I', 'L', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& is, const std::string& what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw FormatError("checkpoint: truncated while reading " + what);
  return v;
}

std::string take_string(std::istream& is, std::size_t n, const std::string& what) {
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw FormatError("checkpoint: truncated while reading " + what);
  return s;
}

}  // namespace

void Checkpoint::append(const ParameterStore& store) {
  for (const auto& e : store.entries()) arrays.push_back({e.name, e.var.value()});
}

std::size_t Checkpoint::restore(ParameterStore& store) const {
  std::size_t n = 0;
  for (const NamedArray& a : arrays) {
    if (store.contains(a.name)) {
      store.assign(a.name, a.value);
      ++n;
    }
  }
  return n;
}

const Array& Checkpoint::find(const std::string& name) const {
  for (const NamedArray& a : arrays) {
    if (a.name == name) return a.value;
  }
  throw FormatError("checkpoint: no array named '" + name + "'");
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("checkpoint: cannot open '" + path.string() + "' for writing");
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, Checkpoint::kFormatVersion);
  put<std::uint64_t>(os, checkpoint.metadata.size());
  os.write(checkpoint.metadata.data(), static_cast<std::streamsize>(checkpoint.metadata.size()));
  put<std::uint64_t>(os, checkpoint.arrays.size());
  for (const NamedArray& a : checkpoint.arrays) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(a.name.size()));
    os.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(a.value.rank()));
    for (std::size_t d : a.value.shape()) put<std::uint64_t>(os, d);
  }
  for (const NamedArray& a : checkpoint.arrays) {
    os.write(reinterpret_cast<const char*>(a.value.data().data()),
             static_cast<std::streamsize>(a.value.size() * sizeof(double)));
  }
  if (!os) throw Error("checkpoint: write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("checkpoint: cannot open '" + path.string() + "'");
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("checkpoint: '" + path.string() + "' is not a parameter checkpoint");
  }
  const auto version = take<std::uint32_t>(is, "version");
  if (version != Checkpoint::kFormatVersion) {
    throw FormatError("checkpoint: unsupported format version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.metadata = take_string(is, take<std::uint64_t>(is, "metadata size"), "metadata");
  const auto count = take<std::uint64_t>(is, "array count");
  std::vector<std::pair<std::string, Shape>> header;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = take_string(is, take<std::uint32_t>(is, "name size"), "name");
    const auto rank = take<std::uint32_t>(is, "rank");
    Shape shape(rank);
    for (auto& d : shape) d = take<std::uint64_t>(is, "extent");
    header.emplace_back(std::move(name), std::move(shape));
  }
  for (auto& [name, shape] : header) {
    std::vector<double> data(shape_size(shape));
    is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!is) throw FormatError("checkpoint: truncated payload for '" + name + "'");
    ck.arrays.push_back({name, Array(shape, std::move(data))});
  }
  return ck;
}

}  // namespace icil::ad
