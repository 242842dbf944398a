#include "softmask/common/archive.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "softmask/common/errors.hpp"

namespace softmask {
namespace {

constexpr const char* kMagic = "SOFTMASK-ARCHIVE";

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string dtype_name(const torch::Tensor& t) {
  if (t.scalar_type() == torch::kFloat32) return "float32";
  if (t.scalar_type() == torch::kInt64) return "int64";
  throw ArgumentError("archive: unsupported dtype " + std::string(c10::toString(t.scalar_type())));
}

torch::ScalarType dtype_from_name(const std::string& name) {
  if (name == "float32") return torch::kFloat32;
  if (name == "int64") return torch::kInt64;
  throw ParseError("archive: unknown dtype '" + name + "'");
}

void to_little_endian(char* bytes, std::size_t n, std::size_t width) {
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i + width <= n; i += width) std::reverse(bytes + i, bytes + i + width);
  }
}

std::string shape_text(const std::vector<std::int64_t>& shape) {
  if (shape.empty()) return "scalar";
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(shape[i]);
  }
  return s;
}

std::vector<std::int64_t> parse_shape(const std::string& text) {
  std::vector<std::int64_t> shape;
  if (text == "scalar") return shape;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) shape.push_back(std::stoll(part));
  return shape;
}

std::string read_line(std::istream& in, const std::filesystem::path& path) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("archive " + path.string() + ": truncated preamble");
  return line;
}

std::pair<std::string, std::string> split_first(const std::string& line) {
  auto pos = line.find(' ');
  if (pos == std::string::npos) return {line, ""};
  return {line.substr(0, pos), line.substr(pos + 1)};
}

}  // namespace

void TensorArchive::set(const std::string& key, const std::string& value) {
  if (key.empty() || key.find_first_of(" \n") != std::string::npos || value.find('\n') != std::string::npos)
    throw ArgumentError("archive: header key/value must be single-line and key space-free: " + key);
  header_[key] = value;
}
void TensorArchive::set(const std::string& key, double value) { set(key, format_double(value)); }
void TensorArchive::set(const std::string& key, std::int64_t value) { set(key, std::to_string(value)); }

const std::string& TensorArchive::get(const std::string& key) const {
  auto it = header_.find(key);
  if (it == header_.end()) throw DataError("archive: missing header key '" + key + "'");
  return it->second;
}
double TensorArchive::get_double(const std::string& key) const { return std::stod(get(key)); }
std::int64_t TensorArchive::get_int(const std::string& key) const { return std::stoll(get(key)); }

void TensorArchive::put(const std::string& name, const torch::Tensor& tensor) {
  if (name.empty() || name.find_first_of(" \n") != std::string::npos)
    throw ArgumentError("archive: tensor names must be non-empty and space-free: '" + name + "'");
  auto t = tensor.detach().to(torch::kCPU);
  if (t.is_floating_point()) t = t.to(torch::kFloat32);
  dtype_name(t);
  tensors_[name] = t.contiguous().clone();
}

const torch::Tensor& TensorArchive::tensor(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw DataError("archive: missing tensor '" + name + "'");
  return it->second;
}

std::vector<std::string> TensorArchive::names() const {
  std::vector<std::string> out;
  out.reserve(tensors_.size());
  for (const auto& [k, v] : tensors_) out.push_back(k);
  return out;
}

std::vector<ArchiveEntry> TensorArchive::manifest() const {
  std::vector<ArchiveEntry> out;
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors_) {
    ArchiveEntry e;
    e.name = name;
    e.dtype = dtype_name(t);
    e.shape = t.sizes().vec();
    e.offset = offset;
    e.nbytes = static_cast<std::uint64_t>(t.numel()) * t.element_size();
    offset += e.nbytes;
    out.push_back(std::move(e));
  }
  return out;
}

void TensorArchive::save(const std::filesystem::path& path) const {
  std::ostringstream out;
  out << kMagic << '\n' << "schema " << schema_ << '\n' << "version " << version_ << '\n';
  out << "header " << header_.size() << '\n';
  for (const auto& [k, v] : header_) out << k << ' ' << v << '\n';
  const auto entries = manifest();
  out << "manifest " << entries.size() << '\n';
  for (const auto& e : entries)
    out << e.name << ' ' << e.dtype << ' ' << shape_text(e.shape) << ' ' << e.offset << ' ' << e.nbytes << '\n';
  out << "payload\n";
  for (const auto& e : entries) {
    const auto& t = tensors_.at(e.name);
    std::string bytes(static_cast<const char*>(t.data_ptr()), e.nbytes);
    to_little_endian(bytes.data(), bytes.size(), t.element_size());
    out << bytes;
  }
  write_file_atomically(path, out.str());
}

TensorArchive TensorArchive::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("archive: cannot open " + path.string());
  if (read_line(in, path) != kMagic) throw ParseError("archive " + path.string() + ": bad magic");

  TensorArchive archive;
  auto [schema_key, schema] = split_first(read_line(in, path));
  auto [version_key, version] = split_first(read_line(in, path));
  if (schema_key != "schema" || version_key != "version") throw ParseError("archive " + path.string() + ": bad preamble");
  archive.schema_ = schema;
  archive.version_ = std::stoi(version);
  if (archive.version_ != kVersion)
    throw ParseError("archive " + path.string() + ": unsupported version " + version);

  auto [header_key, header_count] = split_first(read_line(in, path));
  if (header_key != "header") throw ParseError("archive " + path.string() + ": expected header block");
  for (long i = 0, n = std::stol(header_count); i < n; ++i) {
    auto [k, v] = split_first(read_line(in, path));
    archive.header_[k] = v;
  }

  auto [manifest_key, manifest_count] = split_first(read_line(in, path));
  if (manifest_key != "manifest") throw ParseError("archive " + path.string() + ": expected manifest block");
  std::vector<ArchiveEntry> entries;
  for (long i = 0, n = std::stol(manifest_count); i < n; ++i) {
    std::istringstream ls(read_line(in, path));
    ArchiveEntry e;
    std::string shape;
    if (!(ls >> e.name >> e.dtype >> shape >> e.offset >> e.nbytes))
      throw ParseError("archive " + path.string() + ": malformed manifest line " + std::to_string(i));
    e.shape = parse_shape(shape);
    entries.push_back(std::move(e));
  }
  if (read_line(in, path) != "payload") throw ParseError("archive " + path.string() + ": expected payload marker");

  const auto payload_start = in.tellg();
  for (const auto& e : entries) {
    auto t = torch::empty(e.shape, torch::TensorOptions().dtype(dtype_from_name(e.dtype)));
    if (static_cast<std::uint64_t>(t.numel()) * t.element_size() != e.nbytes)
      throw ParseError("archive " + path.string() + ": size mismatch for " + e.name);
    in.seekg(payload_start + static_cast<std::streamoff>(e.offset));
    in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(e.nbytes));
    if (!in) throw ParseError("archive " + path.string() + ": truncated payload at " + e.name);
    to_little_endian(static_cast<char*>(t.data_ptr()), e.nbytes, t.element_size());
    archive.tensors_[e.name] = t;
  }
  return archive;
}

void put_module(TensorArchive& archive, const std::string& prefix, const torch::nn::Module& module) {
  for (const auto& p : module.named_parameters()) archive.put(prefix + "." + p.key(), p.value());
  for (const auto& b : module.named_buffers()) archive.put(prefix + "." + b.key(), b.value());
}

void load_module(const TensorArchive& archive, const std::string& prefix, torch::nn::Module& module) {
  torch::NoGradGuard no_grad;
  auto copy_into = [&](const std::string& name, torch::Tensor& dst) {
    const auto& src = archive.tensor(prefix + "." + name);
    if (src.sizes() != dst.sizes())
      throw DataError("archive: shape mismatch for " + prefix + "." + name);
    dst.copy_(src);
  };
  for (auto& p : module.named_parameters()) copy_into(p.key(), p.value());
  for (auto& b : module.named_buffers()) copy_into(b.key(), b.value());
}

void put_adam_state(TensorArchive& archive, const std::string& prefix, const torch::nn::Module& module,
                    torch::optim::Adam& optimizer) {
  auto& state = optimizer.state();
  for (const auto& p : module.named_parameters()) {
    auto it = state.find(p.value().unsafeGetTensorImpl());
    if (it == state.end()) continue;
    auto& s = static_cast<torch::optim::AdamParamState&>(*it->second);
    archive.put(prefix + "." + p.key() + ".exp_avg", s.exp_avg());
    archive.put(prefix + "." + p.key() + ".exp_avg_sq", s.exp_avg_sq());
    archive.set(prefix + "." + p.key() + ".step", static_cast<std::int64_t>(s.step()));
  }
}

void load_adam_state(const TensorArchive& archive, const std::string& prefix, const torch::nn::Module& module,
                     torch::optim::Adam& optimizer) {
  auto& state = optimizer.state();
  state.clear();
  for (const auto& p : module.named_parameters()) {
    const std::string base = prefix + "." + p.key();
    if (!archive.has(base + ".step")) continue;
    auto s = std::make_unique<torch::optim::AdamParamState>();
    s->step(archive.get_int(base + ".step"));
    s->exp_avg(archive.tensor(base + ".exp_avg").clone());
    s->exp_avg_sq(archive.tensor(base + ".exp_avg_sq").clone());
    state[p.value().unsafeGetTensorImpl()] = std::move(s);
  }
}

void put_sgd_state(TensorArchive& archive, const std::string& prefix, const torch::nn::Module& module,
                   torch::optim::SGD& optimizer) {
  auto& state = optimizer.state();
  for (const auto& p : module.named_parameters()) {
    auto it = state.find(p.value().unsafeGetTensorImpl());
    if (it == state.end()) continue;
    auto& s = static_cast<torch::optim::SGDParamState&>(*it->second);
    if (s.momentum_buffer().defined()) archive.put(prefix + "." + p.key() + ".momentum", s.momentum_buffer());
  }
}

void load_sgd_state(const TensorArchive& archive, const std::string& prefix, const torch::nn::Module& module,
                    torch::optim::SGD& optimizer) {
  auto& state = optimizer.state();
  state.clear();
  for (const auto& p : module.named_parameters()) {
    const std::string name = prefix + "." + p.key() + ".momentum";
    if (!archive.contains(name)) continue;
    auto s = std::make_unique<torch::optim::SGDParamState>();
    s->momentum_buffer(archive.tensor(name).clone());
    state[p.value().unsafeGetTensorImpl()] = std::move(s);
  }
}

void write_file_atomically(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw DataError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace softmask
