#include "resq/factorization/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

#include "resq/error.hpp"

namespace resq {

namespace {

constexpr char kMagic[8] = {'R', 'E', 'S', 'Q', 'A', 'R', 'R', '1'};

std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::uint64_t out = 0;
    for (int i = 0; i < 8; ++i) out |= ((v >> (8 * i)) & 0xFFu) << (8 * (7 - i));
    return out;
  }
}

void write_u64(std::ostream& os, std::uint64_t v) {
  v = to_little(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return to_little(v);
}

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* suffix) {
  return std::filesystem::path(stem.string() + suffix);
}

void append_prefixed(std::vector<NamedArray>& out, const std::string& prefix, const ad::ParameterRefs& params) {
  for (const ad::Parameter* p : params) {
    out.push_back({prefix + p->name, p->value.shape(), {p->value.data().begin(), p->value.data().end()}});
  }
}

}  // namespace

void save_archive(const std::filesystem::path& stem, const std::vector<NamedArray>& arrays,
                  const nlohmann::json& extra) {
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  nlohmann::json manifest = {{"format", "resq-array-archive"}, {"version", 1},  {"dtype", "float64"},
                             {"byte_order", "little"},         {"extra", extra}, {"arrays", nlohmann::json::array()}};
  std::uint64_t offset = 0;
  for (const NamedArray& a : arrays) {
    if (a.data.size() != ad::shape_size(a.shape)) throw DimensionError("archive array " + a.name + " size mismatch");
    manifest["arrays"].push_back({{"name", a.name}, {"shape", a.shape}, {"offset", offset}});
    offset += a.data.size();
  }

  std::ofstream bin(with_suffix(stem, ".bin"), std::ios::binary | std::ios::trunc);
  if (!bin) throw std::runtime_error("cannot write " + with_suffix(stem, ".bin").string());
  bin.write(kMagic, sizeof kMagic);
  write_u64(bin, offset);
  for (const NamedArray& a : arrays) {
    for (double d : a.data) write_u64(bin, std::bit_cast<std::uint64_t>(d));
  }
  if (!bin) throw std::runtime_error("failed writing " + with_suffix(stem, ".bin").string());

  std::ofstream js(with_suffix(stem, ".json"), std::ios::trunc);
  if (!js) throw std::runtime_error("cannot write " + with_suffix(stem, ".json").string());
  js << manifest.dump(2) << "\n";
}

std::vector<NamedArray> load_archive(const std::filesystem::path& stem, nlohmann::json* extra) {
  std::ifstream js(with_suffix(stem, ".json"));
  if (!js) throw std::runtime_error("cannot read " + with_suffix(stem, ".json").string());
  const nlohmann::json manifest = nlohmann::json::parse(js);
  if (manifest.value("format", "") != "resq-array-archive") {
    throw std::runtime_error(with_suffix(stem, ".json").string() + " is not an array archive manifest");
  }

  std::ifstream bin(with_suffix(stem, ".bin"), std::ios::binary);
  if (!bin) throw std::runtime_error("cannot read " + with_suffix(stem, ".bin").string());
  char magic[8];
  bin.read(magic, sizeof magic);
  if (!bin || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw std::runtime_error(with_suffix(stem, ".bin").string() + ": bad magic");
  }
  const std::uint64_t total = read_u64(bin);
  std::vector<double> payload(total);
  for (double& d : payload) d = std::bit_cast<double>(read_u64(bin));
  if (!bin) throw std::runtime_error(with_suffix(stem, ".bin").string() + ": truncated payload");

  std::vector<NamedArray> arrays;
  for (const auto& entry : manifest.at("arrays")) {
    NamedArray a;
    a.name = entry.at("name").get<std::string>();
    a.shape = entry.at("shape").get<ad::Shape>();
    const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
    const std::size_t count = ad::shape_size(a.shape);
    if (offset + count > total) throw std::runtime_error("archive entry " + a.name + " exceeds payload");
    a.data.assign(payload.begin() + static_cast<std::ptrdiff_t>(offset),
                  payload.begin() + static_cast<std::ptrdiff_t>(offset + count));
    arrays.push_back(std::move(a));
  }
  if (extra) *extra = manifest.value("extra", nlohmann::json::object());
  return arrays;
}

std::vector<NamedArray> model_arrays(FactorizedQModel& model) {
  std::vector<NamedArray> out;
  append_prefixed(out, "online.", model.parameters(Copy::online));
  append_prefixed(out, "target.", model.parameters(Copy::target));
  return out;
}

void restore_model(FactorizedQModel& model, const std::vector<NamedArray>& arrays) {
  std::map<std::string, const NamedArray*> by_name;
  for (const NamedArray& a : arrays) by_name[a.name] = &a;
  for (auto [prefix, copy] : {std::pair{"online.", Copy::online}, std::pair{"target.", Copy::target}}) {
    for (ad::Parameter* p : model.parameters(copy)) {
      auto it = by_name.find(std::string(prefix) + p->name);
      if (it == by_name.end()) throw std::runtime_error("checkpoint is missing parameter " + std::string(prefix) + p->name);
      if (it->second->shape != p->value.shape()) {
        throw DimensionError("checkpoint parameter " + it->first + " has shape " + ad::shape_string(it->second->shape) +
                             ", model expects " + ad::shape_string(p->value.shape()));
      }
      p->value = ad::Tensor(it->second->shape, it->second->data);
    }
  }
}

void save_model(FactorizedQModel& model, const std::filesystem::path& stem) { save_archive(stem, model_arrays(model)); }

void load_model(FactorizedQModel& model, const std::filesystem::path& stem) { restore_model(model, load_archive(stem)); }

}  // namespace resq
