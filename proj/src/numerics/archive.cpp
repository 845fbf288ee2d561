#include "hydo/numerics/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "hydo/numerics/errors.hpp"

namespace hydo {

static_assert(std::endian::native == std::endian::little, "archive encoding assumes little-endian host");

namespace {

constexpr std::string_view kMagic = "HYDOARCH";
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T pod() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ParseError("archive truncated at byte " + std::to_string(pos_));
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void Archive::put(const std::string& name, DenseArray value) { entries_[name] = std::move(value); }

void Archive::put_u64(const std::string& name, std::vector<std::uint64_t> values) {
  entries_[name] = std::move(values);
}

void Archive::put_string(const std::string& name, std::string value) { entries_[name] = std::move(value); }

const Archive::Entry& Archive::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ParseError("archive has no entry '" + name + "'");
  return it->second;
}

const DenseArray& Archive::array(const std::string& name) const {
  const auto* v = std::get_if<DenseArray>(&entry(name));
  if (!v) throw ParseError("archive entry '" + name + "' is not an array");
  return *v;
}

const std::vector<std::uint64_t>& Archive::u64(const std::string& name) const {
  const auto* v = std::get_if<std::vector<std::uint64_t>>(&entry(name));
  if (!v) throw ParseError("archive entry '" + name + "' is not an integer vector");
  return *v;
}

const std::string& Archive::string(const std::string& name) const {
  const auto* v = std::get_if<std::string>(&entry(name));
  if (!v) throw ParseError("archive entry '" + name + "' is not a string");
  return *v;
}

std::vector<std::string> Archive::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

std::string Archive::to_bytes() const {
  std::string out(kMagic);
  write_pod(out, kVersion);
  write_pod(out, static_cast<std::uint64_t>(entries_.size()));
  for (const auto& [name, value] : entries_) {
    write_pod(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    if (const auto* a = std::get_if<DenseArray>(&value)) {
      write_pod(out, std::uint8_t{0});
      write_pod(out, static_cast<std::uint32_t>(a->rank()));
      for (std::size_t d : a->shape()) write_pod(out, static_cast<std::uint64_t>(d));
      for (double x : a->values()) write_pod(out, x);
    } else if (const auto* u = std::get_if<std::vector<std::uint64_t>>(&value)) {
      write_pod(out, std::uint8_t{1});
      write_pod(out, static_cast<std::uint64_t>(u->size()));
      for (std::uint64_t x : *u) write_pod(out, x);
    } else {
      const auto& s = std::get<std::string>(value);
      write_pod(out, std::uint8_t{2});
      write_pod(out, static_cast<std::uint64_t>(s.size()));
      out += s;
    }
  }
  return out;
}

Archive Archive::from_bytes(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(kMagic.size()) != kMagic) throw ParseError("not an archive (bad magic)");
  const auto version = in.pod<std::uint32_t>();
  if (version != kVersion) throw ParseError("unsupported archive version " + std::to_string(version));
  const auto count = in.pod<std::uint64_t>();
  Archive archive;
  for (std::uint64_t e = 0; e < count; ++e) {
    const auto name_len = in.pod<std::uint32_t>();
    std::string name(in.take(name_len));
    const auto kind = in.pod<std::uint8_t>();
    if (kind == 0) {
      const auto rank = in.pod<std::uint32_t>();
      std::vector<std::size_t> shape(rank);
      for (auto& d : shape) d = static_cast<std::size_t>(in.pod<std::uint64_t>());
      DenseArray a(shape);
      for (double& x : a.values()) x = in.pod<double>();
      archive.put(name, std::move(a));
    } else if (kind == 1) {
      std::vector<std::uint64_t> values(in.pod<std::uint64_t>());
      for (auto& x : values) x = in.pod<std::uint64_t>();
      archive.put_u64(name, std::move(values));
    } else if (kind == 2) {
      const auto len = in.pod<std::uint64_t>();
      archive.put_string(name, std::string(in.take(len)));
    } else {
      throw ParseError("archive entry '" + name + "' has unknown kind " + std::to_string(kind));
    }
  }
  if (!in.done()) throw ParseError("trailing bytes after archive entries");
  return archive;
}

void Archive::save(const std::filesystem::path& path) const {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    const std::string bytes = to_bytes();
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Archive Archive::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open archive " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_bytes(buf.str());
}

void put_mlp(Archive& archive, const std::string& prefix, const MlpParams& params) {
  std::vector<std::uint64_t> activations;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& layer = params.layers[i];
    archive.put(prefix + ".layer" + std::to_string(i) + ".weight", layer.weight);
    archive.put(prefix + ".layer" + std::to_string(i) + ".bias", layer.bias);
    activations.push_back(static_cast<std::uint64_t>(layer.activation));
  }
  archive.put_u64(prefix + ".activations", std::move(activations));
}

MlpParams get_mlp(const Archive& archive, const std::string& prefix) {
  MlpParams params;
  const auto& activations = archive.u64(prefix + ".activations");
  for (std::size_t i = 0; i < activations.size(); ++i) {
    DenseLayer layer;
    layer.weight = archive.array(prefix + ".layer" + std::to_string(i) + ".weight");
    layer.bias = archive.array(prefix + ".layer" + std::to_string(i) + ".bias");
    if (activations[i] > static_cast<std::uint64_t>(Activation::relu)) {
      throw ParseError(prefix + ": unknown activation code");
    }
    layer.activation = static_cast<Activation>(activations[i]);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

void put_adam(Archive& archive, const std::string& prefix, const AdamState& state) {
  const auto& c = state.config;
  archive.put(prefix + ".config", DenseArray::row({c.learning_rate, c.beta1, c.beta2, c.epsilon}));
  archive.put_u64(prefix + ".step", {state.step, state.first_moment.size()});
  for (std::size_t i = 0; i < state.first_moment.size(); ++i) {
    archive.put(prefix + ".m" + std::to_string(i), state.first_moment[i]);
    archive.put(prefix + ".v" + std::to_string(i), state.second_moment[i]);
  }
}

AdamState get_adam(const Archive& archive, const std::string& prefix) {
  AdamState state;
  const auto& c = archive.array(prefix + ".config");
  if (c.size() != 4) throw ParseError(prefix + ".config: expected 4 values");
  state.config = AdamConfig{c[0], c[1], c[2], c[3]};
  const auto& header = archive.u64(prefix + ".step");
  if (header.size() != 2) throw ParseError(prefix + ".step: expected 2 values");
  state.step = header[0];
  for (std::uint64_t i = 0; i < header[1]; ++i) {
    state.first_moment.push_back(archive.array(prefix + ".m" + std::to_string(i)));
    state.second_moment.push_back(archive.array(prefix + ".v" + std::to_string(i)));
  }
  return state;
}

void put_rng(Archive& archive, const std::string& name, const RngStream& rng) {
  archive.put_u64(name, {rng.key(), rng.counter()});
}

RngStream get_rng(const Archive& archive, const std::string& name) {
  const auto& v = archive.u64(name);
  if (v.size() != 2) throw ParseError(name + ": expected rng (key, counter)");
  return RngStream(v[0], v[1]);
}

}  // namespace hydo
