#include "verco/textgen/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "verco/common/error.hpp"

namespace verco::textgen {

namespace {
constexpr char kMagic[8] = {'V', 'E', 'R', 'C', 'O', 'C', 'K', 'P'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void write_raw(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T read_raw(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw FormatError("checkpoint truncated");
  return v;
}
}  // namespace

const std::string& Checkpoint::attribute(const std::string& key) const {
  auto it = attributes.find(key);
  if (it == attributes.end()) throw FormatError("checkpoint lacks attribute '" + key + "'");
  return it->second;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  nlohmann::json header;
  header["version"] = kCheckpointVersion;
  header["attributes"] = attributes;
  header["slots"] = {std::string(to_string(SlotId::kMessage)), std::string(to_string(SlotId::kAction))};
  auto& dir = header["tensors"] = nlohmann::json::array();
  for (const auto& [name, t] : tensors) dir.push_back({{"name", name}, {"rows", t.rows}, {"cols", t.cols}, {"dtype", "f64"}});
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write checkpoint " + tmp.string());
    out.write(kMagic, sizeof(kMagic));
    write_raw<std::uint32_t>(out, kCheckpointVersion);
    write_raw<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : tensors) {
      out.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(Scalar)));
    }
    if (!out) throw FormatError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw FormatError(path.string() + " is not a checkpoint");
  const auto version = read_raw<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint version " + std::to_string(version) + " is not supported");
  }
  const auto len = read_raw<std::uint64_t>(in);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw FormatError("checkpoint header truncated");
  Checkpoint ck;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
    ck.attributes = header.at("attributes").get<std::map<std::string, std::string>>();
    for (const auto& entry : header.at("tensors")) {
      if (entry.at("dtype").get<std::string>() != "f64") throw FormatError("unsupported tensor dtype");
      Tensor t(entry.at("rows").get<int>(), entry.at("cols").get<int>());
      in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(Scalar)));
      if (!in) throw FormatError("checkpoint tensor data truncated");
      ck.tensors.emplace(entry.at("name").get<std::string>(), std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint header: ") + e.what());
  }
  return ck;
}

void store_model(const LanguageModel& model, const Vocabulary& vocab, Checkpoint& out) {
  for (auto& [k, v] : model.config().to_attributes()) out.attributes[k] = v;
  out.attributes["vocabulary"] = vocab.serialize();
  for (const auto& [name, p] : model.all_parameters()) out.tensors[name] = p.value();
}

LanguageModel restore_model(const Checkpoint& ckpt) {
  LanguageModel model(ModelConfig::from_attributes(ckpt.attributes));
  model.load_parameters(ckpt.tensors);
  return model;
}

Vocabulary restore_vocabulary(const Checkpoint& ckpt) { return Vocabulary::parse(ckpt.attribute("vocabulary")); }

}  // namespace verco::textgen
