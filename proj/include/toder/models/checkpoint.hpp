#pragma once

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "toder/models/layers.hpp"

namespace toder::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

struct CheckpointSection {
  std::string name;
  std::string kind;
  std::string spec_hash;
  std::string descriptor;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

/// Single-file container: named sections of named float tensors plus run metadata.
/// Layout: 8-byte magic, u64 header length, JSON header, raw float32 payload.
struct Checkpoint {
  std::string stage;
  uint64_t seed = 0;
  long step = 0;
  nlohmann::json extra = nlohmann::json::object();
  std::vector<CheckpointSection> sections;

  [[nodiscard]] bool has(const std::string& name) const {
    for (const auto& s : sections)
      if (s.name == name) return true;
    return false;
  }

  [[nodiscard]] const CheckpointSection& section(const std::string& name) const {
    for (const auto& s : sections)
      if (s.name == name) return s;
    throw IncompatibleCheckpoint("checkpoint has no section '" + name + "'");
  }

  void add_module(const std::string& name, const Module& m) {
    CheckpointSection s{name, m.kind(), m.spec_hash(), m.descriptor(), {}};
    for (const auto& p : m.parameters()) s.tensors.emplace_back(p.name, p.var->value);
    put(std::move(s));
  }

  /// Raw tensors (optimizer moments and the like) tagged with the hash they belong to.
  void add_tensors(const std::string& name, const std::string& kind, const std::string& spec_hash,
                   const std::vector<Tensor>& tensors) {
    CheckpointSection s{name, kind, spec_hash, "", {}};
    for (size_t i = 0; i < tensors.size(); ++i) s.tensors.emplace_back(std::to_string(i), tensors[i]);
    put(std::move(s));
  }

  /// Copies a section into `m`; the section must have been written by a module with the same spec.
  void load_module(const std::string& name, Module& m) const {
    const CheckpointSection& s = section(name);
    if (s.spec_hash != m.spec_hash())
      throw IncompatibleCheckpoint("checkpoint section '" + name + "' holds " + s.kind + " [" + s.spec_hash +
                                   "], cannot load into " + m.kind() + " [" + m.spec_hash() + "]");
    auto& params = m.parameters();
    if (s.tensors.size() != params.size())
      throw IncompatibleCheckpoint("checkpoint section '" + name + "': parameter count differs");
    for (size_t i = 0; i < params.size(); ++i) {
      const auto& [tname, t] = s.tensors[i];
      if (tname != params[i].name || !(t.shape == params[i].var->value.shape))
        throw IncompatibleCheckpoint("checkpoint section '" + name + "': parameter '" + tname + "' does not match");
    }
    for (size_t i = 0; i < params.size(); ++i) params[i].var->value = s.tensors[i].second;
  }

  [[nodiscard]] std::vector<Tensor> tensors(const std::string& name, const std::string& spec_hash) const {
    const CheckpointSection& s = section(name);
    if (s.spec_hash != spec_hash) throw IncompatibleCheckpoint("checkpoint section '" + name + "': spec hash mismatch");
    std::vector<Tensor> out;
    for (const auto& [n, t] : s.tensors) out.push_back(t);
    return out;
  }

 private:
  void put(CheckpointSection s) {
    for (auto& old : sections)
      if (old.name == s.name) {
        old = std::move(s);
        return;
      }
    sections.push_back(std::move(s));
  }
};

namespace detail {
inline constexpr char kCheckpointMagic[8] = {'T', 'O', 'D', 'E', 'R', 'C', 'K', '1'};
}

inline void write_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  nlohmann::json header;
  header["stage"] = ck.stage;
  header["seed"] = ck.seed;
  header["step"] = ck.step;
  header["extra"] = ck.extra;
  header["sections"] = nlohmann::json::array();
  uint64_t offset = 0;
  uint64_t checksum = 1469598103934665603ull;
  for (const auto& s : ck.sections) {
    nlohmann::json js{{"name", s.name}, {"kind", s.kind}, {"spec_hash", s.spec_hash}, {"descriptor", s.descriptor}};
    js["tensors"] = nlohmann::json::array();
    for (const auto& [name, t] : s.tensors) {
      js["tensors"].push_back({{"name", name},
                               {"shape", {t.shape.n, t.shape.c, t.shape.h, t.shape.w}},
                               {"offset", offset},
                               {"count", t.size()}});
      offset += t.size();
      checksum = hash_bytes(t.data.data(), t.size() * sizeof(float), checksum);
    }
    header["sections"].push_back(std::move(js));
  }
  header["payload_floats"] = offset;
  header["payload_hash"] = hex64(checksum);
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint " + tmp.string());
    const uint64_t len = text.size();
    out.write(detail::kCheckpointMagic, sizeof detail::kCheckpointMagic);
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& s : ck.sections)
      for (const auto& [name, t] : s.tensors)
        out.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!out) throw Error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  char magic[8];
  uint64_t len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, detail::kCheckpointMagic, sizeof magic) != 0)
    throw FormatError(path.string() + ": not a checkpoint file");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw FormatError(path.string() + ": truncated checkpoint header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": bad checkpoint header: " + e.what());
  }
  Checkpoint ck;
  try {
    ck.stage = header.at("stage").get<std::string>();
    ck.seed = header.at("seed").get<uint64_t>();
    ck.step = header.at("step").get<long>();
    ck.extra = header.at("extra");
    uint64_t checksum = 1469598103934665603ull;
    for (const auto& js : header.at("sections")) {
      CheckpointSection s{js.at("name"), js.at("kind"), js.at("spec_hash"), js.at("descriptor"), {}};
      for (const auto& jt : js.at("tensors")) {
        const auto& sh = jt.at("shape");
        Tensor t(Shape{sh.at(0).get<int>(), sh.at(1).get<int>(), sh.at(2).get<int>(), sh.at(3).get<int>()});
        if (t.size() != jt.at("count").get<size_t>()) throw FormatError(path.string() + ": tensor size mismatch");
        in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
        if (!in) throw FormatError(path.string() + ": truncated checkpoint payload");
        checksum = hash_bytes(t.data.data(), t.size() * sizeof(float), checksum);
        s.tensors.emplace_back(jt.at("name").get<std::string>(), std::move(t));
      }
      ck.sections.push_back(std::move(s));
    }
    if (hex64(checksum) != header.at("payload_hash").get<std::string>())
      throw FormatError(path.string() + ": checkpoint payload is corrupt");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": bad checkpoint header: " + e.what());
  }
  return ck;
}

/// One-network checkpoint.
inline void save_weights(const Module& m, const std::filesystem::path& path, const std::string& stage = "",
                         uint64_t seed = 0, long step = 0) {
  Checkpoint ck;
  ck.stage = stage;
  ck.seed = seed;
  ck.step = step;
  ck.add_module(m.kind(), m);
  write_checkpoint(ck, path);
}

/// Loads the named section, or the only section when `name` is empty.
inline Checkpoint load_weights(Module& m, const std::filesystem::path& path, const std::string& name = "") {
  Checkpoint ck = read_checkpoint(path);
  if (name.empty()) {
    if (ck.sections.size() != 1)
      throw IncompatibleCheckpoint(path.string() + ": checkpoint has several networks, name the one to load");
    ck.load_module(ck.sections.front().name, m);
  } else {
    ck.load_module(name, m);
  }
  return ck;
}

}  // namespace toder::nn
