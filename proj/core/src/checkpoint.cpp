#include "compdial/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "compdial/errors.hpp"
#include "json.hpp"

namespace compdial {

namespace {

constexpr char kMagic[8] = {'C', 'D', 'L', 'G', 'C', 'K', 'P', 'T'};

std::uint64_t to_little(std::uint64_t x) {
  if constexpr (std::endian::native == std::endian::little) {
    return x;
  } else {
    std::uint64_t y = 0;
    for (int i = 0; i < 8; ++i) y |= ((x >> (8 * i)) & 0xFFu) << (8 * (7 - i));
    return y;
  }
}

void put_u64(std::string& out, std::uint64_t x) {
  x = to_little(x);
  char bytes[8];
  std::memcpy(bytes, &x, 8);
  out.append(bytes, 8);
}

std::uint64_t get_u64(const char* p) {
  std::uint64_t x = 0;
  std::memcpy(&x, p, 8);
  return to_little(x);
}

[[noreturn]] void corrupt(const std::string& path, const std::string& why) {
  throw IoError("corrupt checkpoint " + path + ": " + why);
}

std::string hex64(std::uint64_t x) {
  std::ostringstream s;
  s << std::hex;
  s.width(16);
  s.fill('0');
  s << x;
  return s.str();
}

const QFunction& network(const HierarchicalAgent& agent, const std::string& name) {
  if (name == "top") return agent.top();
  if (name == "low") return agent.low();
  if (name == "top_target") return agent.top_target();
  return agent.low_target();
}

QFunction& network(HierarchicalAgent& agent, const std::string& name) {
  return const_cast<QFunction&>(network(static_cast<const HierarchicalAgent&>(agent), name));
}

bool is_online(const std::string& name) { return name == "top" || name == "low"; }

}  // namespace

std::vector<std::string> checkpoint_networks() { return {"top", "low", "top_target", "low_target"}; }

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
  std::string payload;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [key, m] : checkpoint.tensors) {
    tensors.push_back({{"key", key}, {"shape", {m.rows(), m.cols()}}});
    // Row-major element order so the on-disk layout does not depend on Eigen storage.
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) put_u64(payload, std::bit_cast<std::uint64_t>(m(i, j)));
    }
  }
  nlohmann::json header;
  header["version"] = checkpoint.version;
  header["fingerprint"] = checkpoint.fingerprint;
  header["meta"] = checkpoint.meta;
  header["counters"] = checkpoint.counters;
  header["tensors"] = tensors;
  header["payload_bytes"] = payload.size();
  header["payload_fnv1a64"] = hex64(fnv1a64(payload));
  const std::string head = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put_u64(out, head.size());
  out += head;
  out += payload;

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("cannot write checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read checkpoint: " + path);
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) corrupt(path, "bad magic");
  const std::uint64_t head_len = get_u64(bytes.data() + 8);
  if (head_len > bytes.size() - 16) corrupt(path, "truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, head_len));
  } catch (const nlohmann::json::exception& e) {
    corrupt(path, std::string("unparseable header: ") + e.what());
  }
  Checkpoint ck;
  try {
    ck.version = header.at("version").get<int>();
    if (ck.version != kCheckpointVersion) {
      throw IoError("unsupported checkpoint version " + std::to_string(ck.version) + " in " + path + " (expected " +
                    std::to_string(kCheckpointVersion) + ")");
    }
    ck.fingerprint = header.at("fingerprint").get<std::string>();
    ck.meta = header.at("meta").get<std::map<std::string, std::string>>();
    ck.counters = header.at("counters").get<std::map<std::string, long>>();

    const std::string_view payload(bytes.data() + 16 + head_len, bytes.size() - 16 - head_len);
    if (payload.size() != header.at("payload_bytes").get<std::size_t>()) corrupt(path, "truncated payload");
    if (hex64(fnv1a64(payload)) != header.at("payload_fnv1a64").get<std::string>()) {
      corrupt(path, "payload digest mismatch");
    }
    std::size_t offset = 0;
    for (const auto& t : header.at("tensors")) {
      const auto rows = t.at("shape").at(0).get<Eigen::Index>();
      const auto cols = t.at("shape").at(1).get<Eigen::Index>();
      if (rows < 0 || cols < 0 || offset + static_cast<std::size_t>(rows * cols) * 8 > payload.size()) {
        corrupt(path, "tensor extends past payload");
      }
      Matrix m(rows, cols);
      for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) {
          m(i, j) = std::bit_cast<double>(get_u64(payload.data() + offset));
          offset += 8;
        }
      }
      ck.tensors.emplace(t.at("key").get<std::string>(), std::move(m));
    }
    if (offset != payload.size()) corrupt(path, "trailing payload bytes");
  } catch (const nlohmann::json::exception& e) {
    corrupt(path, std::string("malformed header: ") + e.what());
  }
  return ck;
}

Checkpoint capture_agent(const HierarchicalAgent& agent, const std::string& fingerprint) {
  Checkpoint ck;
  ck.fingerprint = fingerprint;
  ck.meta["family"] = agent.top().family();
  ck.meta["rng"] = agent.rng().state();
  ck.counters["dialogues"] = agent.dialogues();
  ck.counters["low_updates"] = agent.low_updates();
  ck.counters["top_updates"] = agent.top_updates();
  ck.counters["turns"] = agent.turns();
  for (const std::string& net : checkpoint_networks()) {
    for (const auto& [key, p] : network(agent, net).params()) {
      const std::string base = net + ":" + key.str();
      ck.tensors[base] = p.value;
      if (is_online(net)) {
        ck.tensors[base + "#m"] = p.first_moment;
        ck.tensors[base + "#v"] = p.second_moment;
        ck.tensors[base + "#t"] = Matrix::Constant(1, 1, static_cast<double>(p.step));
      }
    }
  }
  return ck;
}

void restore_agent(const Checkpoint& ck, HierarchicalAgent& agent) {
  const auto tensor = [&](const std::string& key, const Matrix& like) -> const Matrix& {
    auto it = ck.tensors.find(key);
    if (it == ck.tensors.end()) throw ConfigError("checkpoint lacks tensor " + key);
    if (it->second.rows() != like.rows() || it->second.cols() != like.cols()) {
      throw ConfigError("checkpoint tensor " + key + " has shape " + shape_string(it->second) + ", expected " +
                        shape_string(like));
    }
    return it->second;
  };
  auto family = ck.meta.find("family");
  if (family != ck.meta.end() && family->second != agent.top().family()) {
    throw ConfigError("checkpoint holds a " + family->second + " policy, configured policy is " +
                      agent.top().family());
  }
  for (const std::string& net : checkpoint_networks()) {
    for (auto& [key, p] : network(agent, net).params()) {
      const std::string base = net + ":" + key.str();
      p.value = tensor(base, p.value);
      if (is_online(net)) {
        p.first_moment = tensor(base + "#m", p.value);
        p.second_moment = tensor(base + "#v", p.value);
        p.step = static_cast<long>(tensor(base + "#t", Matrix(1, 1))(0, 0));
      }
      p.grad.setZero();
    }
  }
  const auto counter = [&](const char* name) {
    auto it = ck.counters.find(name);
    return it == ck.counters.end() ? 0L : it->second;
  };
  agent.set_counters(counter("dialogues"), counter("low_updates"), counter("top_updates"), counter("turns"));
  if (auto it = ck.meta.find("rng"); it != ck.meta.end()) agent.rng().set_state(it->second);
}

bool check_fingerprint(const Checkpoint& checkpoint, const std::string& fingerprint, std::ostream& warnings) {
  if (checkpoint.fingerprint == fingerprint) return true;
  warnings << "warning: checkpoint ontology fingerprint " << checkpoint.fingerprint
           << " differs from configured ontology " << fingerprint << "\n";
  return false;
}

TransferReport transfer_load(const Checkpoint& ck, HierarchicalAgent& agent) {
  TransferReport report;
  std::set<std::string> needed;
  for (const std::string net : {"top", "low"}) {
    for (const auto& [key, p] : network(agent, net).params()) {
      const std::string name = net + ":" + key.str();
      needed.insert(name);
      auto it = ck.tensors.find(name);
      if (it == ck.tensors.end()) {
        report.missing.push_back(name);
      } else if (it->second.rows() != p.value.rows() || it->second.cols() != p.value.cols()) {
        report.mismatched.push_back(name + " " + shape_string(it->second) + " vs " + shape_string(p.value));
      }
    }
  }
  for (const auto& [name, m] : ck.tensors) {
    const bool online_value = (name.starts_with("top:") || name.starts_with("low:")) && name.find('#') == std::string::npos;
    if (online_value && !needed.contains(name)) report.unused.push_back(name);
  }
  if (!report.missing.empty() || !report.mismatched.empty()) {
    std::string msg = "transfer_load: incompatible checkpoint;";
    for (const auto& k : report.missing) msg += " missing " + k + ";";
    for (const auto& k : report.mismatched) msg += " shape " + k + ";";
    throw ConfigError(msg);
  }
  for (const std::string net : {"top", "low"}) {
    for (auto& [key, p] : network(agent, net).params()) {
      p.value = ck.tensors.at(net + ":" + key.str());
      ++report.copied;
    }
  }
  agent.reset_training_state();
  agent.sync_all_targets();
  return report;
}

}  // namespace compdial
