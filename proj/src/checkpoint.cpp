#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "s2t/model.hpp"

namespace s2t {

static_assert(std::endian::native == std::endian::little, "checkpoint arrays are stored little-endian");

namespace {

constexpr char kMagic[8] = {'S', '2', 'T', 'C', 'K', 'P', 'T', '\0'};

std::uint64_t fnv1a(const double* data, std::size_t n) {
  const auto* bytes = reinterpret_cast<const unsigned char*>(data);
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < n * sizeof(double); ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

template <class T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw CheckpointError("corrupt checkpoint: truncated");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  const ModelParams& p = checkpoint.params;
  nlohmann::ordered_json header;
  const ModelConfig& c = p.config;
  header["config"] = {{"src_vocab_size", c.src_vocab_size}, {"tgt_vocab_size", c.tgt_vocab_size},
                      {"embed_dim", c.embed_dim},           {"hidden_dim", c.hidden_dim},
                      {"seed", c.seed},                     {"dropout_rate_bits", std::bit_cast<std::uint64_t>(c.dropout_rate)}};
  header["updates_seen"] = checkpoint.updates_seen;
  header["dev_loss"] = checkpoint.dev_loss;
  header["dev_loss_bits"] = std::bit_cast<std::uint64_t>(checkpoint.dev_loss);
  auto& tensors = header["tensors"] = nlohmann::ordered_json::array();
  std::ostringstream manifest;
  p.for_each([&](const char* name, const Matrix& m) {
    const std::string sum = hex(fnv1a(m.data(), static_cast<std::size_t>(m.size())));
    tensors.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"fnv1a64", sum}});
    manifest << name << '\t' << m.rows() << 'x' << m.cols() << '\t' << sum << '\n';
  });
  const std::string header_text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint '" + path + "'");
  out.write(kMagic, sizeof kMagic);
  write_pod(out, kCheckpointVersion);
  write_pod(out, static_cast<std::uint64_t>(header_text.size()));
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  p.for_each([&](const char*, const Matrix& m) {
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  });
  if (!out) throw CheckpointError("write failed for '" + path + "'");

  std::ofstream mf(path + ".manifest", std::ios::trunc);
  if (!mf) throw CheckpointError("cannot write manifest for '" + path + "'");
  mf << "# version " << kCheckpointVersion << " updates " << checkpoint.updates_seen << '\n' << manifest.str();
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw CheckpointError("corrupt checkpoint: bad magic");
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  const auto header_len = read_pod<std::uint64_t>(in);
  if (header_len > (1u << 26)) throw CheckpointError("corrupt checkpoint: header too large");
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw CheckpointError("corrupt checkpoint: truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_text);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  }

  Checkpoint ck;
  try {
    const auto& c = header.at("config");
    ModelConfig config;
    config.src_vocab_size = c.at("src_vocab_size").get<std::size_t>();
    config.tgt_vocab_size = c.at("tgt_vocab_size").get<std::size_t>();
    config.embed_dim = c.at("embed_dim").get<std::size_t>();
    config.hidden_dim = c.at("hidden_dim").get<std::size_t>();
    config.seed = c.at("seed").get<std::uint64_t>();
    config.dropout_rate = std::bit_cast<double>(c.at("dropout_rate_bits").get<std::uint64_t>());
    ck.params = ModelParams::zeros(config);
    ck.updates_seen = header.at("updates_seen").get<std::size_t>();
    ck.dev_loss = std::bit_cast<double>(header.at("dev_loss_bits").get<std::uint64_t>());

    const auto& tensors = header.at("tensors");
    std::size_t k = 0;
    ck.params.for_each([&](const char* name, Matrix& m) {
      if (k >= tensors.size()) throw CheckpointError("corrupt checkpoint: missing tensor " + std::string(name));
      const auto& t = tensors[k++];
      if (t.at("name").get<std::string>() != name || t.at("rows").get<Eigen::Index>() != m.rows() ||
          t.at("cols").get<Eigen::Index>() != m.cols())
        throw CheckpointError("corrupt checkpoint: shape table disagrees at " + std::string(name));
      in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
      if (!in) throw CheckpointError("corrupt checkpoint: truncated tensor " + std::string(name));
      if (hex(fnv1a(m.data(), static_cast<std::size_t>(m.size()))) != t.at("fnv1a64").get<std::string>())
        throw CheckpointError("corrupt checkpoint: checksum mismatch in " + std::string(name));
    });
    if (k != tensors.size()) throw CheckpointError("corrupt checkpoint: unexpected extra tensors");
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("corrupt checkpoint config: ") + e.what());
  }
  if (in.peek() != std::char_traits<char>::eof()) throw CheckpointError("corrupt checkpoint: trailing bytes");
  return ck;
}

}  // namespace s2t
