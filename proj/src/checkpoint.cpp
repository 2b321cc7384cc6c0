#include "diffgan/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace diffgan {

namespace {

constexpr char kMagic[8] = {'D', 'G', 'A', 'N', 'C', 'K', 'P', 'T'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const std::string& in, std::size_t pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

void put_f32(std::string& out, const Tensor<float>& t) {
  const std::size_t n = static_cast<std::size_t>(t.size());
  const std::size_t start = out.size();
  out.resize(start + 4 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(t[static_cast<Index>(i)]);
    for (int b = 0; b < 4; ++b) out[start + 4 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
  }
}

Tensor<float> get_f32(const std::string& in, std::size_t pos, Shape shape) {
  Tensor<float> t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b)
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + 4 * i + b])) << (8 * b);
    t[i] = std::bit_cast<float>(bits);
  }
  return t;
}

struct Writer {
  nlohmann::json table = nlohmann::json::array();
  std::string payload;

  void add(const std::string& name, const Tensor<float>& t, bool requires_grad) {
    table.push_back({{"name", name},
                     {"shape", t.shape()},
                     {"requires_grad", requires_grad},
                     {"offset", payload.size()},
                     {"nbytes", 4 * t.size()}});
    put_f32(payload, t);
  }
};

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  for (const auto& [name, e] : ckpt.params) w.add(name, e.tensor, e.requires_grad);

  nlohmann::json optim = nlohmann::json::object();
  for (const auto& [set, st] : ckpt.optimizers) {
    optim[set] = {{"t", st.t},
                  {"lr", st.options.lr},
                  {"beta1", st.options.beta1},
                  {"beta2", st.options.beta2},
                  {"eps", st.options.eps},
                  {"weight_decay", st.options.weight_decay}};
    for (const auto& [name, m] : st.m) w.add("optim/" + set + "/m/" + name, m, false);
    for (const auto& [name, v] : st.v) w.add("optim/" + set + "/v/" + name, v, false);
  }

  nlohmann::json header = {{"format_version", ckpt.format_version},
                           {"seed", ckpt.seed},
                           {"metadata", ckpt.metadata},
                           {"tensors", w.table},
                           {"optimizers", optim}};
  const std::string text = header.dump();

  std::string out(kMagic, kMagic + 8);
  put_u64(out, text.size());
  out += text;
  out += w.payload;
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) throw FormatError("checkpoint: bad magic");
  const std::uint64_t hlen = get_u64(bytes, 8);
  if (16 + hlen > bytes.size()) throw FormatError("checkpoint: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: header is not valid JSON: ") + e.what());
  }
  const std::size_t base = 16 + hlen;

  Checkpoint ckpt;
  try {
    ckpt.format_version = header.at("format_version").get<int>();
    if (ckpt.format_version != Checkpoint::kFormatVersion) {
      throw FormatError("checkpoint: unsupported format version " + std::to_string(ckpt.format_version));
    }
    ckpt.seed = header.at("seed").get<std::uint64_t>();
    ckpt.metadata = header.at("metadata");

    std::map<std::string, Tensor<float>> optim_tensors;
    for (const auto& entry : header.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto nbytes = entry.at("nbytes").get<std::size_t>();
      if (nbytes != 4 * static_cast<std::size_t>(numel(shape)) || base + offset + nbytes > bytes.size()) {
        throw FormatError("checkpoint: tensor '" + name + "' has inconsistent extent");
      }
      Tensor<float> t = get_f32(bytes, base + offset, shape);
      if (name.rfind("optim/", 0) == 0) {
        optim_tensors.emplace(name, std::move(t));
      } else {
        ckpt.params.add(name, std::move(t), entry.at("requires_grad").get<bool>());
      }
    }

    for (const auto& [set, o] : header.at("optimizers").items()) {
      AdamWState<float> st(AdamWOptions{o.at("lr").get<double>(), o.at("beta1").get<double>(),
                                        o.at("beta2").get<double>(), o.at("eps").get<double>(),
                                        o.at("weight_decay").get<double>()});
      st.t = o.at("t").get<std::int64_t>();
      const std::string mp = "optim/" + set + "/m/";
      const std::string vp = "optim/" + set + "/v/";
      for (const auto& [name, t] : optim_tensors) {
        if (name.rfind(mp, 0) == 0) st.m.emplace(name.substr(mp.size()), t);
        if (name.rfind(vp, 0) == 0) st.v.emplace(name.substr(vp.size()), t);
      }
      ckpt.optimizers.emplace(set, std::move(st));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed header: ") + e.what());
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("checkpoint: cannot write '" + path.string() + "'");
  const std::string bytes = encode_checkpoint(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("checkpoint: write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("checkpoint: cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("digest: cannot open '" + path.string() + "'");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char c;
  while (in.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace diffgan
