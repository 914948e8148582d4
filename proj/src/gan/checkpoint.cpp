#include "mass/gan/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"

namespace mass::gan {

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'M', 'A', 'S', 'S', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

std::uint64_t fnv1a(const unsigned char* data, std::size_t n) {
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 1099511628211ull;
  }
  return h;
}

template <typename T>
void put(std::vector<unsigned char>& out, const T& v) {
  const auto* p = reinterpret_cast<const unsigned char*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string text(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  ParamVector doubles(std::size_t n) {
    if (n > (bytes_.size() - pos_) / sizeof(double)) throw Error("checkpoint truncated");
    ParamVector v(n);
    std::memcpy(v.data(), bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return v;
  }

  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error("checkpoint truncated");
  }

  const std::vector<unsigned char>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> serialize_checkpoint(const GanModel& model) {
  model.validate();
  nlohmann::json header = {
      {"context", std::string(to_string(model.context))},
      {"hidden_size", model.config.hidden_size},
      {"num_layers", model.config.num_layers},
      {"seq_len", model.config.seq_len},
      {"batch_users", model.config.batch_users},
      {"latent_dim", GanConfig::latent_dim},
      {"feature_dim", GanConfig::feature_dim},
      {"generator_params", model.generator.size()},
      {"discriminator_params", model.discriminator.size()},
  };
  const std::string text = header.dump();

  std::vector<unsigned char> out(std::begin(kMagic), std::end(kMagic));
  put(out, kVersion);
  put(out, static_cast<std::uint64_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  put(out, model.stats.c_target);
  for (const auto& m : model.stats.moments) {
    put(out, m.mu);
    put(out, m.sigma);
    put(out, m.skew);
  }
  for (double p : model.generator) put(out, p);
  for (double p : model.discriminator) put(out, p);
  put(out, fnv1a(out.data(), out.size()));
  return out;
}

GanModel deserialize_checkpoint(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < sizeof(kMagic) + 4 + 8 + 8 ||
      std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw Error("not a checkpoint file");
  const std::size_t body = bytes.size() - sizeof(std::uint64_t);
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body, sizeof(stored));
  if (stored != fnv1a(bytes.data(), body)) throw Error("checkpoint checksum mismatch");

  Reader in(bytes);
  in.text(sizeof(kMagic));
  const auto version = in.get<std::uint32_t>();
  if (version != kVersion)
    throw Error("unsupported checkpoint version " + std::to_string(version));
  const auto header_len = in.get<std::uint64_t>();
  if (header_len > body) throw Error("checkpoint truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(in.text(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint header: ") + e.what());
  }

  GanModel model;
  try {
    const auto ctx = parse_context(header.at("context").get<std::string>());
    if (!ctx) throw Error("checkpoint header: unknown context");
    model.context = *ctx;
    model.config.hidden_size = header.at("hidden_size").get<std::size_t>();
    model.config.num_layers = header.at("num_layers").get<std::size_t>();
    model.config.seq_len = header.at("seq_len").get<std::size_t>();
    model.config.batch_users = header.at("batch_users").get<std::size_t>();
    if (header.at("latent_dim").get<std::size_t>() != GanConfig::latent_dim ||
        header.at("feature_dim").get<std::size_t>() != GanConfig::feature_dim)
      throw Error("checkpoint header: unsupported latent/feature dimension");
    model.config.validate();
    const auto n_gen = header.at("generator_params").get<std::size_t>();
    const auto n_disc = header.at("discriminator_params").get<std::size_t>();
    model.stats.c_target = in.get<double>();
    for (auto& m : model.stats.moments) {
      m.mu = in.get<double>();
      m.sigma = in.get<double>();
      m.skew = in.get<double>();
    }
    model.generator = in.doubles(n_gen);
    model.discriminator = in.doubles(n_disc);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint header: ") + e.what());
  }
  if (in.pos() != body) throw Error("checkpoint has trailing bytes");
  model.validate();
  return model;
}

void save_checkpoint(const std::string& path, const GanModel& model) {
  const auto bytes = serialize_checkpoint(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing checkpoint " + path);
}

GanModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  try {
    return deserialize_checkpoint(bytes);
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

}  // namespace mass::gan
