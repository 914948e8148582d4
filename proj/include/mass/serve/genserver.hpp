#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "mass/error.hpp"
#include "mass/gan/model.hpp"

namespace mass::serve {

/// Client mistakes; the HTTP layer answers them with 400.
struct RequestError : Error {
  using Error::Error;
};

enum class Format { json, text };
Format parse_format(std::string_view s);

struct GenerateRequest {
  ContextLabel context = ContextLabel::global;
  std::size_t users = 1;
  std::size_t seq_len = 100;
  Normalization normalize = Normalization::pos;
  bool shuffle = false;
  std::optional<std::uint64_t> seed;
};

/// Upper bound on users * seq_len per request.
inline constexpr std::size_t kMaxValues = 10'000'000;

/// Empty body means all defaults. Throws RequestError.
GenerateRequest parse_request(std::string_view body);

class ModelRegistry {
 public:
  /// Loads every `<CONTEXT>.ckpt` in a directory. A bad GLOBAL checkpoint
  /// or a missing one is fatal; other bad files are skipped with a warning.
  static ModelRegistry load(const std::string& directory,
                            std::vector<std::string>* warnings = nullptr);

  /// Throws unless the registry ends up with a GLOBAL model.
  explicit ModelRegistry(std::map<ContextLabel, gan::GanModel> models);

  /// The context's model, or GLOBAL when the context has none.
  const gan::GanModel& resolve(ContextLabel context) const;
  bool contains(ContextLabel context) const { return models_.contains(context); }
  std::vector<ContextLabel> contexts() const;

 private:
  std::map<ContextLabel, gan::GanModel> models_;
};

TraceTensor generate(const ModelRegistry& registry, const GenerateRequest& request,
                     std::mt19937_64& rng);

/// Moves every user's series forward by its own random offset, wrapping
/// the tail to the front.
TraceTensor circular_shift(const TraceTensor& trace, std::mt19937_64& rng);

std::string trace_to_json(const TraceTensor& trace);

struct Response {
  int status = 200;
  std::string content_type;
  std::string body;
};

/// `format` is the raw query value; empty means json.
Response handle_generate(const ModelRegistry& registry, std::string_view body,
                         std::string_view format);

/// POST /generate and GET /health over HTTP.
class GenServer {
 public:
  explicit GenServer(std::shared_ptr<const ModelRegistry> registry);
  ~GenServer();

  /// Binds and serves until stop(); returns false if the bind fails.
  bool listen(const std::string& host, int port);
  bool bind(const std::string& host, int port);
  /// Binds to an ephemeral port and returns it, or -1.
  int bind_any(const std::string& host);
  /// Serves on a socket bound by bind or bind_any.
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace mass::serve
