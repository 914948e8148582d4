#include "mass/serve/genserver.hpp"

#include <filesystem>

#include "json.hpp"
#include "mass/gan/checkpoint.hpp"
#include "mass/gan/losses.hpp"
#include "mass/trace/dataset.hpp"
#include "mass/trace/trace_io.hpp"
// after Eigen: resolv.h defines _res
#include "httplib.h"

namespace mass::serve {

using nlohmann::json;

Format parse_format(std::string_view s) {
  if (s.empty() || s == "json") return Format::json;
  if (s == "text") return Format::text;
  throw RequestError("unknown format '" + std::string(s) + "'");
}

namespace {

std::size_t positive_count(const json& j, const char* name) {
  if (!j.is_number_integer()) throw RequestError(std::string(name) + " must be an integer");
  const auto v = j.get<std::int64_t>();
  if (v <= 0) throw RequestError(std::string(name) + " must be positive");
  return static_cast<std::size_t>(v);
}

}  // namespace

GenerateRequest parse_request(std::string_view body) {
  GenerateRequest req;
  if (body.find_first_not_of(" \t\r\n") == std::string_view::npos) return req;
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded()) throw RequestError("malformed JSON body");
  if (!j.is_object()) throw RequestError("body must be a JSON object");

  if (auto it = j.find("context"); it != j.end()) {
    if (!it->is_string()) throw RequestError("context must be a string");
    auto label = parse_context(it->get<std::string>());
    if (!label) throw RequestError("unknown context '" + it->get<std::string>() + "'");
    req.context = *label;
  }
  if (auto it = j.find("users"); it != j.end()) req.users = positive_count(*it, "users");
  if (auto it = j.find("seq_len"); it != j.end()) req.seq_len = positive_count(*it, "seq_len");
  if (auto it = j.find("normalize"); it != j.end()) {
    if (!it->is_string()) throw RequestError("normalize must be a string");
    const auto n = it->get<std::string>();
    if (n == "pos") req.normalize = Normalization::pos;
    else if (n == "minmax") req.normalize = Normalization::minmax;
    else throw RequestError("normalize must be pos or minmax");
  }
  if (auto it = j.find("shuffle"); it != j.end()) {
    if (!it->is_boolean()) throw RequestError("shuffle must be a boolean");
    req.shuffle = it->get<bool>();
  }
  if (auto it = j.find("seed"); it != j.end()) {
    if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<std::int64_t>() >= 0))
      throw RequestError("seed must be a non-negative integer");
    req.seed = it->get<std::uint64_t>();
  }
  if (req.users > kMaxValues / req.seq_len) throw RequestError("request too large");
  return req;
}

ModelRegistry::ModelRegistry(std::map<ContextLabel, gan::GanModel> models)
    : models_(std::move(models)) {
  if (!models_.contains(ContextLabel::global)) throw Error("model registry has no GLOBAL model");
}

ModelRegistry ModelRegistry::load(const std::string& directory, std::vector<std::string>* warnings) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(directory)) throw Error("model directory not found: " + directory);
  auto warn = [&](const std::string& w) {
    if (warnings) warnings->push_back(w);
  };
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(directory))
    if (entry.is_regular_file() && entry.path().extension() == ".ckpt") files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  std::map<ContextLabel, gan::GanModel> models;
  for (const auto& path : files) {
    const auto label = parse_context(path.stem().string());
    if (!label) {
      warn("skipping " + path.string() + ": file name is not a context");
      continue;
    }
    try {
      auto model = gan::load_checkpoint(path.string());
      if (model.context != *label)
        throw Error("checkpoint is for context " + std::string(to_string(model.context)));
      models.emplace(*label, std::move(model));
    } catch (const Error& e) {
      if (*label == ContextLabel::global) throw Error("GLOBAL checkpoint unusable: " + std::string(e.what()));
      warn("skipping " + path.string() + ": " + e.what());
    }
  }
  return ModelRegistry(std::move(models));
}

const gan::GanModel& ModelRegistry::resolve(ContextLabel context) const {
  auto it = models_.find(context);
  return it != models_.end() ? it->second : models_.at(ContextLabel::global);
}

std::vector<ContextLabel> ModelRegistry::contexts() const {
  std::vector<ContextLabel> out;
  for (const auto& [label, model] : models_) out.push_back(label);
  return out;
}

TraceTensor circular_shift(const TraceTensor& trace, std::mt19937_64& rng) {
  TraceTensor out(trace.users(), trace.steps(), trace.normalization());
  std::uniform_int_distribution<std::size_t> pick(0, trace.steps() - 1);
  for (std::size_t u = 0; u < trace.users(); ++u) {
    const std::size_t off = pick(rng);
    for (std::size_t k = 0; k < trace.steps(); ++k)
      for (std::size_t f = 0; f < kFeatureCount; ++f)
        out.at(u, (k + off) % trace.steps(), Feature(f)) = trace.at(u, k, Feature(f));
  }
  return out;
}

TraceTensor generate(const ModelRegistry& registry, const GenerateRequest& request,
                     std::mt19937_64& rng) {
  const auto& model = registry.resolve(request.context);
  auto z = gan::LatentBatch::draw(request.users, request.seq_len, rng);
  TraceTensor t = normalize(gan::generator_forward(model, z), request.normalize);
  if (request.shuffle) t = circular_shift(t, rng);
  return t;
}

std::string trace_to_json(const TraceTensor& trace) {
  json users = json::array();
  for (std::size_t u = 0; u < trace.users(); ++u) {
    json steps = json::array();
    for (std::size_t k = 0; k < trace.steps(); ++k)
      steps.push_back({trace.at(u, k, Feature::download), trace.at(u, k, Feature::upload)});
    users.push_back(std::move(steps));
  }
  return json{{"trace", std::move(users)}}.dump();
}

Response handle_generate(const ModelRegistry& registry, std::string_view body,
                         std::string_view format) {
  try {
    const Format fmt = parse_format(format);
    const GenerateRequest req = parse_request(body);
    std::mt19937_64 rng(req.seed ? *req.seed : std::random_device{}());
    const TraceTensor t = generate(registry, req, rng);
    if (fmt == Format::text) return {200, "text/plain", trace_to_text(t)};
    return {200, "application/json", trace_to_json(t)};
  } catch (const RequestError& e) {
    return {400, "application/json", json{{"error", e.what()}}.dump()};
  }
}

struct GenServer::Impl {
  std::shared_ptr<const ModelRegistry> registry;
  httplib::Server server;
};

GenServer::GenServer(std::shared_ptr<const ModelRegistry> registry)
    : impl_(std::make_unique<Impl>()) {
  impl_->registry = std::move(registry);
  auto reg = impl_->registry;
  impl_->server.Post("/generate", [reg](const httplib::Request& req, httplib::Response& res) {
    const std::string format = req.has_param("format") ? req.get_param_value("format") : "";
    Response r;
    try {
      r = handle_generate(*reg, req.body, format);
    } catch (const std::exception& e) {
      r = {500, "application/json", json{{"error", e.what()}}.dump()};
    }
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  });
  impl_->server.Get("/health", [reg](const httplib::Request&, httplib::Response& res) {
    json contexts = json::array();
    for (auto c : reg->contexts()) contexts.push_back(std::string(to_string(c)));
    res.set_content(json{{"status", "ok"}, {"contexts", contexts}}.dump(), "application/json");
  });
}

GenServer::~GenServer() { stop(); }

bool GenServer::listen(const std::string& host, int port) {
  return impl_->server.listen(host, port);
}

bool GenServer::bind(const std::string& host, int port) {
  return impl_->server.bind_to_port(host, port);
}

int GenServer::bind_any(const std::string& host) { return impl_->server.bind_to_any_port(host); }

bool GenServer::listen_after_bind() { return impl_->server.listen_after_bind(); }

void GenServer::stop() {
  if (impl_) impl_->server.stop();
}

void GenServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace mass::serve
