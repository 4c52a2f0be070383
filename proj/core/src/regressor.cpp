#include "hcd/regressor.hpp"

#include <nlohmann/json.hpp>
#include <sstream>

#include "hcd/error.hpp"

namespace hcd {
namespace {

constexpr std::string_view kModelMagic = "HCDM";
constexpr std::uint32_t kModelVersion = 1;

using nlohmann::json;

std::string_view split_name(SplitStrategy s) {
  return s == SplitStrategy::variance_best ? "variance_best" : "random_threshold";
}

SplitStrategy parse_split(const std::string& s) {
  if (s == "variance_best") return SplitStrategy::variance_best;
  if (s == "random_threshold") return SplitStrategy::random_threshold;
  throw InvalidArgument("unknown RF split strategy '" + s + "'");
}

std::string_view rule_name(FeatureRule r) { return r == FeatureRule::third ? "third" : "log2"; }

FeatureRule parse_rule(const std::string& s) {
  if (s == "third") return FeatureRule::third;
  if (s == "log2") return FeatureRule::log2;
  throw InvalidArgument("unknown RF feature rule '" + s + "'");
}

std::string_view norm_name(DistanceNorm n) {
  return n == DistanceNorm::absolute ? "absolute" : "relative";
}

DistanceNorm parse_norm(const std::string& s) {
  if (s == "absolute") return DistanceNorm::absolute;
  if (s == "relative") return DistanceNorm::relative;
  throw InvalidArgument("unknown HPT distance normalization '" + s + "'");
}

json to_json(const GpHyper& h) {
  return {{"signal_variance", h.signal_variance}, {"lengthscales", h.lengthscales},
          {"noise_variance", h.noise_variance},   {"anisotropic", h.anisotropic},
          {"optimize", h.optimize},               {"optimize_noise", h.optimize_noise},
          {"restarts", h.restarts},               {"max_ascent_steps", h.max_ascent_steps},
          {"step_tolerance", h.step_tolerance},   {"init_low", h.init_low},
          {"init_high", h.init_high},             {"noise_floor", h.noise_floor},
          {"max_rows", h.max_rows}};
}

json to_json(const SvrHyper& h) {
  return {{"C", h.penalty},
          {"epsilon", h.insensitivity},
          {"sigma", h.kernel_width},
          {"max_iterations", h.max_iterations},
          {"cost_tolerance", h.cost_tolerance}};
}

json to_json(const RfHyper& h) {
  return {{"trees", h.trees},         {"features_per_node", h.features_per_node},
          {"feature_rule", rule_name(h.feature_rule)}, {"min_leaf", h.min_leaf},
          {"split", split_name(h.split)}, {"bootstrap", h.bootstrap}};
}

json to_json(const HptHyper& h) {
  return {{"K", h.neighbours},
          {"gamma", h.kernel_width},
          {"distance_norm", norm_name(h.distance_norm)},
          {"weight_norm", h.weight_norm}};
}

template <typename T>
void read_key(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    out = j.at(key).get<T>();
  }
}

GpHyper gp_from(const json& j) {
  GpHyper h;
  read_key(j, "signal_variance", h.signal_variance);
  read_key(j, "lengthscales", h.lengthscales);
  read_key(j, "noise_variance", h.noise_variance);
  read_key(j, "anisotropic", h.anisotropic);
  read_key(j, "optimize", h.optimize);
  read_key(j, "optimize_noise", h.optimize_noise);
  read_key(j, "restarts", h.restarts);
  read_key(j, "max_ascent_steps", h.max_ascent_steps);
  read_key(j, "step_tolerance", h.step_tolerance);
  read_key(j, "init_low", h.init_low);
  read_key(j, "init_high", h.init_high);
  read_key(j, "noise_floor", h.noise_floor);
  read_key(j, "max_rows", h.max_rows);
  return h;
}

SvrHyper svr_from(const json& j) {
  SvrHyper h;
  read_key(j, "C", h.penalty);
  read_key(j, "epsilon", h.insensitivity);
  read_key(j, "sigma", h.kernel_width);
  read_key(j, "max_iterations", h.max_iterations);
  read_key(j, "cost_tolerance", h.cost_tolerance);
  return h;
}

RfHyper rf_from(const json& j) {
  RfHyper h;
  read_key(j, "trees", h.trees);
  read_key(j, "features_per_node", h.features_per_node);
  if (j.contains("feature_rule")) h.feature_rule = parse_rule(j.at("feature_rule").get<std::string>());
  read_key(j, "min_leaf", h.min_leaf);
  if (j.contains("split")) h.split = parse_split(j.at("split").get<std::string>());
  read_key(j, "bootstrap", h.bootstrap);
  return h;
}

HptHyper hpt_from(const json& j) {
  HptHyper h;
  read_key(j, "K", h.neighbours);
  read_key(j, "gamma", h.kernel_width);
  if (j.contains("distance_norm")) h.distance_norm = parse_norm(j.at("distance_norm").get<std::string>());
  read_key(j, "weight_norm", h.weight_norm);
  return h;
}

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

std::string_view to_string(Method method) {
  switch (method) {
    case Method::gp:
      return "gp";
    case Method::svr:
      return "svr";
    case Method::rf:
      return "rf";
    case Method::hpt:
      return "hpt";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  if (name == "gp") return Method::gp;
  if (name == "svr") return Method::svr;
  if (name == "rf") return Method::rf;
  if (name == "hpt") return Method::hpt;
  throw InvalidArgument("unknown regression method '" + std::string(name) +
                        "' (expected gp, svr, rf or hpt)");
}

RowMatrix Model::predict(const RowMatrix& batch) const {
  if (static_cast<std::size_t>(batch.cols()) != input_dim_) {
    throw DimensionMismatch(std::string(to_string(method())) + " model expects " +
                            std::to_string(input_dim_) + " input features, got " +
                            std::to_string(batch.cols()));
  }
  return predict_checked(batch);
}

RegressorSpec default_spec(Method method, std::uint64_t seed) {
  RegressorSpec spec;
  spec.seed = seed;
  switch (method) {
    case Method::gp:
      spec.hyper = GpHyper{};
      break;
    case Method::svr:
      spec.hyper = SvrHyper{};
      break;
    case Method::rf:
      spec.hyper = RfHyper{};
      break;
    case Method::hpt:
      spec.hyper = HptHyper{};
      break;
  }
  return spec;
}

std::unique_ptr<Model> fit(const RegressorSpec& spec, const TrainingSet& set) {
  return std::visit(
      Overloaded{
          [&](const GpHyper& h) -> std::unique_ptr<Model> { return gp_fit(set, h, spec.seed); },
          [&](const SvrHyper& h) -> std::unique_ptr<Model> { return svr_fit(set, h); },
          [&](const RfHyper& h) -> std::unique_ptr<Model> { return rf_fit(set, h, spec.seed); },
          [&](const HptHyper& h) -> std::unique_ptr<Model> { return hpt_fit(set, h); },
      },
      spec.hyper);
}

Raster predict_raster(const Model& model, const Raster& raster) {
  if (raster.channels() != model.input_dim()) {
    throw DimensionMismatch("raster has " + std::to_string(raster.channels()) +
                            " channels, model expects " + std::to_string(model.input_dim()));
  }
  const RowMatrix out = model.predict(raster.to_matrix());
  if (!out.allFinite()) {
    throw NumericalError(std::string(to_string(model.method())) +
                         " model produced non-finite predictions");
  }
  return Raster::from_matrix(raster.height(), raster.width(), out);
}

std::string describe(const RegressorSpec& spec) {
  std::ostringstream out;
  std::visit(Overloaded{
                 [&](const GpHyper& h) {
                   out << "restarts=" << h.restarts << ";lengthscale="
                       << (h.anisotropic ? "anisotropic" : "isotropic")
                       << ";noise=" << h.noise_variance;
                 },
                 [&](const SvrHyper& h) {
                   out << "C=" << h.penalty << ";eps=" << h.insensitivity << ";sigma=" << h.kernel_width;
                 },
                 [&](const RfHyper& h) {
                   out << "T=" << h.trees << ";m=";
                   if (h.features_per_node == 0) {
                     out << rule_name(h.feature_rule);
                   } else {
                     out << h.features_per_node;
                   }
                   out << ";p=" << h.min_leaf << ";split=" << split_name(h.split);
                 },
                 [&](const HptHyper& h) {
                   out << "K=" << h.neighbours << ";gamma=" << h.kernel_width
                       << ";norm=" << norm_name(h.distance_norm)
                       << ";weight_norm=" << (h.weight_norm ? 1 : 0);
                 },
             },
             spec.hyper);
  return out.str();
}

std::string spec_to_json(const RegressorSpec& spec) {
  json j;
  j["method"] = to_string(spec.method());
  j["seed"] = spec.seed;
  std::visit([&](const auto& h) { j[std::string(to_string(spec.method()))] = to_json(h); }, spec.hyper);
  return j.dump();
}

RegressorSpec spec_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("regressor spec is not valid JSON: ") + e.what());
  }
  try {
    const Method method = parse_method(j.value("method", std::string("rf")));
    RegressorSpec spec = default_spec(method, j.value("seed", std::uint64_t{0}));
    const std::string key(to_string(method));
    const json body = j.contains(key) ? j.at(key) : json::object();
    if (!body.is_object()) {
      throw FormatError("regressor spec: '" + key + "' must be an object");
    }
    json known;
    std::visit([&](const auto& h) { known = to_json(h); }, spec.hyper);
    for (const auto& item : body.items()) {
      if (!known.contains(item.key())) {
        throw FormatError("regressor spec: unknown " + key + " hyperparameter '" + item.key() + "'");
      }
    }
    switch (method) {
      case Method::gp:
        spec.hyper = gp_from(body);
        break;
      case Method::svr:
        spec.hyper = svr_from(body);
        break;
      case Method::rf:
        spec.hyper = rf_from(body);
        break;
      case Method::hpt:
        spec.hyper = hpt_from(body);
        break;
    }
    return spec;
  } catch (const json::exception& e) {
    throw FormatError(std::string("regressor spec has a malformed field: ") + e.what());
  }
}

std::vector<std::byte> serialize_model(const Model& model) {
  ByteWriter writer;
  writer.bytes(kModelMagic);
  writer.u32(kModelVersion);
  writer.u32(static_cast<std::uint32_t>(model.method()));
  writer.u32(static_cast<std::uint32_t>(model.input_dim()));
  writer.u32(static_cast<std::uint32_t>(model.output_dim()));
  model.write_payload(writer);
  return std::move(writer).take();
}

std::unique_ptr<Model> deserialize_model(std::span<const std::byte> bytes) {
  ByteReader reader(bytes, "HCDM model");
  if (reader.remaining() < 4 || reader.bytes(4) != kModelMagic) {
    throw FormatError("HCDM model: bad magic");
  }
  if (const auto version = reader.u32(); version != kModelVersion) {
    throw FormatError("HCDM model: unsupported version " + std::to_string(version));
  }
  const auto tag = reader.u32();
  const std::size_t input_dim = reader.u32();
  const std::size_t output_dim = reader.u32();
  std::unique_ptr<Model> model;
  switch (tag) {
    case static_cast<std::uint32_t>(Method::gp):
      model = GpModel::read_payload(reader, input_dim, output_dim);
      break;
    case static_cast<std::uint32_t>(Method::svr):
      model = SvrModel::read_payload(reader, input_dim, output_dim);
      break;
    case static_cast<std::uint32_t>(Method::rf):
      model = RfModel::read_payload(reader, input_dim, output_dim);
      break;
    case static_cast<std::uint32_t>(Method::hpt):
      model = HptModel::read_payload(reader, input_dim, output_dim);
      break;
    default:
      throw FormatError("HCDM model: unknown method tag " + std::to_string(tag));
  }
  if (!reader.at_end()) {
    throw FormatError("HCDM model: trailing bytes after payload");
  }
  return model;
}

void save_model(const Model& model, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_model(model));
}

std::unique_ptr<Model> load_model(const std::filesystem::path& path) {
  return deserialize_model(read_file(path));
}

}  // namespace hcd
