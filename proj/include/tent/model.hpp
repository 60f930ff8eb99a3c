#pragma once

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tent/encoder.hpp"
#include "tent/error.hpp"
#include "tent/graph_io.hpp"
#include "tent/params.hpp"
#include "tent/rng.hpp"

namespace tent {

inline constexpr char kCheckpointMagic[6] = {'T', 'E', 'N', 'T', 'C', '1'};

// All trainable state: the whole-graph encoder phi, the subgraph encoder
// theta, the two FiLM adapter nets, and the base-class head.
struct ModelParams {
  GinConfig phi_cfg;    // in_dim = d, out = d_h
  GinConfig theta_cfg;  // in_dim = d_h, out = d_s
  int base_class_count = 0;

  ParamGroup phi;
  ParamGroup theta;
  ParamGroup alpha_net;
  ParamGroup beta_net;
  ParamGroup head;

  std::vector<ParamGroup*> groups() {
    return {&phi, &theta, &alpha_net, &beta_net, &head};
  }
  std::vector<const ParamGroup*> groups() const {
    return {&phi, &theta, &alpha_net, &beta_net, &head};
  }
  static const std::vector<std::string>& group_names() {
    static const std::vector<std::string> names{"phi", "theta", "alpha_net",
                                                "beta_net", "head"};
    return names;
  }
};

// Fresh model: Xavier weights, zero biases and eps, zero-initialized adapter
// output layers (FiLM identity at the start).
inline ModelParams init_model(int feature_dim, int hidden_dim, int out_dim,
                              double dropout, int base_class_count,
                              std::uint64_t seed) {
  if (base_class_count < 1) throw ArgumentError("need at least one base class");
  ModelParams m;
  m.phi_cfg = GinConfig{feature_dim, hidden_dim, hidden_dim, dropout};
  m.theta_cfg = GinConfig{hidden_dim, hidden_dim, out_dim, dropout};
  m.base_class_count = base_class_count;
  const int d_theta = gin_schema(m.theta_cfg).total();
  m.phi = init_group(gin_schema(m.phi_cfg), Rng(seed, 0, Role::Init));
  m.theta = init_group(gin_schema(m.theta_cfg), Rng(seed, 1, Role::Init));
  m.alpha_net = init_group(mlp_schema(hidden_dim, hidden_dim, d_theta),
                           Rng(seed, 2, Role::Init), /*zero_output_layer=*/true);
  m.beta_net = init_group(mlp_schema(hidden_dim, hidden_dim, d_theta),
                          Rng(seed, 3, Role::Init), /*zero_output_layer=*/true);
  m.head = init_group(head_schema(hidden_dim, base_class_count),
                      Rng(seed, 4, Role::Init));
  return m;
}

// Single-file checkpoint: magic, length-prefixed JSON config echo, then each
// group as (name, length, f64 values).
inline void save_checkpoint(const std::string& path, const ModelParams& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write checkpoint: " + path);
  out.write(kCheckpointMagic, 6);
  nlohmann::json cfg;
  cfg["layout_version"] = kParamLayoutVersion;
  cfg["feature_dim"] = m.phi_cfg.in_dim;
  cfg["hidden_dim"] = m.phi_cfg.hidden_dim;
  cfg["out_dim"] = m.theta_cfg.out_dim;
  cfg["dropout"] = m.phi_cfg.dropout_rate;
  cfg["base_class_count"] = m.base_class_count;
  const std::string echo = cfg.dump();
  io::write_pod<std::uint64_t>(out, echo.size());
  out.write(echo.data(), static_cast<std::streamsize>(echo.size()));
  const auto groups = m.groups();
  io::write_pod<std::uint64_t>(out, groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const std::string& name = ModelParams::group_names()[i];
    io::write_pod<std::uint64_t>(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    const Vec& v = groups[i]->values;
    io::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(v.size()));
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
}

inline ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint: " + path);
  char magic[6];
  in.read(magic, 6);
  if (!in || std::memcmp(magic, kCheckpointMagic, 6) != 0)
    throw FormatError(path + ": bad magic, expected TENTC1");
  const auto echo_len = io::read_pod<std::uint64_t>(in, "config length");
  std::string echo(echo_len, '\0');
  in.read(echo.data(), static_cast<std::streamsize>(echo_len));
  if (!in) throw FormatError(path + ": truncated config echo");
  nlohmann::json cfg;
  try {
    cfg = nlohmann::json::parse(echo);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": config echo: " + e.what());
  }
  if (cfg.value("layout_version", -1) != kParamLayoutVersion)
    throw SchemaError(path + ": unsupported parameter layout version");

  ModelParams m = init_model(cfg.at("feature_dim").get<int>(),
                             cfg.at("hidden_dim").get<int>(),
                             cfg.at("out_dim").get<int>(),
                             cfg.at("dropout").get<double>(),
                             cfg.at("base_class_count").get<int>(),
                             /*seed=*/0);
  const auto group_count = io::read_pod<std::uint64_t>(in, "group count");
  if (group_count != m.groups().size())
    throw SchemaError(path + ": expected " + std::to_string(m.groups().size()) +
                      " parameter groups, found " + std::to_string(group_count));
  auto groups = m.groups();
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const auto name_len = io::read_pod<std::uint64_t>(in, "group name length");
    std::string name(name_len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(name_len));
    if (!in || name != ModelParams::group_names()[i])
      throw SchemaError(path + ": group " + std::to_string(i) + " is '" + name +
                        "', expected '" + ModelParams::group_names()[i] + "'");
    const auto len = io::read_pod<std::uint64_t>(in, "group length");
    if (len != static_cast<std::uint64_t>(groups[i]->values.size()))
      throw SchemaError(path + ": group '" + name + "' has " +
                        std::to_string(len) + " values, schema wants " +
                        std::to_string(groups[i]->values.size()));
    in.read(reinterpret_cast<char*>(groups[i]->values.data()),
            static_cast<std::streamsize>(len * sizeof(double)));
    if (!in) throw FormatError(path + ": truncated values for group '" + name + "'");
  }
  return m;
}

}  // namespace tent
