#include "hscl/nn/backbone.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>
#include <sstream>

namespace hscl::nn {
namespace {

std::string shortest(double v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

std::size_t parse_count(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(value, &pos);
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "' expects an integer, got '" + value + "'");
  }
  if (pos != value.size() || value.find('-') != std::string::npos) {
    throw ValidationError("config key '" + key + "' expects an integer, got '" + value + "'");
  }
  return static_cast<std::size_t>(v);
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& value) {
  std::vector<std::size_t> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_count(key, item));
  return out;
}

std::string stage_prefix(std::size_t i) { return "stage" + std::to_string(i) + "."; }

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kConv3D: return "conv3d";
    case Variant::kDSC: return "dsc";
    case Variant::kCBAM: return "cbam";
    case Variant::kSEB: return "seb";
    case Variant::kNone: return "none";
  }
  return "unknown";
}

Variant parse_variant(const std::string& s) {
  std::string l = s;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
  if (l == "conv3d") return Variant::kConv3D;
  if (l == "dsc") return Variant::kDSC;
  if (l == "cbam") return Variant::kCBAM;
  if (l == "seb") return Variant::kSEB;
  if (l == "none") return Variant::kNone;
  throw ValidationError("unknown variant '" + s + "' (expected conv3d, dsc, cbam, seb or none)");
}

void BackboneConfig::validate() const {
  auto positive = [](std::size_t v, const char* what) {
    if (v < 1) throw ValidationError(std::string(what) + " must be at least 1");
  };
  positive(cardinality, "cardinality");
  positive(embedding_dim, "embedding_dim");
  positive(projection_dim, "projection_dim");
  positive(input_bands, "input_bands");
  positive(input_pool, "input_pool");
  positive(stem_channels, "stem_channels");
  if (stage_channels.empty()) throw ValidationError("at least one stage is required");
  if (stage_pool.size() != stage_channels.size()) {
    throw ValidationError("stage_pool needs one entry per stage");
  }
  for (std::size_t i = 0; i < stage_channels.size(); ++i) {
    positive(stage_channels[i], "stage width");
    positive(stage_pool[i], "stage pool");
    if (stage_channels[i] % cardinality != 0) {
      throw ValidationError("cardinality " + std::to_string(cardinality) + " does not divide stage width " +
                            std::to_string(stage_channels[i]));
    }
    if (variant == Variant::kCBAM &&
        (cbam_reduction == 0 || stage_channels[i] % cbam_reduction != 0 || stage_channels[i] < cbam_reduction)) {
      throw ValidationError("cbam_reduction must divide every stage width");
    }
  }
  if (stage_channels.back() != embedding_dim) {
    throw ValidationError("last stage width " + std::to_string(stage_channels.back()) +
                          " must equal embedding_dim " + std::to_string(embedding_dim));
  }
  if (!(init_gain > 0.0) || !std::isfinite(init_gain)) throw ValidationError("init_gain must be positive");
  if (stem_kernel % 2 == 0 || cbam_kernel % 2 == 0 || conv3d_spectral_kernel % 2 == 0) {
    throw ValidationError("kernel extents must be odd");
  }
}

std::size_t BackboneConfig::total_pool() const {
  std::size_t f = input_pool;
  for (auto p : stage_pool) f *= p;
  return f;
}

void BackboneConfig::validate_patch(std::size_t bands, std::size_t side) const {
  if (bands != input_bands) {
    throw ValidationError("patch has " + std::to_string(bands) + " bands, backbone expects " +
                          std::to_string(input_bands));
  }
  if (side == 0 || side % total_pool() != 0) {
    throw ValidationError("patch side " + std::to_string(side) + " is not divisible by the pooling factor " +
                          std::to_string(total_pool()));
  }
}

std::string BackboneConfig::to_text() const {
  std::ostringstream out;
  out << "variant=" << to_string(variant) << "\n"
      << "cardinality=" << cardinality << "\n"
      << "stage_channels=" << join(stage_channels) << "\n"
      << "stage_pool=" << join(stage_pool) << "\n"
      << "embedding_dim=" << embedding_dim << "\n"
      << "projection_dim=" << projection_dim << "\n"
      << "input_bands=" << input_bands << "\n"
      << "input_pool=" << input_pool << "\n"
      << "stem_channels=" << stem_channels << "\n"
      << "stem_kernel=" << stem_kernel << "\n"
      << "attention_position=" << (attention_position == AttentionPosition::kAfterSum ? "after_sum" : "branch")
      << "\n"
      << "cbam_reduction=" << cbam_reduction << "\n"
      << "cbam_kernel=" << cbam_kernel << "\n"
      << "conv3d_spectral_kernel=" << conv3d_spectral_kernel << "\n"
      << "input_standardize=" << (input_standardize ? 1 : 0) << "\n"
      << "init_gain=" << shortest(init_gain) << "\n"
      << "zero_bias_init=" << (zero_bias_init ? 1 : 0) << "\n";
  return out.str();
}

BackboneConfig BackboneConfig::from_text(const std::string& text) {
  BackboneConfig c;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError("config line without '=': " + line);
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "variant") c.variant = parse_variant(value);
    else if (key == "cardinality") c.cardinality = parse_count(key, value);
    else if (key == "stage_channels") c.stage_channels = parse_list(key, value);
    else if (key == "stage_pool") c.stage_pool = parse_list(key, value);
    else if (key == "embedding_dim") c.embedding_dim = parse_count(key, value);
    else if (key == "projection_dim") c.projection_dim = parse_count(key, value);
    else if (key == "input_bands") c.input_bands = parse_count(key, value);
    else if (key == "input_pool") c.input_pool = parse_count(key, value);
    else if (key == "stem_channels") c.stem_channels = parse_count(key, value);
    else if (key == "stem_kernel") c.stem_kernel = parse_count(key, value);
    else if (key == "attention_position") {
      if (value == "after_sum") c.attention_position = AttentionPosition::kAfterSum;
      else if (value == "branch") c.attention_position = AttentionPosition::kBranch;
      else throw ValidationError("attention_position must be after_sum or branch");
    } else if (key == "cbam_reduction") c.cbam_reduction = parse_count(key, value);
    else if (key == "cbam_kernel") c.cbam_kernel = parse_count(key, value);
    else if (key == "conv3d_spectral_kernel") c.conv3d_spectral_kernel = parse_count(key, value);
    else if (key == "input_standardize") {
      if (value != "0" && value != "1") throw ValidationError("input_standardize must be 0 or 1");
      c.input_standardize = value == "1";
    } else if (key == "init_gain") {
      double g = 0.0;
      const auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), g);
      if (ec != std::errc() || end != value.data() + value.size()) throw ValidationError("init_gain must be a number");
      c.init_gain = g;
    } else if (key == "zero_bias_init") {
      if (value != "0" && value != "1") throw ValidationError("zero_bias_init must be 0 or 1");
      c.zero_bias_init = value == "1";
    }
    else throw ValidationError("unknown backbone config key '" + key + "'");
  }
  c.validate();
  return c;
}

std::vector<ParameterSpec> parameter_layout(const BackboneConfig& config) {
  config.validate();
  using Init = ParameterSpec::Init;
  std::vector<ParameterSpec> specs;
  auto conv = [&](const std::string& name, std::size_t out, std::size_t in_per_group, std::size_t k, bool bias) {
    const std::size_t fan_in = in_per_group * k * k;
    specs.push_back({name + ".weight", {out, in_per_group, k, k}, fan_in, Init::kFanInUniform});
    if (bias) specs.push_back({name + ".bias", {out}, fan_in, Init::kFanInBias});
  };
  if (config.input_standardize) {
    specs.push_back({kInputShift, {config.input_bands}, 1, Init::kZero});
    specs.push_back({kInputScale, {config.input_bands}, 1, Init::kOne});
  }
  conv("stem", config.stem_channels, config.input_bands, config.stem_kernel, true);
  std::size_t in = config.stem_channels;
  for (std::size_t i = 0; i < config.stage_channels.size(); ++i) {
    const std::string p = stage_prefix(i);
    const std::size_t out = config.stage_channels[i];
    conv(p + "reduce", out, in, 1, true);
    conv(p + "group", out, out / config.cardinality, 3, true);
    conv(p + "expand", out, out, 1, true);
    if (in != out) conv(p + "shortcut", out, in, 1, false);
    switch (config.variant) {
      case Variant::kSEB:
        specs.push_back({p + "se.beta", {out}, 1, Init::kOne});
        specs.push_back({p + "se.gamma", {out}, 1, Init::kZero});
        break;
      case Variant::kCBAM: {
        const std::size_t hidden = out / config.cbam_reduction;
        specs.push_back({p + "cbam.fc1.weight", {hidden, out}, out, Init::kFanInUniform});
        specs.push_back({p + "cbam.fc1.bias", {hidden}, out, Init::kFanInBias});
        specs.push_back({p + "cbam.fc2.weight", {out, hidden}, hidden, Init::kFanInUniform});
        specs.push_back({p + "cbam.fc2.bias", {out}, hidden, Init::kFanInBias});
        const std::size_t k = config.cbam_kernel;
        specs.push_back({p + "cbam.spatial.weight", {1, 2, k, k}, 2 * k * k, Init::kFanInUniform});
        specs.push_back({p + "cbam.spatial.bias", {1}, 2 * k * k, Init::kFanInBias});
        break;
      }
      case Variant::kDSC:
        specs.push_back({p + "dsc.depth", {out, 1, 3, 3}, 9, Init::kFanInUniform});
        specs.push_back({p + "dsc.point", {out, out, 1, 1}, out, Init::kFanInUniform});
        break;
      case Variant::kConv3D: {
        const std::size_t kc = config.conv3d_spectral_kernel;
        specs.push_back({p + "conv3d.weight", {1, 1, kc, 3, 3}, kc * 9, Init::kFanInUniform});
        specs.push_back({p + "conv3d.bias", {1}, kc * 9, Init::kFanInBias});
        break;
      }
      case Variant::kNone: break;
    }
    in = out;
  }
  const std::size_t d = config.embedding_dim, dp = config.projection_dim;
  specs.push_back({"head.w1", {dp, d}, d, Init::kFanInUniform});
  specs.push_back({"head.b1", {dp}, d, Init::kFanInBias});
  specs.push_back({"head.w2", {dp, dp}, dp, Init::kFanInUniform});
  specs.push_back({"head.b2", {dp}, dp, Init::kFanInBias});
  return specs;
}

ParameterSet init_parameters(const BackboneConfig& config, std::uint64_t seed) {
  ParameterSet params;
  std::mt19937_64 rng(seed);
  for (const auto& spec : parameter_layout(config)) {
    Tensor t(spec.shape);
    switch (spec.init) {
      case ParameterSpec::Init::kOne: std::fill(t.values().begin(), t.values().end(), 1.0f); break;
      case ParameterSpec::Init::kZero: break;
      case ParameterSpec::Init::kFanInUniform:
      case ParameterSpec::Init::kFanInBias: {
        const bool bias = spec.init == ParameterSpec::Init::kFanInBias;
        if (bias && config.zero_bias_init) break;
        const double bound = (bias ? 1.0 : config.init_gain) * std::sqrt(1.0 / static_cast<double>(spec.fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (auto& v : t.values()) v = static_cast<float>(dist(rng));
        break;
      }
    }
    params.add(spec.name, std::move(t));
  }
  return params;
}

void fit_input_standardization(const BackboneConfig& config, std::span<const Tensor> patches, ParameterSet& params) {
  if (!config.input_standardize) return;
  const std::size_t c = config.input_bands;
  if (patches.empty()) throw ValidationError("input statistics need at least one patch");
  std::vector<double> sum(c, 0.0), sq(c, 0.0);
  std::size_t count = 0;
  for (const auto& p : patches) {
    if (p.rank() != 3 || p.extent(0) != c) throw ValidationError("patch band count does not match the config");
    const std::size_t n = p.extent(1) * p.extent(2);
    for (std::size_t b = 0; b < c; ++b)
      for (std::size_t i = 0; i < n; ++i) {
        const double v = p[b * n + i];
        sum[b] += v;
        sq[b] += v * v;
      }
    count += n;
  }
  auto& shift = params.at(kInputShift);
  auto& scale = params.at(kInputScale);
  for (std::size_t b = 0; b < c; ++b) {
    const double mean = sum[b] / static_cast<double>(count);
    const double var = std::max(sq[b] / static_cast<double>(count) - mean * mean, 0.0);
    shift[b] = static_cast<float>(-mean);
    scale[b] = static_cast<float>(1.0 / std::max(std::sqrt(var), 1e-6));
  }
}

template <class Real>
void check_parameters(const BackboneConfig& config, const BasicParameterSet<Real>& params) {
  for (const auto& spec : parameter_layout(config)) {
    if (!params.contains(spec.name)) throw ValidationError("parameters lack '" + spec.name + "' required by config");
    const auto& t = params.at(spec.name);
    if (t.shape() != spec.shape) {
      throw ValidationError("parameter '" + spec.name + "' has shape " + to_string(t.shape()) + ", config needs " +
                            to_string(spec.shape));
    }
  }
}

namespace {

template <class Real>
Var<Real> attention(Tape<Real>& t, Var<Real> y, const BackboneConfig& config, BasicParameterSet<Real>& params,
                    const std::string& p) {
  switch (config.variant) {
    case Variant::kSEB:
      return se_block(y, t.parameter(params, p + "se.beta"), t.parameter(params, p + "se.gamma"));
    case Variant::kCBAM: {
      CbamParams<Real> cp{t.parameter(params, p + "cbam.fc1.weight"), t.parameter(params, p + "cbam.fc1.bias"),
                          t.parameter(params, p + "cbam.fc2.weight"), t.parameter(params, p + "cbam.fc2.bias"),
                          t.parameter(params, p + "cbam.spatial.weight"),
                          t.parameter(params, p + "cbam.spatial.bias")};
      return cbam_block(y, cp);
    }
    case Variant::kDSC:
      return add(y, depthwise_separable_conv(y, t.parameter(params, p + "dsc.depth"),
                                             t.parameter(params, p + "dsc.point")));
    case Variant::kConv3D: {
      const Shape s = y.shape();
      const std::size_t kc = config.conv3d_spectral_kernel;
      auto vol = reshape(y, {1, s[0], s[1], s[2]});
      auto mixed = conv3d(vol, t.parameter(params, p + "conv3d.weight"), t.parameter(params, p + "conv3d.bias"),
                          Conv3dOptions{1, 1, kc / 2, 1});
      return add(y, reshape(mixed, s));
    }
    case Variant::kNone: return y;
  }
  return y;
}

}  // namespace

template <class Real>
BackboneOutputs<Real> backbone_forward(Tape<Real>& t, Var<Real> patch, const BackboneConfig& config,
                                       BasicParameterSet<Real>& params) {
  config.validate();
  check_parameters(config, params);
  const auto& pv = patch.value();
  if (pv.rank() != 3) throw ValidationError("backbone input must be [C,S,S], got " + to_string(pv.shape()));
  if (pv.extent(1) != pv.extent(2)) throw ValidationError("backbone input must be square");
  config.validate_patch(pv.extent(0), pv.extent(1));

  BackboneOutputs<Real> out;
  Var<Real> x = patch;
  if (config.input_pool > 1) x = avg_pool2d(x, config.input_pool);
  if (config.input_standardize) {
    x = scale_channels(shift_channels(x, t.parameter(params, kInputShift)), t.parameter(params, kInputScale));
  }
  x = relu(conv2d(x, t.parameter(params, "stem.weight"), t.parameter(params, "stem.bias"),
                  Conv2dOptions{1, 1, config.stem_kernel / 2}));
  std::size_t in = config.stem_channels;
  for (std::size_t i = 0; i < config.stage_channels.size(); ++i) {
    const std::string p = stage_prefix(i);
    const std::size_t width = config.stage_channels[i];
    if (config.stage_pool[i] > 1) x = avg_pool2d(x, config.stage_pool[i]);
    auto h = relu(conv2d(x, t.parameter(params, p + "reduce.weight"), t.parameter(params, p + "reduce.bias"),
                         Conv2dOptions{}));
    h = relu(conv2d(h, t.parameter(params, p + "group.weight"), t.parameter(params, p + "group.bias"),
                    Conv2dOptions{config.cardinality, 1, 1}));
    h = conv2d(h, t.parameter(params, p + "expand.weight"), t.parameter(params, p + "expand.bias"), Conv2dOptions{});
    auto shortcut = in == width ? x : conv2d(x, t.parameter(params, p + "shortcut.weight"), std::nullopt, Conv2dOptions{});
    if (config.attention_position == AttentionPosition::kBranch) {
      x = relu(add(attention(t, h, config, params, p), shortcut));
    } else {
      x = attention(t, relu(add(h, shortcut)), config, params, p);
    }
    out.stage_outputs.push_back(x);
    in = width;
  }
  out.embedding = global_avg_pool(x);
  return out;
}

template <class Real>
Var<Real> projection_forward(Tape<Real>& t, Var<Real> embedding, BasicParameterSet<Real>& params) {
  ProjectionHeadParams<Real> hp{t.parameter(params, "head.w1"), t.parameter(params, "head.b1"),
                                t.parameter(params, "head.w2"), t.parameter(params, "head.b2")};
  return projection_head(embedding, hp);
}

Tensor embed(const Tensor& patch, const BackboneConfig& config, ParameterSet& params) {
  Tape<float> tape;
  auto input = tape.leaf(patch, /*requires_grad=*/false);
  return backbone_forward(tape, input, config, params).embedding.value();
}

template void check_parameters(const BackboneConfig&, const BasicParameterSet<float>&);
template void check_parameters(const BackboneConfig&, const BasicParameterSet<double>&);
template BackboneOutputs<float> backbone_forward(Tape<float>&, Var<float>, const BackboneConfig&,
                                                 BasicParameterSet<float>&);
template BackboneOutputs<double> backbone_forward(Tape<double>&, Var<double>, const BackboneConfig&,
                                                  BasicParameterSet<double>&);
template Var<float> projection_forward(Tape<float>&, Var<float>, BasicParameterSet<float>&);
template Var<double> projection_forward(Tape<double>&, Var<double>, BasicParameterSet<double>&);

}  // namespace hscl::nn
