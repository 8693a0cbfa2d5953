#include "chns/encoder.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "chns/error.hpp"
#include "chns/rng.hpp"
#include "chns/vecmath.hpp"

namespace chns {

EncoderParams EncoderParams::init(std::size_t input_dim,
                                  const std::vector<std::size_t>& hidden,
                                  std::size_t output_dim, std::uint64_t seed) {
  if (input_dim == 0 || output_dim == 0)
    throw Error(ErrorCode::InvalidSpec, "encoder dims must be >= 1");
  std::vector<std::size_t> dims;
  dims.push_back(input_dim);
  for (std::size_t h : hidden) dims.push_back(h);
  dims.push_back(output_dim);

  EncoderParams params;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    auto rng = derive_rng(seed, {hash_string("layer"), l});
    const std::size_t fan_in = dims[l];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Layer layer;
    layer.weight = Matrix(dims[l + 1], dims[l]);
    for (double& w : layer.weight.data()) w = u(rng);
    layer.bias.assign(dims[l + 1], 0.0);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

void EncoderParams::validate() const {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].bias.size() != layers[l].weight.rows())
      throw Error(ErrorCode::DimensionMismatch, "bias size does not match layer rows");
    if (l > 0 && layers[l].weight.cols() != layers[l - 1].weight.rows())
      throw Error(ErrorCode::DimensionMismatch, "layer dimensions do not chain");
    if (!all_finite(layers[l].weight.data()) || !all_finite(layers[l].bias))
      throw Error(ErrorCode::NonFinite, "encoder parameters have NaN or Inf entries");
  }
}

namespace {

Matrix affine(const Matrix& x, const Layer& layer) {
  const std::size_t n = x.rows();
  const std::size_t out = layer.weight.rows();
  const std::size_t in = layer.weight.cols();
  Matrix z(n, out);
  for (std::size_t r = 0; r < n; ++r) {
    auto row = x.row(r);
    for (std::size_t o = 0; o < out; ++o) {
      double acc = layer.bias[o];
      auto w = layer.weight.row(o);
      for (std::size_t i = 0; i < in; ++i) acc += w[i] * row[i];
      z.at(r, o) = acc;
    }
  }
  return z;
}

Matrix rectify(const Matrix& z) {
  Matrix a = z;
  for (double& v : a.data()) v = v > 0.0 ? v : 0.0;
  return a;
}

}  // namespace

Matrix encoder_forward(const EncoderParams& params, const Matrix& features,
                       ForwardCache* cache) {
  if (!params.layers.empty() && features.cols() != params.input_dim())
    throw Error(ErrorCode::DimensionMismatch,
                "feature dim " + std::to_string(features.cols()) +
                    " does not match encoder input dim " +
                    std::to_string(params.input_dim()));
  if (!all_finite(features.data()))
    throw Error(ErrorCode::NonFinite, "features have NaN or Inf entries");

  if (cache) {
    cache->input = features;
    cache->pre_activations.clear();
    cache->activations.clear();
  }

  Matrix x = features;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    Matrix z = affine(x, params.layers[l]);
    const bool last = l + 1 == params.layers.size();
    Matrix a = last ? z : rectify(z);
    if (cache) {
      cache->pre_activations.push_back(std::move(z));
      cache->activations.push_back(a);
    }
    x = std::move(a);
  }

  // Unit-normalize each row.
  Matrix out(x.rows(), x.cols());
  Vec norms(x.rows(), 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double sq = 0.0;
    auto row = x.row(r);
    for (double v : row) sq += v * v;
    double norm = std::sqrt(sq);
    if (!(norm > 1e-12))
      throw Error(ErrorCode::ZeroVector,
                  "encoder pre-normalization output has near-zero norm");
    norms[r] = norm;
    for (std::size_t c = 0; c < x.cols(); ++c) out.at(r, c) = row[c] / norm;
  }
  if (cache) {
    cache->prenorm_norms = std::move(norms);
    cache->embeddings = out;
  }
  return out;
}

EncoderGrads encoder_backward(const EncoderParams& params, const ForwardCache& cache,
                              const Matrix& grad_embeddings) {
  const Matrix& prenorm =
      params.layers.empty() ? cache.input : cache.activations.back();
  const std::size_t n = prenorm.rows();
  const std::size_t d = prenorm.cols();
  if (grad_embeddings.rows() != n || grad_embeddings.cols() != d)
    throw Error(ErrorCode::DimensionMismatch, "upstream gradient shape mismatch");

  // Through row normalization: g_z = (g - (u . g) u) / ||z||.
  Matrix g(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    const double norm = cache.prenorm_norms[r];
    double ug = 0.0;
    for (std::size_t c = 0; c < d; ++c) ug += cache.embeddings.at(r, c) * grad_embeddings.at(r, c);
    for (std::size_t c = 0; c < d; ++c)
      g.at(r, c) = (grad_embeddings.at(r, c) - ug * cache.embeddings.at(r, c)) / norm;
  }

  EncoderGrads grads(params.layers.size());
  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const Layer& layer = params.layers[li];
    const Matrix& input = li == 0 ? cache.input : cache.activations[li - 1];
    const std::size_t out_dim = layer.weight.rows();
    const std::size_t in_dim = layer.weight.cols();

    grads[li].weight = Matrix(out_dim, in_dim);
    grads[li].bias.assign(out_dim, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t o = 0; o < out_dim; ++o) {
        const double gv = g.at(r, o);
        if (gv == 0.0) continue;
        grads[li].bias[o] += gv;
        auto in_row = input.row(r);
        auto w_row = grads[li].weight.row(o);
        for (std::size_t i = 0; i < in_dim; ++i) w_row[i] += gv * in_row[i];
      }
    }

    if (li == 0) break;
    Matrix g_prev(n, in_dim);
    const Matrix& z_prev = cache.pre_activations[li - 1];
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t i = 0; i < in_dim; ++i) {
        if (z_prev.at(r, i) <= 0.0) continue;  // rectifier gate
        double acc = 0.0;
        for (std::size_t o = 0; o < out_dim; ++o)
          acc += g.at(r, o) * layer.weight.at(o, i);
        g_prev.at(r, i) = acc;
      }
    }
    g = std::move(g_prev);
  }
  return grads;
}

OptimizerState OptimizerState::for_params(const EncoderParams& params, AdamConfig cfg) {
  OptimizerState state;
  state.config = cfg;
  for (const auto& layer : params.layers) {
    state.lanes.push_back({Vec(layer.weight.data().size(), 0.0),
                           Vec(layer.weight.data().size(), 0.0)});
    state.lanes.push_back({Vec(layer.bias.size(), 0.0), Vec(layer.bias.size(), 0.0)});
  }
  return state;
}

void adam_update_flat(std::span<double> params, AdamLane& lane,
                      std::span<const double> grads, double lr, std::size_t step,
                      const AdamConfig& cfg) {
  if (params.size() != grads.size() || lane.m.size() != params.size())
    throw Error(ErrorCode::DimensionMismatch, "adam lane shape mismatch");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double gsq = grads[i] * grads[i];
    if (!std::isfinite(grads[i]))
      throw Error(ErrorCode::NonFinite, "gradient is not finite");
    lane.m[i] = cfg.beta1 * lane.m[i] + (1.0 - cfg.beta1) * grads[i];
    lane.v[i] = cfg.beta2 * lane.v[i] + (1.0 - cfg.beta2) * gsq;
    const double m_hat = lane.m[i] / bc1;
    const double v_hat = lane.v[i] / bc2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

void adam_step(OptimizerState& state, EncoderParams& params, const EncoderGrads& grads,
               double lr) {
  if (grads.size() != params.layers.size() ||
      state.lanes.size() != 2 * params.layers.size())
    throw Error(ErrorCode::DimensionMismatch, "optimizer state shape mismatch");
  state.step++;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    adam_update_flat(params.layers[l].weight.data(), state.lanes[2 * l],
                     grads[l].weight.data(), lr, state.step, state.config);
    adam_update_flat(params.layers[l].bias, state.lanes[2 * l + 1], grads[l].bias, lr,
                     state.step, state.config);
  }
}

double lr_at(std::size_t step, std::size_t total_steps, double warmup_fraction,
             double max_lr) {
  if (total_steps == 0) return 0.0;
  const auto warmup_steps = static_cast<std::size_t>(
      std::llround(warmup_fraction * static_cast<double>(total_steps)));
  if (warmup_steps > 0 && step < warmup_steps)
    return max_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  const double span = static_cast<double>(total_steps - warmup_steps);
  const double progress =
      span <= 0.0 ? 1.0 : static_cast<double>(step - warmup_steps) / span;
  return 0.5 * max_lr * (1.0 + std::cos(M_PI * std::min(progress, 1.0)));
}

namespace {

constexpr char kModelMagic[4] = {'C', 'H', 'N', 'M'};
constexpr std::uint32_t kModelVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

void write_f64(std::ostream& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, sizeof(bits));
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double d;
  std::memcpy(&d, &bits, sizeof(d));
  return d;
}

}  // namespace

void save_checkpoint(const EncoderParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write checkpoint: " + path);
  out.write(kModelMagic, 4);
  write_u32(out, kModelVersion);
  write_u32(out, static_cast<std::uint32_t>(params.layers.size()));
  write_u32(out, static_cast<std::uint32_t>(params.input_dim()));
  for (const auto& layer : params.layers)
    write_u32(out, static_cast<std::uint32_t>(layer.weight.rows()));
  for (const auto& layer : params.layers) {
    for (double w : layer.weight.data()) write_f64(out, w);
    for (double b : layer.bias) write_f64(out, b);
  }
  if (!out) throw Error(ErrorCode::IoError, "short write to checkpoint: " + path);
}

EncoderParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingArtifact, "cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kModelMagic, 4) != 0)
    throw Error(ErrorCode::IoError, "bad magic in checkpoint: " + path);
  if (read_u32(in) != kModelVersion)
    throw Error(ErrorCode::IoError, "unsupported checkpoint version in " + path);
  const std::uint32_t n_layers = read_u32(in);
  const std::uint32_t input_dim = read_u32(in);
  std::vector<std::uint32_t> out_dims(n_layers);
  for (auto& d : out_dims) d = read_u32(in);

  EncoderParams params;
  std::uint32_t in_dim = input_dim;
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    Layer layer;
    layer.weight = Matrix(out_dims[l], in_dim);
    for (double& w : layer.weight.data()) w = read_f64(in);
    layer.bias.resize(out_dims[l]);
    for (double& b : layer.bias) b = read_f64(in);
    params.layers.push_back(std::move(layer));
    in_dim = out_dims[l];
  }
  if (!in) throw Error(ErrorCode::IoError, "truncated checkpoint: " + path);
  params.validate();
  return params;
}

}  // namespace chns
