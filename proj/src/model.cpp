#include "fedsketch/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "fedsketch/errors.hpp"
#include "fedsketch/io.hpp"
#include "fedsketch/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "parameter blobs are written little-endian via memcpy");

namespace fedsketch::model {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Uniform(-scale, scale) fill; draw order is row-major regardless of the
// matrix's storage order, so float and double modes share the same sequence.
template <typename M>
void fill_uniform(M& mat, double scale, RngStream& rng) {
  for (Eigen::Index r = 0; r < mat.rows(); ++r)
    for (Eigen::Index c = 0; c < mat.cols(); ++c)
      mat(r, c) = static_cast<typename M::Scalar>((2.0 * rng.next_double() - 1.0) * scale);
}

template <typename T>
T stable_sigmoid(T z) {
  if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

// Forward pass keeping pre-activations for backprop.
template <typename T>
struct ForwardCache {
  RowMatrix<T> Z1, A1, A2, Z3;  // Z2 only needed as a relu mask, A2 keeps it
};

template <typename T>
void run_forward(const MlpParams<T>& params,
                 const std::vector<const data::SparseVector*>& xs,
                 ForwardCache<T>& f) {
  const auto n = static_cast<Eigen::Index>(xs.size());
  const Eigen::Index h1 = params.b1.size();

  f.Z1.resize(n, h1);
  for (Eigen::Index s = 0; s < n; ++s) {
    f.Z1.row(s) = params.b1.transpose();
    const auto& x = *xs[s];
    for (std::size_t i = 0; i < x.nnz(); ++i) {
      if (static_cast<Eigen::Index>(x.indices[i]) >= params.W1.rows())
        throw std::invalid_argument("forward: feature index out of range");
      f.Z1.row(s) += static_cast<T>(x.values[i]) * params.W1.row(x.indices[i]);
    }
  }
  f.A1 = f.Z1.cwiseMax(T(0));
  f.A2 = ((f.A1 * params.W2).rowwise() + params.b2.transpose()).cwiseMax(T(0));
  f.Z3 = (f.A2 * params.W3).rowwise() + params.b3.transpose();
}

template <typename T>
void resize_like(Gradients<T>& g, const MlpParams<T>& p) {
  g.W1.resize(p.W1.rows(), p.W1.cols());
  g.b1.resize(p.b1.size());
  g.W2.resize(p.W2.rows(), p.W2.cols());
  g.b2.resize(p.b2.size());
  g.W3.resize(p.W3.rows(), p.W3.cols());
  g.b3.resize(p.b3.size());
}

// Shared gradient core; targets are trusted to be 0/1.
template <typename T>
double loss_grad_core(const MlpParams<T>& params,
                      const std::vector<const data::SparseVector*>& xs,
                      const RowMatrix<T>& targets, Gradients<T>& grads) {
  if (static_cast<Eigen::Index>(xs.size()) != targets.rows())
    throw std::invalid_argument("loss_and_grad: batch/target rows mismatch");
  if (targets.cols() != params.b3.size())
    throw std::invalid_argument("loss_and_grad: target dim != output dim");
  if (xs.empty()) throw std::invalid_argument("loss_and_grad: empty batch");

  ForwardCache<T> f;
  run_forward(params, xs, f);

  const auto n = targets.rows();
  const auto out = targets.cols();
  const double denom = static_cast<double>(n) * static_cast<double>(out);

  // loss = mean over batch and outputs of max(z,0) - z*t + log(1 + e^-|z|)
  double loss = 0.0;
  for (Eigen::Index s = 0; s < n; ++s)
    for (Eigen::Index o = 0; o < out; ++o) {
      const double z = static_cast<double>(f.Z3(s, o));
      const double t = static_cast<double>(targets(s, o));
      loss += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
    }
  loss /= denom;

  const T scale = static_cast<T>(1.0 / denom);
  RowMatrix<T> d3(n, out);
  for (Eigen::Index s = 0; s < n; ++s)
    for (Eigen::Index o = 0; o < out; ++o)
      d3(s, o) = (stable_sigmoid(f.Z3(s, o)) - targets(s, o)) * scale;

  resize_like(grads, params);
  grads.W3 = f.A2.transpose() * d3;
  grads.b3 = d3.colwise().sum().transpose();

  RowMatrix<T> d2 = (d3 * params.W3.transpose()).array() *
                    (f.A2.array() > T(0)).template cast<T>();
  grads.W2 = f.A1.transpose() * d2;
  grads.b2 = d2.colwise().sum().transpose();

  RowMatrix<T> d1 = (d2 * params.W2.transpose()).array() *
                    (f.Z1.array() > T(0)).template cast<T>();
  grads.W1.setZero();
  for (Eigen::Index s = 0; s < static_cast<Eigen::Index>(xs.size()); ++s) {
    const auto& x = *xs[s];
    for (std::size_t i = 0; i < x.nnz(); ++i)
      grads.W1.row(x.indices[i]) += static_cast<T>(x.values[i]) * d1.row(s);
  }
  grads.b1 = d1.colwise().sum().transpose();
  return loss;
}

template <typename T>
void append_matrix(std::string& blob, const Eigen::Ref<const RowMatrix<T>>& m) {
  const auto* bytes = reinterpret_cast<const char*>(m.data());
  blob.append(bytes, sizeof(T) * static_cast<std::size_t>(m.size()));
}

}  // namespace

template <typename T>
MlpParams<T> init_mlp(const MLPConfig& config) {
  if (config.input_dim == 0 || config.h1 == 0 || config.h2 == 0 ||
      config.output_dim == 0)
    throw std::invalid_argument("init_mlp: all dimensions must be positive");

  MlpParams<T> p;
  p.W1.resize(config.input_dim, config.h1);
  p.W2.resize(config.h1, config.h2);
  p.W3.resize(config.h2, config.output_dim);
  p.b1 = MlpParams<T>::Vector::Zero(config.h1);
  p.b2 = MlpParams<T>::Vector::Zero(config.h2);
  p.b3 = MlpParams<T>::Vector::Zero(config.output_dim);

  const auto glorot = [](std::uint64_t fan_in, std::uint64_t fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  };
  RngStream r1(config.seed, StreamTag::model_init, {1});
  fill_uniform(p.W1, glorot(config.input_dim, config.h1), r1);
  RngStream r2(config.seed, StreamTag::model_init, {2});
  fill_uniform(p.W2, glorot(config.h1, config.h2), r2);
  RngStream r3(config.seed, StreamTag::model_init, {3});
  fill_uniform(p.W3, glorot(config.h2, config.output_dim), r3);
  return p;
}

template <typename T>
Eigen::Matrix<T, Eigen::Dynamic, 1> forward(const MlpParams<T>& params,
                                            const data::SparseVector& x) {
  std::vector<const data::SparseVector*> xs{&x};
  ForwardCache<T> f;
  run_forward(params, xs, f);
  return f.Z3.row(0).transpose();
}

template <typename T>
Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> forward_batch(
    const MlpParams<T>& params, const std::vector<const data::SparseVector*>& xs) {
  ForwardCache<T> f;
  run_forward(params, xs, f);
  return std::move(f.Z3);
}

template <typename T>
double loss_and_grad(const MlpParams<T>& params,
                     const std::vector<const data::SparseVector*>& xs,
                     const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic,
                                         Eigen::RowMajor>& targets,
                     Gradients<T>& grads) {
  for (Eigen::Index s = 0; s < targets.rows(); ++s)
    for (Eigen::Index o = 0; o < targets.cols(); ++o)
      if (targets(s, o) != T(0) && targets(s, o) != T(1))
        throw std::invalid_argument("loss_and_grad: targets must be exactly 0 or 1");
  return loss_grad_core(params, xs, targets, grads);
}

template <typename T>
double loss_and_grad_sparse(const MlpParams<T>& params,
                            const std::vector<const data::SparseVector*>& xs,
                            const std::vector<const std::vector<std::uint32_t>*>& positives,
                            std::uint32_t output_dim, Gradients<T>& grads) {
  if (positives.size() != xs.size())
    throw std::invalid_argument("loss_and_grad_sparse: batch size mismatch");
  RowMatrix<T> targets = RowMatrix<T>::Zero(static_cast<Eigen::Index>(xs.size()),
                                            output_dim);
  for (std::size_t s = 0; s < positives.size(); ++s)
    for (std::uint32_t o : *positives[s]) {
      if (o >= output_dim)
        throw std::invalid_argument("loss_and_grad_sparse: target index out of range");
      targets(static_cast<Eigen::Index>(s), o) = T(1);
    }
  return loss_grad_core(params, xs, targets, grads);
}

template <typename T>
void sgd_step(MlpParams<T>& params, const Gradients<T>& grads, T lr) {
  params.W1 -= lr * grads.W1;
  params.b1 -= lr * grads.b1;
  params.W2 -= lr * grads.W2;
  params.b2 -= lr * grads.b2;
  params.W3 -= lr * grads.W3;
  params.b3 -= lr * grads.b3;
}

template <typename T>
MlpParams<T> average_params(const std::vector<const MlpParams<T>*>& models,
                            const std::vector<double>& weights) {
  if (models.empty())
    throw std::invalid_argument("average_params: empty model list");
  if (weights.size() != models.size())
    throw std::invalid_argument("average_params: weight count mismatch");
  double wsum = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw std::invalid_argument("average_params: negative weight");
    wsum += w;
  }
  if (wsum <= 0.0) throw std::invalid_argument("average_params: weights sum to zero");

  const auto& ref = *models[0];
  MlpParamsD acc;
  acc.W1 = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>::Zero(
      ref.W1.rows(), ref.W1.cols());
  acc.b1 = Eigen::VectorXd::Zero(ref.b1.size());
  acc.W2 = Eigen::MatrixXd::Zero(ref.W2.rows(), ref.W2.cols());
  acc.b2 = Eigen::VectorXd::Zero(ref.b2.size());
  acc.W3 = Eigen::MatrixXd::Zero(ref.W3.rows(), ref.W3.cols());
  acc.b3 = Eigen::VectorXd::Zero(ref.b3.size());

  for (std::size_t m = 0; m < models.size(); ++m) {
    const auto& p = *models[m];
    if (p.W1.rows() != ref.W1.rows() || p.W1.cols() != ref.W1.cols() ||
        p.W2.rows() != ref.W2.rows() || p.W2.cols() != ref.W2.cols() ||
        p.W3.rows() != ref.W3.rows() || p.W3.cols() != ref.W3.cols())
      throw std::invalid_argument("average_params: shape mismatch");
    const double w = weights[m] / wsum;
    acc.W1 += w * p.W1.template cast<double>();
    acc.b1 += w * p.b1.template cast<double>();
    acc.W2 += w * p.W2.template cast<double>();
    acc.b2 += w * p.b2.template cast<double>();
    acc.W3 += w * p.W3.template cast<double>();
    acc.b3 += w * p.b3.template cast<double>();
  }

  MlpParams<T> out;
  out.W1 = acc.W1.cast<T>();
  out.b1 = acc.b1.cast<T>();
  out.W2 = acc.W2.cast<T>();
  out.b2 = acc.b2.cast<T>();
  out.W3 = acc.W3.cast<T>();
  out.b3 = acc.b3.cast<T>();
  return out;
}

std::uint64_t param_count(const MLPConfig& c) {
  const std::uint64_t d = c.input_dim, h1 = c.h1, h2 = c.h2, out = c.output_dim;
  return d * h1 + h1 + h1 * h2 + h2 + h2 * out + out;
}

std::uint64_t byte_size(const MLPConfig& c) {
  return param_count(c) * bytes_per_scalar(c.precision);
}

template <typename T>
std::uint64_t byte_size(const MlpParams<T>& params) {
  return params.param_count() * sizeof(T);
}

MlpParamsD to_double(const MlpParamsF& p) {
  MlpParamsD out;
  out.W1 = p.W1.cast<double>();
  out.b1 = p.b1.cast<double>();
  out.W2 = p.W2.cast<double>();
  out.b2 = p.b2.cast<double>();
  out.W3 = p.W3.cast<double>();
  out.b3 = p.b3.cast<double>();
  return out;
}

MlpParamsD to_double(const MlpParamsD& p) { return p; }

template <typename T>
std::string params_to_blob(const MlpParams<T>& params) {
  std::string blob = "fsmlp " + std::to_string(params.W1.rows()) + ' ' +
                     std::to_string(params.W1.cols()) + ' ' +
                     std::to_string(params.W2.cols()) + ' ' +
                     std::to_string(params.W3.cols()) + ' ' +
                     std::to_string(sizeof(T) * 8) + "\n";
  blob.reserve(blob.size() + byte_size(params));
  append_matrix<T>(blob, params.W1);
  append_matrix<T>(blob, params.b1.transpose());
  append_matrix<T>(blob, RowMatrix<T>(params.W2));
  append_matrix<T>(blob, params.b2.transpose());
  append_matrix<T>(blob, RowMatrix<T>(params.W3));
  append_matrix<T>(blob, params.b3.transpose());
  return blob;
}

template <typename T>
MlpParams<T> params_from_blob(const std::string& blob) {
  const auto nl = blob.find('\n');
  if (nl == std::string::npos) throw data_error("params blob: missing header");
  const auto head = io::split_ws(blob.substr(0, nl));
  if (head.size() != 6 || head[0] != "fsmlp")
    throw data_error("params blob: bad header");
  const auto d = io::parse_uint(head[1], "blob input_dim");
  const auto h1 = io::parse_uint(head[2], "blob h1");
  const auto h2 = io::parse_uint(head[3], "blob h2");
  const auto out = io::parse_uint(head[4], "blob output_dim");
  const auto bits = io::parse_uint(head[5], "blob bits");
  if (bits != sizeof(T) * 8)
    throw data_error("params blob: precision is " + std::to_string(bits) +
                     "-bit, expected " + std::to_string(sizeof(T) * 8));

  MLPConfig cfg;
  cfg.input_dim = static_cast<std::uint32_t>(d);
  cfg.h1 = static_cast<std::uint32_t>(h1);
  cfg.h2 = static_cast<std::uint32_t>(h2);
  cfg.output_dim = static_cast<std::uint32_t>(out);
  const std::uint64_t scalars = param_count(cfg);
  if (blob.size() - nl - 1 != scalars * sizeof(T))
    throw data_error("params blob: payload size mismatch");

  MlpParams<T> p;
  const char* cur = blob.data() + nl + 1;
  const auto take = [&cur](auto& mat, Eigen::Index rows, Eigen::Index cols) {
    RowMatrix<T> tmp(rows, cols);
    std::memcpy(tmp.data(), cur, sizeof(T) * static_cast<std::size_t>(tmp.size()));
    cur += sizeof(T) * static_cast<std::size_t>(tmp.size());
    mat = tmp;
  };
  take(p.W1, static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(h1));
  RowMatrix<T> tmp;
  take(tmp, 1, static_cast<Eigen::Index>(h1));
  p.b1 = tmp.row(0).transpose();
  take(p.W2, static_cast<Eigen::Index>(h1), static_cast<Eigen::Index>(h2));
  take(tmp, 1, static_cast<Eigen::Index>(h2));
  p.b2 = tmp.row(0).transpose();
  take(p.W3, static_cast<Eigen::Index>(h2), static_cast<Eigen::Index>(out));
  take(tmp, 1, static_cast<Eigen::Index>(out));
  p.b3 = tmp.row(0).transpose();
  return p;
}

// Explicit instantiations: the simulator runs float for experiments and
// double for gradient checks.
template MlpParams<float> init_mlp<float>(const MLPConfig&);
template MlpParams<double> init_mlp<double>(const MLPConfig&);
template Eigen::Matrix<float, Eigen::Dynamic, 1> forward<float>(
    const MlpParams<float>&, const data::SparseVector&);
template Eigen::Matrix<double, Eigen::Dynamic, 1> forward<double>(
    const MlpParams<double>&, const data::SparseVector&);
template Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>
forward_batch<float>(const MlpParams<float>&,
                     const std::vector<const data::SparseVector*>&);
template Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>
forward_batch<double>(const MlpParams<double>&,
                      const std::vector<const data::SparseVector*>&);
template double loss_and_grad<float>(
    const MlpParams<float>&, const std::vector<const data::SparseVector*>&,
    const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>&,
    Gradients<float>&);
template double loss_and_grad<double>(
    const MlpParams<double>&, const std::vector<const data::SparseVector*>&,
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>&,
    Gradients<double>&);
template double loss_and_grad_sparse<float>(
    const MlpParams<float>&, const std::vector<const data::SparseVector*>&,
    const std::vector<const std::vector<std::uint32_t>*>&, std::uint32_t,
    Gradients<float>&);
template double loss_and_grad_sparse<double>(
    const MlpParams<double>&, const std::vector<const data::SparseVector*>&,
    const std::vector<const std::vector<std::uint32_t>*>&, std::uint32_t,
    Gradients<double>&);
template void sgd_step<float>(MlpParams<float>&, const Gradients<float>&, float);
template void sgd_step<double>(MlpParams<double>&, const Gradients<double>&, double);
template MlpParams<float> average_params<float>(
    const std::vector<const MlpParams<float>*>&, const std::vector<double>&);
template MlpParams<double> average_params<double>(
    const std::vector<const MlpParams<double>*>&, const std::vector<double>&);
template std::uint64_t byte_size<float>(const MlpParams<float>&);
template std::uint64_t byte_size<double>(const MlpParams<double>&);
template std::string params_to_blob<float>(const MlpParams<float>&);
template std::string params_to_blob<double>(const MlpParams<double>&);
template MlpParams<float> params_from_blob<float>(const std::string&);
template MlpParams<double> params_from_blob<double>(const std::string&);

}  // namespace fedsketch::model
