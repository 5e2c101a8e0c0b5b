#include "fogfed/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fogfed/error.hpp"
#include "fogfed/rng.hpp"

namespace fogfed::nn {

namespace {

void check_dims(const Dims& dims) {
    if (dims.input < 1 || dims.hidden < 1 || dims.output < 1) {
        throw InvalidArgument("network dimensions must all be >= 1");
    }
}

template <typename T>
bool finite_span(std::span<const T> values) {
    return std::all_of(values.begin(), values.end(), [](T x) { return std::isfinite(x); });
}

void check_labels(std::span<const int> labels, std::size_t rows, std::size_t classes) {
    if (labels.size() != rows) {
        throw ShapeError("expected " + std::to_string(rows) + " labels, got " +
                         std::to_string(labels.size()));
    }
    for (int label : labels) {
        if (label < 0 || static_cast<std::size_t>(label) >= classes) {
            throw InvalidArgument("label " + std::to_string(label) + " outside [0, " +
                                  std::to_string(classes) + ")");
        }
    }
}

}  // namespace

template <typename T>
BasicParams<T> BasicParams<T>::zeros(const Dims& dims) {
    return {Matrix<T>(dims.input, dims.hidden), std::vector<T>(dims.hidden, T{0}),
            Matrix<T>(dims.hidden, dims.output), std::vector<T>(dims.output, T{0})};
}

template <typename T>
bool BasicParams<T>::congruent(const BasicParams& other) const {
    return w1.rows == other.w1.rows && w1.cols == other.w1.cols && b1.size() == other.b1.size() &&
           w2.rows == other.w2.rows && w2.cols == other.w2.cols && b2.size() == other.b2.size();
}

template <typename T>
bool BasicParams<T>::all_finite() const {
    const auto parts = arrays();
    return std::all_of(parts.begin(), parts.end(), [](auto part) { return finite_span(part); });
}

template <typename T>
template <typename U>
BasicParams<U> BasicParams<T>::cast() const {
    auto out = BasicParams<U>::zeros(dims());
    auto dst = out.arrays();
    const auto src = arrays();
    for (std::size_t a = 0; a < src.size(); ++a) {
        std::transform(src[a].begin(), src[a].end(), dst[a].begin(),
                       [](T x) { return static_cast<U>(x); });
    }
    return out;
}

void HyperParams::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw InvalidArgument("learning_rate must be finite and non-negative");
    }
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
        throw InvalidArgument("beta1 and beta2 must lie in (0, 1)");
    }
    if (!(epsilon > 0.0)) throw InvalidArgument("epsilon must be positive");
    if (local_epochs < 1) throw InvalidArgument("local_epochs must be >= 1");
    if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
}

ModelParams init_params(std::uint64_t seed, const Dims& dims) {
    check_dims(dims);
    auto params = ModelParams::zeros(dims);
    Rng rng(seed);
    auto fill = [&rng](Matrix<float>& w) {
        const double bound = std::sqrt(6.0 / static_cast<double>(w.rows));
        for (auto& x : w.data) x = static_cast<float>(rng.uniform(-bound, bound));
    };
    fill(params.w1);
    fill(params.w2);
    return params;
}

template <typename T>
std::vector<T> softmax(std::span<const T> logits) {
    for (T x : logits) {
        if (std::isnan(x)) throw InvalidValue("softmax input contains NaN");
    }
    std::vector<T> out(logits.size());
    if (logits.empty()) return out;
    const double top = static_cast<double>(*std::max_element(logits.begin(), logits.end()));
    double sum = 0.0;
    std::vector<double> e(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        e[i] = std::exp(static_cast<double>(logits[i]) - top);
        sum += e[i];
    }
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = static_cast<T>(e[i] / sum);
    return out;
}

template <typename T>
std::size_t argmax(std::span<const T> values) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

template <typename T>
ForwardCache<T> forward(const BasicParams<T>& params, const Matrix<T>& batch) {
    const Dims dims = params.dims();
    if (batch.rows < 1) throw ShapeError("forward needs a batch of at least one row");
    if (batch.cols != dims.input) {
        throw ShapeError("batch has " + std::to_string(batch.cols) + " columns, network expects " +
                         std::to_string(dims.input));
    }

    ForwardCache<T> cache;
    cache.inputs = batch;
    cache.hidden_pre = Matrix<T>(batch.rows, dims.hidden);
    cache.hidden_post = Matrix<T>(batch.rows, dims.hidden);
    cache.probs = Matrix<T>(batch.rows, dims.output);

    Matrix<T> logits(batch.rows, dims.output);
    for (std::size_t b = 0; b < batch.rows; ++b) {
        auto pre = cache.hidden_pre.row(b);
        std::copy(params.b1.begin(), params.b1.end(), pre.begin());
        const auto x = batch.row(b);
        for (std::size_t k = 0; k < dims.input; ++k) {
            const T xk = x[k];
            const auto wk = params.w1.row(k);
            for (std::size_t j = 0; j < dims.hidden; ++j) pre[j] += xk * wk[j];
        }
        auto post = cache.hidden_post.row(b);
        for (std::size_t j = 0; j < dims.hidden; ++j) post[j] = pre[j] > T{0} ? pre[j] : T{0};

        auto z = logits.row(b);
        std::copy(params.b2.begin(), params.b2.end(), z.begin());
        for (std::size_t j = 0; j < dims.hidden; ++j) {
            const T hj = post[j];
            const auto wj = params.w2.row(j);
            for (std::size_t c = 0; c < dims.output; ++c) z[c] += hj * wj[c];
        }
        const auto p = softmax<T>(z);
        std::copy(p.begin(), p.end(), cache.probs.row(b).begin());
    }
    return cache;
}

template <typename T>
double cross_entropy_loss(const Matrix<T>& probs, std::span<const int> labels) {
    check_labels(labels, probs.rows, probs.cols);
    if (probs.rows == 0) throw InvalidArgument("cross-entropy of an empty batch");
    double total = 0.0;
    for (std::size_t b = 0; b < probs.rows; ++b) {
        const double p = static_cast<double>(probs(b, static_cast<std::size_t>(labels[b])));
        total += -std::log(std::max(p, kLogFloor));
    }
    return total / static_cast<double>(probs.rows);
}

template <typename T>
BasicParams<T> backward(const BasicParams<T>& params, const ForwardCache<T>& cache,
                        std::span<const int> labels) {
    const Dims dims = params.dims();
    const std::size_t batch = cache.inputs.rows;
    if (cache.inputs.cols != dims.input || cache.hidden_pre.rows != batch ||
        cache.hidden_pre.cols != dims.hidden || cache.hidden_post.rows != batch ||
        cache.hidden_post.cols != dims.hidden || cache.probs.rows != batch ||
        cache.probs.cols != dims.output) {
        throw ShapeError("forward cache does not match the network");
    }
    check_labels(labels, batch, dims.output);

    auto grads = BasicParams<T>::zeros(dims);
    const T inv_batch = T{1} / static_cast<T>(batch);
    std::vector<T> delta_out(dims.output);
    std::vector<T> delta_hidden(dims.hidden);

    for (std::size_t b = 0; b < batch; ++b) {
        const auto p = cache.probs.row(b);
        for (std::size_t c = 0; c < dims.output; ++c) {
            const T onehot = static_cast<std::size_t>(labels[b]) == c ? T{1} : T{0};
            delta_out[c] = (p[c] - onehot) * inv_batch;
        }

        const auto h = cache.hidden_post.row(b);
        for (std::size_t j = 0; j < dims.hidden; ++j) {
            auto gw = grads.w2.row(j);
            const auto w = params.w2.row(j);
            T back = T{0};
            for (std::size_t c = 0; c < dims.output; ++c) {
                gw[c] += h[j] * delta_out[c];
                back += w[c] * delta_out[c];
            }
            // ReLU subgradient is 0 at exactly 0.
            delta_hidden[j] = cache.hidden_pre(b, j) > T{0} ? back : T{0};
        }
        for (std::size_t c = 0; c < dims.output; ++c) grads.b2[c] += delta_out[c];
        for (std::size_t j = 0; j < dims.hidden; ++j) grads.b1[j] += delta_hidden[j];

        const auto x = cache.inputs.row(b);
        for (std::size_t k = 0; k < dims.input; ++k) {
            const T xk = x[k];
            auto gw = grads.w1.row(k);
            for (std::size_t j = 0; j < dims.hidden; ++j) gw[j] += xk * delta_hidden[j];
        }
    }
    return grads;
}

void adam_update(ModelParams& params, const Gradients& grads, AdamState& state,
                 const HyperParams& hyper) {
    if (!params.congruent(grads) || !params.congruent(state.m) || !params.congruent(state.v)) {
        throw ShapeError("adam_step: parameter, gradient and moment shapes differ");
    }
    if (!grads.all_finite()) throw InvalidValue("adam_step: non-finite gradient");

    // Moments and parameters are stored in float; the update itself is
    // evaluated in double.
    state.t += 1;
    const double t = static_cast<double>(state.t);
    const double correction1 = 1.0 - std::pow(hyper.beta1, t);
    const double correction2 = 1.0 - std::pow(hyper.beta2, t);
    const double beta1 = hyper.beta1;
    const double beta2 = hyper.beta2;

    auto p = params.arrays();
    auto m = state.m.arrays();
    auto v = state.v.arrays();
    const auto g = grads.arrays();
    for (std::size_t a = 0; a < p.size(); ++a) {
        for (std::size_t i = 0; i < p[a].size(); ++i) {
            const double gi = g[a][i];
            const double mi = beta1 * m[a][i] + (1.0 - beta1) * gi;
            const double vi = beta2 * v[a][i] + (1.0 - beta2) * gi * gi;
            m[a][i] = static_cast<float>(mi);
            v[a][i] = static_cast<float>(vi);
            const double step = hyper.learning_rate * (mi / correction1) / (std::sqrt(vi / correction2) + hyper.epsilon);
            p[a][i] = static_cast<float>(p[a][i] - step);
        }
    }
}

std::pair<ModelParams, AdamState> adam_step(ModelParams params, const Gradients& grads,
                                            AdamState state, const HyperParams& hyper) {
    adam_update(params, grads, state, hyper);
    return {std::move(params), std::move(state)};
}

Matrix<float> to_batch(std::span<const Frame> frames, std::size_t dim) {
    Matrix<float> batch(frames.size(), dim);
    for (std::size_t b = 0; b < frames.size(); ++b) {
        if (frames[b].features.size() != dim) {
            throw ShapeError("frame has " + std::to_string(frames[b].features.size()) +
                             " features, expected " + std::to_string(dim));
        }
        std::copy(frames[b].features.begin(), frames[b].features.end(), batch.row(b).begin());
    }
    return batch;
}

LocalResult train_local(const ModelParams& params, std::span<const Frame> window,
                        const HyperParams& hyper, std::uint64_t seed) {
    if (window.empty()) throw InvalidArgument("train_local: empty window");
    hyper.validate();

    const Dims dims = params.dims();
    LocalResult result{params, 0.0, 0};
    AdamState state = AdamState::fresh(dims);

    std::vector<std::size_t> order(window.size());
    std::vector<int> labels;
    const auto batch_size = static_cast<std::size_t>(hyper.batch_size);

    for (int epoch = 0; epoch < hyper.local_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(hash_seed(seed, static_cast<std::uint64_t>(epoch)));
        rng.shuffle(std::span<std::size_t>(order));

        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            const std::size_t end = std::min(order.size(), start + batch_size);
            Matrix<float> batch(end - start, dims.input);
            labels.clear();
            for (std::size_t i = start; i < end; ++i) {
                const Frame& frame = window[order[i]];
                if (frame.features.size() != dims.input) {
                    throw ShapeError("frame feature count does not match the network input");
                }
                std::copy(frame.features.begin(), frame.features.end(),
                          batch.row(i - start).begin());
                labels.push_back(frame.label);
            }
            const auto cache = forward(result.params, batch);
            const auto grads = backward(result.params, cache, labels);
            adam_update(result.params, grads, state, hyper);
            ++result.steps;
        }
    }
    if (!result.params.all_finite()) throw InvalidValue("train_local produced non-finite parameters");
    result.local_loss = evaluate(result.params, window).loss;
    return result;
}

Evaluation evaluate(const ModelParams& params, std::span<const Frame> data) {
    if (data.empty()) throw InvalidArgument("evaluate: empty data set");
    constexpr std::size_t kChunk = 256;
    const Dims dims = params.dims();
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::vector<int> labels;
    for (std::size_t start = 0; start < data.size(); start += kChunk) {
        const auto chunk = data.subspan(start, std::min(kChunk, data.size() - start));
        labels.clear();
        for (const auto& frame : chunk) labels.push_back(frame.label);
        const auto cache = forward(params, to_batch(chunk, dims.input));
        loss_sum += cross_entropy_loss(cache.probs, labels) * static_cast<double>(chunk.size());
        for (std::size_t b = 0; b < chunk.size(); ++b) {
            if (argmax(cache.probs.row(b)) == static_cast<std::size_t>(labels[b])) ++correct;
        }
    }
    const auto n = static_cast<double>(data.size());
    return {loss_sum / n, static_cast<double>(correct) / n, correct};
}

template struct BasicParams<float>;
template struct BasicParams<double>;
template BasicParams<double> BasicParams<float>::cast<double>() const;
template BasicParams<float> BasicParams<double>::cast<float>() const;
template BasicParams<float> BasicParams<float>::cast<float>() const;
template BasicParams<double> BasicParams<double>::cast<double>() const;

template std::vector<float> softmax<float>(std::span<const float>);
template std::vector<double> softmax<double>(std::span<const double>);
template std::size_t argmax<float>(std::span<const float>);
template std::size_t argmax<double>(std::span<const double>);
template ForwardCache<float> forward(const BasicParams<float>&, const Matrix<float>&);
template ForwardCache<double> forward(const BasicParams<double>&, const Matrix<double>&);
template double cross_entropy_loss(const Matrix<float>&, std::span<const int>);
template double cross_entropy_loss(const Matrix<double>&, std::span<const int>);
template BasicParams<float> backward(const BasicParams<float>&, const ForwardCache<float>&,
                                     std::span<const int>);
template BasicParams<double> backward(const BasicParams<double>&, const ForwardCache<double>&,
                                      std::span<const int>);

}  // namespace fogfed::nn
