#pragma once

// Dense 2-layer classifier (input -> ReLU hidden -> softmax output) with
// hand-derived gradients and an Adam optimizer.
//
// The math is templated on the scalar type. Training runs in float; the
// double instantiation exists so gradients can be checked against finite
// differences at a precision float cannot resolve.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "fogfed/frame.hpp"

namespace fogfed::nn {

template <typename T>
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<T> data;  // row-major

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, T fill = T{0}) : rows(r), cols(c), data(r * c, fill) {}

    T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<T> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const T> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    bool operator==(const Matrix&) const = default;
};

struct Dims {
    std::size_t input = kFeatureDim;
    std::size_t hidden = 64;
    std::size_t output = kNumClasses;

    bool operator==(const Dims&) const = default;

    std::size_t parameter_count() const { return input * hidden + hidden + hidden * output + output; }
};

// Weights and biases of both layers. Also used for gradients and Adam
// moments, which share the layout.
template <typename T>
struct BasicParams {
    Matrix<T> w1;          // input x hidden
    std::vector<T> b1;     // hidden
    Matrix<T> w2;          // hidden x output
    std::vector<T> b2;     // output

    static BasicParams zeros(const Dims& dims);

    Dims dims() const { return {w1.rows, w1.cols, w2.cols}; }
    bool congruent(const BasicParams& other) const;
    std::size_t size() const { return w1.data.size() + b1.size() + w2.data.size() + b2.size(); }
    bool all_finite() const;

    // Arrays in serialization order: w1, b1, w2, b2.
    std::array<std::span<T>, 4> arrays() { return {w1.data, b1, w2.data, b2}; }
    std::array<std::span<const T>, 4> arrays() const { return {w1.data, b1, w2.data, b2}; }

    template <typename U>
    BasicParams<U> cast() const;

    bool operator==(const BasicParams&) const = default;
};

using ModelParams = BasicParams<float>;
using Gradients = BasicParams<float>;

template <typename T>
struct ForwardCache {
    Matrix<T> inputs;       // B x input
    Matrix<T> hidden_pre;   // B x hidden
    Matrix<T> hidden_post;  // B x hidden, ReLU applied
    Matrix<T> probs;        // B x output, rows sum to 1
};

struct HyperParams {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int local_epochs = 5;
    int batch_size = 32;

    // Throws InvalidArgument when a field is out of its domain.
    void validate() const;
};

struct AdamState {
    ModelParams m;
    ModelParams v;
    std::uint64_t t = 0;

    static AdamState fresh(const Dims& dims) { return {ModelParams::zeros(dims), ModelParams::zeros(dims), 0}; }
};

inline constexpr double kLogFloor = 1e-12;

// Uniform fan-in init U(-sqrt(6/fan_in), +sqrt(6/fan_in)) for both weight
// matrices, zero biases. Bit-identical for identical (seed, dims).
ModelParams init_params(std::uint64_t seed, const Dims& dims = {});

template <typename T>
std::vector<T> softmax(std::span<const T> logits);

template <typename T>
ForwardCache<T> forward(const BasicParams<T>& params, const Matrix<T>& batch);

// Mean of -log(max(p[label], kLogFloor)) over the rows.
template <typename T>
double cross_entropy_loss(const Matrix<T>& probs, std::span<const int> labels);

template <typename T>
BasicParams<T> backward(const BasicParams<T>& params, const ForwardCache<T>& cache,
                        std::span<const int> labels);

// In-place Adam update; increments state.t by one.
void adam_update(ModelParams& params, const Gradients& grads, AdamState& state,
                 const HyperParams& hyper);

std::pair<ModelParams, AdamState> adam_step(ModelParams params, const Gradients& grads,
                                            AdamState state, const HyperParams& hyper);

struct LocalResult {
    ModelParams params;
    double local_loss = 0.0;  // mean cross-entropy over the window under `params`
    std::uint64_t steps = 0;
};

// Runs hyper.local_epochs epochs of mini-batch Adam from a fresh optimizer
// state. Each epoch visits the window in an order shuffled by (seed, epoch).
LocalResult train_local(const ModelParams& params, std::span<const Frame> window,
                        const HyperParams& hyper, std::uint64_t seed);

struct Evaluation {
    double loss = 0.0;
    double accuracy = 0.0;
    std::size_t correct = 0;
};

Evaluation evaluate(const ModelParams& params, std::span<const Frame> data);

// Index of the largest entry; ties go to the lowest index.
template <typename T>
std::size_t argmax(std::span<const T> values);

// Stacks frame features into a batch matrix. All frames must have `dim`
// features.
Matrix<float> to_batch(std::span<const Frame> frames, std::size_t dim);

}  // namespace fogfed::nn
