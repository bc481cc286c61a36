#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "cmbclean/sphere_graph.hpp"

namespace cmbclean::ad {

// All tensors are (d0, d1, d2) = (batch, channels, pixels); scalars are
// (1,1,1), per-channel parameters (1,C,1). 64-bit values throughout.
using Shape = std::array<int, 3>;

inline std::int64_t numel(const Shape& s) {
    return std::int64_t(s[0]) * s[1] * s[2];
}
std::string shape_str(const Shape& s);

struct Node {
    Shape shape{1, 1, 1};
    std::vector<double> value;
    std::vector<double> grad;  // allocated iff requires_grad
    bool requires_grad = false;
};

class Tensor {
  public:
    Tensor() : node_(std::make_shared<Node>()) {}
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double fill, bool requires_grad = false);
    static Tensor from_values(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    const Shape& shape() const { return node_->shape; }
    std::int64_t size() const { return numel(node_->shape); }
    std::vector<double>& values() { return node_->value; }
    const std::vector<double>& values() const { return node_->value; }
    std::vector<double>& grad() { return node_->grad; }
    const std::vector<double>& grad() const { return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }
    void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

    double item() const;

    std::shared_ptr<Node> node() const { return node_; }

  private:
    std::shared_ptr<Node> node_;
};

// Dynamic (define-by-run) tape. Records one backward closure per primitive;
// backward() replays them in exact reverse order. Gradients of leaf tensors
// accumulate across backward() calls (each call adds its complete per-pass
// gradient in one addition, so repeating a pass doubles leaf gradients
// exactly); intermediate gradients are reset on each call. A tape is
// single-threaded.
class Tape {
  public:
    void record(std::function<void()> backward_op, std::shared_ptr<Node> output);
    void note_input(const std::shared_ptr<Node>& input);
    void backward(const Tensor& loss);
    std::size_t num_ops() const { return ops_.size(); }

  private:
    std::vector<std::function<void()>> ops_;
    std::vector<std::shared_ptr<Node>> intermediates_;
    std::vector<std::shared_ptr<Node>> inputs_;
    std::unordered_set<Node*> intermediate_set_;
    std::unordered_set<Node*> input_set_;
};

// Elementwise, same shape.
Tensor add(Tape* tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape* tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b);
Tensor div(Tape* tape, const Tensor& a, const Tensor& b);

// Elementwise with a constant.
Tensor scale(Tape* tape, const Tensor& a, double s);
Tensor add_const(Tape* tape, const Tensor& a, double c);

Tensor exp(Tape* tape, const Tensor& a);
Tensor log(Tape* tape, const Tensor& a);
Tensor sqrt(Tape* tape, const Tensor& a);
Tensor sigmoid(Tape* tape, const Tensor& a);
Tensor relu(Tape* tape, const Tensor& a);

Tensor concat_channels(Tape* tape, const Tensor& a, const Tensor& b);
Tensor slice_channels(Tape* tape, const Tensor& a, int c_begin, int c_end);

// Slice along the first axis; used for per-order Chebyshev coefficients.
Tensor slice_d0(Tape* tape, const Tensor& a, int index);

Tensor sum_all(Tape* tape, const Tensor& a);
Tensor mean_all(Tape* tape, const Tensor& a);

// Mean over batch and pixels per channel: (B,C,N) -> (1,C,1).
Tensor channel_mean(Tape* tape, const Tensor& a);

// Per-channel affine: out[b,c,n] = x[b,c,n] * gamma[c] + beta[c].
Tensor affine(Tape* tape, const Tensor& x, const Tensor& gamma, const Tensor& beta);
Tensor bias_add(Tape* tape, const Tensor& x, const Tensor& bias);

// out[b,c,n] = x[b,c,n] * s[b,c,0], s of shape (B,C,1).
Tensor channel_scale(Tape* tape, const Tensor& x, const Tensor& s);

// Broadcast a scalar (1,1,1) to an arbitrary shape.
Tensor expand_scalar(Tape* tape, const Tensor& s, Shape shape);

// 1x1 convolution over channels: W (1,Cin,Cout), x (B,Cin,N) -> (B,Cout,N).
Tensor matmul_channels(Tape* tape, const Tensor& w, const Tensor& x);

// y[b,c,:] = L x[b,c,:]. Backward uses L^T = L (symmetric operator).
Tensor sparse_laplacian_apply(Tape* tape, const graph::LaplacianOperator& lap, const Tensor& x);

// out[b,c,j] = x[b,c,idx(b,c,j)]. indices has either M entries (shared across
// batch and channels) or B*C*M entries. Backward scatter-adds.
Tensor gather_pixels(Tape* tape, const Tensor& x, std::shared_ptr<const std::vector<std::int32_t>> indices,
                     int out_pixels);

// Max relative gradient error of a scalar-valued function at a point,
// analytic backward vs central finite differences.
double gradient_check(const std::function<Tensor(Tape&, const Tensor&)>& fn, const Tensor& point,
                      double eps = 1e-5);

}  // namespace cmbclean::ad
