#include "cmbclean/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cmbclean::ad {

namespace {

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
}

bool track(Tape* tape, std::initializer_list<const Tensor*> inputs) {
    if (!tape) return false;
    bool any = false;
    for (const Tensor* t : inputs)
        if (t->requires_grad()) any = true;
    if (any)
        for (const Tensor* t : inputs)
            if (t->requires_grad()) tape->note_input(t->node());
    return any;
}

Tensor make_output(Shape shape, bool requires_grad) {
    auto node = std::make_shared<Node>();
    node->shape = shape;
    node->value.resize(std::size_t(numel(shape)));
    node->requires_grad = requires_grad;
    if (requires_grad) node->grad.assign(std::size_t(numel(shape)), 0.0);
    return Tensor(std::move(node));
}

// Elementwise unary op with backward dx += dy * dfn(x, y).
template <typename Fwd, typename Bwd>
Tensor unary_op(const char* name, Tape* tape, const Tensor& a, Fwd fwd, Bwd bwd) {
    (void)name;
    const bool rec = track(tape, {&a});
    Tensor out = make_output(a.shape(), rec);
    const auto& av = a.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < av.size(); ++i) ov[i] = fwd(av[i]);
    if (rec) {
        auto an = a.node();
        auto on = out.node();
        tape->record(
            [an, on, bwd]() {
                if (!an->requires_grad) return;
                for (std::size_t i = 0; i < an->value.size(); ++i)
                    an->grad[i] += on->grad[i] * bwd(an->value[i], on->value[i]);
            },
            out.node());
    }
    return out;
}

}  // namespace

std::string shape_str(const Shape& s) {
    return "(" + std::to_string(s[0]) + "," + std::to_string(s[1]) + "," + std::to_string(s[2]) + ")";
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(shape, 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double fill, bool requires_grad) {
    auto node = std::make_shared<Node>();
    node->shape = shape;
    node->value.assign(std::size_t(numel(shape)), fill);
    node->requires_grad = requires_grad;
    if (requires_grad) node->grad.assign(std::size_t(numel(shape)), 0.0);
    return Tensor(std::move(node));
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values, bool requires_grad) {
    if (std::int64_t(values.size()) != numel(shape))
        throw std::invalid_argument("Tensor::from_values: " + std::to_string(values.size()) +
                                    " values for shape " + shape_str(shape));
    auto node = std::make_shared<Node>();
    node->shape = shape;
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    if (requires_grad) node->grad.assign(node->value.size(), 0.0);
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double v, bool requires_grad) { return full({1, 1, 1}, v, requires_grad); }

double Tensor::item() const {
    if (size() != 1) throw std::logic_error("Tensor::item: tensor is not scalar");
    return node_->value[0];
}

void Tape::record(std::function<void()> backward_op, std::shared_ptr<Node> output) {
    ops_.push_back(std::move(backward_op));
    intermediate_set_.insert(output.get());
    intermediates_.push_back(std::move(output));
}

void Tape::note_input(const std::shared_ptr<Node>& input) {
    if (input_set_.insert(input.get()).second) inputs_.push_back(input);
}

void Tape::backward(const Tensor& loss) {
    if (loss.size() != 1)
        throw std::invalid_argument("Tape::backward: loss must be scalar, got " +
                                    shape_str(loss.shape()));
    if (!loss.requires_grad())
        throw std::invalid_argument("Tape::backward: loss is not connected to the tape");
    for (auto& node : intermediates_)
        std::fill(node->grad.begin(), node->grad.end(), 0.0);

    // Leaves: stash prior gradients and restore with a single addition per
    // element, so a repeated pass doubles them bitwise.
    std::vector<std::pair<Node*, std::vector<double>>> stashed;
    for (const auto& node : inputs_) {
        if (intermediate_set_.count(node.get())) continue;
        stashed.emplace_back(node.get(), node->grad);
        std::fill(node->grad.begin(), node->grad.end(), 0.0);
    }

    loss.node()->grad[0] += 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();

    for (auto& [node, prior] : stashed)
        for (std::size_t i = 0; i < prior.size(); ++i) node->grad[i] += prior[i];
}

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
    check_same_shape("add", a, b);
    const bool rec = track(tape, {&a, &b});
    Tensor out = make_output(a.shape(), rec);
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] + bv[i];
    if (rec) {
        auto an = a.node(), bn = b.node(), on = out.node();
        tape->record(
            [an, bn, on]() {
                if (an->requires_grad)
                    for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
                if (bn->requires_grad)
                    for (std::size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += on->grad[i];
            },
            out.node());
    }
    return out;
}

Tensor sub(Tape* tape, const Tensor& a, const Tensor& b) {
    check_same_shape("sub", a, b);
    const bool rec = track(tape, {&a, &b});
    Tensor out = make_output(a.shape(), rec);
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] - bv[i];
    if (rec) {
        auto an = a.node(), bn = b.node(), on = out.node();
        tape->record(
            [an, bn, on]() {
                if (an->requires_grad)
                    for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
                if (bn->requires_grad)
                    for (std::size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] -= on->grad[i];
            },
            out.node());
    }
    return out;
}

Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
    check_same_shape("mul", a, b);
    const bool rec = track(tape, {&a, &b});
    Tensor out = make_output(a.shape(), rec);
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] * bv[i];
    if (rec) {
        auto an = a.node(), bn = b.node(), on = out.node();
        tape->record(
            [an, bn, on]() {
                if (an->requires_grad)
                    for (std::size_t i = 0; i < on->grad.size(); ++i)
                        an->grad[i] += on->grad[i] * bn->value[i];
                if (bn->requires_grad)
                    for (std::size_t i = 0; i < on->grad.size(); ++i)
                        bn->grad[i] += on->grad[i] * an->value[i];
            },
            out.node());
    }
    return out;
}

Tensor div(Tape* tape, const Tensor& a, const Tensor& b) {
    check_same_shape("div", a, b);
    const bool rec = track(tape, {&a, &b});
    Tensor out = make_output(a.shape(), rec);
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] / bv[i];
    if (rec) {
        auto an = a.node(), bn = b.node(), on = out.node();
        tape->record(
            [an, bn, on]() {
                if (an->requires_grad)
                    for (std::size_t i = 0; i < on->grad.size(); ++i)
                        an->grad[i] += on->grad[i] / bn->value[i];
                if (bn->requires_grad)
                    for (std::size_t i = 0; i < on->grad.size(); ++i)
                        bn->grad[i] -= on->grad[i] * on->value[i] / bn->value[i];
            },
            out.node());
    }
    return out;
}

Tensor scale(Tape* tape, const Tensor& a, double s) {
    return unary_op("scale", tape, a, [s](double x) { return s * x; },
                    [s](double, double) { return s; });
}

Tensor add_const(Tape* tape, const Tensor& a, double c) {
    return unary_op("add_const", tape, a, [c](double x) { return x + c; },
                    [](double, double) { return 1.0; });
}

Tensor exp(Tape* tape, const Tensor& a) {
    return unary_op("exp", tape, a, [](double x) { return std::exp(x); },
                    [](double, double y) { return y; });
}

Tensor log(Tape* tape, const Tensor& a) {
    return unary_op("log", tape, a, [](double x) { return std::log(x); },
                    [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(Tape* tape, const Tensor& a) {
    return unary_op("sqrt", tape, a, [](double x) { return std::sqrt(x); },
                    [](double, double y) { return 0.5 / y; });
}

Tensor sigmoid(Tape* tape, const Tensor& a) {
    return unary_op(
        "sigmoid", tape, a,
        [](double x) {
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(Tape* tape, const Tensor& a) {
    return unary_op("relu", tape, a, [](double x) { return x > 0.0 ? x : 0.0; },
                    [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor concat_channels(Tape* tape, const Tensor& a, const Tensor& b) {
    const Shape sa = a.shape(), sb = b.shape();
    if (sa[0] != sb[0] || sa[2] != sb[2])
        throw std::invalid_argument("concat_channels: incompatible shapes " + shape_str(sa) +
                                    " vs " + shape_str(sb));
    const bool rec = track(tape, {&a, &b});
    const Shape so{sa[0], sa[1] + sb[1], sa[2]};
    Tensor out = make_output(so, rec);
    const std::int64_t n = sa[2];
    for (int bidx = 0; bidx < sa[0]; ++bidx) {
        double* dst = out.values().data() + std::size_t(bidx) * so[1] * n;
        const double* pa = a.values().data() + std::size_t(bidx) * sa[1] * n;
        const double* pb = b.values().data() + std::size_t(bidx) * sb[1] * n;
        std::copy(pa, pa + std::size_t(sa[1]) * n, dst);
        std::copy(pb, pb + std::size_t(sb[1]) * n, dst + std::size_t(sa[1]) * n);
    }
    if (rec) {
        auto an = a.node(), bn = b.node(), on = out.node();
        tape->record(
            [an, bn, on, sa, sb, so, n]() {
                for (int bidx = 0; bidx < sa[0]; ++bidx) {
                    const double* g = on->grad.data() + std::size_t(bidx) * so[1] * n;
                    if (an->requires_grad) {
                        double* ga = an->grad.data() + std::size_t(bidx) * sa[1] * n;
                        for (std::int64_t i = 0; i < std::int64_t(sa[1]) * n; ++i) ga[i] += g[i];
                    }
                    if (bn->requires_grad) {
                        double* gb = bn->grad.data() + std::size_t(bidx) * sb[1] * n;
                        const double* gsrc = g + std::size_t(sa[1]) * n;
                        for (std::int64_t i = 0; i < std::int64_t(sb[1]) * n; ++i) gb[i] += gsrc[i];
                    }
                }
            },
            out.node());
    }
    return out;
}

Tensor slice_channels(Tape* tape, const Tensor& a, int c_begin, int c_end) {
    const Shape sa = a.shape();
    if (c_begin < 0 || c_end > sa[1] || c_begin >= c_end)
        throw std::invalid_argument("slice_channels: bad range [" + std::to_string(c_begin) + "," +
                                    std::to_string(c_end) + ") for " + shape_str(sa));
    const bool rec = track(tape, {&a});
    const Shape so{sa[0], c_end - c_begin, sa[2]};
    Tensor out = make_output(so, rec);
    const std::int64_t n = sa[2];
    for (int bidx = 0; bidx < sa[0]; ++bidx) {
        const double* src = a.values().data() + (std::size_t(bidx) * sa[1] + c_begin) * n;
        double* dst = out.values().data() + std::size_t(bidx) * so[1] * n;
        std::copy(src, src + std::size_t(so[1]) * n, dst);
    }
    if (rec) {
        auto an = a.node(), on = out.node();
        tape->record(
            [an, on, sa, so, c_begin, n]() {
                if (!an->requires_grad) return;
                for (int bidx = 0; bidx < sa[0]; ++bidx) {
                    double* ga = an->grad.data() + (std::size_t(bidx) * sa[1] + c_begin) * n;
                    const double* g = on->grad.data() + std::size_t(bidx) * so[1] * n;
                    for (std::int64_t i = 0; i < std::int64_t(so[1]) * n; ++i) ga[i] += g[i];
                }
            },
            out.node());
    }
    return out;
}

Tensor slice_d0(Tape* tape, const Tensor& a, int index) {
    const Shape sa = a.shape();
    if (index < 0 || index >= sa[0])
        throw std::invalid_argument("slice_d0: index " + std::to_string(index) + " for " +
                                    shape_str(sa));
    const bool rec = track(tape, {&a});
    const Shape so{1, sa[1], sa[2]};
    Tensor out = make_output(so, rec);
    const std::size_t block = std::size_t(sa[1]) * sa[2];
    std::copy(a.values().begin() + index * block, a.values().begin() + (index + 1) * block,
              out.values().begin());
    if (rec) {
        auto an = a.node(), on = out.node();
        tape->record(
            [an, on, index, block]() {
                if (!an->requires_grad) return;
                for (std::size_t i = 0; i < block; ++i)
                    an->grad[index * block + i] += on->grad[i];
            },
            out.node());
    }
    return out;
}

Tensor sum_all(Tape* tape, const Tensor& a) {
    const bool rec = track(tape, {&a});
    Tensor out = make_output({1, 1, 1}, rec);
    double s = 0.0;
    for (double v : a.values()) s += v;
    out.values()[0] = s;
    if (rec) {
        auto an = a.node(), on = out.node();
        tape->record(
            [an, on]() {
                if (!an->requires_grad) return;
                const double g = on->grad[0];
                for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += g;
            },
            out.node());
    }
    return out;
}

Tensor mean_all(Tape* tape, const Tensor& a) {
    const bool rec = track(tape, {&a});
    Tensor out = make_output({1, 1, 1}, rec);
    double s = 0.0;
    for (double v : a.values()) s += v;
    const double inv_n = 1.0 / double(a.size());
    out.values()[0] = s * inv_n;
    if (rec) {
        auto an = a.node(), on = out.node();
        tape->record(
            [an, on, inv_n]() {
                if (!an->requires_grad) return;
                const double g = on->grad[0] * inv_n;
                for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += g;
            },
            out.node());
    }
    return out;
}

Tensor channel_mean(Tape* tape, const Tensor& a) {
    const Shape sa = a.shape();
    const bool rec = track(tape, {&a});
    Tensor out = make_output({1, sa[1], 1}, rec);
    const std::int64_t n = sa[2];
    const double inv = 1.0 / (double(sa[0]) * double(n));
    for (int c = 0; c < sa[1]; ++c) {
        double s = 0.0;
        for (int bidx = 0; bidx < sa[0]; ++bidx) {
            const double* src = a.values().data() + (std::size_t(bidx) * sa[1] + c) * n;
            for (std::int64_t i = 0; i < n; ++i) s += src[i];
        }
        out.values()[std::size_t(c)] = s * inv;
    }
    if (rec) {
        auto an = a.node(), on = out.node();
        tape->record(
            [an, on, sa, n, inv]() {
                if (!an->requires_grad) return;
                for (int c = 0; c < sa[1]; ++c) {
                    const double g = on->grad[std::size_t(c)] * inv;
                    for (int bidx = 0; bidx < sa[0]; ++bidx) {
                        double* ga = an->grad.data() + (std::size_t(bidx) * sa[1] + c) * n;
                        for (std::int64_t i = 0; i < n; ++i) ga[i] += g;
                    }
                }
            },
            out.node());
    }
    return out;
}

namespace {

void check_per_channel(const char* op, const Tensor& x, const Tensor& p) {
    const Shape sx = x.shape(), sp = p.shape();
    if (sp[0] != 1 || sp[2] != 1 || sp[1] != sx[1])
        throw std::invalid_argument(std::string(op) + ": expected per-channel shape (1," +
                                    std::to_string(sx[1]) + ",1), got " + shape_str(sp));
}

}  // namespace

Tensor affine(Tape* tape, const Tensor& x, const Tensor& gamma, const Tensor& beta) {
    check_per_channel("affine", x, gamma);
    check_per_channel("affine", x, beta);
    const Shape sx = x.shape();
    const bool rec = track(tape, {&x, &gamma, &beta});
    Tensor out = make_output(sx, rec);
    const std::int64_t n = sx[2];
    for (int bidx = 0; bidx < sx[0]; ++bidx)
        for (int c = 0; c < sx[1]; ++c) {
            const double g = gamma.values()[std::size_t(c)];
            const double b = beta.values()[std::size_t(c)];
            const double* src = x.values().data() + (std::size_t(bidx) * sx[1] + c) * n;
            double* dst = out.values().data() + (std::size_t(bidx) * sx[1] + c) * n;
            for (std::int64_t i = 0; i < n; ++i) dst[i] = src[i] * g + b;
        }
    if (rec) {
        auto xn = x.node(), gn = gamma.node(), bn = beta.node(), on = out.node();
        tape->record(
            [xn, gn, bn, on, sx, n]() {
                for (int bidx = 0; bidx < sx[0]; ++bidx)
                    for (int c = 0; c < sx[1]; ++c) {
                        const double* g = on->grad.data() + (std::size_t(bidx) * sx[1] + c) * n;
                        const double* xv = xn->value.data() + (std::size_t(bidx) * sx[1] + c) * n;
                        if (xn->requires_grad) {
                            double* gx = xn->grad.data() + (std::size_t(bidx) * sx[1] + c) * n;
                            const double gamma_c = gn->value[std::size_t(c)];
                            for (std::int64_t i = 0; i < n; ++i) gx[i] += g[i] * gamma_c;
                        }
                        if (gn->requires_grad) {
                            double s = 0.0;
                            for (std::int64_t i = 0; i < n; ++i) s += g[i] * xv[i];
                            gn->grad[std::size_t(c)] += s;
                        }
                        if (bn->requires_grad) {
                            double s = 0.0;
                            for (std::int64_t i = 0; i < n; ++i) s += g[i];
                            bn->grad[std::size_t(c)] += s;
                        }
                    }
            },
            out.node());
    }
    return out;
}

Tensor bias_add(Tape* tape, const Tensor& x, const Tensor& bias) {
    check_per_channel("bias_add", x, bias);
    const Shape sx = x.shape();
    const bool rec = track(tape, {&x, &bias});
    Tensor out = make_output(sx, rec);
    const std::int64_t n = sx[2];
    for (int bidx = 0; bidx < sx[0]; ++bidx)
        for (int c = 0; c < sx[1]; ++c) {
            const double b = bias.values()[std::size_t(c)];
            const double* src = x.values().data() + (std::size_t(bidx) * sx[1] + c) * n;
            double* dst = out.values().data() + (std::size_t(bidx) * sx[1] + c) * n;
            for (std::int64_t i = 0; i < n; ++i) dst[i] = src[i] + b;
        }
    if (rec) {
        auto xn = x.node(), bn = bias.node(), on = out.node();
        tape->record(
            [xn, bn, on, sx, n]() {
                for (int bidx = 0; bidx < sx[0]; ++bidx)
                    for (int c = 0; c < sx[1]; ++c) {
                        const double* g = on->grad.data() + (std::size_t(bidx) * sx[1] + c) * n;
                        if (xn->requires_grad) {
                            double* gx = xn->grad.data() + (std::size_t(bidx) * sx[1] + c) * n;
                            for (std::int64_t i = 0; i < n; ++i) gx[i] += g[i];
                        }
                        if (bn->requires_grad) {
                            double s = 0.0;
                            for (std::int64_t i = 0; i < n; ++i) s += g[i];
                            bn->grad[std::size_t(c)] += s;
                        }
                    }
            },
            out.node());
    }
    return out;
}

Tensor channel_scale(Tape* tape, const Tensor& x, const Tensor& s) {
    const Shape sx = x.shape(), ss = s.shape();
    if (ss[0] != sx[0] || ss[1] != sx[1] || ss[2] != 1)
        throw std::invalid_argument("channel_scale: expected (B,C,1) scale, got " + shape_str(ss) +
                                    " for " + shape_str(sx));
    const bool rec = track(tape, {&x, &s});
    Tensor out = make_output(sx, rec);
    const std::int64_t n = sx[2];
    for (int bidx = 0; bidx < sx[0]; ++bidx)
        for (int c = 0; c < sx[1]; ++c) {
            const double sc = s.values()[std::size_t(bidx) * sx[1] + c];
            const double* src = x.values().data() + (std::size_t(bidx) * sx[1] + c) * n;
            double* dst = out.values().data() + (std::size_t(bidx) * sx[1] + c) * n;
            for (std::int64_t i = 0; i < n; ++i) dst[i] = src[i] * sc;
        }
    if (rec) {
        auto xn = x.node(), sn = s.node(), on = out.node();
        tape->record(
            [xn, sn, on, sx, n]() {
                for (int bidx = 0; bidx < sx[0]; ++bidx)
                    for (int c = 0; c < sx[1]; ++c) {
                        const double* g = on->grad.data() + (std::size_t(bidx) * sx[1] + c) * n;
                        if (xn->requires_grad) {
                            double* gx = xn->grad.data() + (std::size_t(bidx) * sx[1] + c) * n;
                            const double sc = sn->value[std::size_t(bidx) * sx[1] + c];
                            for (std::int64_t i = 0; i < n; ++i) gx[i] += g[i] * sc;
                        }
                        if (sn->requires_grad) {
                            const double* xv =
                                xn->value.data() + (std::size_t(bidx) * sx[1] + c) * n;
                            double acc = 0.0;
                            for (std::int64_t i = 0; i < n; ++i) acc += g[i] * xv[i];
                            sn->grad[std::size_t(bidx) * sx[1] + c] += acc;
                        }
                    }
            },
            out.node());
    }
    return out;
}

Tensor expand_scalar(Tape* tape, const Tensor& s, Shape shape) {
    if (s.size() != 1)
        throw std::invalid_argument("expand_scalar: input must be scalar, got " +
                                    shape_str(s.shape()));
    const bool rec = track(tape, {&s});
    Tensor out = make_output(shape, rec);
    std::fill(out.values().begin(), out.values().end(), s.values()[0]);
    if (rec) {
        auto sn = s.node(), on = out.node();
        tape->record(
            [sn, on]() {
                if (!sn->requires_grad) return;
                double acc = 0.0;
                for (double g : on->grad) acc += g;
                sn->grad[0] += acc;
            },
            out.node());
    }
    return out;
}

Tensor matmul_channels(Tape* tape, const Tensor& w, const Tensor& x) {
    const Shape sw = w.shape(), sx = x.shape();
    if (sw[0] != 1 || sw[1] != sx[1])
        throw std::invalid_argument("matmul_channels: weight " + shape_str(sw) +
                                    " incompatible with input " + shape_str(sx));
    const int cin = sw[1], cout = sw[2];
    const std::int64_t n = sx[2];
    const bool rec = track(tape, {&w, &x});
    Tensor out = make_output({sx[0], cout, sx[2]}, rec);
    std::fill(out.values().begin(), out.values().end(), 0.0);
    for (int bidx = 0; bidx < sx[0]; ++bidx)
        for (int ci = 0; ci < cin; ++ci) {
            const double* src = x.values().data() + (std::size_t(bidx) * cin + ci) * n;
            for (int co = 0; co < cout; ++co) {
                const double wv = w.values()[std::size_t(ci) * cout + co];
                if (wv == 0.0) continue;
                double* dst = out.values().data() + (std::size_t(bidx) * cout + co) * n;
                for (std::int64_t i = 0; i < n; ++i) dst[i] += wv * src[i];
            }
        }
    if (rec) {
        auto wn = w.node(), xn = x.node(), on = out.node();
        tape->record(
            [wn, xn, on, sx, cin, cout, n]() {
                for (int bidx = 0; bidx < sx[0]; ++bidx)
                    for (int ci = 0; ci < cin; ++ci) {
                        const double* xv = xn->value.data() + (std::size_t(bidx) * cin + ci) * n;
                        double* gx = xn->requires_grad
                                         ? xn->grad.data() + (std::size_t(bidx) * cin + ci) * n
                                         : nullptr;
                        for (int co = 0; co < cout; ++co) {
                            const double* g = on->grad.data() + (std::size_t(bidx) * cout + co) * n;
                            const double wv = wn->value[std::size_t(ci) * cout + co];
                            if (wn->requires_grad) {
                                double acc = 0.0;
                                for (std::int64_t i = 0; i < n; ++i) acc += g[i] * xv[i];
                                wn->grad[std::size_t(ci) * cout + co] += acc;
                            }
                            if (gx)
                                for (std::int64_t i = 0; i < n; ++i) gx[i] += wv * g[i];
                        }
                    }
            },
            out.node());
    }
    return out;
}

Tensor sparse_laplacian_apply(Tape* tape, const graph::LaplacianOperator& lap, const Tensor& x) {
    const Shape sx = x.shape();
    if (std::int64_t(sx[2]) != lap.size())
        throw std::invalid_argument("sparse_laplacian_apply: pixel count " +
                                    std::to_string(sx[2]) + " != operator size " +
                                    std::to_string(lap.size()));
    const bool rec = track(tape, {&x});
    Tensor out = make_output(sx, rec);
    const std::int64_t n = sx[2];
    for (int bidx = 0; bidx < sx[0]; ++bidx)
        for (int c = 0; c < sx[1]; ++c) {
            const std::size_t off = (std::size_t(bidx) * sx[1] + c) * n;
            lap.apply(std::span<const double>(x.values().data() + off, std::size_t(n)),
                      std::span<double>(out.values().data() + off, std::size_t(n)));
        }
    if (rec) {
        auto xn = x.node(), on = out.node();
        const graph::LaplacianOperator lap_copy = lap;
        tape->record(
            [xn, on, lap_copy, sx, n]() {
                if (!xn->requires_grad) return;
                std::vector<double> tmp(static_cast<std::size_t>(n));
                for (int bidx = 0; bidx < sx[0]; ++bidx)
                    for (int c = 0; c < sx[1]; ++c) {
                        const std::size_t off = (std::size_t(bidx) * sx[1] + c) * n;
                        lap_copy.apply(
                            std::span<const double>(on->grad.data() + off, std::size_t(n)), tmp);
                        for (std::int64_t i = 0; i < n; ++i)
                            xn->grad[off + std::size_t(i)] += tmp[std::size_t(i)];
                    }
            },
            out.node());
    }
    return out;
}

Tensor gather_pixels(Tape* tape, const Tensor& x,
                     std::shared_ptr<const std::vector<std::int32_t>> indices, int out_pixels) {
    const Shape sx = x.shape();
    const std::size_t per_bc = std::size_t(out_pixels);
    const std::size_t bc = std::size_t(sx[0]) * sx[1];
    const bool shared = indices->size() == per_bc;
    if (!shared && indices->size() != bc * per_bc)
        throw std::invalid_argument("gather_pixels: index array size " +
                                    std::to_string(indices->size()) + " is neither M nor B*C*M");
    for (auto idx : *indices)
        if (idx < 0 || idx >= sx[2])
            throw std::invalid_argument("gather_pixels: index out of range");
    const bool rec = track(tape, {&x});
    Tensor out = make_output({sx[0], sx[1], out_pixels}, rec);
    const std::int64_t n = sx[2];
    for (std::size_t j = 0; j < bc; ++j) {
        const double* src = x.values().data() + j * n;
        double* dst = out.values().data() + j * per_bc;
        const std::int32_t* idx = indices->data() + (shared ? 0 : j * per_bc);
        for (std::size_t i = 0; i < per_bc; ++i) dst[i] = src[idx[i]];
    }
    if (rec) {
        auto xn = x.node(), on = out.node();
        tape->record(
            [xn, on, indices, shared, bc, per_bc, n]() {
                if (!xn->requires_grad) return;
                for (std::size_t j = 0; j < bc; ++j) {
                    double* gx = xn->grad.data() + j * n;
                    const double* g = on->grad.data() + j * per_bc;
                    const std::int32_t* idx = indices->data() + (shared ? 0 : j * per_bc);
                    for (std::size_t i = 0; i < per_bc; ++i) gx[idx[i]] += g[i];
                }
            },
            out.node());
    }
    return out;
}

double gradient_check(const std::function<Tensor(Tape&, const Tensor&)>& fn, const Tensor& point,
                      double eps) {
    Tensor x = Tensor::from_values(point.shape(), point.values(), true);
    Tape tape;
    Tensor loss = fn(tape, x);
    if (loss.size() != 1) throw std::invalid_argument("gradient_check: fn must be scalar-valued");
    tape.backward(loss);
    const std::vector<double> analytic = x.grad();

    auto eval = [&fn](const Tensor& p) {
        Tape t;
        Tensor out = fn(t, Tensor::from_values(p.shape(), p.values(), false));
        return out.item();
    };

    double max_err = 0.0;
    Tensor probe = Tensor::from_values(point.shape(), point.values(), false);
    for (std::size_t i = 0; i < probe.values().size(); ++i) {
        const double orig = probe.values()[i];
        probe.values()[i] = orig + eps;
        const double fp = eval(probe);
        probe.values()[i] = orig - eps;
        const double fm = eval(probe);
        probe.values()[i] = orig;
        const double cd = (fp - fm) / (2.0 * eps);
        const double denom = std::max({std::abs(analytic[i]), std::abs(cd), 1e-12});
        max_err = std::max(max_err, std::abs(analytic[i] - cd) / denom);
    }
    return max_err;
}

}  // namespace cmbclean::ad
