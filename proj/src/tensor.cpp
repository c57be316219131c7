#include "hgt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace hgt {
namespace detail {

struct Node {
    std::vector<int> shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;  // reads this->grad, accumulates into parents
    int mark = 0;

    int size() const { return static_cast<int>(data.size()); }
    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

struct Access {
    static std::shared_ptr<Node>& node(Tensor& t) { return t.node_; }
    static const std::shared_ptr<Node>& node(const Tensor& t) { return t.node_; }
    static Tensor wrap(std::shared_ptr<Node> n) { return Tensor(std::move(n)); }
};

}  // namespace detail

using detail::Access;
using detail::Node;

namespace {

int shape_numel(const std::vector<int>& shape) {
    int n = 1;
    for (int d : shape) {
        if (d <= 0) throw TensorError("tensor extents must be positive");
        n *= d;
    }
    return n;
}

std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

Node& req(const Tensor& t) {
    auto& n = Access::node(t);
    if (!n) throw TensorError("use of undefined tensor");
    return *n;
}

std::shared_ptr<Node> make_result(std::vector<int> shape, std::vector<double> data,
                                  std::vector<Tensor> inputs,
                                  std::function<void(Node&)> backprop) {
    auto out = std::make_shared<Node>();
    out->shape = std::move(shape);
    out->data = std::move(data);
    bool rg = false;
    for (const auto& t : inputs) rg = rg || req(t).requires_grad;
    out->requires_grad = rg;
    if (rg) {
        out->parents.reserve(inputs.size());
        for (const auto& t : inputs) out->parents.push_back(Access::node(t));
        out->backprop = std::move(backprop);
    }
    return out;
}

}  // namespace

// ---- Tensor ----------------------------------------------------------------

Tensor::Tensor(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
    int n = shape_numel(shape);
    if (n != static_cast<int>(data.size()))
        throw TensorError("data length " + std::to_string(data.size()) +
                          " does not match shape " + shape_str(shape));
    node_ = std::make_shared<Node>();
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
    if (requires_grad) node_->ensure_grad();
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    int n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
    int n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::randn(std::vector<int> shape, double stddev, std::mt19937_64& rng,
                     bool requires_grad) {
    int n = shape_numel(shape);
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> d(n);
    for (auto& v : d) v = dist(rng);
    return Tensor(std::move(shape), std::move(d), requires_grad);
}

const std::vector<int>& Tensor::shape() const { return req(*this).shape; }
int Tensor::size() const { return req(*this).size(); }
int Tensor::ndim() const { return static_cast<int>(req(*this).shape.size()); }

int Tensor::dim(int i) const {
    const auto& s = req(*this).shape;
    if (i < 0 || i >= static_cast<int>(s.size())) throw TensorError("dim index out of range");
    return s[i];
}

bool Tensor::requires_grad() const { return req(*this).requires_grad; }
const std::vector<double>& Tensor::data() const { return req(*this).data; }
std::vector<double>& Tensor::data_mut() { return req(*this).data; }

const std::vector<double>& Tensor::grad() const {
    auto& n = req(*this);
    n.ensure_grad();
    return n.grad;
}

bool Tensor::has_grad() const { return !req(*this).grad.empty(); }

void Tensor::zero_grad() {
    auto& n = req(*this);
    n.grad.assign(n.data.size(), 0.0);
}

double Tensor::value() const {
    auto& n = req(*this);
    if (n.size() != 1) throw TensorError("value() requires a scalar tensor");
    return n.data[0];
}

double Tensor::at(const std::vector<int>& idx) const {
    auto& n = req(*this);
    if (idx.size() != n.shape.size()) throw TensorError("index rank mismatch");
    int off = 0;
    for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= n.shape[i]) throw TensorError("index out of range");
        off = off * n.shape[i] + idx[i];
    }
    return n.data[off];
}

const void* Tensor::id() const { return node_.get(); }

void Tensor::backward() const {
    auto& loss = req(*this);
    if (loss.size() != 1) throw TensorError("backward requires a scalar loss");
    if (!loss.requires_grad)
        throw TensorError("backward on a detached graph (loss does not require grad)");

    // The tape: operations in topological order, every op's inputs before it.
    std::vector<Node*> tape;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(&loss, 0);
    loss.mark = 1;
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* p = n->parents[next++].get();
            if (p->mark == 0 && p->requires_grad) {
                p->mark = 1;
                stack.emplace_back(p, 0);
            }
        } else {
            tape.push_back(n);
            stack.pop_back();
        }
    }
    for (Node* n : tape) {
        n->mark = 0;
        n->ensure_grad();
    }
    loss.grad[0] += 1.0;
    for (auto it = tape.rbegin(); it != tape.rend(); ++it) {
        Node* n = *it;
        if (n->backprop) n->backprop(*n);
    }
}

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    auto& na = req(a);
    auto& nb = req(b);
    if (na.shape.size() != 2 || nb.shape.size() != 2)
        throw TensorError("matmul expects 2-d tensors");
    int m = na.shape[0], k = na.shape[1], k2 = nb.shape[0], n = nb.shape[1];
    if (k != k2)
        throw TensorError("matmul shape mismatch " + shape_str(na.shape) + " x " +
                          shape_str(nb.shape));
    std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            double av = na.data[i * k + p];
            if (av == 0.0) continue;
            const double* brow = &nb.data[p * n];
            double* orow = &out[i * n];
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    return Access::wrap(make_result(
        {m, n}, std::move(out), {a, b}, [m, k, n](Node& o) {
            Node& A = *o.parents[0];
            Node& B = *o.parents[1];
            if (A.requires_grad) {
                A.ensure_grad();
                for (int i = 0; i < m; ++i)
                    for (int p = 0; p < k; ++p) {
                        double g = 0.0;
                        const double* grow = &o.grad[i * n];
                        const double* brow = &B.data[p * n];
                        for (int j = 0; j < n; ++j) g += grow[j] * brow[j];
                        A.grad[i * k + p] += g;
                    }
            }
            if (B.requires_grad) {
                B.ensure_grad();
                for (int i = 0; i < m; ++i)
                    for (int p = 0; p < k; ++p) {
                        double av = A.data[i * k + p];
                        if (av == 0.0) continue;
                        const double* grow = &o.grad[i * n];
                        double* brow = &B.grad[p * n];
                        for (int j = 0; j < n; ++j) brow[j] += av * grow[j];
                    }
            }
        }));
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    auto& nx = req(x);
    auto& nw = req(w);
    auto& nb = req(b);
    if (nx.shape.size() != 2 || nw.shape.size() != 2 || nb.shape.size() != 1)
        throw TensorError("linear expects x (n,i), w (i,o), b (o)");
    int n = nx.shape[0], in = nx.shape[1], in2 = nw.shape[0], out_w = nw.shape[1];
    if (in != in2 || nb.shape[0] != out_w)
        throw TensorError("linear shape mismatch x" + shape_str(nx.shape) + " w" +
                          shape_str(nw.shape) + " b" + shape_str(nb.shape));
    std::vector<double> out(static_cast<size_t>(n) * out_w);
    for (int i = 0; i < n; ++i) {
        double* orow = &out[i * out_w];
        for (int j = 0; j < out_w; ++j) orow[j] = nb.data[j];
        for (int p = 0; p < in; ++p) {
            double xv = nx.data[i * in + p];
            if (xv == 0.0) continue;
            const double* wrow = &nw.data[p * out_w];
            for (int j = 0; j < out_w; ++j) orow[j] += xv * wrow[j];
        }
    }
    return Access::wrap(make_result(
        {n, out_w}, std::move(out), {x, w, b}, [n, in, out_w](Node& o) {
            Node& X = *o.parents[0];
            Node& W = *o.parents[1];
            Node& B = *o.parents[2];
            if (X.requires_grad) {
                X.ensure_grad();
                for (int i = 0; i < n; ++i)
                    for (int p = 0; p < in; ++p) {
                        double g = 0.0;
                        const double* grow = &o.grad[i * out_w];
                        const double* wrow = &W.data[p * out_w];
                        for (int j = 0; j < out_w; ++j) g += grow[j] * wrow[j];
                        X.grad[i * in + p] += g;
                    }
            }
            if (W.requires_grad) {
                W.ensure_grad();
                for (int i = 0; i < n; ++i)
                    for (int p = 0; p < in; ++p) {
                        double xv = X.data[i * in + p];
                        if (xv == 0.0) continue;
                        const double* grow = &o.grad[i * out_w];
                        double* wrow = &W.grad[p * out_w];
                        for (int j = 0; j < out_w; ++j) wrow[j] += xv * grow[j];
                    }
            }
            if (B.requires_grad) {
                B.ensure_grad();
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < out_w; ++j) B.grad[j] += o.grad[i * out_w + j];
            }
        }));
}

Tensor conv1x1(const Tensor& x, const Tensor& w, const Tensor& b) {
    auto& nx = req(x);
    if (nx.shape.size() != 3) throw TensorError("conv1x1 expects x (h,w,c)");
    int h = nx.shape[0], wd = nx.shape[1], c = nx.shape[2];
    Tensor flat = reshape(x, {h * wd, c});
    Tensor y = linear(flat, w, b);
    return reshape(y, {h, wd, y.dim(1)});
}

namespace {

Tensor elementwise(const Tensor& x, const char* name,
                   const std::function<double(double)>& f,
                   const std::function<double(double, double)>& dfdx_from_xy) {
    auto& nx = req(x);
    std::vector<double> out(nx.data.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = f(nx.data[i]);
    (void)name;
    return Access::wrap(make_result(
        nx.shape, std::move(out), {x}, [dfdx_from_xy](Node& o) {
            Node& X = *o.parents[0];
            if (!X.requires_grad) return;
            X.ensure_grad();
            for (size_t i = 0; i < o.data.size(); ++i)
                X.grad[i] += o.grad[i] * dfdx_from_xy(X.data[i], o.data[i]);
        }));
}

}  // namespace

Tensor relu(const Tensor& x) {
    return elementwise(
        x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
    return elementwise(
        x, "sigmoid", [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& x) {
    return elementwise(
        x, "exp", [](double v) { return std::exp(v); },
        [](double, double y) { return y; });
}

Tensor softmax_lastdim(const Tensor& x) {
    auto& nx = req(x);
    if (nx.shape.empty()) throw TensorError("softmax_lastdim expects at least 1-d");
    int last = nx.shape.back();
    int rows = nx.size() / last;
    std::vector<double> out(nx.data.size());
    for (int r = 0; r < rows; ++r) {
        const double* in = &nx.data[r * last];
        double* o = &out[r * last];
        double mx = in[0];
        for (int j = 1; j < last; ++j) mx = std::max(mx, in[j]);
        double s = 0.0;
        for (int j = 0; j < last; ++j) {
            o[j] = std::exp(in[j] - mx);
            s += o[j];
        }
        for (int j = 0; j < last; ++j) o[j] /= s;
    }
    return Access::wrap(make_result(
        nx.shape, std::move(out), {x}, [rows, last](Node& o) {
            Node& X = *o.parents[0];
            if (!X.requires_grad) return;
            X.ensure_grad();
            for (int r = 0; r < rows; ++r) {
                const double* y = &o.data[r * last];
                const double* g = &o.grad[r * last];
                double dot = 0.0;
                for (int j = 0; j < last; ++j) dot += y[j] * g[j];
                double* gx = &X.grad[r * last];
                for (int j = 0; j < last; ++j) gx[j] += y[j] * (g[j] - dot);
            }
        }));
}

namespace {

Tensor addsub(const Tensor& a, const Tensor& b, double sign) {
    auto& na = req(a);
    auto& nb = req(b);
    if (na.shape != nb.shape)
        throw TensorError("elementwise shape mismatch " + shape_str(na.shape) + " vs " +
                          shape_str(nb.shape));
    std::vector<double> out(na.data.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = na.data[i] + sign * nb.data[i];
    return Access::wrap(make_result(
        na.shape, std::move(out), {a, b}, [sign](Node& o) {
            Node& A = *o.parents[0];
            Node& B = *o.parents[1];
            if (A.requires_grad) {
                A.ensure_grad();
                for (size_t i = 0; i < o.data.size(); ++i) A.grad[i] += o.grad[i];
            }
            if (B.requires_grad) {
                B.ensure_grad();
                for (size_t i = 0; i < o.data.size(); ++i) B.grad[i] += sign * o.grad[i];
            }
        }));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return addsub(a, b, 1.0); }
Tensor sub(const Tensor& a, const Tensor& b) { return addsub(a, b, -1.0); }

Tensor mul_scalar(const Tensor& x, double c) {
    auto& nx = req(x);
    std::vector<double> out(nx.data.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = nx.data[i] * c;
    return Access::wrap(make_result(
        nx.shape, std::move(out), {x}, [c](Node& o) {
            Node& X = *o.parents[0];
            if (!X.requires_grad) return;
            X.ensure_grad();
            for (size_t i = 0; i < o.data.size(); ++i) X.grad[i] += c * o.grad[i];
        }));
}

Tensor concat_lastdim(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw TensorError("concat_lastdim of empty list");
    auto lead = req(xs[0]).shape;
    lead.pop_back();
    int total_last = 0;
    std::vector<int> lasts;
    for (const auto& t : xs) {
        auto s = req(t).shape;
        int l = s.back();
        s.pop_back();
        if (s != lead) throw TensorError("concat_lastdim leading-shape mismatch");
        lasts.push_back(l);
        total_last += l;
    }
    int rows = 1;
    for (int d : lead) rows *= d;
    std::vector<double> out(static_cast<size_t>(rows) * total_last);
    for (int r = 0; r < rows; ++r) {
        int off = 0;
        for (size_t k = 0; k < xs.size(); ++k) {
            const auto& d = req(xs[k]).data;
            std::memcpy(&out[r * total_last + off], &d[r * lasts[k]],
                        sizeof(double) * lasts[k]);
            off += lasts[k];
        }
    }
    auto shape = lead;
    shape.push_back(total_last);
    std::vector<Tensor> inputs = xs;
    return Access::wrap(make_result(
        std::move(shape), std::move(out), std::move(inputs),
        [rows, total_last, lasts](Node& o) {
            for (int r = 0; r < rows; ++r) {
                int off = 0;
                for (size_t k = 0; k < o.parents.size(); ++k) {
                    Node& P = *o.parents[k];
                    if (P.requires_grad) {
                        P.ensure_grad();
                        for (int j = 0; j < lasts[k]; ++j)
                            P.grad[r * lasts[k] + j] += o.grad[r * total_last + off + j];
                    }
                    off += lasts[k];
                }
            }
        }));
}

Tensor bilinear_sample(const Tensor& map, const Tensor& coords) {
    auto& nm = req(map);
    auto& nc = req(coords);
    if (nm.shape.size() != 3) throw TensorError("bilinear_sample expects map (h,w,c)");
    if (nc.shape.size() != 2 || nc.shape[1] != 2)
        throw TensorError("bilinear_sample expects coords (n,2)");
    int h = nm.shape[0], w = nm.shape[1], c = nm.shape[2], n = nc.shape[0];
    // Coordinates within half a pixel of the border are clamped inside; beyond
    // that the sample is rejected.
    auto clamp_coord = [](double v, int extent, const char* axis) {
        if (v < -0.5 || v > extent - 0.5) {
            std::ostringstream os;
            os << "bilinear_sample coordinate " << v << " outside " << axis << " extent "
               << extent;
            throw TensorError(os.str());
        }
        double hi = extent - 1 - 1e-6;
        if (hi < 0.0) hi = 0.0;
        return std::clamp(v, 0.0, hi);
    };
    std::vector<double> out(static_cast<size_t>(n) * c);
    std::vector<double> cx(n), cy(n);
    for (int i = 0; i < n; ++i) {
        cx[i] = clamp_coord(nc.data[i * 2 + 0], w, "x");
        cy[i] = clamp_coord(nc.data[i * 2 + 1], h, "y");
        int x0 = static_cast<int>(std::floor(cx[i]));
        int y0 = static_cast<int>(std::floor(cy[i]));
        int x1 = std::min(x0 + 1, w - 1);
        int y1 = std::min(y0 + 1, h - 1);
        double fx = cx[i] - x0, fy = cy[i] - y0;
        for (int ch = 0; ch < c; ++ch) {
            double v00 = nm.data[(y0 * w + x0) * c + ch];
            double v01 = nm.data[(y0 * w + x1) * c + ch];
            double v10 = nm.data[(y1 * w + x0) * c + ch];
            double v11 = nm.data[(y1 * w + x1) * c + ch];
            out[i * c + ch] =
                (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
        }
    }
    return Access::wrap(make_result(
        {n, c}, std::move(out), {map, coords}, [h, w, c, n, cx, cy](Node& o) {
            Node& M = *o.parents[0];
            Node& Cd = *o.parents[1];
            if (M.requires_grad) M.ensure_grad();
            if (Cd.requires_grad) Cd.ensure_grad();
            for (int i = 0; i < n; ++i) {
                int x0 = static_cast<int>(std::floor(cx[i]));
                int y0 = static_cast<int>(std::floor(cy[i]));
                int x1 = std::min(x0 + 1, w - 1);
                int y1 = std::min(y0 + 1, h - 1);
                double fx = cx[i] - x0, fy = cy[i] - y0;
                for (int ch = 0; ch < c; ++ch) {
                    double g = o.grad[i * c + ch];
                    if (g == 0.0) continue;
                    double v00 = M.data[(y0 * w + x0) * c + ch];
                    double v01 = M.data[(y0 * w + x1) * c + ch];
                    double v10 = M.data[(y1 * w + x0) * c + ch];
                    double v11 = M.data[(y1 * w + x1) * c + ch];
                    if (M.requires_grad) {
                        M.grad[(y0 * w + x0) * c + ch] += g * (1 - fy) * (1 - fx);
                        M.grad[(y0 * w + x1) * c + ch] += g * (1 - fy) * fx;
                        M.grad[(y1 * w + x0) * c + ch] += g * fy * (1 - fx);
                        M.grad[(y1 * w + x1) * c + ch] += g * fy * fx;
                    }
                    if (Cd.requires_grad) {
                        double dx = (1 - fy) * (v01 - v00) + fy * (v11 - v10);
                        double dy = (1 - fx) * (v10 - v00) + fx * (v11 - v01);
                        Cd.grad[i * 2 + 0] += g * dx;
                        Cd.grad[i * 2 + 1] += g * dy;
                    }
                }
            }
        }));
}

Tensor gather_rows(const Tensor& x, const std::vector<int>& rows) {
    auto& nx = req(x);
    if (nx.shape.size() != 2) throw TensorError("gather_rows expects a 2-d tensor");
    int n = nx.shape[0], d = nx.shape[1];
    int m = static_cast<int>(rows.size());
    if (m == 0) throw TensorError("gather_rows with empty index list");
    std::vector<double> out(static_cast<size_t>(m) * d);
    for (int i = 0; i < m; ++i) {
        int r = rows[i];
        if (r < 0 || r >= n)
            throw TensorError("gather_rows index " + std::to_string(r) + " out of " +
                              std::to_string(n));
        std::memcpy(&out[i * d], &nx.data[r * d], sizeof(double) * d);
    }
    return Access::wrap(make_result(
        {m, d}, std::move(out), {x}, [rows, d, m](Node& o) {
            Node& X = *o.parents[0];
            if (!X.requires_grad) return;
            X.ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < d; ++j) X.grad[rows[i] * d + j] += o.grad[i * d + j];
        }));
}

Tensor scatter_weighted_sum(const Tensor& messages, const Tensor& weights,
                            const std::vector<int>& sinks, int num_sinks) {
    auto& nm = req(messages);
    auto& nw = req(weights);
    if (nm.shape.size() != 2) throw TensorError("scatter_weighted_sum expects messages (e,d)");
    int e = nm.shape[0], d = nm.shape[1];
    if (nw.size() != e) throw TensorError("scatter_weighted_sum weights length mismatch");
    if (static_cast<int>(sinks.size()) != e)
        throw TensorError("scatter_weighted_sum sink list length mismatch");
    if (num_sinks <= 0) throw TensorError("scatter_weighted_sum needs num_sinks > 0");
    for (int s : sinks)
        if (s < 0 || s >= num_sinks) throw TensorError("scatter_weighted_sum sink out of range");
    std::vector<double> out(static_cast<size_t>(num_sinks) * d, 0.0);
    for (int i = 0; i < e; ++i) {
        double wv = nw.data[i];
        for (int j = 0; j < d; ++j) out[sinks[i] * d + j] += wv * nm.data[i * d + j];
    }
    return Access::wrap(make_result(
        {num_sinks, d}, std::move(out), {messages, weights}, [sinks, e, d](Node& o) {
            Node& M = *o.parents[0];
            Node& W = *o.parents[1];
            if (M.requires_grad) M.ensure_grad();
            if (W.requires_grad) W.ensure_grad();
            for (int i = 0; i < e; ++i) {
                const double* g = &o.grad[sinks[i] * d];
                if (M.requires_grad) {
                    double wv = W.data[i];
                    for (int j = 0; j < d; ++j) M.grad[i * d + j] += wv * g[j];
                }
                if (W.requires_grad) {
                    double acc = 0.0;
                    for (int j = 0; j < d; ++j) acc += g[j] * M.data[i * d + j];
                    W.grad[i] += acc;
                }
            }
        }));
}

Tensor reshape(const Tensor& x, std::vector<int> shape) {
    auto& nx = req(x);
    if (shape_numel(shape) != nx.size())
        throw TensorError("reshape size mismatch " + shape_str(nx.shape) + " -> " +
                          shape_str(shape));
    return Access::wrap(make_result(
        std::move(shape), nx.data, {x}, [](Node& o) {
            Node& X = *o.parents[0];
            if (!X.requires_grad) return;
            X.ensure_grad();
            for (size_t i = 0; i < o.data.size(); ++i) X.grad[i] += o.grad[i];
        }));
}

Tensor sum(const Tensor& x) {
    auto& nx = req(x);
    double s = 0.0;
    for (double v : nx.data) s += v;
    return Access::wrap(make_result(
        {1}, {s}, {x}, [](Node& o) {
            Node& X = *o.parents[0];
            if (!X.requires_grad) return;
            X.ensure_grad();
            for (size_t i = 0; i < X.data.size(); ++i) X.grad[i] += o.grad[0];
        }));
}

Tensor forward_op(OpKind kind, const std::vector<Tensor>& inputs) {
    auto need = [&](size_t n) {
        if (inputs.size() != n) throw TensorError("forward_op arity mismatch");
    };
    auto as_ints = [](const Tensor& t) {
        std::vector<int> v;
        v.reserve(t.size());
        for (double d : t.data()) v.push_back(static_cast<int>(d));
        return v;
    };
    switch (kind) {
        case OpKind::Matmul: need(2); return matmul(inputs[0], inputs[1]);
        case OpKind::Linear: need(3); return linear(inputs[0], inputs[1], inputs[2]);
        case OpKind::Conv1x1: need(3); return conv1x1(inputs[0], inputs[1], inputs[2]);
        case OpKind::Relu: need(1); return relu(inputs[0]);
        case OpKind::Sigmoid: need(1); return sigmoid(inputs[0]);
        case OpKind::SoftmaxLastdim: need(1); return softmax_lastdim(inputs[0]);
        case OpKind::Add: need(2); return add(inputs[0], inputs[1]);
        case OpKind::Sub: need(2); return sub(inputs[0], inputs[1]);
        case OpKind::MulScalar: need(2); return mul_scalar(inputs[0], inputs[1].value());
        case OpKind::ConcatLastdim: return concat_lastdim(inputs);
        case OpKind::BilinearSample: need(2); return bilinear_sample(inputs[0], inputs[1]);
        case OpKind::GatherRows: need(2); return gather_rows(inputs[0], as_ints(inputs[1]));
        case OpKind::ScatterWeightedSum: {
            need(4);
            return scatter_weighted_sum(inputs[0], inputs[1], as_ints(inputs[2]),
                                        static_cast<int>(inputs[3].value()));
        }
    }
    throw TensorError("unknown op kind");
}

Tensor custom_op(std::vector<int> shape, std::vector<double> data,
                 const std::vector<Tensor>& inputs, CustomBackward backward) {
    if (static_cast<int>(data.size()) != shape_numel(shape))
        throw TensorError("custom_op data/shape mismatch");
    return Access::wrap(make_result(
        std::move(shape), std::move(data), inputs, [backward](Node& o) {
            std::vector<const std::vector<double>*> in_data;
            std::vector<std::vector<double>*> in_grad;
            for (auto& p : o.parents) {
                in_data.push_back(&p->data);
                if (p->requires_grad) {
                    p->ensure_grad();
                    in_grad.push_back(&p->grad);
                } else {
                    in_grad.push_back(nullptr);
                }
            }
            backward(o.grad, in_data, in_grad);
        }));
}

// ---- grad check ------------------------------------------------------------

GradCheckReport grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& leaves,
                           double eps, double tol, int max_probes_per_leaf,
                           unsigned probe_seed) {
    if (eps <= 0.0) throw TensorError("grad_check requires eps > 0");
    Tensor first = f();
    double v1 = first.value();
    double v2 = f().value();
    if (std::memcmp(&v1, &v2, sizeof(double)) != 0)
        throw TensorError("grad_check oracle invalid: f is not deterministic");

    std::vector<Tensor> mut = leaves;
    for (auto& l : mut) l.zero_grad();
    Tensor loss = f();
    loss.backward();
    std::vector<std::vector<double>> analytic;
    for (const auto& l : mut) analytic.push_back(l.grad());

    std::mt19937_64 rng(probe_seed);
    GradCheckReport rep;
    rep.max_relative_error = 0.0;
    for (size_t li = 0; li < mut.size(); ++li) {
        int n = mut[li].size();
        std::vector<int> probes;
        if (max_probes_per_leaf < 0 || n <= max_probes_per_leaf) {
            probes.resize(n);
            for (int i = 0; i < n; ++i) probes[i] = i;
        } else {
            std::vector<int> all(n);
            for (int i = 0; i < n; ++i) all[i] = i;
            std::shuffle(all.begin(), all.end(), rng);
            probes.assign(all.begin(), all.begin() + max_probes_per_leaf);
        }
        auto& d = mut[li].data_mut();
        for (int i : probes) {
            double orig = d[i];
            d[i] = orig + eps;
            double fp = f().value();
            d[i] = orig - eps;
            double fm = f().value();
            d[i] = orig;
            double numeric = (fp - fm) / (2.0 * eps);
            double a = analytic[li][i];
            double diff = std::abs(a - numeric);
            double err = 0.0;
            if (diff > 1e-8) err = diff / std::max(std::abs(a), std::abs(numeric));
            rep.max_relative_error = std::max(rep.max_relative_error, err);
        }
    }
    rep.pass = rep.max_relative_error < tol;
    return rep;
}

}  // namespace hgt
