#include "brainof/ad.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "brainof/errors.hpp"

namespace brainof::ad {

namespace {

Var make(Tensor value, std::vector<Var> parents, std::function<void(Node&)> bp) {
    bool rq = false;
    for (const auto& p : parents) rq = rq || p->requires_grad;
    auto n = std::make_shared<Node>(std::move(value), rq);
    if (rq) {
        n->parents = std::move(parents);
        n->backprop = std::move(bp);
    }
    return n;
}

void topo(const Var& v, std::unordered_set<Node*>& seen, std::vector<Var>& order) {
    // iterative DFS; graphs can be deep at training scale
    std::vector<std::pair<Var, std::size_t>> stack{{v, 0}};
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx == 0 && !seen.insert(node.get()).second) {
            stack.pop_back();
            continue;
        }
        if (idx < node->parents.size()) {
            Var child = node->parents[idx++];
            if (!seen.count(child.get())) stack.emplace_back(std::move(child), 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
}

}  // namespace

Var param(Tensor v) { return std::make_shared<Node>(std::move(v), true); }

Var constant(Tensor v) { return std::make_shared<Node>(std::move(v), false); }

void backward(const Var& root) {
    if (root->value.numel() != 1)
        throw DimensionError("backward: root must be scalar");
    std::unordered_set<Node*> seen;
    std::vector<Var> order;
    topo(root, seen, order);
    root->grad.data[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backprop) (*it)->backprop(**it);
}

Var add(const Var& a, const Var& b) {
    Tensor v = brainof::add(a->value, b->value);
    return make(std::move(v), {a, b}, [](Node& n) {
        for (int s = 0; s < 2; ++s) {
            Var& p = n.parents[s];
            if (!p->requires_grad) continue;
            for (std::size_t i = 0; i < n.grad.data.size(); ++i)
                p->grad.data[i] += n.grad.data[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    Tensor v = brainof::sub(a->value, b->value);
    return make(std::move(v), {a, b}, [](Node& n) {
        if (n.parents[0]->requires_grad)
            for (std::size_t i = 0; i < n.grad.data.size(); ++i)
                n.parents[0]->grad.data[i] += n.grad.data[i];
        if (n.parents[1]->requires_grad)
            for (std::size_t i = 0; i < n.grad.data.size(); ++i)
                n.parents[1]->grad.data[i] -= n.grad.data[i];
    });
}

Var mul(const Var& a, const Var& b) {
    Tensor v = brainof::mul(a->value, b->value);
    return make(std::move(v), {a, b}, [](Node& n) {
        const Tensor& av = n.parents[0]->value;
        const Tensor& bv = n.parents[1]->value;
        if (n.parents[0]->requires_grad)
            for (std::size_t i = 0; i < n.grad.data.size(); ++i)
                n.parents[0]->grad.data[i] += n.grad.data[i] * bv.data[i];
        if (n.parents[1]->requires_grad)
            for (std::size_t i = 0; i < n.grad.data.size(); ++i)
                n.parents[1]->grad.data[i] += n.grad.data[i] * av.data[i];
    });
}

Var scale(const Var& a, double s) {
    Tensor v = brainof::scale(a->value, s);
    return make(std::move(v), {a}, [s](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        for (std::size_t i = 0; i < n.grad.data.size(); ++i)
            n.parents[0]->grad.data[i] += n.grad.data[i] * s;
    });
}

Var add_const(const Var& a, double c) {
    Tensor v = a->value;
    for (double& x : v.data) x += c;
    return make(std::move(v), {a}, [](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        for (std::size_t i = 0; i < n.grad.data.size(); ++i)
            n.parents[0]->grad.data[i] += n.grad.data[i];
    });
}

Var scale_var(const Var& x, const Var& s) {
    if (s->value.numel() != 1) throw DimensionError("scale_var: scalar expected");
    const double sv = s->value.data[0];
    Tensor v = brainof::scale(x->value, sv);
    return make(std::move(v), {x, s}, [sv](Node& n) {
        const Tensor& xv = n.parents[0]->value;
        if (n.parents[0]->requires_grad)
            for (std::size_t i = 0; i < n.grad.data.size(); ++i)
                n.parents[0]->grad.data[i] += n.grad.data[i] * sv;
        if (n.parents[1]->requires_grad) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n.grad.data.size(); ++i)
                acc += n.grad.data[i] * xv.data[i];
            n.parents[1]->grad.data[0] += acc;
        }
    });
}

Var div_var(const Var& x, const Var& s) {
    if (s->value.numel() != 1) throw DimensionError("div_var: scalar expected");
    const double sv = s->value.data[0];
    if (sv == 0.0) throw NumericError("div_var: division by zero");
    Tensor v = brainof::scale(x->value, 1.0 / sv);
    return make(std::move(v), {x, s}, [sv](Node& n) {
        const Tensor& xv = n.parents[0]->value;
        if (n.parents[0]->requires_grad)
            for (std::size_t i = 0; i < n.grad.data.size(); ++i)
                n.parents[0]->grad.data[i] += n.grad.data[i] / sv;
        if (n.parents[1]->requires_grad) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n.grad.data.size(); ++i)
                acc += n.grad.data[i] * xv.data[i];
            n.parents[1]->grad.data[0] -= acc / (sv * sv);
        }
    });
}

Var sqrt_elem(const Var& x) {
    Tensor v = x->value;
    for (double& e : v.data) {
        if (e < 0.0) throw NumericError("sqrt_elem: negative input");
        e = std::sqrt(e);
    }
    Tensor saved = v;
    return make(std::move(v), {x}, [saved](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        for (std::size_t i = 0; i < n.grad.data.size(); ++i) {
            double denom = std::max(saved.data[i], 1e-12);
            n.parents[0]->grad.data[i] += n.grad.data[i] * 0.5 / denom;
        }
    });
}

Var sigmoid(const Var& x) {
    Tensor v = x->value;
    for (double& e : v.data) e = 1.0 / (1.0 + std::exp(-e));
    Tensor saved = v;
    return make(std::move(v), {x}, [saved](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        for (std::size_t i = 0; i < n.grad.data.size(); ++i) {
            const double y = saved.data[i];
            n.parents[0]->grad.data[i] += n.grad.data[i] * y * (1.0 - y);
        }
    });
}

Var gelu(const Var& x) {
    constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
    Tensor v = x->value;
    for (double& e : v.data) {
        const double t = std::tanh(k * (e + 0.044715 * e * e * e));
        e = 0.5 * e * (1.0 + t);
    }
    ensure_finite(v, "gelu");
    return make(std::move(v), {x}, [](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        const Tensor& xv = n.parents[0]->value;
        for (std::size_t i = 0; i < n.grad.data.size(); ++i) {
            const double xi = xv.data[i];
            const double t = std::tanh(k * (xi + 0.044715 * xi * xi * xi));
            const double d = 0.5 * (1.0 + t) +
                             0.5 * xi * (1.0 - t * t) * k * (1.0 + 3.0 * 0.044715 * xi * xi);
            n.parents[0]->grad.data[i] += n.grad.data[i] * d;
        }
    });
}

Var matmul(const Var& a, const Var& b) {
    Tensor v = brainof::matmul(a->value, b->value);
    return make(std::move(v), {a, b}, [](Node& n) {
        const Tensor& av = n.parents[0]->value;
        const Tensor& bv = n.parents[1]->value;
        // dA = dC * B^T, dB = A^T * dC
        if (n.parents[0]->requires_grad) {
            const std::size_t m = av.shape[0], k = av.shape[1], c = bv.shape[1];
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < c; ++j)
                        acc += n.grad.data[i * c + j] * bv.data[p * c + j];
                    n.parents[0]->grad.data[i * k + p] += acc;
                }
        }
        if (n.parents[1]->requires_grad) {
            const std::size_t m = av.shape[0], k = av.shape[1], c = bv.shape[1];
            for (std::size_t p = 0; p < k; ++p)
                for (std::size_t j = 0; j < c; ++j) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < m; ++i)
                        acc += av.data[i * k + p] * n.grad.data[i * c + j];
                    n.parents[1]->grad.data[p * c + j] += acc;
                }
        }
    });
}

Var transpose(const Var& a) {
    Tensor v = brainof::transpose(a->value);
    return make(std::move(v), {a}, [](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        const std::size_t r = n.value.shape[0], c = n.value.shape[1];
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j)
                n.parents[0]->grad.data[j * r + i] += n.grad.data[i * c + j];
    });
}

Var concat_rows(const Var& a, const Var& b) {
    if (a->value.shape.size() != 2 || b->value.shape.size() != 2 ||
        a->value.shape[1] != b->value.shape[1])
        throw DimensionError("concat_rows: column mismatch");
    const std::size_t ra = a->value.shape[0], rb = b->value.shape[0], c = a->value.shape[1];
    Tensor v({ra + rb, c});
    std::copy(a->value.data.begin(), a->value.data.end(), v.data.begin());
    std::copy(b->value.data.begin(), b->value.data.end(), v.data.begin() + static_cast<long>(ra * c));
    return make(std::move(v), {a, b}, [ra, c](Node& n) {
        if (n.parents[0]->requires_grad)
            for (std::size_t i = 0; i < ra * c; ++i)
                n.parents[0]->grad.data[i] += n.grad.data[i];
        if (n.parents[1]->requires_grad)
            for (std::size_t i = ra * c; i < n.grad.data.size(); ++i)
                n.parents[1]->grad.data[i - ra * c] += n.grad.data[i];
    });
}

Var concat_cols(const Var& a, const Var& b) {
    if (a->value.shape.size() != 2 || b->value.shape.size() != 2 ||
        a->value.shape[0] != b->value.shape[0])
        throw DimensionError("concat_cols: row mismatch");
    const std::size_t r = a->value.shape[0], ca = a->value.shape[1], cb = b->value.shape[1];
    Tensor v({r, ca + cb});
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < ca; ++j) v.at(i, j) = a->value.at(i, j);
        for (std::size_t j = 0; j < cb; ++j) v.at(i, ca + j) = b->value.at(i, j);
    }
    return make(std::move(v), {a, b}, [r, ca, cb](Node& n) {
        if (n.parents[0]->requires_grad)
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < ca; ++j)
                    n.parents[0]->grad.data[i * ca + j] += n.grad.data[i * (ca + cb) + j];
        if (n.parents[1]->requires_grad)
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < cb; ++j)
                    n.parents[1]->grad.data[i * cb + j] += n.grad.data[i * (ca + cb) + ca + j];
    });
}

Var mul_rowvec(const Var& x, const Var& v) {
    const std::size_t r = x->value.shape[0], c = x->value.shape[1];
    if (v->value.numel() != c) throw DimensionError("mul_rowvec: width mismatch");
    Tensor out = x->value;
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] *= v->value.data[j];
    return make(std::move(out), {x, v}, [r, c](Node& n) {
        const Tensor& xv = n.parents[0]->value;
        const Tensor& vv = n.parents[1]->value;
        if (n.parents[0]->requires_grad)
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j)
                    n.parents[0]->grad.data[i * c + j] += n.grad.data[i * c + j] * vv.data[j];
        if (n.parents[1]->requires_grad)
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j)
                    n.parents[1]->grad.data[j] += n.grad.data[i * c + j] * xv.data[i * c + j];
    });
}

Var slice_rows(const Var& a, std::size_t r0, std::size_t r1) {
    const std::size_t c = a->value.shape[1];
    if (r1 > a->value.shape[0] || r0 >= r1) throw DimensionError("slice_rows: bad range");
    Tensor v({r1 - r0, c});
    std::copy(a->value.data.begin() + static_cast<long>(r0 * c),
              a->value.data.begin() + static_cast<long>(r1 * c), v.data.begin());
    return make(std::move(v), {a}, [r0, c](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        for (std::size_t i = 0; i < n.grad.data.size(); ++i)
            n.parents[0]->grad.data[r0 * c + i] += n.grad.data[i];
    });
}

Var slice_cols(const Var& a, std::size_t c0, std::size_t c1) {
    const std::size_t r = a->value.shape[0], c = a->value.shape[1];
    if (c1 > c || c0 >= c1) throw DimensionError("slice_cols: bad range");
    Tensor v({r, c1 - c0});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = c0; j < c1; ++j) v.at(i, j - c0) = a->value.at(i, j);
    return make(std::move(v), {a}, [c0, c](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        const std::size_t r = n.value.shape[0], w = n.value.shape[1];
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < w; ++j)
                n.parents[0]->grad.data[i * c + c0 + j] += n.grad.data[i * w + j];
    });
}

Var gather_cols(const Var& a, const std::vector<std::size_t>& idx) {
    if (a->value.shape.size() != 2 || a->value.shape[0] != 1)
        throw DimensionError("gather_cols: expect 1xE row");
    Tensor v({1, idx.size()});
    for (std::size_t j = 0; j < idx.size(); ++j) v.data[j] = a->value.data[idx[j]];
    auto indices = idx;
    return make(std::move(v), {a}, [indices](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        for (std::size_t j = 0; j < indices.size(); ++j)
            n.parents[0]->grad.data[indices[j]] += n.grad.data[j];
    });
}

Var add_rowvec(const Var& x, const Var& b) {
    const std::size_t r = x->value.shape[0], c = x->value.shape[1];
    if (b->value.numel() != c) throw DimensionError("add_rowvec: width mismatch");
    Tensor v = x->value;
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) v.data[i * c + j] += b->value.data[j];
    return make(std::move(v), {x, b}, [r, c](Node& n) {
        if (n.parents[0]->requires_grad)
            for (std::size_t i = 0; i < r * c; ++i)
                n.parents[0]->grad.data[i] += n.grad.data[i];
        if (n.parents[1]->requires_grad)
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j)
                    n.parents[1]->grad.data[j] += n.grad.data[i * c + j];
    });
}

Var mul_rowmask(const Var& x, const std::vector<double>& mask) {
    const std::size_t r = x->value.shape[0], c = x->value.shape[1];
    if (mask.size() != r) throw DimensionError("mul_rowmask: row count mismatch");
    Tensor v = x->value;
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) v.data[i * c + j] *= mask[i];
    auto m = mask;
    return make(std::move(v), {x}, [m, c](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        for (std::size_t i = 0; i < m.size(); ++i)
            for (std::size_t j = 0; j < c; ++j)
                n.parents[0]->grad.data[i * c + j] += n.grad.data[i * c + j] * m[i];
    });
}

Var reindex(const Var& x, std::vector<std::size_t> out_shape,
            const std::vector<long>& src_of_dst) {
    Tensor v(out_shape);
    if (v.numel() != src_of_dst.size()) throw DimensionError("reindex: map size mismatch");
    for (std::size_t i = 0; i < src_of_dst.size(); ++i)
        v.data[i] = src_of_dst[i] >= 0 ? x->value.data[static_cast<std::size_t>(src_of_dst[i])] : 0.0;
    auto map = src_of_dst;
    return make(std::move(v), {x}, [map](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        for (std::size_t i = 0; i < map.size(); ++i)
            if (map[i] >= 0)
                n.parents[0]->grad.data[static_cast<std::size_t>(map[i])] += n.grad.data[i];
    });
}

Var sum(const Var& x) {
    double s = 0.0;
    for (double v : x->value.data) s += v;
    return make(Tensor({1}, {s}), {x}, [](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        const double g = n.grad.data[0];
        for (double& pg : n.parents[0]->grad.data) pg += g;
    });
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x->value.numel())); }

Var mean_rows(const Var& x) {
    const std::size_t r = x->value.shape[0], c = x->value.shape[1];
    Tensor v({1, c});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) v.data[j] += x->value.data[i * c + j];
    for (double& e : v.data) e /= static_cast<double>(r);
    return make(std::move(v), {x}, [r, c](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j)
                n.parents[0]->grad.data[i * c + j] += n.grad.data[j] / static_cast<double>(r);
    });
}

Var softmax_rows(const Var& x, const std::vector<std::uint8_t>* mask) {
    const std::size_t r = x->value.shape[0], c = x->value.shape[1];
    const bool full_mask = mask && mask->size() == r * c;
    if (mask && !full_mask && mask->size() != c)
        throw DimensionError("softmax_rows: mask must have c or r*c entries");
    auto masked_at = [&](std::size_t i, std::size_t j) -> bool {
        if (!mask) return false;
        return full_mask ? !(*mask)[i * c + j] : !(*mask)[j];
    };
    Tensor v({r, c});
    for (std::size_t i = 0; i < r; ++i) {
        double mx = -1e300;
        bool any = false;
        for (std::size_t j = 0; j < c; ++j)
            if (!masked_at(i, j)) {
                any = true;
                mx = std::max(mx, x->value.at(i, j));
            }
        if (!any) throw DegenerateMaskError("softmax_rows: fully masked row");
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            if (masked_at(i, j)) continue;
            const double e = std::exp(x->value.at(i, j) - mx);
            v.at(i, j) = e;
            z += e;
        }
        for (std::size_t j = 0; j < c; ++j) v.at(i, j) /= z;
    }
    ensure_finite(v, "softmax_rows");
    Tensor saved = v;
    return make(std::move(v), {x}, [saved, r, c](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        for (std::size_t i = 0; i < r; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < c; ++j)
                acc += n.grad.data[i * c + j] * saved.data[i * c + j];
            for (std::size_t j = 0; j < c; ++j) {
                const double y = saved.data[i * c + j];
                n.parents[0]->grad.data[i * c + j] += y * (n.grad.data[i * c + j] - acc);
            }
        }
    });
}

Var rms_norm_rows(const Var& x, const Var& gain) {
    constexpr double eps = 1e-6;
    const std::size_t r = x->value.shape[0], d = x->value.shape[1];
    if (gain->value.numel() != d) throw DimensionError("rms_norm_rows: gain width mismatch");
    Tensor v({r, d});
    std::vector<double> inv_rms(r);
    for (std::size_t i = 0; i < r; ++i) {
        double ms = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double e = x->value.data[i * d + j];
            ms += e * e;
        }
        const double inv = 1.0 / std::sqrt(ms / static_cast<double>(d) + eps);
        inv_rms[i] = inv;
        for (std::size_t j = 0; j < d; ++j)
            v.data[i * d + j] = gain->value.data[j] * x->value.data[i * d + j] * inv;
    }
    return make(std::move(v), {x, gain}, [inv_rms, r, d](Node& n) {
        const Tensor& xv = n.parents[0]->value;
        const Tensor& gv = n.parents[1]->value;
        for (std::size_t i = 0; i < r; ++i) {
            const double inv = inv_rms[i];
            if (n.parents[0]->requires_grad) {
                double acc = 0.0;  // sum dy_k * g_k * x_k
                for (std::size_t j = 0; j < d; ++j)
                    acc += n.grad.data[i * d + j] * gv.data[j] * xv.data[i * d + j];
                for (std::size_t j = 0; j < d; ++j) {
                    const double term1 = n.grad.data[i * d + j] * gv.data[j] * inv;
                    const double term2 =
                        xv.data[i * d + j] * acc * inv * inv * inv / static_cast<double>(d);
                    n.parents[0]->grad.data[i * d + j] += term1 - term2;
                }
            }
            if (n.parents[1]->requires_grad)
                for (std::size_t j = 0; j < d; ++j)
                    n.parents[1]->grad.data[j] +=
                        n.grad.data[i * d + j] * xv.data[i * d + j] * inv;
        }
    });
}

Var rope_rows(const Var& x, const std::vector<std::size_t>& positions) {
    const std::size_t r = x->value.shape[0], d = x->value.shape[1];
    if (d % 2 != 0) throw ConfigError("rope_rows: head dimension must be even");
    if (positions.size() != r) throw DimensionError("rope_rows: positions size mismatch");
    Tensor v({r, d});
    std::vector<double> cs(r * d / 2), sn(r * d / 2);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t p = 0; p < d / 2; ++p) {
            const double theta =
                static_cast<double>(positions[i]) *
                std::pow(10000.0, -2.0 * static_cast<double>(p) / static_cast<double>(d));
            const double c = std::cos(theta), s = std::sin(theta);
            cs[i * d / 2 + p] = c;
            sn[i * d / 2 + p] = s;
            const double a = x->value.data[i * d + 2 * p];
            const double b = x->value.data[i * d + 2 * p + 1];
            v.data[i * d + 2 * p] = a * c - b * s;
            v.data[i * d + 2 * p + 1] = a * s + b * c;
        }
    return make(std::move(v), {x}, [cs, sn, r, d](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t p = 0; p < d / 2; ++p) {
                const double c = cs[i * d / 2 + p], s = sn[i * d / 2 + p];
                const double ga = n.grad.data[i * d + 2 * p];
                const double gb = n.grad.data[i * d + 2 * p + 1];
                n.parents[0]->grad.data[i * d + 2 * p] += ga * c + gb * s;
                n.parents[0]->grad.data[i * d + 2 * p + 1] += -ga * s + gb * c;
            }
    });
}

Var vdot(const Var& a, const Var& b) {
    const double s = brainof::dot(a->value, b->value);
    return make(Tensor({1}, {s}), {a, b}, [](Node& n) {
        const double g = n.grad.data[0];
        const Tensor& av = n.parents[0]->value;
        const Tensor& bv = n.parents[1]->value;
        if (n.parents[0]->requires_grad)
            for (std::size_t i = 0; i < av.data.size(); ++i)
                n.parents[0]->grad.data[i] += g * bv.data[i];
        if (n.parents[1]->requires_grad)
            for (std::size_t i = 0; i < bv.data.size(); ++i)
                n.parents[1]->grad.data[i] += g * av.data[i];
    });
}

Var clamp(const Var& s, double lo, double hi) {
    Tensor v = s->value;
    std::vector<std::uint8_t> inside(v.data.size());
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        inside[i] = v.data[i] > lo && v.data[i] < hi;
        v.data[i] = std::min(std::max(v.data[i], lo), hi);
    }
    return make(std::move(v), {s}, [inside](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        for (std::size_t i = 0; i < n.grad.data.size(); ++i)
            if (inside[i]) n.parents[0]->grad.data[i] += n.grad.data[i];
    });
}

Var vexp(const Var& s) {
    Tensor v = s->value;
    for (double& e : v.data) e = std::exp(e);
    ensure_finite(v, "vexp");
    Tensor saved = v;
    return make(std::move(v), {s}, [saved](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        for (std::size_t i = 0; i < n.grad.data.size(); ++i)
            n.parents[0]->grad.data[i] += n.grad.data[i] * saved.data[i];
    });
}

Var smooth_l1(const Var& pred, const Var& target, double beta) {
    if (beta <= 0.0) throw InputError("smooth_l1: beta must be > 0");
    if (!pred->value.same_shape(target->value))
        throw DimensionError("smooth_l1: shape mismatch");
    const std::size_t n_el = pred->value.numel();
    double acc = 0.0;
    for (std::size_t i = 0; i < n_el; ++i) {
        const double d = pred->value.data[i] - target->value.data[i];
        acc += std::abs(d) < beta ? 0.5 * d * d / beta : std::abs(d) - 0.5 * beta;
    }
    acc /= static_cast<double>(n_el);
    return make(Tensor({1}, {acc}), {pred, target}, [beta, n_el](Node& n) {
        const double g = n.grad.data[0] / static_cast<double>(n_el);
        const Tensor& pv = n.parents[0]->value;
        const Tensor& tv = n.parents[1]->value;
        for (std::size_t i = 0; i < n_el; ++i) {
            const double d = pv.data[i] - tv.data[i];
            const double dd = std::abs(d) < beta ? d / beta : (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0));
            if (n.parents[0]->requires_grad) n.parents[0]->grad.data[i] += g * dd;
            if (n.parents[1]->requires_grad) n.parents[1]->grad.data[i] -= g * dd;
        }
    });
}

Var cross_entropy_logits(const Var& logits, const std::vector<std::size_t>& labels) {
    const std::size_t b = logits->value.shape[0], k = logits->value.shape[1];
    if (labels.size() != b) throw InputError("cross_entropy: label count mismatch");
    double loss = 0.0;
    Tensor probs({b, k});
    for (std::size_t i = 0; i < b; ++i) {
        if (labels[i] >= k) throw InputError("cross_entropy: label out of range");
        double mx = -1e300;
        for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, logits->value.at(i, j));
        double z = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            probs.at(i, j) = std::exp(logits->value.at(i, j) - mx);
            z += probs.at(i, j);
        }
        for (std::size_t j = 0; j < k; ++j) probs.at(i, j) /= z;
        loss -= std::log(std::max(probs.at(i, labels[i]), 1e-300));
    }
    loss /= static_cast<double>(b);
    auto lab = labels;
    return make(Tensor({1}, {loss}), {logits}, [probs, lab, b, k](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        const double g = n.grad.data[0] / static_cast<double>(b);
        for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < k; ++j) {
                const double onehot = (j == lab[i]) ? 1.0 : 0.0;
                n.parents[0]->grad.data[i * k + j] += g * (probs.data[i * k + j] - onehot);
            }
    });
}

Var conv1d_patches(const Var& x, const Var& w, std::size_t ch_in, std::size_t t_len) {
    const std::size_t L = x->value.shape[0];
    if (x->value.shape[1] != ch_in * t_len)
        throw DimensionError("conv1d_patches: input width != ch_in*t_len");
    const std::size_t ch_out = w->value.shape[0];
    if (w->value.shape[1] != ch_in * 3)
        throw DimensionError("conv1d_patches: weight width != ch_in*3");
    Tensor v({L, ch_out * t_len});
    for (std::size_t p = 0; p < L; ++p) {
        const double* xr = &x->value.data[p * ch_in * t_len];
        double* vr = &v.data[p * ch_out * t_len];
        for (std::size_t o = 0; o < ch_out; ++o) {
            const double* wo = &w->value.data[o * ch_in * 3];
            for (std::size_t t = 0; t < t_len; ++t) {
                double acc = 0.0;
                for (std::size_t c = 0; c < ch_in; ++c)
                    for (std::size_t j = 0; j < 3; ++j) {
                        const long ti = static_cast<long>(t) + static_cast<long>(j) - 1;
                        if (ti < 0 || ti >= static_cast<long>(t_len)) continue;
                        acc += wo[c * 3 + j] * xr[c * t_len + static_cast<std::size_t>(ti)];
                    }
                vr[o * t_len + t] = acc;
            }
        }
    }
    ensure_finite(v, "conv1d_patches");
    return make(std::move(v), {x, w}, [ch_in, t_len](Node& n) {
        const Tensor& xv = n.parents[0]->value;
        const Tensor& wv = n.parents[1]->value;
        const std::size_t L = xv.shape[0];
        const std::size_t ch_out = wv.shape[0];
        for (std::size_t p = 0; p < L; ++p) {
            const double* xr = &xv.data[p * ch_in * t_len];
            const double* gr = &n.grad.data[p * ch_out * t_len];
            for (std::size_t o = 0; o < ch_out; ++o) {
                const double* wo = &wv.data[o * ch_in * 3];
                for (std::size_t t = 0; t < t_len; ++t) {
                    const double g = gr[o * t_len + t];
                    if (g == 0.0) continue;
                    for (std::size_t c = 0; c < ch_in; ++c)
                        for (std::size_t j = 0; j < 3; ++j) {
                            const long ti = static_cast<long>(t) + static_cast<long>(j) - 1;
                            if (ti < 0 || ti >= static_cast<long>(t_len)) continue;
                            const std::size_t xi =
                                p * ch_in * t_len + c * t_len + static_cast<std::size_t>(ti);
                            if (n.parents[0]->requires_grad)
                                n.parents[0]->grad.data[xi] += g * wo[c * 3 + j];
                            if (n.parents[1]->requires_grad)
                                n.parents[1]->grad.data[o * ch_in * 3 + c * 3 + j] +=
                                    g * xv.data[xi];
                        }
                }
            }
        }
    });
}

}  // namespace brainof::ad
