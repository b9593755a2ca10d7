#include "tsfb/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

namespace tsfb {

namespace {

std::string shape_str(const Tensor& t) {
    return "[" + std::to_string(t.rows) + "x" + std::to_string(t.cols) + "]";
}

Var make_node(Tensor v, std::vector<Var> parents, std::function<void(Node&)> backfn) {
    auto n = std::make_shared<Node>(std::move(v));
    for (const auto& p : parents)
        if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) {
        n->parents = std::move(parents);
        n->backfn = std::move(backfn);
    }
    return n;
}

}  // namespace

Var constant(Tensor v) { return std::make_shared<Node>(std::move(v)); }

Var make_param(Tensor v) {
    auto n = std::make_shared<Node>(std::move(v));
    n->requires_grad = true;
    return n;
}

Var add(const Var& a, const Var& b) {
    if (!a->val.same_shape(b->val))
        throw DimensionError("add: shape mismatch " + shape_str(a->val) + " vs " + shape_str(b->val));
    Tensor out = a->val;
    for (size_t i = 0; i < out.size(); ++i) out.data[i] += b->val.data[i];
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) {
            Tensor& g = a->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) g.data[i] += n.grad.data[i];
        }
        if (b->requires_grad) {
            Tensor& g = b->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) g.data[i] += n.grad.data[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    if (!a->val.same_shape(b->val))
        throw DimensionError("sub: shape mismatch " + shape_str(a->val) + " vs " + shape_str(b->val));
    Tensor out = a->val;
    for (size_t i = 0; i < out.size(); ++i) out.data[i] -= b->val.data[i];
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) {
            Tensor& g = a->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) g.data[i] += n.grad.data[i];
        }
        if (b->requires_grad) {
            Tensor& g = b->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) g.data[i] -= n.grad.data[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    if (!a->val.same_shape(b->val))
        throw DimensionError("mul: shape mismatch " + shape_str(a->val) + " vs " + shape_str(b->val));
    Tensor out = a->val;
    for (size_t i = 0; i < out.size(); ++i) out.data[i] *= b->val.data[i];
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) {
            Tensor& g = a->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) g.data[i] += n.grad.data[i] * b->val.data[i];
        }
        if (b->requires_grad) {
            Tensor& g = b->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) g.data[i] += n.grad.data[i] * a->val.data[i];
        }
    });
}

Var scale(const Var& a, double s) {
    Tensor out = a->val;
    for (auto& x : out.data) x *= s;
    return make_node(std::move(out), {a}, [a, s](Node& n) {
        Tensor& g = a->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) g.data[i] += s * n.grad.data[i];
    });
}

Var add_rowvec(const Var& a, const Var& bias) {
    if (bias->val.rows != 1 || bias->val.cols != a->val.cols)
        throw DimensionError("add_rowvec: bias " + shape_str(bias->val) + " vs " + shape_str(a->val));
    Tensor out = a->val;
    for (int i = 0; i < out.rows; ++i)
        for (int j = 0; j < out.cols; ++j) out.at(i, j) += bias->val.at(0, j);
    return make_node(std::move(out), {a, bias}, [a, bias](Node& n) {
        if (a->requires_grad) {
            Tensor& g = a->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) g.data[i] += n.grad.data[i];
        }
        if (bias->requires_grad) {
            Tensor& g = bias->ensure_grad();
            for (int i = 0; i < n.grad.rows; ++i)
                for (int j = 0; j < n.grad.cols; ++j) g.at(0, j) += n.grad.at(i, j);
        }
    });
}

Var mul_rowvec(const Var& a, const Var& gains) {
    if (gains->val.rows != 1 || gains->val.cols != a->val.cols)
        throw DimensionError("mul_rowvec: gains " + shape_str(gains->val) + " vs " + shape_str(a->val));
    Tensor out = a->val;
    for (int i = 0; i < out.rows; ++i)
        for (int j = 0; j < out.cols; ++j) out.at(i, j) *= gains->val.at(0, j);
    return make_node(std::move(out), {a, gains}, [a, gains](Node& n) {
        if (a->requires_grad) {
            Tensor& g = a->ensure_grad();
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < g.cols; ++j)
                    g.at(i, j) += n.grad.at(i, j) * gains->val.at(0, j);
        }
        if (gains->requires_grad) {
            Tensor& g = gains->ensure_grad();
            for (int i = 0; i < n.grad.rows; ++i)
                for (int j = 0; j < n.grad.cols; ++j)
                    g.at(0, j) += n.grad.at(i, j) * a->val.at(i, j);
        }
    });
}

Var matmul(const Var& a, const Var& b) {
    if (a->val.cols != b->val.rows)
        throw DimensionError("matmul: " + shape_str(a->val) + " x " + shape_str(b->val));
    Tensor out(a->val.rows, b->val.cols);
    kernels::matmul_nn(a->val, b->val, out);
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) kernels::matmul_nt(n.grad, b->val, a->ensure_grad(), true);
        if (b->requires_grad) kernels::matmul_tn(a->val, n.grad, b->ensure_grad(), true);
    });
}

Var matmul_nt(const Var& a, const Var& b) {
    if (a->val.cols != b->val.cols)
        throw DimensionError("matmul_nt: " + shape_str(a->val) + " x " + shape_str(b->val) + "^T");
    Tensor out(a->val.rows, b->val.rows);
    kernels::matmul_nt(a->val, b->val, out);
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) kernels::matmul_nn(n.grad, b->val, a->ensure_grad(), true);
        if (b->requires_grad) kernels::matmul_tn(n.grad, a->val, b->ensure_grad(), true);
    });
}

Var relu(const Var& a) {
    Tensor out = a->val;
    for (auto& x : out.data)
        if (x < 0.0) x = 0.0;
    return make_node(std::move(out), {a}, [a](Node& n) {
        Tensor& g = a->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i)
            if (a->val.data[i] > 0.0) g.data[i] += n.grad.data[i];
    });
}

Var softmax_rows(const Var& a) {
    const Tensor& x = a->val;
    Tensor out(x.rows, x.cols);
    for (int i = 0; i < x.rows; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < x.cols; ++j) mx = std::max(mx, x.at(i, j));
        if (mx <= -1e30)  // mask value, or -inf: every slot is masked out
            throw DataError("softmax_rows: fully masked row " + std::to_string(i));
        double sum = 0.0;
        for (int j = 0; j < x.cols; ++j) {
            double e = std::exp(x.at(i, j) - mx);
            out.at(i, j) = e;
            sum += e;
        }
        for (int j = 0; j < x.cols; ++j) out.at(i, j) /= sum;
    }
    return make_node(std::move(out), {a}, [a](Node& n) {
        Tensor& g = a->ensure_grad();
        const Tensor& y = n.val;
        for (int i = 0; i < y.rows; ++i) {
            double dot = 0.0;
            for (int j = 0; j < y.cols; ++j) dot += n.grad.at(i, j) * y.at(i, j);
            for (int j = 0; j < y.cols; ++j)
                g.at(i, j) += y.at(i, j) * (n.grad.at(i, j) - dot);
        }
    });
}

Var layernorm_rows(const Var& a, double eps) {
    const Tensor& x = a->val;
    Tensor out(x.rows, x.cols);
    Tensor inv_sd(x.rows, 1);
    const int c = x.cols;
    for (int i = 0; i < x.rows; ++i) {
        double mean = 0.0;
        for (int j = 0; j < c; ++j) mean += x.at(i, j);
        mean /= c;
        double var = 0.0;
        for (int j = 0; j < c; ++j) {
            double d = x.at(i, j) - mean;
            var += d * d;
        }
        var /= c;
        double isd = 1.0 / std::sqrt(var + eps);
        inv_sd.at(i, 0) = isd;
        for (int j = 0; j < c; ++j) out.at(i, j) = (x.at(i, j) - mean) * isd;
    }
    return make_node(std::move(out), {a}, [a, inv_sd](Node& n) {
        Tensor& g = a->ensure_grad();
        const Tensor& y = n.val;
        const int c = y.cols;
        for (int i = 0; i < y.rows; ++i) {
            double gmean = 0.0, gymean = 0.0;
            for (int j = 0; j < c; ++j) {
                gmean += n.grad.at(i, j);
                gymean += n.grad.at(i, j) * y.at(i, j);
            }
            gmean /= c;
            gymean /= c;
            double isd = inv_sd.at(i, 0);
            for (int j = 0; j < c; ++j)
                g.at(i, j) += isd * (n.grad.at(i, j) - gmean - y.at(i, j) * gymean);
        }
    });
}

Var embedding(const Var& table, const std::vector<int>& ids) {
    const Tensor& t = table->val;
    Tensor out(int(ids.size()), t.cols);
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= t.rows)
            throw DimensionError("embedding: id " + std::to_string(ids[i]) + " out of range");
        for (int j = 0; j < t.cols; ++j) out.at(int(i), j) = t.at(ids[i], j);
    }
    return make_node(std::move(out), {table}, [table, ids](Node& n) {
        Tensor& g = table->ensure_grad();
        for (size_t i = 0; i < ids.size(); ++i)
            for (int j = 0; j < g.cols; ++j) g.at(ids[i], j) += n.grad.at(int(i), j);
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    int rows = parts.at(0)->val.rows, cols = 0;
    for (const auto& p : parts) {
        if (p->val.rows != rows) throw DimensionError("concat_cols: row mismatch");
        cols += p->val.cols;
    }
    Tensor out(rows, cols);
    int off = 0;
    for (const auto& p : parts) {
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < p->val.cols; ++j) out.at(i, off + j) = p->val.at(i, j);
        off += p->val.cols;
    }
    return make_node(std::move(out), parts, [parts](Node& n) {
        int off = 0;
        for (const auto& p : parts) {
            if (p->requires_grad) {
                Tensor& g = p->ensure_grad();
                for (int i = 0; i < g.rows; ++i)
                    for (int j = 0; j < g.cols; ++j) g.at(i, j) += n.grad.at(i, off + j);
            }
            off += p->val.cols;
        }
    });
}

Var select_rows(const Var& a, const std::vector<int>& rows) {
    Tensor out(int(rows.size()), a->val.cols);
    for (size_t i = 0; i < rows.size(); ++i)
        for (int j = 0; j < a->val.cols; ++j) out.at(int(i), j) = a->val.at(rows[i], j);
    return make_node(std::move(out), {a}, [a, rows](Node& n) {
        Tensor& g = a->ensure_grad();
        for (size_t i = 0; i < rows.size(); ++i)
            for (int j = 0; j < g.cols; ++j) g.at(rows[i], j) += n.grad.at(int(i), j);
    });
}

Var cross_entropy_logits(const Var& logits, const std::vector<int>& targets) {
    const Tensor& x = logits->val;
    if (int(targets.size()) != x.rows)
        throw DimensionError("cross_entropy: target count mismatch");
    Tensor probs(x.rows, x.cols);
    double loss = 0.0;
    for (int i = 0; i < x.rows; ++i) {
        double mx = x.at(i, 0);
        for (int j = 1; j < x.cols; ++j) mx = std::max(mx, x.at(i, j));
        double sum = 0.0;
        for (int j = 0; j < x.cols; ++j) {
            double e = std::exp(x.at(i, j) - mx);
            probs.at(i, j) = e;
            sum += e;
        }
        for (int j = 0; j < x.cols; ++j) probs.at(i, j) /= sum;
        loss -= std::log(std::max(probs.at(i, targets[i]), 1e-300));
    }
    loss /= x.rows;
    Tensor out(1, 1);
    out.at(0, 0) = loss;
    return make_node(std::move(out), {logits}, [logits, probs, targets](Node& n) {
        Tensor& g = logits->ensure_grad();
        double gs = n.grad.at(0, 0) / probs.rows;
        for (int i = 0; i < probs.rows; ++i)
            for (int j = 0; j < probs.cols; ++j) {
                double p = probs.at(i, j) - (j == targets[i] ? 1.0 : 0.0);
                g.at(i, j) += gs * p;
            }
    });
}

Var mse(const Var& pred, const Var& target) {
    return mse_weighted(pred, target, Tensor::full(pred->val.rows, pred->val.cols, 1.0));
}

Var mse_weighted(const Var& pred, const Var& target, const Tensor& weights) {
    const Tensor& p = pred->val;
    if (!p.same_shape(target->val) || !p.same_shape(weights))
        throw DimensionError("mse: shape mismatch");
    double wsum = 0.0, loss = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        double d = p.data[i] - target->val.data[i];
        loss += weights.data[i] * d * d;
        wsum += weights.data[i];
    }
    if (wsum <= 0.0) throw TrainingError("mse: all prediction slots masked");
    loss /= wsum;
    Tensor out(1, 1);
    out.at(0, 0) = loss;
    return make_node(std::move(out), {pred, target}, [pred, target, weights, wsum](Node& n) {
        double gs = 2.0 * n.grad.at(0, 0) / wsum;
        if (pred->requires_grad) {
            Tensor& g = pred->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i)
                g.data[i] += gs * weights.data[i] * (pred->val.data[i] - target->val.data[i]);
        }
        if (target->requires_grad) {
            Tensor& g = target->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i)
                g.data[i] -= gs * weights.data[i] * (pred->val.data[i] - target->val.data[i]);
        }
    });
}

Var l1_penalty(const Var& w, double lambda) {
    double s = 0.0;
    for (double x : w->val.data) s += std::abs(x);
    Tensor out(1, 1);
    out.at(0, 0) = lambda * s;
    return make_node(std::move(out), {w}, [w, lambda](Node& n) {
        Tensor& g = w->ensure_grad();
        double gs = lambda * n.grad.at(0, 0);
        for (size_t i = 0; i < g.size(); ++i) {
            double x = w->val.data[i];
            g.data[i] += gs * (x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0));
        }
    });
}

Var batchnorm_cols(const Var& a, const Var& gamma, const Var& beta,
                   Tensor& running_mean, Tensor& running_var, double momentum,
                   bool training, double eps) {
    const Tensor& x = a->val;
    const int nrow = x.rows, ncol = x.cols;
    if (gamma->val.cols != ncol || beta->val.cols != ncol)
        throw DimensionError("batchnorm: affine shape mismatch");
    Tensor mean(1, ncol), var(1, ncol);
    if (training) {
        for (int j = 0; j < ncol; ++j) {
            double m = 0.0;
            for (int i = 0; i < nrow; ++i) m += x.at(i, j);
            m /= nrow;
            double v = 0.0;
            for (int i = 0; i < nrow; ++i) {
                double d = x.at(i, j) - m;
                v += d * d;
            }
            v /= nrow;
            mean.at(0, j) = m;
            var.at(0, j) = v;
            running_mean.at(0, j) = (1.0 - momentum) * running_mean.at(0, j) + momentum * m;
            running_var.at(0, j) = (1.0 - momentum) * running_var.at(0, j) + momentum * v;
        }
    } else {
        mean = running_mean;
        var = running_var;
    }
    Tensor xhat(nrow, ncol), out(nrow, ncol);
    for (int j = 0; j < ncol; ++j) {
        double isd = 1.0 / std::sqrt(var.at(0, j) + eps);
        for (int i = 0; i < nrow; ++i) {
            double h = (x.at(i, j) - mean.at(0, j)) * isd;
            xhat.at(i, j) = h;
            out.at(i, j) = gamma->val.at(0, j) * h + beta->val.at(0, j);
        }
    }
    return make_node(std::move(out), {a, gamma, beta},
                     [a, gamma, beta, xhat, var, training, eps](Node& n) {
        const int nrow = xhat.rows, ncol = xhat.cols;
        for (int j = 0; j < ncol; ++j) {
            double isd = 1.0 / std::sqrt(var.at(0, j) + eps);
            double gsum = 0.0, gxsum = 0.0;
            for (int i = 0; i < nrow; ++i) {
                gsum += n.grad.at(i, j);
                gxsum += n.grad.at(i, j) * xhat.at(i, j);
            }
            if (gamma->requires_grad) gamma->ensure_grad().at(0, j) += gxsum;
            if (beta->requires_grad) beta->ensure_grad().at(0, j) += gsum;
            if (a->requires_grad) {
                Tensor& g = a->ensure_grad();
                double gg = gamma->val.at(0, j);
                if (training) {
                    for (int i = 0; i < nrow; ++i)
                        g.at(i, j) += gg * isd *
                                      (n.grad.at(i, j) - gsum / nrow -
                                       xhat.at(i, j) * gxsum / nrow);
                } else {
                    for (int i = 0; i < nrow; ++i) g.at(i, j) += gg * isd * n.grad.at(i, j);
                }
            }
        }
    });
}

void backward(const Var& root) {
    if (root->val.rows != 1 || root->val.cols != 1)
        throw TrainingError("backward: root must be scalar");
    // iterative post-order topo sort
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Var, size_t>> stack;
    stack.emplace_back(root, 0);
    std::vector<Var> keep;  // hold refs while traversing
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (!node->requires_grad || visited.count(node.get())) {
            stack.pop_back();
            continue;
        }
        if (idx < node->parents.size()) {
            Var child = node->parents[idx++];
            if (child->requires_grad && !visited.count(child.get()))
                stack.emplace_back(child, 0);
        } else {
            visited.insert(node.get());
            order.push_back(node.get());
            keep.push_back(node);
            stack.pop_back();
        }
    }
    for (Node* n : order) n->grad_ready = false;
    root->ensure_grad().at(0, 0) = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backfn && n->grad_ready) n->backfn(*n);
    }
}

}  // namespace tsfb
