#include "mcm/autodiff.hpp"

#include "mcm/error.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <string>

namespace mcm::ad {

const Mat& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Mat value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(const Parameter& p) {
    Node n;
    n.ref = &p.value;
    n.param = &p;
    n.needs_grad = record_ && p.trainable;
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::push(Mat value, bool needs_grad, Backward backward) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = record_ && needs_grad;
    if (n.needs_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
}

const Mat& Tape::value(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return n.ref != nullptr ? *n.ref : n.value;
}

void Tape::accumulate(int id, const Mat& g) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad) return;
    if (!n.has_grad) {
        n.grad = g;
        n.has_grad = true;
    } else {
        n.grad += g;
    }
}

void Tape::backward(const Var& scalar) {
    if (scalar.rows() != 1 || scalar.cols() != 1) throw DimensionError("backward(scalar) needs a 1x1 output");
    backward(scalar, Mat::Ones(1, 1));
}

void Tape::backward(const Var& out, const Mat& seed) {
    if (!record_) throw ValidationError("backward on a non-recording tape");
    accumulate(out.id(), seed);
    for (int id = out.id(); id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.has_grad) continue;
        if (n.param != nullptr) {
            if (n.param->grad.rows() != n.grad.rows() || n.param->grad.cols() != n.grad.cols()) {
                n.param->grad = Mat::Zero(n.grad.rows(), n.grad.cols());
            }
            n.param->grad += n.grad;
        } else if (n.backward) {
            n.backward(*this, n.grad);
        }
    }
}

Mat Tape::grad(const Var& v) const {
    const Node& n = nodes_[static_cast<std::size_t>(v.id())];
    if (n.has_grad) return n.grad;
    const Mat& val = value(v.id());
    return Mat::Zero(val.rows(), val.cols());
}

namespace {

void same_shape(const Var& a, const Var& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError(std::string(op) + ": shapes " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                             " and " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
}

bool any_grad(const Var& a) { return a.tape()->needs_grad(a); }
bool any_grad(const Var& a, const Var& b) { return any_grad(a) || any_grad(b); }

}  // namespace

Var matmul(const Var& a, const Var& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " * " +
                             std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
    Tape& t = *a.tape();
    Mat out;
    out.noalias() = a.value() * b.value();
    const int ia = a.id();
    const int ib = b.id();
    return t.push(std::move(out), any_grad(a, b), [ia, ib](Tape& tp, const Mat& g) {
        if (tp.needs_grad(ia)) {
            Mat ga;
            ga.noalias() = g * tp.value(ib).transpose();
            tp.accumulate(ia, ga);
        }
        if (tp.needs_grad(ib)) {
            Mat gb;
            gb.noalias() = tp.value(ia).transpose() * g;
            tp.accumulate(ib, gb);
        }
    });
}

Var add(const Var& a, const Var& b) {
    same_shape(a, b, "add");
    const int ia = a.id();
    const int ib = b.id();
    return a.tape()->push(a.value() + b.value(), any_grad(a, b), [ia, ib](Tape& tp, const Mat& g) {
        tp.accumulate(ia, g);
        tp.accumulate(ib, g);
    });
}

Var sub(const Var& a, const Var& b) {
    same_shape(a, b, "sub");
    const int ia = a.id();
    const int ib = b.id();
    return a.tape()->push(a.value() - b.value(), any_grad(a, b), [ia, ib](Tape& tp, const Mat& g) {
        tp.accumulate(ia, g);
        tp.accumulate(ib, -g);
    });
}

Var hadamard(const Var& a, const Var& b) {
    same_shape(a, b, "hadamard");
    const int ia = a.id();
    const int ib = b.id();
    return a.tape()->push(a.value().cwiseProduct(b.value()), any_grad(a, b), [ia, ib](Tape& tp, const Mat& g) {
        if (tp.needs_grad(ia)) tp.accumulate(ia, g.cwiseProduct(tp.value(ib)));
        if (tp.needs_grad(ib)) tp.accumulate(ib, g.cwiseProduct(tp.value(ia)));
    });
}

Var scale(const Var& a, double s) {
    const int ia = a.id();
    return a.tape()->push(a.value() * s, any_grad(a), [ia, s](Tape& tp, const Mat& g) { tp.accumulate(ia, g * s); });
}

Var add_row(const Var& a, const Var& row) {
    if (row.rows() != 1 || row.cols() != a.cols()) throw DimensionError("add_row: bias must be 1 x cols");
    const int ia = a.id();
    const int ir = row.id();
    Mat out = a.value();
    out.rowwise() += row.value().row(0);
    return a.tape()->push(std::move(out), any_grad(a, row), [ia, ir](Tape& tp, const Mat& g) {
        tp.accumulate(ia, g);
        if (tp.needs_grad(ir)) tp.accumulate(ir, g.colwise().sum());
    });
}

namespace {

void check_segments(const Var& a, const Var& s, int seg_len, const char* op) {
    if (seg_len <= 0 || a.rows() != s.rows() * seg_len || a.cols() != s.cols()) {
        throw DimensionError(std::string(op) + ": " + std::to_string(a.rows()) + " rows do not split into " +
                             std::to_string(s.rows()) + " segments of " + std::to_string(seg_len));
    }
}

}  // namespace

Var seg_add(const Var& a, const Var& s, int seg_len) {
    check_segments(a, s, seg_len, "seg_add");
    Mat out = a.value();
    const Mat& sv = s.value();
    for (Eigen::Index b = 0; b < sv.rows(); ++b) out.middleRows(b * seg_len, seg_len).rowwise() += sv.row(b);
    const int ia = a.id();
    const int is = s.id();
    return a.tape()->push(std::move(out), any_grad(a, s), [ia, is, seg_len](Tape& tp, const Mat& g) {
        tp.accumulate(ia, g);
        if (tp.needs_grad(is)) {
            const Eigen::Index nb = g.rows() / seg_len;
            Mat gs(nb, g.cols());
            for (Eigen::Index b = 0; b < nb; ++b) gs.row(b) = g.middleRows(b * seg_len, seg_len).colwise().sum();
            tp.accumulate(is, gs);
        }
    });
}

Var seg_mul(const Var& a, const Var& s, int seg_len) {
    check_segments(a, s, seg_len, "seg_mul");
    Mat out = a.value();
    const Mat& sv = s.value();
    for (Eigen::Index b = 0; b < sv.rows(); ++b) {
        out.middleRows(b * seg_len, seg_len).array().rowwise() *= sv.row(b).array();
    }
    const int ia = a.id();
    const int is = s.id();
    return a.tape()->push(std::move(out), any_grad(a, s), [ia, is, seg_len](Tape& tp, const Mat& g) {
        const Mat& av = tp.value(ia);
        const Mat& svv = tp.value(is);
        const Eigen::Index nb = svv.rows();
        if (tp.needs_grad(ia)) {
            Mat ga = g;
            for (Eigen::Index b = 0; b < nb; ++b) {
                ga.middleRows(b * seg_len, seg_len).array().rowwise() *= svv.row(b).array();
            }
            tp.accumulate(ia, ga);
        }
        if (tp.needs_grad(is)) {
            Mat gs(nb, g.cols());
            for (Eigen::Index b = 0; b < nb; ++b) {
                gs.row(b) = g.middleRows(b * seg_len, seg_len)
                                .cwiseProduct(av.middleRows(b * seg_len, seg_len))
                                .colwise()
                                .sum();
            }
            tp.accumulate(is, gs);
        }
    });
}

Var broadcast_rows(const Var& row, Eigen::Index n) {
    if (row.rows() != 1) throw DimensionError("broadcast_rows: input must be a single row");
    const int ir = row.id();
    return row.tape()->push(row.value().replicate(n, 1), any_grad(row),
                            [ir](Tape& tp, const Mat& g) { tp.accumulate(ir, g.colwise().sum()); });
}

Var gather_rows(const Var& table, std::span<const int> ids) {
    const Mat& tv = table.value();
    Mat out(static_cast<Eigen::Index>(ids.size()), tv.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= tv.rows()) throw IndexError("gather_rows: id " + std::to_string(ids[i]));
        out.row(static_cast<Eigen::Index>(i)) = tv.row(ids[i]);
    }
    const int it = table.id();
    std::vector<int> idx(ids.begin(), ids.end());
    return table.tape()->push(std::move(out), any_grad(table), [it, idx = std::move(idx)](Tape& tp, const Mat& g) {
        const Mat& tv2 = tp.value(it);
        Mat gt = Mat::Zero(tv2.rows(), tv2.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) gt.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
        tp.accumulate(it, gt);
    });
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no inputs");
    const Eigen::Index rows = parts[0].rows();
    Eigen::Index cols = 0;
    bool grad = false;
    for (const Var& p : parts) {
        if (p.rows() != rows) throw DimensionError("concat_cols: row counts differ");
        cols += p.cols();
        grad = grad || any_grad(p);
    }
    Mat out(rows, cols);
    std::vector<std::pair<int, Eigen::Index>> spans;
    Eigen::Index c = 0;
    for (const Var& p : parts) {
        out.middleCols(c, p.cols()) = p.value();
        spans.emplace_back(p.id(), c);
        c += p.cols();
    }
    return parts[0].tape()->push(std::move(out), grad, [spans = std::move(spans)](Tape& tp, const Mat& g) {
        for (const auto& [id, off] : spans) {
            if (tp.needs_grad(id)) tp.accumulate(id, g.middleCols(off, tp.value(id).cols()));
        }
    });
}

namespace kernels {

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

double gelu(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); }

double gelu_grad(double x) {
    const double th = std::tanh(kGeluC * (x + kGeluA * x * x * x));
    return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

Mat softmax_rows(const Mat& logits) {
    Mat p(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double m = logits.row(r).maxCoeff();
        p.row(r) = (logits.row(r).array() - m).exp();
        p.row(r) /= p.row(r).sum();
    }
    return p;
}

Mat layer_norm(const Mat& x, const RowVec& gain, const RowVec& bias, double eps) {
    Mat out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double mean = x.row(r).mean();
        const RowVec centered = x.row(r).array() - mean;
        const double var = centered.squaredNorm() / static_cast<double>(x.cols());
        out.row(r) = (centered / std::sqrt(var + eps)).cwiseProduct(gain) + bias;
    }
    return out;
}

}  // namespace kernels

Var gelu(const Var& a) {
    const int ia = a.id();
    // tanh(u) = 1 - 2 / (exp(2u) + 1) keeps the whole activation on Eigen's vectorized exp.
    const auto& x = a.value().array();
    auto th = std::make_shared<Mat>(
        (1.0 - 2.0 / ((2.0 * kernels::kGeluC * (x + kernels::kGeluA * x.cube())).exp() + 1.0)).matrix());
    Mat out = (0.5 * x * (1.0 + th->array())).matrix();
    return a.tape()->push(std::move(out), any_grad(a), [ia, th](Tape& tp, const Mat& g) {
        const auto& xv = tp.value(ia).array();
        const auto& t = th->array();
        tp.accumulate(ia, (g.array() * (0.5 * (1.0 + t) + 0.5 * xv * (1.0 - t.square()) * kernels::kGeluC *
                                                          (1.0 + 3.0 * kernels::kGeluA * xv.square())))
                              .matrix());
    });
}

Var silu(const Var& a) {
    const int ia = a.id();
    Mat out = a.value().unaryExpr([](double x) { return x / (1.0 + std::exp(-x)); });
    return a.tape()->push(std::move(out), any_grad(a), [ia](Tape& tp, const Mat& g) {
        tp.accumulate(ia, g.cwiseProduct(tp.value(ia).unaryExpr([](double x) {
            const double s = 1.0 / (1.0 + std::exp(-x));
            return s * (1.0 + x * (1.0 - s));
        })));
    });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
    const Mat& xv = x.value();
    const Eigen::Index n = xv.rows();
    const Eigen::Index m = xv.cols();
    if (gain.rows() != 1 || gain.cols() != m || bias.rows() != 1 || bias.cols() != m) {
        throw DimensionError("layer_norm: gain/bias must be 1 x " + std::to_string(m));
    }
    auto xhat = std::make_shared<Mat>(n, m);
    auto inv_std = std::make_shared<Vec>(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const double mean = xv.row(r).mean();
        const RowVec centered = xv.row(r).array() - mean;
        const double var = centered.squaredNorm() / static_cast<double>(m);
        (*inv_std)[r] = 1.0 / std::sqrt(var + eps);
        xhat->row(r) = centered * (*inv_std)[r];
    }
    Mat out = *xhat;
    out.array().rowwise() *= gain.value().row(0).array();
    out.rowwise() += bias.value().row(0);
    const int ix = x.id();
    const int ig = gain.id();
    const int ib = bias.id();
    const bool grad = any_grad(x) || any_grad(gain, bias);
    return x.tape()->push(std::move(out), grad, [ix, ig, ib, xhat, inv_std, m](Tape& tp, const Mat& g) {
        if (tp.needs_grad(ig)) tp.accumulate(ig, g.cwiseProduct(*xhat).colwise().sum());
        if (tp.needs_grad(ib)) tp.accumulate(ib, g.colwise().sum());
        if (tp.needs_grad(ix)) {
            Mat dxhat = g;
            dxhat.array().rowwise() *= tp.value(ig).row(0).array();
            Mat dx(dxhat.rows(), m);
            for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
                const double mean_d = dxhat.row(r).mean();
                const double mean_dx = dxhat.row(r).dot(xhat->row(r)) / static_cast<double>(m);
                dx.row(r) = (*inv_std)[r] * (dxhat.row(r).array() - mean_d - xhat->row(r).array() * mean_dx);
            }
            tp.accumulate(ix, dx);
        }
    });
}

Var mse(const Var& pred, const Mat& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw DimensionError("mse: shape mismatch");
    auto diff = std::make_shared<Mat>(pred.value() - target);
    const double count = static_cast<double>(diff->size());
    Mat out(1, 1);
    out(0, 0) = diff->squaredNorm() / count;
    const int ip = pred.id();
    return pred.tape()->push(std::move(out), any_grad(pred), [ip, diff, count](Tape& tp, const Mat& g) {
        tp.accumulate(ip, (*diff) * (2.0 * g(0, 0) / count));
    });
}

Var half_sum_squares(const Var& a) {
    Mat out(1, 1);
    out(0, 0) = 0.5 * a.value().squaredNorm();
    const int ia = a.id();
    return a.tape()->push(std::move(out), any_grad(a),
                          [ia](Tape& tp, const Mat& g) { tp.accumulate(ia, tp.value(ia) * g(0, 0)); });
}

AttentionLayout AttentionLayout::uniform(int batch, int q_len, int k_len) {
    AttentionLayout l;
    for (int b = 0; b <= batch; ++b) {
        l.q_offsets.push_back(b * q_len);
        l.k_offsets.push_back(b * k_len);
    }
    return l;
}

Var multi_head_attention(const Var& q, const Var& k, const Var& v, int heads, const AttentionLayout& layout) {
    const Mat& qv = q.value();
    const Mat& kv = k.value();
    const Mat& vv = v.value();
    const Eigen::Index d = qv.cols();
    if (kv.cols() != d || vv.cols() != d || kv.rows() != vv.rows()) throw DimensionError("attention: q/k/v widths differ");
    if (heads <= 0 || d % heads != 0) {
        throw ConfigError("model width " + std::to_string(d) + " not divisible by " + std::to_string(heads) + " heads");
    }
    const auto nb = layout.q_offsets.size();
    if (nb < 2 || layout.k_offsets.size() != nb) throw DimensionError("attention: malformed segment offsets");
    if (layout.q_offsets.back() != qv.rows() || layout.k_offsets.back() != kv.rows()) {
        throw DimensionError("attention: offsets do not cover q/k rows");
    }
    if (!layout.key_valid.empty() && layout.key_valid.size() != static_cast<std::size_t>(kv.rows())) {
        throw ValidationError("attention: key mask length " + std::to_string(layout.key_valid.size()) +
                              " does not match " + std::to_string(kv.rows()) + " keys");
    }
    const int ch = static_cast<int>(d / heads);
    const double sc = 1.0 / std::sqrt(static_cast<double>(ch));
    const double neg_inf = -std::numeric_limits<double>::infinity();

    auto probs = std::make_shared<std::vector<Mat>>();
    probs->reserve((nb - 1) * static_cast<std::size_t>(heads));
    Mat out(qv.rows(), d);
    for (std::size_t b = 0; b + 1 < nb; ++b) {
        const int q0 = layout.q_offsets[b];
        const int nq = layout.q_offsets[b + 1] - q0;
        const int k0 = layout.k_offsets[b];
        const int nk = layout.k_offsets[b + 1] - k0;
        if (nk <= 0) throw ValidationError("attention: empty key/context segment");
        bool any_valid = layout.key_valid.empty();
        for (int j = 0; j < nk && !any_valid; ++j) any_valid = layout.key_valid[static_cast<std::size_t>(k0 + j)] != 0;
        if (!any_valid) throw ValidationError("attention: every key in a segment is masked");
        for (int h = 0; h < heads; ++h) {
            Mat s;
            s.noalias() = qv.block(q0, h * ch, nq, ch) * kv.block(k0, h * ch, nk, ch).transpose();
            s *= sc;
            if (!layout.key_valid.empty()) {
                for (int j = 0; j < nk; ++j) {
                    if (layout.key_valid[static_cast<std::size_t>(k0 + j)] == 0) s.col(j).setConstant(neg_inf);
                }
            }
            Mat p = kernels::softmax_rows(s);
            out.block(q0, h * ch, nq, ch).noalias() = p * vv.block(k0, h * ch, nk, ch);
            probs->push_back(std::move(p));
        }
    }

    const int iq = q.id();
    const int ik = k.id();
    const int iv = v.id();
    const bool grad = any_grad(q) || any_grad(k, v);
    return q.tape()->push(std::move(out), grad, [iq, ik, iv, heads, ch, sc, probs, layout](Tape& tp, const Mat& g) {
        const Mat& qv2 = tp.value(iq);
        const Mat& kv2 = tp.value(ik);
        const Mat& vv2 = tp.value(iv);
        Mat gq = Mat::Zero(qv2.rows(), qv2.cols());
        Mat gk = Mat::Zero(kv2.rows(), kv2.cols());
        Mat gv = Mat::Zero(vv2.rows(), vv2.cols());
        std::size_t idx = 0;
        for (std::size_t b = 0; b + 1 < layout.q_offsets.size(); ++b) {
            const int q0 = layout.q_offsets[b];
            const int nq = layout.q_offsets[b + 1] - q0;
            const int k0 = layout.k_offsets[b];
            const int nk = layout.k_offsets[b + 1] - k0;
            for (int h = 0; h < heads; ++h, ++idx) {
                const Mat& p = (*probs)[idx];
                const auto go = g.block(q0, h * ch, nq, ch);
                gv.block(k0, h * ch, nk, ch).noalias() += p.transpose() * go;
                Mat dp;
                dp.noalias() = go * vv2.block(k0, h * ch, nk, ch).transpose();
                const Vec row_dot = dp.cwiseProduct(p).rowwise().sum();
                Mat ds = p.cwiseProduct(dp.colwise() - row_dot) * sc;
                gq.block(q0, h * ch, nq, ch).noalias() += ds * kv2.block(k0, h * ch, nk, ch);
                gk.block(k0, h * ch, nk, ch).noalias() += ds.transpose() * qv2.block(q0, h * ch, nq, ch);
            }
        }
        tp.accumulate(iq, gq);
        tp.accumulate(ik, gk);
        tp.accumulate(iv, gv);
    });
}

Var channel_attention(const Var& q, const Var& k, const Var& v, int groups, int seg_len) {
    const Mat& qv = q.value();
    const Mat& kv = k.value();
    const Mat& vv = v.value();
    const Eigen::Index d = qv.cols();
    if (kv.rows() != qv.rows() || vv.rows() != qv.rows() || kv.cols() != d || vv.cols() != d) {
        throw DimensionError("channel attention: q/k/v shapes differ");
    }
    if (groups <= 0 || d % groups != 0) {
        throw ConfigError("model width " + std::to_string(d) + " not divisible by " + std::to_string(groups) + " groups");
    }
    if (seg_len <= 0 || qv.rows() % seg_len != 0) throw DimensionError("channel attention: rows not a multiple of seg_len");
    const int cg = static_cast<int>(d / groups);
    const double sc = 1.0 / std::sqrt(static_cast<double>(cg));
    const Eigen::Index nb = qv.rows() / seg_len;

    auto probs = std::make_shared<std::vector<Mat>>();
    probs->reserve(static_cast<std::size_t>(nb * groups));
    Mat out(qv.rows(), d);
    for (Eigen::Index b = 0; b < nb; ++b) {
        const Eigen::Index r0 = b * seg_len;
        for (int gi = 0; gi < groups; ++gi) {
            Mat s;
            s.noalias() = qv.block(r0, gi * cg, seg_len, cg).transpose() * kv.block(r0, gi * cg, seg_len, cg);
            s *= sc;
            Mat p = kernels::softmax_rows(s);
            out.block(r0, gi * cg, seg_len, cg).noalias() = vv.block(r0, gi * cg, seg_len, cg) * p.transpose();
            probs->push_back(std::move(p));
        }
    }

    const int iq = q.id();
    const int ik = k.id();
    const int iv = v.id();
    const bool grad = any_grad(q) || any_grad(k, v);
    return q.tape()->push(std::move(out), grad, [iq, ik, iv, groups, cg, sc, seg_len, nb, probs](Tape& tp, const Mat& g) {
        const Mat& qv2 = tp.value(iq);
        const Mat& kv2 = tp.value(ik);
        const Mat& vv2 = tp.value(iv);
        Mat gq(qv2.rows(), qv2.cols());
        Mat gk(kv2.rows(), kv2.cols());
        Mat gv(vv2.rows(), vv2.cols());
        std::size_t idx = 0;
        for (Eigen::Index b = 0; b < nb; ++b) {
            const Eigen::Index r0 = b * seg_len;
            for (int gi = 0; gi < groups; ++gi, ++idx) {
                const Mat& p = (*probs)[idx];
                const auto go = g.block(r0, gi * cg, seg_len, cg);
                const auto vb = vv2.block(r0, gi * cg, seg_len, cg);
                gv.block(r0, gi * cg, seg_len, cg).noalias() = go * p;
                Mat dp;
                dp.noalias() = go.transpose() * vb;
                const Vec row_dot = dp.cwiseProduct(p).rowwise().sum();
                Mat ds = p.cwiseProduct(dp.colwise() - row_dot) * sc;
                gq.block(r0, gi * cg, seg_len, cg).noalias() = kv2.block(r0, gi * cg, seg_len, cg) * ds.transpose();
                gk.block(r0, gi * cg, seg_len, cg).noalias() = qv2.block(r0, gi * cg, seg_len, cg) * ds;
            }
        }
        tp.accumulate(iq, gq);
        tp.accumulate(ik, gk);
        tp.accumulate(iv, gv);
    });
}

}  // namespace mcm::ad
