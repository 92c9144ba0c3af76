#include "recodiff/tape.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

namespace recodiff {

int Tape::leaf(Mat value) {
    nodes_.push_back(Node{std::move(value), nullptr, Mat(), nullptr, -1});
    return static_cast<int>(nodes_.size()) - 1;
}

int Tape::param(const Mat& value, int param_index) {
    nodes_.push_back(Node{Mat(), &value, Mat(), nullptr, param_index});
    return static_cast<int>(nodes_.size()) - 1;
}

int Tape::emit(Mat value, BackFn back) {
    nodes_.push_back(Node{std::move(value), nullptr, Mat(), std::move(back), -1});
    return static_cast<int>(nodes_.size()) - 1;
}

void Tape::set_back(int id, BackFn back) { nodes_[static_cast<size_t>(id)].back = std::move(back); }

Mat& Tape::grad(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.rows == 0) {
        const Mat& v = n.ext ? *n.ext : n.val;
        n.grad = Mat(v.rows, v.cols);
    }
    return n.grad;
}

void Tape::backward(int loss_id, double seed) {
    Mat& g = grad(loss_id);
    for (double& v : g.a) v += seed;
    for (int i = loss_id; i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (n.grad.rows > 0 && n.back) n.back(*this);
    }
}

void Tape::export_param_grads(const std::function<void(int, const Mat&)>& sink) const {
    for (const Node& n : nodes_) {
        if (n.param >= 0 && n.grad.rows > 0) sink(n.param, n.grad);
    }
}

int op_add(Tape& t, int a, int b) {
    check_same_shape(t.val(a), t.val(b), "op_add");
    Mat out = t.val(a);
    axpy(1.0, t.val(b), out);
    const int id = t.emit(std::move(out), nullptr);
    t.set_back(id, [id, a, b](Tape& tp) {
        const Mat& g = tp.grad(id);
        axpy(1.0, g, tp.grad(a));
        axpy(1.0, g, tp.grad(b));
    });
    return id;
}

int op_sub(Tape& t, int a, int b) {
    check_same_shape(t.val(a), t.val(b), "op_sub");
    Mat out = t.val(a);
    axpy(-1.0, t.val(b), out);
    const int id = t.emit(std::move(out), nullptr);
    t.set_back(id, [id, a, b](Tape& tp) {
        const Mat& g = tp.grad(id);
        axpy(1.0, g, tp.grad(a));
        axpy(-1.0, g, tp.grad(b));
    });
    return id;
}

int op_scale(Tape& t, int a, double c) {
    Mat out = t.val(a);
    for (double& v : out.a) v *= c;
    const int id = t.emit(std::move(out), nullptr);
    t.set_back(id, [id, a, c](Tape& tp) { axpy(c, tp.grad(id), tp.grad(a)); });
    return id;
}

int op_hadamard(Tape& t, int a, int b) {
    check_same_shape(t.val(a), t.val(b), "op_hadamard");
    Mat out = t.val(a);
    for (size_t i = 0; i < out.size(); ++i) out.a[i] *= t.val(b).a[i];
    const int id = t.emit(std::move(out), nullptr);
    t.set_back(id, [id, a, b](Tape& tp) {
        const Mat& g = tp.grad(id);
        const Mat& va = tp.val(a);
        const Mat& vb = tp.val(b);
        Mat& ga = tp.grad(a);
        Mat& gb = tp.grad(b);
        for (size_t i = 0; i < g.size(); ++i) {
            ga.a[i] += g.a[i] * vb.a[i];
            gb.a[i] += g.a[i] * va.a[i];
        }
    });
    return id;
}

int op_relu(Tape& t, int a) {
    Mat out = t.val(a);
    for (double& v : out.a) v = v > 0.0 ? v : 0.0;
    const int id = t.emit(std::move(out), nullptr);
    t.set_back(id, [id, a](Tape& tp) {
        const Mat& g = tp.grad(id);
        const Mat& va = tp.val(a);
        Mat& ga = tp.grad(a);
        for (size_t i = 0; i < g.size(); ++i) {
            if (va.a[i] > 0.0) ga.a[i] += g.a[i];
        }
    });
    return id;
}

int op_add_rowvec(Tape& t, int a, int rowvec) {
    const Mat& va = t.val(a);
    const Mat& vr = t.val(rowvec);
    if (vr.rows != 1 || vr.cols != va.cols) {
        throw std::invalid_argument("op_add_rowvec: rowvec must be 1x" + std::to_string(va.cols));
    }
    Mat out = va;
    for (int i = 0; i < out.rows; ++i) {
        double* orow = out.row(i);
        for (int j = 0; j < out.cols; ++j) orow[j] += vr.a[static_cast<size_t>(j)];
    }
    const int id = t.emit(std::move(out), nullptr);
    t.set_back(id, [id, a, rowvec](Tape& tp) {
        const Mat& g = tp.grad(id);
        axpy(1.0, g, tp.grad(a));
        Mat& gr = tp.grad(rowvec);
        for (int i = 0; i < g.rows; ++i) {
            const double* grow = g.row(i);
            for (int j = 0; j < g.cols; ++j) gr.a[static_cast<size_t>(j)] += grow[j];
        }
    });
    return id;
}

int op_add_const(Tape& t, int a, const Mat& c) {
    check_same_shape(t.val(a), c, "op_add_const");
    Mat out = t.val(a);
    axpy(1.0, c, out);
    const int id = t.emit(std::move(out), nullptr);
    t.set_back(id, [id, a](Tape& tp) { axpy(1.0, tp.grad(id), tp.grad(a)); });
    return id;
}

int op_matmul(Tape& t, int a, int b) {
    Mat out = matmul(t.val(a), t.val(b));
    const int id = t.emit(std::move(out), nullptr);
    t.set_back(id, [id, a, b](Tape& tp) {
        const Mat& g = tp.grad(id);
        matmul_nt_acc(g, tp.val(b), tp.grad(a));  // dA = G B^T
        matmul_tn_acc(tp.val(a), g, tp.grad(b));  // dB = A^T G
    });
    return id;
}

int op_matmul_nt(Tape& t, int a, int b) {
    Mat out = matmul_nt(t.val(a), t.val(b));
    const int id = t.emit(std::move(out), nullptr);
    t.set_back(id, [id, a, b](Tape& tp) {
        const Mat& g = tp.grad(id);
        matmul_acc(g, tp.val(b), tp.grad(a));     // dA = G B
        matmul_tn_acc(g, tp.val(a), tp.grad(b));  // dB = G^T A
    });
    return id;
}

int op_concat_cols(Tape& t, int a, int b) {
    const Mat& va = t.val(a);
    const Mat& vb = t.val(b);
    if (va.rows != vb.rows) throw std::invalid_argument("op_concat_cols: row mismatch");
    Mat out(va.rows, va.cols + vb.cols);
    for (int i = 0; i < va.rows; ++i) {
        double* orow = out.row(i);
        const double* arow = va.row(i);
        const double* brow = vb.row(i);
        for (int j = 0; j < va.cols; ++j) orow[j] = arow[j];
        for (int j = 0; j < vb.cols; ++j) orow[va.cols + j] = brow[j];
    }
    const int ca = va.cols;
    const int id = t.emit(std::move(out), nullptr);
    t.set_back(id, [id, a, b, ca](Tape& tp) {
        const Mat& g = tp.grad(id);
        Mat& ga = tp.grad(a);
        Mat& gb = tp.grad(b);
        for (int i = 0; i < g.rows; ++i) {
            const double* grow = g.row(i);
            double* garow = ga.row(i);
            double* gbrow = gb.row(i);
            for (int j = 0; j < ga.cols; ++j) garow[j] += grow[j];
            for (int j = 0; j < gb.cols; ++j) gbrow[j] += grow[ca + j];
        }
    });
    return id;
}

int op_gather_rows(Tape& t, int table, const std::vector<int>& ids) {
    const Mat& tab = t.val(table);
    Mat out(static_cast<int>(ids.size()), tab.cols);
    for (size_t i = 0; i < ids.size(); ++i) {
        const int r = ids[i];
        if (r < 0 || r >= tab.rows) throw std::out_of_range("op_gather_rows: id out of range");
        const double* src = tab.row(r);
        double* dst = out.row(static_cast<int>(i));
        for (int j = 0; j < tab.cols; ++j) dst[j] = src[j];
    }
    const int id = t.emit(std::move(out), nullptr);
    t.set_back(id, [id, table, ids](Tape& tp) {
        const Mat& g = tp.grad(id);
        Mat& gt = tp.grad(table);
        for (size_t i = 0; i < ids.size(); ++i) {
            const double* grow = g.row(static_cast<int>(i));
            double* trow = gt.row(ids[i]);
            for (int j = 0; j < g.cols; ++j) trow[j] += grow[j];
        }
    });
    return id;
}

int op_layer_norm(Tape& t, int a, int gain, int bias, double eps) {
    const Mat& x = t.val(a);
    const Mat& vg = t.val(gain);
    const Mat& vb = t.val(bias);
    if (vg.rows != 1 || vg.cols != x.cols || vb.rows != 1 || vb.cols != x.cols) {
        throw std::invalid_argument("op_layer_norm: gain/bias must be 1x" + std::to_string(x.cols));
    }
    const int n = x.cols;
    Mat out(x.rows, n);
    auto xhat = std::make_shared<Mat>(x.rows, n);
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(x.rows));
    for (int i = 0; i < x.rows; ++i) {
        const double* xr = x.row(i);
        double mean = 0.0;
        for (int j = 0; j < n; ++j) mean += xr[j];
        mean /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) {
            const double d = xr[j] - mean;
            var += d * d;
        }
        var /= n;
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[static_cast<size_t>(i)] = is;
        double* hr = xhat->row(i);
        double* orow = out.row(i);
        for (int j = 0; j < n; ++j) {
            hr[j] = (xr[j] - mean) * is;
            orow[j] = hr[j] * vg.a[static_cast<size_t>(j)] + vb.a[static_cast<size_t>(j)];
        }
    }
    const int id = t.emit(std::move(out), nullptr);
    t.set_back(id, [id, a, gain, bias, xhat, inv_std](Tape& tp) {
        const Mat& g = tp.grad(id);
        const Mat& vg = tp.val(gain);
        Mat& ga = tp.grad(a);
        Mat& ggain = tp.grad(gain);
        Mat& gbias = tp.grad(bias);
        const int n = g.cols;
        for (int i = 0; i < g.rows; ++i) {
            const double* grow = g.row(i);
            const double* hr = xhat->row(i);
            const double is = (*inv_std)[static_cast<size_t>(i)];
            double sum_gh = 0.0;   // sum of gain-scaled grads
            double sum_ghh = 0.0;  // sum of gain-scaled grads * xhat
            for (int j = 0; j < n; ++j) {
                const double gh = grow[j] * vg.a[static_cast<size_t>(j)];
                sum_gh += gh;
                sum_ghh += gh * hr[j];
                ggain.a[static_cast<size_t>(j)] += grow[j] * hr[j];
                gbias.a[static_cast<size_t>(j)] += grow[j];
            }
            const double mean_gh = sum_gh / n;
            const double mean_ghh = sum_ghh / n;
            double* garow = ga.row(i);
            for (int j = 0; j < n; ++j) {
                const double gh = grow[j] * vg.a[static_cast<size_t>(j)];
                garow[j] += is * (gh - mean_gh - hr[j] * mean_ghh);
            }
        }
    });
    return id;
}

int op_multi_head_attention(Tape& t, int q, int k, int v, int n_heads,
                            const std::vector<uint8_t>& key_mask, bool causal) {
    const Mat& Q = t.val(q);
    const Mat& K = t.val(k);
    const Mat& V = t.val(v);
    const int d_model = Q.cols;
    if (K.cols != d_model || V.cols != d_model) {
        throw std::invalid_argument("op_multi_head_attention: projection width mismatch");
    }
    if (K.rows != V.rows) throw std::invalid_argument("op_multi_head_attention: K/V row mismatch");
    if (d_model % n_heads != 0) {
        throw std::invalid_argument("op_multi_head_attention: d_model not divisible by n_heads");
    }
    if (static_cast<int>(key_mask.size()) != K.rows) {
        throw std::invalid_argument("op_multi_head_attention: mask length mismatch");
    }
    const int dh = d_model / n_heads;
    const int lq = Q.rows;
    const int lk = K.rows;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    // softmax probabilities per head, saved for backward: n_heads blocks of lq x lk
    auto probs = std::make_shared<std::vector<Mat>>();
    probs->reserve(static_cast<size_t>(n_heads));

    Mat out(lq, d_model);
    for (int h = 0; h < n_heads; ++h) {
        const int off = h * dh;
        Mat P(lq, lk);
        for (int i = 0; i < lq; ++i) {
            const double* qr = Q.row(i) + off;
            double* pr = P.row(i);
            double mx = -1e300;
            for (int j = 0; j < lk; ++j) {
                if (!key_mask[static_cast<size_t>(j)] || (causal && j > i)) {
                    pr[j] = -1e300;
                    continue;
                }
                const double* kr = K.row(j) + off;
                double s = 0.0;
                for (int p = 0; p < dh; ++p) s += qr[p] * kr[p];
                pr[j] = s * scale;
                mx = std::max(mx, pr[j]);
            }
            double sum = 0.0;
            for (int j = 0; j < lk; ++j) {
                if (pr[j] <= -1e299) {
                    pr[j] = 0.0;
                } else {
                    pr[j] = std::exp(pr[j] - mx);
                    sum += pr[j];
                }
            }
            if (sum > 0.0) {
                for (int j = 0; j < lk; ++j) pr[j] /= sum;
            }
            double* orow = out.row(i) + off;
            for (int p = 0; p < dh; ++p) orow[p] = 0.0;
            for (int j = 0; j < lk; ++j) {
                const double pj = pr[j];
                if (pj == 0.0) continue;
                const double* vr = V.row(j) + off;
                for (int p = 0; p < dh; ++p) orow[p] += pj * vr[p];
            }
        }
        probs->push_back(std::move(P));
    }

    const int id = t.emit(std::move(out), nullptr);
    t.set_back(id, [id, q, k, v, n_heads, dh, scale, probs](Tape& tp) {
        const Mat& g = tp.grad(id);
        const Mat& Q = tp.val(q);
        const Mat& K = tp.val(k);
        const Mat& V = tp.val(v);
        Mat& gq = tp.grad(q);
        Mat& gk = tp.grad(k);
        Mat& gv = tp.grad(v);
        const int lq = Q.rows;
        const int lk = K.rows;
        for (int h = 0; h < n_heads; ++h) {
            const int off = h * dh;
            const Mat& P = (*probs)[static_cast<size_t>(h)];
            for (int i = 0; i < lq; ++i) {
                const double* grow = g.row(i) + off;
                const double* pr = P.row(i);
                // dP[i,j] = <g[i], V[j]>, dS via softmax jacobian, then dQ/dK/dV
                double dot_dp_p = 0.0;
                std::vector<double> dp(static_cast<size_t>(lk));
                for (int j = 0; j < lk; ++j) {
                    if (pr[j] == 0.0) {
                        dp[static_cast<size_t>(j)] = 0.0;
                        continue;
                    }
                    const double* vr = V.row(j) + off;
                    double s = 0.0;
                    for (int p = 0; p < dh; ++p) s += grow[p] * vr[p];
                    dp[static_cast<size_t>(j)] = s;
                    dot_dp_p += s * pr[j];
                    // dV[j] += P[i,j] * g[i]
                    double* gvr = gv.row(j) + off;
                    for (int p = 0; p < dh; ++p) gvr[p] += pr[j] * grow[p];
                }
                const double* qr = Q.row(i) + off;
                double* gqr = gq.row(i) + off;
                for (int j = 0; j < lk; ++j) {
                    const double ds = pr[j] * (dp[static_cast<size_t>(j)] - dot_dp_p) * scale;
                    if (ds == 0.0) continue;
                    const double* kr = K.row(j) + off;
                    double* gkr = gk.row(j) + off;
                    for (int p = 0; p < dh; ++p) {
                        gqr[p] += ds * kr[p];
                        gkr[p] += ds * qr[p];
                    }
                }
            }
        }
    });
    return id;
}

int op_mse_to_const(Tape& t, int a, const Mat& target) {
    const Mat& x = t.val(a);
    check_same_shape(x, target, "op_mse_to_const");
    const double n = static_cast<double>(x.size());
    double sum = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        const double d = x.a[i] - target.a[i];
        sum += d * d;
    }
    Mat out(1, 1);
    out.a[0] = sum / n;
    const int id = t.emit(std::move(out), nullptr);
    auto tgt = std::make_shared<Mat>(target);
    t.set_back(id, [id, a, tgt, n](Tape& tp) {
        const double g = tp.grad(id).a[0];
        const Mat& x = tp.val(a);
        Mat& ga = tp.grad(a);
        const double c = 2.0 * g / n;
        for (size_t i = 0; i < x.size(); ++i) ga.a[i] += c * (x.a[i] - tgt->a[i]);
    });
    return id;
}

int op_cross_entropy(Tape& t, int scores, const std::vector<int>& gold,
                     const std::vector<uint8_t>& used) {
    const Mat& sc = t.val(scores);
    if (static_cast<int>(gold.size()) > sc.rows || gold.size() != used.size()) {
        throw std::invalid_argument("op_cross_entropy: gold/used size mismatch");
    }
    int n_used = 0;
    for (uint8_t u : used) n_used += u ? 1 : 0;
    if (n_used == 0) throw std::invalid_argument("op_cross_entropy: no used positions");

    auto soft = std::make_shared<Mat>(sc.rows, sc.cols);
    double loss = 0.0;
    for (size_t i = 0; i < gold.size(); ++i) {
        const double* row = sc.row(static_cast<int>(i));
        double* srow = soft->row(static_cast<int>(i));
        double mx = row[0];
        for (int j = 1; j < sc.cols; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int j = 0; j < sc.cols; ++j) {
            srow[j] = std::exp(row[j] - mx);
            sum += srow[j];
        }
        for (int j = 0; j < sc.cols; ++j) srow[j] /= sum;
        if (used[i]) {
            const int gid = gold[i];
            if (gid < 0 || gid >= sc.cols) {
                throw std::out_of_range("op_cross_entropy: gold id out of range");
            }
            loss -= std::log(srow[gid]);
        }
    }
    Mat out(1, 1);
    out.a[0] = loss / n_used;
    const int id = t.emit(std::move(out), nullptr);
    t.set_back(id, [id, scores, gold, used, soft, n_used](Tape& tp) {
        const double g = tp.grad(id).a[0];
        Mat& gs = tp.grad(scores);
        const double c = g / n_used;
        for (size_t i = 0; i < gold.size(); ++i) {
            if (!used[i]) continue;
            const double* srow = soft->row(static_cast<int>(i));
            double* grow = gs.row(static_cast<int>(i));
            for (int j = 0; j < gs.cols; ++j) grow[j] += c * srow[j];
            grow[gold[i]] -= c;
        }
    });
    return id;
}

int op_linear_comb(Tape& t, const std::vector<int>& scalars, const std::vector<double>& coeffs) {
    if (scalars.size() != coeffs.size() || scalars.empty()) {
        throw std::invalid_argument("op_linear_comb: bad arguments");
    }
    double sum = 0.0;
    for (size_t i = 0; i < scalars.size(); ++i) {
        const Mat& v = t.val(scalars[i]);
        if (v.rows != 1 || v.cols != 1) {
            throw std::invalid_argument("op_linear_comb: inputs must be scalars");
        }
        sum += coeffs[i] * v.a[0];
    }
    Mat out(1, 1);
    out.a[0] = sum;
    const int id = t.emit(std::move(out), nullptr);
    t.set_back(id, [id, scalars, coeffs](Tape& tp) {
        const double g = tp.grad(id).a[0];
        for (size_t i = 0; i < scalars.size(); ++i) tp.grad(scalars[i]).a[0] += coeffs[i] * g;
    });
    return id;
}

int op_mean_rows_masked(Tape& t, int a, const std::vector<uint8_t>& mask) {
    const Mat& x = t.val(a);
    if (static_cast<int>(mask.size()) != x.rows) {
        throw std::invalid_argument("op_mean_rows_masked: mask length mismatch");
    }
    int n_valid = 0;
    for (uint8_t m : mask) n_valid += m ? 1 : 0;
    if (n_valid == 0) throw std::invalid_argument("op_mean_rows_masked: empty mask");
    Mat out(1, x.cols);
    for (int i = 0; i < x.rows; ++i) {
        if (!mask[static_cast<size_t>(i)]) continue;
        const double* xr = x.row(i);
        for (int j = 0; j < x.cols; ++j) out.a[static_cast<size_t>(j)] += xr[j];
    }
    for (double& v : out.a) v /= n_valid;
    const int id = t.emit(std::move(out), nullptr);
    t.set_back(id, [id, a, mask, n_valid](Tape& tp) {
        const Mat& g = tp.grad(id);
        Mat& ga = tp.grad(a);
        for (int i = 0; i < ga.rows; ++i) {
            if (!mask[static_cast<size_t>(i)]) continue;
            double* garow = ga.row(i);
            for (int j = 0; j < ga.cols; ++j) garow[j] += g.a[static_cast<size_t>(j)] / n_valid;
        }
    });
    return id;
}

}  // namespace recodiff
