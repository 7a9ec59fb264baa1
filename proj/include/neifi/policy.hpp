#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "neifi/rng.hpp"

namespace neifi {

enum class ArchKind { MLP, LSTM, BiLSTM };

inline const char* to_string(ArchKind k) {
    switch (k) {
        case ArchKind::MLP: return "mlp";
        case ArchKind::LSTM: return "lstm";
        case ArchKind::BiLSTM: return "bilstm";
    }
    return "?";
}

inline ArchKind arch_kind_from_string(const std::string& s) {
    if (s == "mlp") return ArchKind::MLP;
    if (s == "lstm") return ArchKind::LSTM;
    if (s == "bilstm") return ArchKind::BiLSTM;
    throw std::invalid_argument("unknown architecture kind: " + s);
}

/// Shape of the neighbor-scoring network. Positions carry 4 features each and
/// are projected to one score, so output_dim is fixed at 1.
struct Architecture {
    ArchKind kind = ArchKind::BiLSTM;
    int input_dim = 4;
    int output_dim = 1;
    int hidden_dim = 36;
    int hidden_layers = 2;

    int directions() const { return kind == ArchKind::BiLSTM ? 2 : 1; }

    void validate() const {
        if (input_dim <= 0) throw std::invalid_argument("architecture: input_dim must be > 0");
        if (output_dim != 1)
            throw std::invalid_argument("architecture: only scalar position scores are supported");
        if (hidden_dim <= 0) throw std::invalid_argument("architecture: hidden_dim must be > 0");
        if (hidden_layers <= 0)
            throw std::invalid_argument("architecture: hidden_layers must be > 0");
    }

    bool operator==(const Architecture&) const = default;
};

/// One named tensor inside the flat parameter vector.
struct TensorSpec {
    std::string name;
    int rows = 0;
    int cols = 0; ///< 0 marks a bias vector
    std::size_t offset = 0;
    bool is_bias = false;
    bool is_forget_biased = false; ///< LSTM gate bias: forget slice initialized to 1

    std::size_t size() const { return static_cast<std::size_t>(rows) * std::max(cols, 1); }
};

namespace detail {

/// Input width of layer l (the layer above consumes the concatenated
/// per-position hidden states of all directions).
inline int layer_input_dim(const Architecture& a, int layer) {
    if (layer == 0) return a.input_dim;
    return a.kind == ArchKind::MLP ? a.hidden_dim : a.hidden_dim * a.directions();
}

inline std::vector<TensorSpec> build_manifest(const Architecture& a) {
    a.validate();
    std::vector<TensorSpec> m;
    std::size_t off = 0;
    auto push = [&](std::string name, int rows, int cols, bool bias, bool forget = false) {
        TensorSpec t;
        t.name = std::move(name);
        t.rows = rows;
        t.cols = cols;
        t.offset = off;
        t.is_bias = bias;
        t.is_forget_biased = forget;
        off += t.size();
        m.push_back(std::move(t));
    };

    const int h = a.hidden_dim;
    if (a.kind == ArchKind::MLP) {
        for (int l = 0; l < a.hidden_layers; ++l) {
            const int in = layer_input_dim(a, l);
            push("w" + std::to_string(l), h, in, false);
            push("b" + std::to_string(l), h, 0, true);
        }
        push("proj_w", a.output_dim, h, false);
        push("proj_b", a.output_dim, 0, true);
        return m;
    }
    const char* dir_tag[2] = {"f", "b"};
    for (int l = 0; l < a.hidden_layers; ++l) {
        const int in = layer_input_dim(a, l);
        for (int d = 0; d < a.directions(); ++d) {
            const std::string suffix = std::to_string(l) + dir_tag[d];
            push("wx" + suffix, 4 * h, in, false);
            push("wh" + suffix, 4 * h, h, false);
            push("bg" + suffix, 4 * h, 0, true, true);
        }
    }
    push("proj_w", a.output_dim, h * a.directions(), false);
    push("proj_b", a.output_dim, 0, true);
    return m;
}

} // namespace detail

/// Flat parameter vector plus its shape manifest.
struct PolicyParams {
    Architecture arch;
    std::vector<TensorSpec> manifest;
    std::vector<double> flat;

    const double* tensor(std::size_t idx) const { return flat.data() + manifest[idx].offset; }
    double* tensor(std::size_t idx) { return flat.data() + manifest[idx].offset; }
};

/// Accumulated gradient with the same flat layout as its PolicyParams.
struct GradientBuffer {
    std::vector<double> flat;
    std::size_t samples = 0;

    static GradientBuffer zeros_like(const PolicyParams& p) {
        GradientBuffer g;
        g.flat.assign(p.flat.size(), 0.0);
        return g;
    }
    void add(const GradientBuffer& other, double scale = 1.0) {
        if (other.flat.size() != flat.size())
            throw std::invalid_argument("gradient buffer shape mismatch");
        for (std::size_t i = 0; i < flat.size(); ++i) flat[i] += scale * other.flat[i];
        samples += other.samples;
    }
};

/// Variable-length network input: one row of `dim` features per neighbor
/// position.
struct SequenceSample {
    int dim = 4;
    std::vector<double> data; ///< row-major, length() * dim

    int length() const { return dim > 0 ? static_cast<int>(data.size()) / dim : 0; }
    const double* row(int t) const { return data.data() + static_cast<std::size_t>(t) * dim; }
    void push_row(const std::vector<double>& r) {
        data.insert(data.end(), r.begin(), r.end());
    }
};

/// Weights ~ U(-1/sqrt(h), +1/sqrt(h)); biases zero except LSTM forget gates,
/// which start at 1. Biases consume no randomness, so the draw sequence is
/// exactly the weight entries in manifest order.
inline PolicyParams init_params(const Architecture& arch, Rng& rng) {
    PolicyParams p;
    p.arch = arch;
    p.manifest = detail::build_manifest(arch);
    std::size_t total = 0;
    for (const auto& t : p.manifest) total += t.size();
    p.flat.assign(total, 0.0);

    const double bound = 1.0 / std::sqrt(static_cast<double>(arch.hidden_dim));
    for (std::size_t i = 0; i < p.manifest.size(); ++i) {
        const auto& t = p.manifest[i];
        double* dst = p.tensor(i);
        if (!t.is_bias) {
            for (std::size_t k = 0; k < t.size(); ++k) dst[k] = rng.uniform(-bound, bound);
        } else if (t.is_forget_biased) {
            const int h = arch.hidden_dim;
            for (int k = h; k < 2 * h; ++k) dst[k] = 1.0; // gate order: i, f, g, o
        }
    }
    return p;
}

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// z[0..rows) += M * x, with Mt the column-major (transposed) copy of M.
/// Written as an axpy per input so the inner loop vectorizes.
inline void matvec_acc(const double* mt, const double* x, int in, int rows, double* z) {
    for (int c = 0; c < in; ++c) {
        const double xc = x[c];
        const double* col = mt + static_cast<std::size_t>(c) * rows;
        for (int r = 0; r < rows; ++r) z[r] += xc * col[r];
    }
}

/// dx[0..cols) += M^T * dz using the original row-major M.
inline void matvec_t_acc(const double* m, const double* dz, int rows, int cols, double* dx) {
    for (int r = 0; r < rows; ++r) {
        const double dzr = dz[r];
        const double* mr = m + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) dx[c] += dzr * mr[c];
    }
}

/// dM[r][c] += dz[r] * x[c] (outer product accumulate).
inline void outer_acc(const double* dz, const double* x, int rows, int cols, double* dm) {
    for (int r = 0; r < rows; ++r) {
        const double dzr = dz[r];
        double* row = dm + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) row[c] += dzr * x[c];
    }
}

} // namespace detail

/// Read-only view of a PolicyParams with the matvec weights already
/// transposed. Building it once per episode keeps the per-call forward cost
/// down; the underlying params must outlive and not change under it.
class PackedPolicy {
public:
    explicit PackedPolicy(const PolicyParams& p) : params_(&p) {
        transposed_.resize(p.manifest.size());
        for (std::size_t i = 0; i < p.manifest.size(); ++i) {
            const auto& t = p.manifest[i];
            if (t.is_bias || t.cols == 0) continue;
            auto& dst = transposed_[i];
            dst.resize(t.size());
            const double* src = p.tensor(i);
            for (int r = 0; r < t.rows; ++r)
                for (int c = 0; c < t.cols; ++c)
                    dst[static_cast<std::size_t>(c) * t.rows + r] =
                        src[static_cast<std::size_t>(r) * t.cols + c];
        }
    }

    const PolicyParams& params() const { return *params_; }
    const double* transposed(std::size_t idx) const { return transposed_[idx].data(); }

private:
    const PolicyParams* params_;
    std::vector<std::vector<double>> transposed_;
};

namespace detail {

/// Stored activations of one LSTM (layer, direction) pass, reused by the
/// backward sweep.
struct LstmTrace {
    std::vector<double> gates; ///< L x 4h, post-nonlinearity (i, f, g, o)
    std::vector<double> cell;  ///< L x h, in processing order
    std::vector<double> hidden;
    std::vector<double> tanh_cell;
};

struct ForwardTrace {
    std::vector<std::vector<double>> layer_inputs; ///< per layer: L x in_l
    std::vector<std::vector<LstmTrace>> lstm;      ///< [layer][direction]
    std::vector<std::vector<double>> mlp_hidden;   ///< per layer: L x h (post-tanh)
    std::vector<double> scores;                    ///< L
    std::vector<double> probs;                     ///< L
};

inline std::vector<double> softmax(const std::vector<double>& scores) {
    const double mx = *std::max_element(scores.begin(), scores.end());
    std::vector<double> out(scores.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::exp(scores[i] - mx);
        sum += out[i];
    }
    for (auto& v : out) v /= sum;
    return out;
}

/// Index of tensor (layer, dir, slot) in the LSTM manifest; slot 0=Wx 1=Wh 2=b.
inline std::size_t lstm_tensor_index(const Architecture& a, int layer, int dir, int slot) {
    return static_cast<std::size_t>(layer * a.directions() + dir) * 3 + slot;
}

inline void run_forward(const PackedPolicy& packed, const SequenceSample& seq,
                        ForwardTrace& tr) {
    const PolicyParams& p = packed.params();
    const Architecture& a = p.arch;
    if (seq.length() == 0) throw std::invalid_argument("forward: empty sequence");
    if (seq.dim != a.input_dim) throw std::invalid_argument("forward: input dimension mismatch");
    const int L = seq.length();
    const int h = a.hidden_dim;

    tr.layer_inputs.assign(a.hidden_layers, {});
    tr.layer_inputs[0] = seq.data;

    if (a.kind == ArchKind::MLP) {
        tr.mlp_hidden.assign(a.hidden_layers, {});
        for (int l = 0; l < a.hidden_layers; ++l) {
            const int in = layer_input_dim(a, l);
            const double* b = p.tensor(2 * l + 1);
            const double* wt = packed.transposed(2 * l);
            auto& out = tr.mlp_hidden[l];
            out.assign(static_cast<std::size_t>(L) * h, 0.0);
            const auto& input = tr.layer_inputs[l];
            for (int t = 0; t < L; ++t) {
                double* z = out.data() + static_cast<std::size_t>(t) * h;
                for (int r = 0; r < h; ++r) z[r] = b[r];
                matvec_acc(wt, input.data() + static_cast<std::size_t>(t) * in, in, h, z);
                for (int r = 0; r < h; ++r) z[r] = std::tanh(z[r]);
            }
            if (l + 1 < a.hidden_layers) tr.layer_inputs[l + 1] = out;
        }
        const std::size_t proj_w = p.manifest.size() - 2;
        const double* wp = p.tensor(proj_w);
        const double bp = p.tensor(proj_w + 1)[0];
        tr.scores.assign(L, 0.0);
        const auto& last = tr.mlp_hidden.back();
        for (int t = 0; t < L; ++t) {
            double s = bp;
            const double* ht = last.data() + static_cast<std::size_t>(t) * h;
            for (int r = 0; r < h; ++r) s += wp[r] * ht[r];
            tr.scores[t] = s;
        }
        tr.probs = softmax(tr.scores);
        return;
    }

    const int dirs = a.directions();
    tr.lstm.assign(a.hidden_layers, std::vector<LstmTrace>(dirs));
    std::vector<double> z(4 * h);
    for (int l = 0; l < a.hidden_layers; ++l) {
        const int in = layer_input_dim(a, l);
        const auto& input = tr.layer_inputs[l];
        std::vector<double>* next_input = nullptr;
        if (l + 1 < a.hidden_layers) {
            next_input = &tr.layer_inputs[l + 1];
            next_input->assign(static_cast<std::size_t>(L) * h * dirs, 0.0);
        }
        for (int d = 0; d < dirs; ++d) {
            auto& trace = tr.lstm[l][d];
            trace.gates.assign(static_cast<std::size_t>(L) * 4 * h, 0.0);
            trace.cell.assign(static_cast<std::size_t>(L) * h, 0.0);
            trace.hidden.assign(static_cast<std::size_t>(L) * h, 0.0);
            trace.tanh_cell.assign(static_cast<std::size_t>(L) * h, 0.0);

            const double* wxt = packed.transposed(lstm_tensor_index(a, l, d, 0));
            const double* wht = packed.transposed(lstm_tensor_index(a, l, d, 1));
            const double* b = p.tensor(lstm_tensor_index(a, l, d, 2));

            std::vector<double> h_prev(h, 0.0), c_prev(h, 0.0);
            for (int step = 0; step < L; ++step) {
                const int t = d == 0 ? step : L - 1 - step; // backward direction walks reversed
                std::copy(b, b + 4 * h, z.begin());
                matvec_acc(wxt, input.data() + static_cast<std::size_t>(t) * in, in, 4 * h,
                           z.data());
                matvec_acc(wht, h_prev.data(), h, 4 * h, z.data());

                double* gates = trace.gates.data() + static_cast<std::size_t>(step) * 4 * h;
                double* cell = trace.cell.data() + static_cast<std::size_t>(step) * h;
                double* hid = trace.hidden.data() + static_cast<std::size_t>(step) * h;
                double* tc = trace.tanh_cell.data() + static_cast<std::size_t>(step) * h;
                for (int r = 0; r < h; ++r) {
                    const double gi = sigmoid(z[r]);
                    const double gf = sigmoid(z[h + r]);
                    const double gg = std::tanh(z[2 * h + r]);
                    const double go = sigmoid(z[3 * h + r]);
                    gates[r] = gi;
                    gates[h + r] = gf;
                    gates[2 * h + r] = gg;
                    gates[3 * h + r] = go;
                    const double c = gf * c_prev[r] + gi * gg;
                    cell[r] = c;
                    const double tch = std::tanh(c);
                    tc[r] = tch;
                    hid[r] = go * tch;
                }
                std::copy(cell, cell + h, c_prev.begin());
                std::copy(hid, hid + h, h_prev.begin());
                if (next_input)
                    std::copy(hid, hid + h,
                              next_input->data() +
                                  (static_cast<std::size_t>(t) * dirs + d) * h);
            }
        }
    }

    const std::size_t proj_w = p.manifest.size() - 2;
    const double* wp = p.tensor(proj_w);
    const double bp = p.tensor(proj_w + 1)[0];
    tr.scores.assign(L, 0.0);
    const auto& top = tr.lstm.back();
    for (int t = 0; t < L; ++t) {
        double s = bp;
        for (int d = 0; d < dirs; ++d) {
            const int step = d == 0 ? t : L - 1 - t;
            const double* ht = top[d].hidden.data() + static_cast<std::size_t>(step) * h;
            const double* w = wp + static_cast<std::size_t>(d) * h;
            for (int r = 0; r < h; ++r) s += w[r] * ht[r];
        }
        tr.scores[t] = s;
    }
    tr.probs = softmax(tr.scores);
}

} // namespace detail

/// Per-position selection probabilities (softmax over the sequence).
inline std::vector<double> forward(const PackedPolicy& packed, const SequenceSample& seq) {
    detail::ForwardTrace tr;
    detail::run_forward(packed, seq, tr);
    return tr.probs;
}

inline std::vector<double> forward(const PolicyParams& params, const SequenceSample& seq) {
    return forward(PackedPolicy(params), seq);
}

/// How the probability of a kept-set action is read off the softmax output.
enum class ActionLogProbMode {
    SumKept,   ///< log pi(A|S) = sum over kept positions of log pi_j
    Bernoulli, ///< independent per-position keep/drop likelihoods
};

inline double action_logprob(const std::vector<double>& probs,
                             const std::vector<std::uint8_t>& kept,
                             ActionLogProbMode mode = ActionLogProbMode::SumKept) {
    if (probs.size() != kept.size())
        throw std::invalid_argument("action_logprob: mask length mismatch");
    if (std::find(kept.begin(), kept.end(), std::uint8_t{1}) == kept.end())
        throw std::invalid_argument("action_logprob: empty kept set");
    double lp = 0.0;
    if (mode == ActionLogProbMode::SumKept) {
        for (std::size_t j = 0; j < probs.size(); ++j)
            if (kept[j]) lp += std::log(probs[j]);
        return lp;
    }
    for (std::size_t j = 0; j < probs.size(); ++j) {
        const double pj = std::clamp(probs[j], 1e-300, 1.0 - 1e-16);
        lp += kept[j] ? std::log(pj) : std::log(1.0 - pj);
    }
    return lp;
}

namespace detail {

/// dL/dscore for the chosen log-prob definition.
inline std::vector<double> score_gradient(const std::vector<double>& probs,
                                          const std::vector<std::uint8_t>& kept,
                                          ActionLogProbMode mode) {
    const std::size_t L = probs.size();
    std::vector<double> ds(L, 0.0);
    if (mode == ActionLogProbMode::SumKept) {
        double kcount = 0.0;
        for (auto k : kept) kcount += k;
        for (std::size_t j = 0; j < L; ++j) ds[j] = (kept[j] ? 1.0 : 0.0) - kcount * probs[j];
        return ds;
    }
    std::vector<double> dp(L);
    double dot = 0.0;
    for (std::size_t j = 0; j < L; ++j) {
        const double pj = std::clamp(probs[j], 1e-300, 1.0 - 1e-16);
        dp[j] = kept[j] ? 1.0 / pj : -1.0 / (1.0 - pj);
        dot += dp[j] * probs[j];
    }
    for (std::size_t j = 0; j < L; ++j) ds[j] = probs[j] * (dp[j] - dot);
    return ds;
}

} // namespace detail

/// Exact gradient of the action log-probability with respect to every
/// parameter, via backpropagation through time. Adds the gradient into
/// `grad` (which must be shaped like the params) and returns the log-prob;
/// the hot training loop accumulates many steps into one buffer this way.
inline double logprob_and_grad_into(const PackedPolicy& packed, const SequenceSample& seq,
                                    const std::vector<std::uint8_t>& kept_mask,
                                    ActionLogProbMode mode, GradientBuffer& grad) {
    const PolicyParams& p = packed.params();
    const Architecture& a = p.arch;
    if (grad.flat.size() != p.flat.size())
        throw std::invalid_argument("logprob_and_grad: gradient buffer shape mismatch");

    detail::ForwardTrace tr;
    detail::run_forward(packed, seq, tr);
    const int L = seq.length();
    if (static_cast<int>(kept_mask.size()) != L)
        throw std::invalid_argument("logprob_and_grad: mask length mismatch");

    const double lp = action_logprob(tr.probs, kept_mask, mode);
    grad.samples += 1;
    const std::vector<double> dscore = detail::score_gradient(tr.probs, kept_mask, mode);

    const int h = a.hidden_dim;
    const std::size_t proj_w = p.manifest.size() - 2;
    const double* wp = p.tensor(proj_w);
    double* dwp = grad.flat.data() + p.manifest[proj_w].offset;
    double* dbp = grad.flat.data() + p.manifest[proj_w + 1].offset;

    if (a.kind == ArchKind::MLP) {
        std::vector<double> dout(static_cast<std::size_t>(L) * h, 0.0);
        const auto& last = tr.mlp_hidden.back();
        for (int t = 0; t < L; ++t) {
            const double ds = dscore[t];
            dbp[0] += ds;
            const double* ht = last.data() + static_cast<std::size_t>(t) * h;
            double* dht = dout.data() + static_cast<std::size_t>(t) * h;
            for (int r = 0; r < h; ++r) {
                dwp[r] += ds * ht[r];
                dht[r] += ds * wp[r];
            }
        }
        for (int l = a.hidden_layers - 1; l >= 0; --l) {
            const int in = detail::layer_input_dim(a, l);
            const double* w = p.tensor(2 * l);
            double* dw = grad.flat.data() + p.manifest[2 * l].offset;
            double* db = grad.flat.data() + p.manifest[2 * l + 1].offset;
            const auto& act = tr.mlp_hidden[l];
            const auto& input = tr.layer_inputs[l];
            std::vector<double> din;
            if (l > 0) din.assign(static_cast<std::size_t>(L) * in, 0.0);
            std::vector<double> dz(h);
            for (int t = 0; t < L; ++t) {
                const double* at = act.data() + static_cast<std::size_t>(t) * h;
                const double* dht = dout.data() + static_cast<std::size_t>(t) * h;
                for (int r = 0; r < h; ++r) dz[r] = dht[r] * (1.0 - at[r] * at[r]);
                const double* xt = input.data() + static_cast<std::size_t>(t) * in;
                detail::outer_acc(dz.data(), xt, h, in, dw);
                for (int r = 0; r < h; ++r) db[r] += dz[r];
                if (l > 0)
                    detail::matvec_t_acc(w, dz.data(), h, in,
                                         din.data() + static_cast<std::size_t>(t) * in);
            }
            if (l > 0) dout = std::move(din);
        }
        return lp;
    }

    const int dirs = a.directions();
    // d(layer output) arrays, indexed like layer_inputs of the layer above:
    // position-major with per-direction h-blocks.
    std::vector<double> dout(static_cast<std::size_t>(L) * h * dirs, 0.0);
    const auto& top = tr.lstm.back();
    for (int t = 0; t < L; ++t) {
        const double ds = dscore[t];
        dbp[0] += ds;
        for (int d = 0; d < dirs; ++d) {
            const int step = d == 0 ? t : L - 1 - t;
            const double* ht = top[d].hidden.data() + static_cast<std::size_t>(step) * h;
            const double* w = wp + static_cast<std::size_t>(d) * h;
            double* dw = dwp + static_cast<std::size_t>(d) * h;
            double* dht = dout.data() + (static_cast<std::size_t>(t) * dirs + d) * h;
            for (int r = 0; r < h; ++r) {
                dw[r] += ds * ht[r];
                dht[r] += ds * w[r];
            }
        }
    }

    std::vector<double> dz(4 * h), dh(h), dc(h);
    for (int l = a.hidden_layers - 1; l >= 0; --l) {
        const int in = detail::layer_input_dim(a, l);
        const auto& input = tr.layer_inputs[l];
        std::vector<double> din;
        if (l > 0) din.assign(static_cast<std::size_t>(L) * in, 0.0);
        for (int d = 0; d < dirs; ++d) {
            const auto& trace = tr.lstm[l][d];
            const double* wx = p.tensor(detail::lstm_tensor_index(a, l, d, 0));
            const double* wh = p.tensor(detail::lstm_tensor_index(a, l, d, 1));
            double* dwx = grad.flat.data() +
                          p.manifest[detail::lstm_tensor_index(a, l, d, 0)].offset;
            double* dwh = grad.flat.data() +
                          p.manifest[detail::lstm_tensor_index(a, l, d, 1)].offset;
            double* db = grad.flat.data() +
                         p.manifest[detail::lstm_tensor_index(a, l, d, 2)].offset;

            std::fill(dh.begin(), dh.end(), 0.0);
            std::fill(dc.begin(), dc.end(), 0.0);
            for (int step = L - 1; step >= 0; --step) {
                const int t = d == 0 ? step : L - 1 - step;
                const double* gates = trace.gates.data() + static_cast<std::size_t>(step) * 4 * h;
                const double* tc = trace.tanh_cell.data() + static_cast<std::size_t>(step) * h;
                const double* c_prev =
                    step > 0 ? trace.cell.data() + static_cast<std::size_t>(step - 1) * h
                             : nullptr;
                // dh picks up the loss flowing into this position's hidden state.
                const double* dht = dout.data() + (static_cast<std::size_t>(t) * dirs + d) * h;
                for (int r = 0; r < h; ++r) dh[r] += dht[r];

                for (int r = 0; r < h; ++r) {
                    const double gi = gates[r];
                    const double gf = gates[h + r];
                    const double gg = gates[2 * h + r];
                    const double go = gates[3 * h + r];
                    const double cp = c_prev ? c_prev[r] : 0.0;
                    const double d_o = dh[r] * tc[r];
                    const double d_c = dc[r] + dh[r] * go * (1.0 - tc[r] * tc[r]);
                    const double d_i = d_c * gg;
                    const double d_f = d_c * cp;
                    const double d_g = d_c * gi;
                    dz[r] = d_i * gi * (1.0 - gi);
                    dz[h + r] = d_f * gf * (1.0 - gf);
                    dz[2 * h + r] = d_g * (1.0 - gg * gg);
                    dz[3 * h + r] = d_o * go * (1.0 - go);
                    dc[r] = d_c * gf; // carried to step-1
                }

                const double* xt = input.data() + static_cast<std::size_t>(t) * in;
                const double* h_prev =
                    step > 0 ? trace.hidden.data() + static_cast<std::size_t>(step - 1) * h
                             : nullptr;
                detail::outer_acc(dz.data(), xt, 4 * h, in, dwx);
                if (h_prev) detail::outer_acc(dz.data(), h_prev, 4 * h, h, dwh);
                for (int r = 0; r < 4 * h; ++r) db[r] += dz[r];

                std::fill(dh.begin(), dh.end(), 0.0);
                if (step > 0) detail::matvec_t_acc(wh, dz.data(), 4 * h, h, dh.data());
                if (l > 0)
                    detail::matvec_t_acc(wx, dz.data(), 4 * h, in,
                                         din.data() + static_cast<std::size_t>(t) * in);
            }
        }
        if (l > 0) dout = std::move(din);
    }
    return lp;
}

/// Convenience wrapper returning a fresh gradient buffer.
inline std::pair<double, GradientBuffer> logprob_and_grad(
    const PackedPolicy& packed, const SequenceSample& seq,
    const std::vector<std::uint8_t>& kept_mask,
    ActionLogProbMode mode = ActionLogProbMode::SumKept) {
    GradientBuffer grad = GradientBuffer::zeros_like(packed.params());
    const double lp = logprob_and_grad_into(packed, seq, kept_mask, mode, grad);
    return {lp, grad};
}

inline std::pair<double, GradientBuffer> logprob_and_grad(
    const PolicyParams& params, const SequenceSample& seq,
    const std::vector<std::uint8_t>& kept_mask,
    ActionLogProbMode mode = ActionLogProbMode::SumKept) {
    return logprob_and_grad(PackedPolicy(params), seq, kept_mask, mode);
}

/// Central-difference gradient of an arbitrary scalar loss over the params.
/// Test oracle only; cost is two loss evaluations per parameter.
inline GradientBuffer finite_diff_grad(const PolicyParams& params,
                                       const std::function<double(const PolicyParams&)>& loss,
                                       double h) {
    if (!(h > 0)) throw std::invalid_argument("finite_diff_grad: step must be > 0");
    GradientBuffer g = GradientBuffer::zeros_like(params);
    g.samples = 1;
    PolicyParams probe = params;
    for (std::size_t i = 0; i < params.flat.size(); ++i) {
        const double saved = probe.flat[i];
        probe.flat[i] = saved + h;
        const double fp = loss(probe);
        probe.flat[i] = saved - h;
        const double fm = loss(probe);
        probe.flat[i] = saved;
        g.flat[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

/// theta + alpha * grad, elementwise (gradient ascent on the return).
inline PolicyParams apply_update(const PolicyParams& params, const GradientBuffer& grads,
                                 double alpha) {
    if (grads.flat.size() != params.flat.size())
        throw std::invalid_argument("apply_update: shape mismatch");
    PolicyParams next = params;
    for (std::size_t i = 0; i < next.flat.size(); ++i) next.flat[i] += alpha * grads.flat[i];
    return next;
}

// ---------------------------------------------------------------------------
// Parameter file format: 8-byte magic, u32 version, architecture record,
// u64 count, then count little-endian IEEE-754 doubles.
// ---------------------------------------------------------------------------

namespace detail {

constexpr char kPolicyMagic[8] = {'N', 'E', 'I', 'F', 'I', 'P', 'O', 'L'};
constexpr std::uint32_t kPolicyVersion = 1;

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

struct ByteReader {
    const std::uint8_t* data;
    std::size_t size;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > size) throw std::runtime_error("policy file: truncated stream");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
};

} // namespace detail

inline std::vector<std::uint8_t> serialize(const PolicyParams& params) {
    std::vector<std::uint8_t> out;
    out.reserve(40 + params.flat.size() * 8);
    for (char c : detail::kPolicyMagic) out.push_back(static_cast<std::uint8_t>(c));
    detail::put_u32(out, detail::kPolicyVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(params.arch.kind));
    detail::put_u32(out, static_cast<std::uint32_t>(params.arch.input_dim));
    detail::put_u32(out, static_cast<std::uint32_t>(params.arch.output_dim));
    detail::put_u32(out, static_cast<std::uint32_t>(params.arch.hidden_dim));
    detail::put_u32(out, static_cast<std::uint32_t>(params.arch.hidden_layers));
    detail::put_u64(out, params.flat.size());
    for (double d : params.flat) {
        std::uint64_t bits;
        std::memcpy(&bits, &d, 8);
        detail::put_u64(out, bits);
    }
    return out;
}

inline PolicyParams deserialize(const std::uint8_t* data, std::size_t size) {
    detail::ByteReader r{data, size};
    r.need(8);
    if (std::memcmp(data, detail::kPolicyMagic, 8) != 0)
        throw std::runtime_error("policy file: bad magic");
    r.pos = 8;
    if (r.u32() != detail::kPolicyVersion)
        throw std::runtime_error("policy file: unsupported version");

    Architecture arch;
    const std::uint32_t kind = r.u32();
    if (kind > 2) throw std::runtime_error("policy file: unknown architecture kind");
    arch.kind = static_cast<ArchKind>(kind);
    arch.input_dim = static_cast<int>(r.u32());
    arch.output_dim = static_cast<int>(r.u32());
    arch.hidden_dim = static_cast<int>(r.u32());
    arch.hidden_layers = static_cast<int>(r.u32());
    arch.validate();

    PolicyParams p;
    p.arch = arch;
    p.manifest = detail::build_manifest(arch);
    std::size_t total = 0;
    for (const auto& t : p.manifest) total += t.size();
    const std::uint64_t count = r.u64();
    if (count != total) throw std::runtime_error("policy file: parameter count mismatch");
    p.flat.resize(total);
    for (std::size_t i = 0; i < total; ++i) {
        const std::uint64_t bits = r.u64();
        std::memcpy(&p.flat[i], &bits, 8);
    }
    return p;
}

inline PolicyParams deserialize(const std::vector<std::uint8_t>& bytes) {
    return deserialize(bytes.data(), bytes.size());
}

/// Load-time guard for consumers pinned to a specific architecture.
inline PolicyParams deserialize_expect(const std::vector<std::uint8_t>& bytes,
                                       const Architecture& expected) {
    PolicyParams p = deserialize(bytes);
    if (!(p.arch == expected))
        throw std::runtime_error("policy file: architecture mismatch");
    return p;
}

} // namespace neifi
