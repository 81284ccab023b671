#pragma once

// Stacked bidirectional LSTM binary classifier with masked variable-length
// input, trained by backpropagation through time and Adam.
//
// Parameters live in one flat vector. Order, for each layer l and direction
// d (0 = forward, 1 = backward):
//   W[l][d]  4H x in   column-major, gate row blocks i, f, g, o
//   U[l][d]  4H x H    column-major
//   b[l][d]  4H
// followed by the head weights (2H) and the head bias (1).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "error.hpp"
#include "metrics.hpp"
#include "random.hpp"
#include "seqdata.hpp"

namespace abandon {

struct ModelConfig {
    int num_layers = 2;
    int units = 100; ///< per direction
    double dropout = 0.3;
    int input_dim = 3;
    int max_len = kMaxTimesteps;
    std::uint64_t rng_seed = 0;
};

inline void validate_config(const ModelConfig& c) {
    if (c.num_layers < 1 || c.num_layers > 3) throw ConfigError("num_layers must be in [1, 3]");
    if (c.units < 1) throw ConfigError("units must be positive");
    if (!(c.dropout >= 0 && c.dropout < 1)) throw ConfigError("dropout must be in [0, 1)");
    if (c.input_dim < 1) throw ConfigError("input_dim must be positive");
    if (c.max_len < 1) throw ConfigError("max_len must be positive");
}

struct TrainConfig {
    int batch_size = 4;
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int max_epochs = 100;
    int patience = 5;
    std::uint64_t rng_seed = 0;
};

inline void validate_config(const TrainConfig& c) {
    if (c.batch_size < 1) throw ConfigError("batch_size must be positive");
    if (c.max_epochs < 1) throw ConfigError("max_epochs must be positive");
    if (c.patience < 1 || c.patience >= c.max_epochs) throw ConfigError("patience must be in [1, max_epochs)");
    if (!(c.learning_rate > 0)) throw ConfigError("learning_rate must be positive");
}

class BiLstmModel {
public:
    struct DirOffsets {
        Eigen::Index w = 0, u = 0, b = 0;
        int in = 0;
    };

    explicit BiLstmModel(const ModelConfig& cfg) : cfg_(cfg) {
        validate_config(cfg_);
        const Eigen::Index H = cfg_.units;
        Eigen::Index off = 0;
        for (int l = 0; l < cfg_.num_layers; ++l) {
            std::array<DirOffsets, 2> dirs{};
            const int in = l == 0 ? cfg_.input_dim : 2 * cfg_.units;
            for (auto& d : dirs) {
                d.in = in;
                d.w = off;
                off += 4 * H * in;
                d.u = off;
                off += 4 * H * H;
                d.b = off;
                off += 4 * H;
            }
            layout_.push_back(dirs);
        }
        head_w_ = off;
        off += 2 * H;
        head_b_ = off;
        off += 1;
        params_ = Eigen::VectorXd::Zero(off);
    }

    const ModelConfig& config() const { return cfg_; }
    int units() const { return cfg_.units; }
    int layers() const { return cfg_.num_layers; }
    int layer_input(int l) const { return layout_[static_cast<std::size_t>(l)][0].in; }
    Eigen::Index size() const { return params_.size(); }

    Eigen::VectorXd& params() { return params_; }
    const Eigen::VectorXd& params() const { return params_; }

    const DirOffsets& offsets(int l, int d) const {
        return layout_[static_cast<std::size_t>(l)][static_cast<std::size_t>(d)];
    }
    Eigen::Index head_w_offset() const { return head_w_; }
    Eigen::Index head_b_offset() const { return head_b_; }

    // Views over any vector with this layout (parameters or gradients).
    template <typename Vec>
    auto W(Vec& v, int l, int d) const {
        const auto& o = offsets(l, d);
        return map(v, o.w, 4 * cfg_.units, o.in);
    }
    template <typename Vec>
    auto U(Vec& v, int l, int d) const {
        return map(v, offsets(l, d).u, 4 * cfg_.units, cfg_.units);
    }
    template <typename Vec>
    auto b(Vec& v, int l, int d) const {
        return map(v, offsets(l, d).b, 4 * cfg_.units, 1);
    }
    template <typename Vec>
    auto head_w(Vec& v) const {
        return map(v, head_w_, 2 * cfg_.units, 1);
    }

    auto W(int l, int d) const { return W(params_, l, d); }
    auto U(int l, int d) const { return U(params_, l, d); }
    auto b(int l, int d) const { return b(params_, l, d); }
    auto head_w() const { return head_w(params_); }
    double head_b() const { return params_[head_b_]; }

private:
    static Eigen::Map<const Eigen::MatrixXd> map(const Eigen::VectorXd& v, Eigen::Index off, Eigen::Index r,
                                                 Eigen::Index c) {
        return {v.data() + off, r, c};
    }
    static Eigen::Map<Eigen::MatrixXd> map(Eigen::VectorXd& v, Eigen::Index off, Eigen::Index r, Eigen::Index c) {
        return {v.data() + off, r, c};
    }

    ModelConfig cfg_;
    std::vector<std::array<DirOffsets, 2>> layout_;
    Eigen::Index head_w_ = 0;
    Eigen::Index head_b_ = 0;
    Eigen::VectorXd params_;
};

// -- initialization --------------------------------------------------------------

namespace detail {

inline void glorot_uniform(Eigen::Map<Eigen::MatrixXd> m, double fan_in, double fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-limit, limit);
}

/// Matrix with orthonormal columns (rows >= cols), sign-fixed so the result
/// is a deterministic function of the Gaussian draw.
inline void orthogonal(Eigen::Map<Eigen::MatrixXd> m, Rng& rng) {
    Eigen::MatrixXd a(m.rows(), m.cols());
    for (Eigen::Index j = 0; j < a.cols(); ++j)
        for (Eigen::Index i = 0; i < a.rows(); ++i) a(i, j) = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(a.rows(), a.cols());
    const Eigen::MatrixXd r = qr.matrixQR().topRows(a.cols()).triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < q.cols(); ++j)
        if (r(j, j) < 0) q.col(j) *= -1.0;
    m = q;
}

} // namespace detail

/// Glorot-uniform input and head weights, orthogonal recurrent weights, zero
/// biases except the forget gate (1).
inline BiLstmModel init_model(const ModelConfig& cfg, Rng& rng) {
    BiLstmModel model(cfg);
    auto& p = model.params();
    const int H = cfg.units;
    for (int l = 0; l < cfg.num_layers; ++l)
        for (int d = 0; d < 2; ++d) {
            detail::glorot_uniform(model.W(p, l, d), model.layer_input(l), 4.0 * H, rng);
            detail::orthogonal(model.U(p, l, d), rng);
            auto bias = model.b(p, l, d);
            bias.setZero();
            bias.middleRows(H, H).setOnes();
        }
    detail::glorot_uniform(model.head_w(p), 2.0 * H, 1.0, rng);
    p[model.head_b_offset()] = 0.0;
    return model;
}

inline BiLstmModel init_model(const ModelConfig& cfg) {
    Rng rng(cfg.rng_seed);
    return init_model(cfg, rng);
}

// -- forward ------------------------------------------------------------------------

struct DirectionCache {
    Eigen::MatrixXd gates;  ///< 4H x (T*B) activated gates, column block = time step
    Eigen::MatrixXd cell;   ///< H x ((T+1)*B), column block = processing step, block 0 = initial state
    Eigen::MatrixXd hidden; ///< same layout as cell
};

struct LayerCache {
    Eigen::MatrixXd input;  ///< in x (T*B), after dropout
    std::array<DirectionCache, 2> dir;
    Eigen::MatrixXd output; ///< 2H x (T*B), zero on padded steps
    Eigen::MatrixXd dropout_mask; ///< scaled keep-mask applied to output when feeding the next layer
};

struct ForwardCache {
    int T = 0; ///< longest real length in the batch
    int B = 0;
    std::vector<int> lengths;
    std::vector<LayerCache> layers;
    Eigen::MatrixXd summary;      ///< 2H x B, final forward state over final backward state
    Eigen::MatrixXd summary_mask; ///< scaled keep-mask (empty when not training)
    Eigen::MatrixXd head_input;   ///< summary after dropout
    Eigen::VectorXd logits;
    Eigen::VectorXd probabilities;
};

namespace detail {

inline int step_time(int dir, int s, int T) { return dir == 0 ? s : T - 1 - s; }

inline Eigen::MatrixXd dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
    Eigen::MatrixXd m(rows, cols);
    const double keep = 1.0 - rate;
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform() < keep ? 1.0 / keep : 0.0;
    return m;
}

inline void run_direction(const BiLstmModel& model, int l, int dir, const Eigen::MatrixXd& input,
                          const std::vector<int>& lengths, int T, DirectionCache& cache, Eigen::MatrixXd& output) {
    const Eigen::Index H = model.units();
    const Eigen::Index B = static_cast<Eigen::Index>(lengths.size());
    const auto W = model.W(l, dir);
    const auto U = model.U(l, dir);
    const auto bias = model.b(l, dir);

    Eigen::MatrixXd zx = W * input;
    zx.colwise() += bias.col(0);

    cache.gates.resize(4 * H, T * B);
    cache.cell = Eigen::MatrixXd::Zero(H, (T + 1) * B);
    cache.hidden = Eigen::MatrixXd::Zero(H, (T + 1) * B);
    Eigen::MatrixXd z(4 * H, B);

    for (int s = 0; s < T; ++s) {
        const int t = step_time(dir, s, T);
        z.noalias() = U.lazyProduct(cache.hidden.middleCols(s * B, B));
        z += zx.middleCols(t * B, B);
        auto gates = cache.gates.middleCols(t * B, B);
        gates.topRows(2 * H) = (1.0 + (-z.topRows(2 * H).array()).exp()).inverse().matrix();
        gates.middleRows(2 * H, H) = z.middleRows(2 * H, H).array().tanh().matrix();
        gates.bottomRows(H) = (1.0 + (-z.bottomRows(H).array()).exp()).inverse().matrix();

        const auto c_prev = cache.cell.middleCols(s * B, B);
        const auto h_prev = cache.hidden.middleCols(s * B, B);
        auto c = cache.cell.middleCols((s + 1) * B, B);
        auto h = cache.hidden.middleCols((s + 1) * B, B);
        c = (gates.middleRows(H, H).array() * c_prev.array() +
             gates.topRows(H).array() * gates.middleRows(2 * H, H).array())
                .matrix();
        h = (gates.bottomRows(H).array() * c.array().tanh()).matrix();

        auto out = output.block(dir * H, t * B, H, B);
        for (Eigen::Index bi = 0; bi < B; ++bi) {
            if (t >= lengths[static_cast<std::size_t>(bi)]) {
                c.col(bi) = c_prev.col(bi);
                h.col(bi) = h_prev.col(bi);
                out.col(bi).setZero();
            } else {
                out.col(bi) = h.col(bi);
            }
        }
    }
}

} // namespace detail

using Batch = std::vector<const RepresentedSequence*>;

/// Masked forward pass. Only the first max(length) timesteps of the batch are
/// processed; padded steps carry the recurrent state unchanged, so trailing
/// padding never affects the result. `rng` is required when training.
inline ForwardCache forward(const BiLstmModel& model, const Batch& batch, bool training, Rng* rng = nullptr) {
    const auto& cfg = model.config();
    if (batch.empty()) throw ConfigError("empty batch");
    if (training && cfg.dropout > 0 && rng == nullptr) throw ConfigError("training forward pass needs an rng");

    ForwardCache fc;
    fc.B = static_cast<int>(batch.size());
    for (const auto* item : batch) {
        if (item->dim() != cfg.input_dim) throw ConfigError("input dimension does not match model");
        if (item->max_len() > cfg.max_len) throw ConfigError("sequence longer than model max_len");
        const int len = item->length();
        if (len < 1) throw ConfigError("sequence has no real timesteps");
        fc.lengths.push_back(len);
        fc.T = std::max(fc.T, len);
    }
    const int T = fc.T;
    const int B = fc.B;
    const Eigen::Index H = model.units();
    const bool drop = training && cfg.dropout > 0;

    Eigen::MatrixXd input = Eigen::MatrixXd::Zero(cfg.input_dim, T * B);
    for (int bi = 0; bi < B; ++bi) {
        const auto& v = batch[static_cast<std::size_t>(bi)]->values;
        for (int t = 0; t < fc.lengths[static_cast<std::size_t>(bi)]; ++t) input.col(t * B + bi) = v.row(t).transpose();
    }

    fc.layers.resize(static_cast<std::size_t>(cfg.num_layers));
    for (int l = 0; l < cfg.num_layers; ++l) {
        auto& lc = fc.layers[static_cast<std::size_t>(l)];
        lc.input = std::move(input);
        lc.output = Eigen::MatrixXd::Zero(2 * H, T * B);
        for (int d = 0; d < 2; ++d) detail::run_direction(model, l, d, lc.input, fc.lengths, T, lc.dir[static_cast<std::size_t>(d)], lc.output);
        if (l + 1 < cfg.num_layers) {
            if (drop) {
                lc.dropout_mask = detail::dropout_mask(2 * H, T * B, cfg.dropout, *rng);
                input = (lc.output.array() * lc.dropout_mask.array()).matrix();
            } else {
                input = lc.output;
            }
        }
    }

    const auto& top = fc.layers.back();
    fc.summary.resize(2 * H, B);
    fc.summary.topRows(H) = top.dir[0].hidden.middleCols(T * B, B);
    fc.summary.bottomRows(H) = top.dir[1].hidden.middleCols(T * B, B);
    if (drop) {
        fc.summary_mask = detail::dropout_mask(2 * H, B, cfg.dropout, *rng);
        fc.head_input = (fc.summary.array() * fc.summary_mask.array()).matrix();
    } else {
        fc.head_input = fc.summary;
    }
    fc.logits = (model.head_w().transpose() * fc.head_input).transpose();
    fc.logits.array() += model.head_b();
    fc.probabilities = (1.0 + (-fc.logits.array()).exp()).inverse().matrix();
    return fc;
}

inline constexpr double kProbabilityClamp = 1e-7;

/// Mean binary cross-entropy, optionally weighted per item.
inline double bce_loss(std::span<const double> probabilities, std::span<const double> labels,
                       std::span<const double> weights = {}) {
    if (probabilities.size() != labels.size() || probabilities.empty()) throw ConfigError("bce_loss size mismatch");
    double sum = 0;
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        const double p = std::clamp(probabilities[i], kProbabilityClamp, 1.0 - kProbabilityClamp);
        const double w = weights.empty() ? 1.0 : weights[i];
        sum -= w * (labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p));
    }
    return sum / static_cast<double>(probabilities.size());
}

// -- backward ----------------------------------------------------------------------

namespace detail {

/// BPTT through one direction of one layer. `d_output` holds the loss
/// gradient w.r.t. this direction's per-timestep outputs (H x T*B), `d_final`
/// the gradient w.r.t. its final state. Accumulates parameter gradients into
/// `grad` and the input gradient into `d_input`.
inline void backprop_direction(const BiLstmModel& model, int l, int dir, const LayerCache& lc,
                               const Eigen::Ref<const Eigen::MatrixXd>& d_output, const Eigen::MatrixXd& d_final,
                               const std::vector<int>& lengths, int T, Eigen::VectorXd& grad,
                               Eigen::MatrixXd& d_input) {
    const Eigen::Index H = model.units();
    const Eigen::Index B = static_cast<Eigen::Index>(lengths.size());
    const auto& cache = lc.dir[static_cast<std::size_t>(dir)];
    const auto U = model.U(l, dir);

    Eigen::MatrixXd dz_all(4 * H, T * B);
    Eigen::MatrixXd h_prev_all(H, T * B);
    Eigen::MatrixXd dh = d_final;
    Eigen::MatrixXd dc = Eigen::MatrixXd::Zero(H, B);
    Eigen::MatrixXd dh_prev(H, B);
    Eigen::ArrayXXd dc_total(H, B);
    Eigen::ArrayXXd tc(H, B);

    for (int s = T - 1; s >= 0; --s) {
        const int t = step_time(dir, s, T);
        const auto gates = cache.gates.middleCols(t * B, B).array();
        const auto i = gates.topRows(H);
        const auto f = gates.middleRows(H, H);
        const auto g = gates.middleRows(2 * H, H);
        const auto o = gates.bottomRows(H);
        const auto c = cache.cell.middleCols((s + 1) * B, B).array();
        const auto c_prev = cache.cell.middleCols(s * B, B).array();
        h_prev_all.middleCols(t * B, B) = cache.hidden.middleCols(s * B, B);

        const Eigen::ArrayXXd dh_t = dh.array() + d_output.middleCols(t * B, B).array();
        tc = c.tanh();
        dc_total = dc.array() + dh_t * o * (1.0 - tc.square());
        auto dz = dz_all.middleCols(t * B, B);
        dz.topRows(H) = (dc_total * g * i * (1.0 - i)).matrix();
        dz.middleRows(H, H) = (dc_total * c_prev * f * (1.0 - f)).matrix();
        dz.middleRows(2 * H, H) = (dc_total * i * (1.0 - g.square())).matrix();
        dz.bottomRows(H) = (dh_t * tc * o * (1.0 - o)).matrix();

        for (Eigen::Index bi = 0; bi < B; ++bi)
            if (t >= lengths[static_cast<std::size_t>(bi)]) dz.col(bi).setZero();

        dh_prev.noalias() = U.transpose().lazyProduct(dz);
        Eigen::MatrixXd dc_prev = (dc_total * f).matrix();
        for (Eigen::Index bi = 0; bi < B; ++bi)
            if (t >= lengths[static_cast<std::size_t>(bi)]) {
                dh_prev.col(bi) = dh.col(bi);
                dc_prev.col(bi) = dc.col(bi);
            }
        dh.swap(dh_prev);
        dc = std::move(dc_prev);
    }

    model.W(grad, l, dir).noalias() += dz_all * lc.input.transpose();
    model.U(grad, l, dir).noalias() += dz_all * h_prev_all.transpose();
    model.b(grad, l, dir) += dz_all.rowwise().sum();
    d_input.noalias() += model.W(l, dir).transpose() * dz_all;
}

} // namespace detail

/// Gradient of the (weighted) mean BCE w.r.t. every parameter, for the
/// forward pass recorded in `fc` (dropout masks included). Writes into
/// `grad`, reusing its storage.
inline void backward_into(const BiLstmModel& model, const ForwardCache& fc, std::span<const double> labels,
                          std::span<const double> weights, Eigen::VectorXd& grad) {
    const int B = fc.B;
    const int T = fc.T;
    const Eigen::Index H = model.units();
    if (static_cast<int>(labels.size()) != B) throw ConfigError("label count does not match batch");

    grad.setZero(model.size());
    Eigen::VectorXd dlogit(B);
    for (int bi = 0; bi < B; ++bi) {
        const double w = weights.empty() ? 1.0 : weights[static_cast<std::size_t>(bi)];
        dlogit[bi] = w * (fc.probabilities[bi] - labels[static_cast<std::size_t>(bi)]) / B;
    }
    model.head_w(grad).col(0).noalias() += fc.head_input * dlogit;
    grad[model.head_b_offset()] += dlogit.sum();

    Eigen::MatrixXd d_summary = model.head_w().col(0) * dlogit.transpose();
    if (fc.summary_mask.size() > 0) d_summary.array() *= fc.summary_mask.array();

    const int L = model.layers();
    Eigen::MatrixXd d_output = Eigen::MatrixXd::Zero(2 * H, T * B);
    for (int l = L - 1; l >= 0; --l) {
        const auto& lc = fc.layers[static_cast<std::size_t>(l)];
        Eigen::MatrixXd d_input = Eigen::MatrixXd::Zero(lc.input.rows(), T * B);
        for (int d = 0; d < 2; ++d) {
            Eigen::MatrixXd d_final = l == L - 1 ? Eigen::MatrixXd(d_summary.middleRows(d * H, H))
                                                 : Eigen::MatrixXd::Zero(H, B);
            detail::backprop_direction(model, l, d, lc, d_output.middleRows(d * H, H), d_final, fc.lengths, T, grad,
                                       d_input);
        }
        if (l > 0) {
            const auto& below = fc.layers[static_cast<std::size_t>(l - 1)];
            d_output = below.dropout_mask.size() > 0 ? Eigen::MatrixXd(d_input.array() * below.dropout_mask.array())
                                                     : d_input;
        }
    }
}

inline Eigen::VectorXd backward(const BiLstmModel& model, const ForwardCache& fc, std::span<const double> labels,
                                std::span<const double> weights = {}) {
    Eigen::VectorXd grad;
    backward_into(model, fc, labels, weights, grad);
    return grad;
}

// -- optimizer ------------------------------------------------------------------------

struct AdamState {
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    long step = 0;
};

inline AdamState make_adam_state(Eigen::Index n) { return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), 0}; }

/// Bias-corrected Adam update.
inline void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& state, const TrainConfig& cfg) {
    if (state.m.size() != params.size()) state = make_adam_state(params.size());
    ++state.step;
    state.m = cfg.beta1 * state.m + (1 - cfg.beta1) * grad;
    state.v = cfg.beta2 * state.v + (1 - cfg.beta2) * grad.cwiseAbs2();
    const double c1 = 1 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double c2 = 1 - std::pow(cfg.beta2, static_cast<double>(state.step));
    params.array() -= cfg.learning_rate * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + cfg.epsilon);
}

// -- training ------------------------------------------------------------------------------

/// Patience counter on a monitored score (higher is better).
class EarlyStopping {
public:
    explicit EarlyStopping(int patience) : patience_(patience) {}

    /// Record one epoch's score; returns true when it is a new best.
    bool update(double score) {
        ++epoch_;
        if (score > best_) {
            best_ = score;
            best_epoch_ = epoch_;
            since_best_ = 0;
            return true;
        }
        ++since_best_;
        return false;
    }

    bool should_stop() const { return since_best_ >= patience_; }
    int best_epoch() const { return best_epoch_; }
    double best() const { return best_; }
    int epoch() const { return epoch_; }

private:
    int patience_;
    int epoch_ = 0;
    int best_epoch_ = 0;
    int since_best_ = 0;
    double best_ = -std::numeric_limits<double>::infinity();
};

struct EpochRecord {
    double train_loss = 0;
    double val_f1 = 0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    int best_epoch = 0; ///< 1-based
    bool stopped_early = false;
};

struct TrainResult {
    BiLstmModel model;
    TrainHistory history;
};

inline std::vector<double> predict_batch(const BiLstmModel& model, const std::vector<RepresentedSequence>& items,
                                         std::size_t chunk = 64) {
    std::vector<double> out;
    out.reserve(items.size());
    for (std::size_t start = 0; start < items.size(); start += chunk) {
        Batch batch;
        for (std::size_t i = start; i < std::min(items.size(), start + chunk); ++i) batch.push_back(&items[i]);
        const auto fc = forward(model, batch, false);
        for (Eigen::Index i = 0; i < fc.probabilities.size(); ++i) out.push_back(fc.probabilities[i]);
    }
    return out;
}

/// Probability of good abandonment for a single sequence.
inline double predict(const BiLstmModel& model, const RepresentedSequence& seq) {
    return forward(model, Batch{&seq}, false).probabilities[0];
}

inline double validation_f1(const BiLstmModel& model, const std::vector<RepresentedSequence>& val) {
    std::vector<Label> truth;
    for (const auto& v : val) truth.push_back(v.label);
    const auto probs = predict_batch(model, val);
    return weighted_metrics(threshold_scores(probs), truth).f1;
}

/// Mini-batch training with early stopping on validation weighted F. The
/// returned model carries the weights of the best epoch.
inline TrainResult train(BiLstmModel model, const std::vector<RepresentedSequence>& train_set,
                         const std::vector<RepresentedSequence>& val_set, const TrainConfig& cfg,
                         const ClassWeights& class_weights = {}) {
    validate_config(cfg);
    if (train_set.empty() || val_set.empty()) throw ConfigError("training and validation sets must be non-empty");
    {
        std::array<std::size_t, 2> n{0, 0};
        for (const auto& v : val_set) ++n[static_cast<std::size_t>(v.label)];
        if (n[0] == 0 || n[1] == 0) throw DegenerateError("validation set must contain both classes");
    }

    TrainHistory history;
    EarlyStopping stopper(cfg.patience);
    Eigen::VectorXd best = model.params();
    AdamState adam = make_adam_state(model.size());
    std::vector<std::size_t> order(train_set.size());
    std::vector<double> labels, weights;
    Eigen::VectorXd grad;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        Rng rng(derive_seed(cfg.rng_seed, {static_cast<std::uint64_t>(epoch)}));
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(order);

        double loss_sum = 0;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            Batch batch;
            labels.clear();
            weights.clear();
            for (std::size_t k = start; k < std::min(order.size(), start + cfg.batch_size); ++k) {
                const auto& item = train_set[order[k]];
                batch.push_back(&item);
                labels.push_back(item.label == Label::good ? 1.0 : 0.0);
                weights.push_back(class_weights[item.label]);
            }
            const auto fc = forward(model, batch, true, &rng);
            loss_sum += bce_loss({fc.probabilities.data(), static_cast<std::size_t>(fc.probabilities.size())}, labels,
                                 weights);
            ++n_batches;
            backward_into(model, fc, labels, weights, grad);
            adam_step(model.params(), grad, adam, cfg);
        }

        const double f1 = validation_f1(model, val_set);
        history.epochs.push_back({loss_sum / static_cast<double>(n_batches), f1});
        if (stopper.update(f1)) best = model.params();
        if (stopper.should_stop()) {
            history.stopped_early = epoch < cfg.max_epochs;
            break;
        }
    }
    history.best_epoch = stopper.best_epoch();
    model.params() = best;
    return {std::move(model), std::move(history)};
}

// -- gradient verification -------------------------------------------------------------

struct GradientCheck {
    double max_relative_error = 0;
    Eigen::Index worst_index = -1;
    Eigen::VectorXd analytic;
    Eigen::VectorXd numeric;
};

/// Compare BPTT gradients with central finite differences over every
/// parameter. With training = true the same dropout masks are replayed for
/// every evaluation. Relative error uses max(|a|, |n|, floor) as denominator.
inline GradientCheck gradient_check(const BiLstmModel& model, const Batch& batch, std::span<const double> labels,
                                    bool training = false, std::uint64_t dropout_seed = 0, double h = 1e-5,
                                    double floor = 1e-7) {
    auto loss_at = [&](const BiLstmModel& m) {
        Rng rng(dropout_seed);
        const auto fc = forward(m, batch, training, &rng);
        return bce_loss({fc.probabilities.data(), static_cast<std::size_t>(fc.probabilities.size())}, labels);
    };
    GradientCheck out;
    {
        Rng rng(dropout_seed);
        out.analytic = backward(model, forward(model, batch, training, &rng), labels);
    }
    out.numeric.resize(model.size());
    BiLstmModel probe = model;
    for (Eigen::Index k = 0; k < model.size(); ++k) {
        const double orig = probe.params()[k];
        probe.params()[k] = orig + h;
        const double up = loss_at(probe);
        probe.params()[k] = orig - h;
        const double down = loss_at(probe);
        probe.params()[k] = orig;
        out.numeric[k] = (up - down) / (2 * h);
        const double a = out.analytic[k];
        const double n = out.numeric[k];
        const double rel = std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
        if (rel > out.max_relative_error || out.worst_index < 0) {
            out.max_relative_error = rel;
            out.worst_index = k;
        }
    }
    return out;
}

// -- checkpoint -----------------------------------------------------------------------------

inline nlohmann::json model_to_json(const BiLstmModel& model) {
    const auto& c = model.config();
    const auto& p = model.params();
    return {{"format", "abandon.bilstm"},
            {"version", 1},
            {"config",
             {{"num_layers", c.num_layers},
              {"units", c.units},
              {"dropout", c.dropout},
              {"input_dim", c.input_dim},
              {"max_len", c.max_len},
              {"rng_seed", c.rng_seed}}},
            {"param_order", "per layer, per direction (forward, backward): W[4H x in], U[4H x H], b[4H] "
                            "(column-major, gates i,f,g,o); then head_w[2H], head_b"},
            {"params", std::vector<double>(p.data(), p.data() + p.size())}};
}

inline BiLstmModel model_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "abandon.bilstm") throw ValidationError("not a BiLSTM checkpoint");
    if (j.value("version", 0) != 1) throw ValidationError("unsupported checkpoint version");
    const auto& c = j.at("config");
    ModelConfig cfg;
    cfg.num_layers = c.at("num_layers").get<int>();
    cfg.units = c.at("units").get<int>();
    cfg.dropout = c.at("dropout").get<double>();
    cfg.input_dim = c.at("input_dim").get<int>();
    cfg.max_len = c.at("max_len").get<int>();
    cfg.rng_seed = c.at("rng_seed").get<std::uint64_t>();
    BiLstmModel model(cfg);
    const auto params = j.at("params").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(params.size()) != model.size()) throw ValidationError("checkpoint parameter count mismatch");
    model.params() = Eigen::Map<const Eigen::VectorXd>(params.data(), model.size());
    return model;
}

} // namespace abandon
