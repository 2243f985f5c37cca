#pragma once

// Patch-correction MLP: tanh(LayerNorm(Wh + b)) hidden layers with residual
// connections, a linear output layer, AdamW training and weight files.

#include "nnfem/binio.hpp"
#include "nnfem/patch_ops.hpp"

#include <chrono>
#include <numeric>
#include <random>

namespace nnfem {

struct NetConfig {
    int N_M = 0;
    int S = 1;
    int layers = 2;
    int width = 128;
    int N_in = 0;
    int N_out = 0;
    int layout_id = kFeatureLayoutId;
};

/// Deterministic uniform doubles in [0,1) from a 64-bit Mersenne twister.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
    double uniform(double a, double b) { return a + (b - a) * uniform(); }
    /// Unbiased integer in [0, n).
    std::uint64_t below(std::uint64_t n)
    {
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t x;
        do x = eng_();
        while (x >= limit);
        return x % n;
    }
    template <class T>
    void shuffle(std::vector<T>& v)
    {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[static_cast<std::size_t>(below(i))]);
    }

private:
    std::mt19937_64 eng_;
};

class CorrectionNet {
public:
    static constexpr double kLnEps = 1e-5;

    struct Layer {
        int in = 0;
        int out = 0;
        bool hidden = true;
        bool residual = false;
        Index w = 0;      // offset of the out x in row-major weights
        Index b = 0;      // offset of the bias
        Index gamma = 0;  // layer-norm scale (hidden layers)
        Index beta = 0;   // layer-norm shift (hidden layers)
    };

    CorrectionNet() = default;

    explicit CorrectionNet(const NetConfig& cfg) : cfg_(cfg)
    {
        if (cfg.layers < 2) throw ConfigError("network needs at least 2 layers");
        if (cfg.width < 1 || cfg.N_in < 1 || cfg.N_out < 1) throw ConfigError("network sizes must be positive");
        Index off = 0;
        for (int i = 0; i < cfg.layers; ++i) {
            Layer L;
            L.hidden = i + 1 < cfg.layers;
            L.in = i == 0 ? cfg.N_in : cfg.width;
            L.out = L.hidden ? cfg.width : cfg.N_out;
            L.residual = L.hidden && i >= 1;
            L.w = off;
            off += static_cast<Index>(L.in) * L.out;
            L.b = off;
            off += L.out;
            if (L.hidden) {
                L.gamma = off;
                off += L.out;
                L.beta = off;
                off += L.out;
            }
            layers_.push_back(L);
        }
        params_ = Vec::Zero(off);
        in_mean_ = Vec::Zero(cfg.N_in);
        in_std_ = Vec::Ones(cfg.N_in);
        for (const auto& L : layers_)
            if (L.hidden) params_.segment(L.gamma, L.out).setOnes();
    }

    /// Uniform +-1/sqrt(fan_in) weights and biases; unit layer-norm scale, zero shift.
    void initialize(std::uint64_t seed)
    {
        Rng rng(seed);
        for (const auto& L : layers_) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(L.in));
            for (Index i = 0; i < static_cast<Index>(L.in) * L.out; ++i) params_[L.w + i] = rng.uniform(-bound, bound);
            for (Index i = 0; i < L.out; ++i) params_[L.b + i] = rng.uniform(-bound, bound);
            if (L.hidden) {
                params_.segment(L.gamma, L.out).setOnes();
                params_.segment(L.beta, L.out).setZero();
            }
        }
    }

    /// Output layer set to zero: the net predicts exactly zero for every input.
    void zero_output()
    {
        const Layer& L = layers_.back();
        params_.segment(L.w, static_cast<Index>(L.in) * L.out).setZero();
        params_.segment(L.b, L.out).setZero();
    }

    const NetConfig& config() const { return cfg_; }
    const std::vector<Layer>& layers() const { return layers_; }
    Vec& params() { return params_; }
    const Vec& params() const { return params_; }
    Index parameter_count() const { return params_.size(); }

    const Vec& input_mean() const { return in_mean_; }
    const Vec& input_std() const { return in_std_; }
    double target_std() const { return target_std_; }

    void set_normalization(Vec mean, Vec std, double target_std)
    {
        require_size(mean.size(), cfg_.N_in, "input mean");
        require_size(std.size(), cfg_.N_in, "input std");
        for (Index i = 0; i < std.size(); ++i)
            if (!(std[i] > 0.0)) throw ConfigError("input std entries must be positive");
        if (!(target_std > 0.0)) throw ConfigError("target std must be positive");
        in_mean_ = std::move(mean);
        in_std_ = std::move(std);
        target_std_ = target_std;
    }

    /// Per-feature input statistics and one scalar target scale from a training set.
    void fit_normalization(const RowMat& X, const RowMat& Y)
    {
        const double n = static_cast<double>(X.rows());
        Vec mean = X.colwise().sum().transpose() / n;
        Vec std(X.cols());
        for (Index j = 0; j < X.cols(); ++j) {
            const double s = std::sqrt((X.col(j).array() - mean[j]).square().sum() / n);
            std[j] = s > 0.0 ? s : 1.0;
        }
        const double ym = Y.mean();
        const double ys = std::sqrt((Y.array() - ym).square().sum() / static_cast<double>(Y.size()));
        set_normalization(std::move(mean), std::move(std), ys > 0.0 ? ys : 1.0);
    }

    RowMat normalize_inputs(const RowMat& X) const
    {
        return ((X.rowwise() - in_mean_.transpose()).array().rowwise() / in_std_.transpose().array()).matrix();
    }

    /// Raw inputs to raw (de-standardized) outputs, row by row.
    RowMat forward(const RowMat& X) const
    {
        if (X.cols() != cfg_.N_in)
            throw SizeMismatch("network input width " + std::to_string(X.cols()) + " != N_in " + std::to_string(cfg_.N_in));
        return target_std_ * forward_normalized(normalize_inputs(X));
    }

    /// Forward pass in normalized units.
    RowMat forward_normalized(const RowMat& Xn) const
    {
        RowMat h = Xn;
        for (const auto& L : layers_) {
            RowMat a = affine(L, h);
            if (!L.hidden) return a;
            RowMat xhat, t;
            layer_norm_tanh(L, a, xhat, t);
            if (L.residual) t += h;
            h = std::move(t);
        }
        return h;
    }

    /// Mean over rows of the squared Euclidean error in normalized target units, plus alpha ||theta||^2.
    /// When `grad` is given it receives the gradient of the data term only.
    double loss(const RowMat& Xn, const RowMat& Yn, double alpha, Vec* grad = nullptr) const
    {
        const Index B = Xn.rows();
        std::vector<RowMat> hs{Xn}, xhats, ts;
        hs.reserve(layers_.size() + 1);
        RowMat out;
        for (const auto& L : layers_) {
            RowMat a = affine(L, hs.back());
            if (!L.hidden) {
                out = std::move(a);
                break;
            }
            RowMat xhat, t;
            layer_norm_tanh(L, a, xhat, t);
            RowMat h = t;
            if (L.residual) h += hs.back();
            xhats.push_back(std::move(xhat));
            ts.push_back(std::move(t));
            hs.push_back(std::move(h));
        }
        const RowMat diff = out - Yn;
        const double data = diff.squaredNorm() / static_cast<double>(B);
        if (grad) {
            grad->setZero(params_.size());
            RowMat dh = (2.0 / static_cast<double>(B)) * diff;
            for (int i = static_cast<int>(layers_.size()) - 1; i >= 0; --i) {
                const Layer& L = layers_[static_cast<std::size_t>(i)];
                RowMat da;
                if (!L.hidden) {
                    da = dh;
                } else {
                    const auto& xhat = xhats[static_cast<std::size_t>(i)];
                    const auto& t = ts[static_cast<std::size_t>(i)];
                    const RowMat dy = (dh.array() * (1.0 - t.array().square())).matrix();
                    grad->segment(L.gamma, L.out) = (dy.array() * xhat.array()).colwise().sum().transpose();
                    grad->segment(L.beta, L.out) = dy.colwise().sum().transpose();
                    const auto gamma = params_.segment(L.gamma, L.out);
                    const RowMat dxhat = (dy.array().rowwise() * gamma.transpose().array()).matrix();
                    const RowMat& a_in = hs[static_cast<std::size_t>(i)];
                    // Recompute the per-row inverse std of the pre-activation.
                    const RowMat a = affine(L, a_in);
                    da.resize(B, L.out);
                    for (Index r = 0; r < B; ++r) {
                        const double mu = a.row(r).mean();
                        const double var = (a.row(r).array() - mu).square().mean();
                        const double inv = 1.0 / std::sqrt(var + kLnEps);
                        const double m1 = dxhat.row(r).mean();
                        const double m2 = (dxhat.row(r).array() * xhat.row(r).array()).mean();
                        da.row(r) = inv * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2).matrix();
                    }
                }
                const RowMat& hin = hs[static_cast<std::size_t>(i)];
                Eigen::Map<RowMat>(grad->data() + L.w, L.out, L.in) = da.transpose() * hin;
                grad->segment(L.b, L.out) = da.colwise().sum().transpose();
                RowMat dprev = da * weights(L);
                if (L.residual) dprev += dh;
                dh = std::move(dprev);
            }
        }
        return data + alpha * params_.squaredNorm();
    }

private:
    Eigen::Map<const RowMat> weights(const Layer& L) const
    {
        return Eigen::Map<const RowMat>(params_.data() + L.w, L.out, L.in);
    }

    RowMat affine(const Layer& L, const RowMat& h) const
    {
        RowMat a = h * weights(L).transpose();
        a.rowwise() += params_.segment(L.b, L.out).transpose();
        return a;
    }

    void layer_norm_tanh(const Layer& L, const RowMat& a, RowMat& xhat, RowMat& t) const
    {
        xhat.resize(a.rows(), a.cols());
        for (Index r = 0; r < a.rows(); ++r) {
            const double mu = a.row(r).mean();
            const double var = (a.row(r).array() - mu).square().mean();
            xhat.row(r) = (a.row(r).array() - mu) / std::sqrt(var + kLnEps);
        }
        const auto gamma = params_.segment(L.gamma, L.out);
        const auto beta = params_.segment(L.beta, L.out);
        t = ((xhat.array().rowwise() * gamma.transpose().array()).rowwise() + beta.transpose().array()).tanh().matrix();
    }

    NetConfig cfg_;
    std::vector<Layer> layers_;
    Vec params_;
    Vec in_mean_;
    Vec in_std_;
    double target_std_ = 1.0;
};

struct TrainConfig {
    double lr = 1e-4;
    int batch_size = 64;
    int epochs = 40;
    double weight_decay = 1e-3;
    double warmup_fraction = 0.1;
    double warmup_div = 25.0;
    double final_div = 1e4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 1;

    void validate() const
    {
        if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
        if (!(lr > 0.0)) throw ConfigError("train.lr must be positive");
        if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
        if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) throw ConfigError("train.warmup must lie in [0,1)");
    }
};

/// Linear warm-up from lr/warmup_div, then one cosine cycle down to lr/(warmup_div*final_div).
inline double scheduled_lr(const TrainConfig& c, long step, long total)
{
    const long warm = std::max(1L, static_cast<long>(std::lround(c.warmup_fraction * static_cast<double>(total))));
    const double lo = c.lr / c.warmup_div;
    if (step < warm) return lo + (c.lr - lo) * static_cast<double>(step) / static_cast<double>(warm);
    const double lmin = lo / c.final_div;
    const double span = std::max(1L, total - warm);
    const double x = std::min(1.0, static_cast<double>(step - warm) / span);
    return lmin + 0.5 * (c.lr - lmin) * (1.0 + std::cos(std::numbers::pi * x));
}

struct Dataset {
    RowMat X;
    RowMat Y;

    Index size() const { return X.rows(); }
};

struct TrainLog {
    double initial_train_loss = 0.0;
    double initial_val_loss = 0.0;
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    std::vector<double> lr;
    int best_epoch = -1;
    double wall_time = 0.0;
};

struct TrainResult {
    CorrectionNet net;
    TrainLog log;
};

inline RowMat select_rows(const RowMat& M, const std::vector<Index>& idx)
{
    RowMat out(static_cast<Index>(idx.size()), M.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = M.row(idx[i]);
    return out;
}

/// AdamW training; returns the checkpoint with the lowest validation loss.
inline TrainResult train(const Dataset& train_set, const Dataset& val_set, const TrainConfig& tc, NetConfig arch)
{
    tc.validate();
    if (train_set.size() == 0) throw TrainingError("empty training set");
    if (train_set.X.cols() != arch.N_in || train_set.Y.cols() != arch.N_out)
        throw SizeMismatch("training set widths do not match the network configuration");
    const auto start = std::chrono::steady_clock::now();

    CorrectionNet net(arch);
    net.initialize(tc.seed);
    net.fit_normalization(train_set.X, train_set.Y);
    const RowMat Xn = net.normalize_inputs(train_set.X);
    const RowMat Yn = train_set.Y / net.target_std();
    const bool has_val = val_set.size() > 0;
    const RowMat Vxn = has_val ? net.normalize_inputs(val_set.X) : RowMat();
    const RowMat Vyn = has_val ? RowMat(val_set.Y / net.target_std()) : RowMat();

    TrainResult res{net, {}};
    auto& log = res.log;
    log.initial_train_loss = net.loss(Xn, Yn, tc.weight_decay);
    log.initial_val_loss = has_val ? net.loss(Vxn, Vyn, tc.weight_decay) : log.initial_train_loss;

    const Index n = train_set.size();
    const long per_epoch = static_cast<long>((n + tc.batch_size - 1) / tc.batch_size);
    const long total = per_epoch * tc.epochs;
    Vec m = Vec::Zero(net.parameter_count()), v = Vec::Zero(net.parameter_count()), g;
    Rng rng(tc.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    long step = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        rng.shuffle(order);
        for (Index s = 0; s < n; s += tc.batch_size) {
            const Index e = std::min(n, s + tc.batch_size);
            const std::vector<Index> idx(order.begin() + s, order.begin() + e);
            const double l = net.loss(select_rows(Xn, idx), select_rows(Yn, idx), 0.0, &g);
            if (!std::isfinite(l) || !g.allFinite())
                throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step));
            const double lr = scheduled_lr(tc, step, total);
            ++step;
            m = tc.beta1 * m + (1.0 - tc.beta1) * g;
            v = tc.beta2 * v + (1.0 - tc.beta2) * g.cwiseProduct(g);
            const double c1 = 1.0 - std::pow(tc.beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(tc.beta2, static_cast<double>(step));
            Vec& p = net.params();
            p *= 1.0 - lr * tc.weight_decay;
            p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + tc.adam_eps);
        }
        const double tl = net.loss(Xn, Yn, tc.weight_decay);
        const double vl = has_val ? net.loss(Vxn, Vyn, tc.weight_decay) : tl;
        if (!std::isfinite(tl) || !std::isfinite(vl))
            throw TrainingError("non-finite loss after epoch " + std::to_string(epoch));
        log.train_loss.push_back(tl);
        log.val_loss.push_back(vl);
        log.lr.push_back(scheduled_lr(tc, step - 1, total));
        if (vl < best) {
            best = vl;
            log.best_epoch = epoch;
            res.net = net;
        }
    }
    log.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

constexpr std::uint32_t kWeightsVersion = 1;

inline void save_weights(const CorrectionNet& net, const std::string& path)
{
    const auto& c = net.config();
    BinWriter w(path);
    w.magic("NNWT");
    w.u32(kWeightsVersion);
    for (int x : {c.N_M, c.S, c.layers, c.width, c.N_in, c.N_out, c.layout_id}) w.i32(x);
    w.f64s(net.input_mean().data(), static_cast<std::size_t>(c.N_in));
    w.f64s(net.input_std().data(), static_cast<std::size_t>(c.N_in));
    w.f64(net.target_std());
    for (const auto& L : net.layers()) {
        w.f64s(net.params().data() + L.w, static_cast<std::size_t>(L.in) * static_cast<std::size_t>(L.out));
        w.f64s(net.params().data() + L.b, static_cast<std::size_t>(L.out));
        if (L.hidden) {
            w.f64s(net.params().data() + L.gamma, static_cast<std::size_t>(L.out));
            w.f64s(net.params().data() + L.beta, static_cast<std::size_t>(L.out));
        }
    }
    w.close();
}

inline CorrectionNet load_weights(const std::string& path)
{
    BinReader r(path);
    r.expect_magic("NNWT");
    const auto version = r.u32();
    if (version != kWeightsVersion) throw IoError("'" + path + "': unsupported weights version " + std::to_string(version));
    NetConfig c;
    c.N_M = r.i32();
    c.S = r.i32();
    c.layers = r.i32();
    c.width = r.i32();
    c.N_in = r.i32();
    c.N_out = r.i32();
    c.layout_id = r.i32();
    if (c.layers < 2 || c.layers > 64 || c.width < 1 || c.width > (1 << 16) || c.N_in < 1 || c.N_in > (1 << 24) ||
        c.N_out < 1 || c.N_out > (1 << 24))
        throw IoError("'" + path + "': corrupt header");
    if (c.layout_id != kFeatureLayoutId) throw IoError("'" + path + "': unknown feature layout " + std::to_string(c.layout_id));
    CorrectionNet net(c);
    Vec mean(c.N_in), std(c.N_in);
    r.f64s(mean.data(), static_cast<std::size_t>(c.N_in));
    r.f64s(std.data(), static_cast<std::size_t>(c.N_in));
    const double ts = r.f64();
    for (const auto& L : net.layers()) {
        r.f64s(net.params().data() + L.w, static_cast<std::size_t>(L.in) * static_cast<std::size_t>(L.out));
        r.f64s(net.params().data() + L.b, static_cast<std::size_t>(L.out));
        if (L.hidden) {
            r.f64s(net.params().data() + L.gamma, static_cast<std::size_t>(L.out));
            r.f64s(net.params().data() + L.beta, static_cast<std::size_t>(L.out));
        }
    }
    r.expect_end();
    try {
        net.set_normalization(std::move(mean), std::move(std), ts);
    } catch (const ConfigError& e) {
        throw IoError("'" + path + "': " + e.what());
    }
    return net;
}

/// Refuses a net whose patch configuration differs from the plan it is applied to.
inline void check_compatible(const CorrectionNet& net, const PatchPlan& plan)
{
    const auto& c = net.config();
    if (c.N_M != plan.N_M || c.S != plan.S || c.N_in != plan.N_in || c.N_out != plan.N_out)
        throw ConfigError("weights were trained for (N_M=" + std::to_string(c.N_M) + ", S=" + std::to_string(c.S) +
                          ") but the run uses (N_M=" + std::to_string(plan.N_M) + ", S=" + std::to_string(plan.S) + ")");
}

inline NetConfig net_config_for(const PatchPlan& plan, int layers, int width)
{
    NetConfig c;
    c.N_M = plan.N_M;
    c.S = plan.S;
    c.layers = layers;
    c.width = width;
    c.N_in = plan.N_in;
    c.N_out = plan.N_out;
    return c;
}

}  // namespace nnfem
