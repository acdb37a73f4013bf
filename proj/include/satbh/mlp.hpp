#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "satbh/errors.hpp"
#include "satbh/scenario.hpp"

namespace satbh {

// Dense feed-forward net: ReLU hidden layers, linear scalar-capable output,
// inverted dropout after the first hidden layer during training only.
// Features are standardized with stored per-feature statistics.
struct Mlp {
    std::vector<int> sizes;        // [input, hidden..., output]
    std::vector<RMat> weights;     // weights[l]: sizes[l+1] x sizes[l]
    std::vector<RVec> biases;      // biases[l]: sizes[l+1]
    double dropout_rate = 0.0;
    RVec feat_mean;                // standardization, length sizes.front()
    RVec feat_std;

    static Mlp make(const std::vector<int>& sizes, double dropout, std::mt19937_64& rng) {
        if (sizes.size() < 2) throw ContractViolation("mlp: need at least two layers");
        Mlp m;
        m.sizes = sizes;
        m.dropout_rate = dropout;
        m.feat_mean = RVec::Zero(sizes.front());
        m.feat_std = RVec::Ones(sizes.front());
        std::normal_distribution<double> nd(0.0, 1.0);
        for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
            double scale = std::sqrt(2.0 / sizes[l]);  // He init for ReLU
            RMat W(sizes[l + 1], sizes[l]);
            for (int i = 0; i < W.rows(); ++i)
                for (int j = 0; j < W.cols(); ++j) W(i, j) = scale * nd(rng);
            m.weights.push_back(W);
            m.biases.push_back(RVec::Zero(sizes[l + 1]));
        }
        return m;
    }

    int n_layers() const { return static_cast<int>(weights.size()); }

    RVec standardize(const RVec& x) const {
        return (x - feat_mean).cwiseQuotient(feat_std);
    }

    // Deterministic inference path, dropout off.
    double predict(const RVec& raw) const {
        RVec a = standardize(raw);
        for (int l = 0; l < n_layers(); ++l) {
            a = (weights[l] * a + biases[l]).eval();
            if (l + 1 < n_layers()) a = a.cwiseMax(0.0);
        }
        return a(0);
    }
};

struct MlpGradients {
    std::vector<RMat> dW;
    std::vector<RVec> db;
    double loss = 0.0;
};

namespace detail_mlp {

// Forward/backward for one standardized sample under squared-error loss
// 0.5 (y_hat - y)^2; the dropout mask (empty = off) applies after layer 0.
inline MlpGradients backprop(const Mlp& m, const RVec& x_std, double y,
                             const RVec& drop_mask) {
    const int L = m.n_layers();
    std::vector<RVec> acts(L + 1);  // post-activation per layer
    std::vector<RVec> pre(L);
    acts[0] = x_std;
    for (int l = 0; l < L; ++l) {
        pre[l] = m.weights[l] * acts[l] + m.biases[l];
        if (l + 1 < L) {
            acts[l + 1] = pre[l].cwiseMax(0.0);
            if (l == 0 && drop_mask.size() > 0)
                acts[l + 1] = acts[l + 1].cwiseProduct(drop_mask);
        } else {
            acts[l + 1] = pre[l];
        }
    }

    MlpGradients g;
    g.dW.resize(L);
    g.db.resize(L);
    double err = acts[L](0) - y;
    g.loss = 0.5 * err * err;
    RVec delta = RVec::Constant(1, err);
    for (int l = L - 1; l >= 0; --l) {
        g.dW[l] = delta * acts[l].transpose();
        g.db[l] = delta;
        if (l > 0) {
            RVec back = m.weights[l].transpose() * delta;
            RVec post = acts[l];  // already masked where dropped
            for (int i = 0; i < back.size(); ++i) back(i) = post(i) > 0.0 ? back(i) : 0.0;
            if (l == 1 && drop_mask.size() > 0) back = back.cwiseProduct(drop_mask);
            delta = back;
        }
    }
    return g;
}

}  // namespace detail_mlp

struct TrainOptions {
    int epochs = 300;
    double lr = 1e-3;
    int batch = 64;
};

// Mini-batch SGD on MSE. Features are standardized from the dataset before the
// first epoch (constants stored in the model). Returns per-epoch mean loss.
inline std::vector<double> train(Mlp& m, const std::vector<RVec>& X, const std::vector<double>& y,
                                 const TrainOptions& opt, std::mt19937_64& rng) {
    if (X.empty() || X.size() != y.size()) throw ContractViolation("train: bad dataset");
    const int n = static_cast<int>(X.size());
    const int d = m.sizes.front();

    m.feat_mean = RVec::Zero(d);
    for (const auto& x : X) m.feat_mean += x;
    m.feat_mean /= n;
    m.feat_std = RVec::Zero(d);
    for (const auto& x : X) m.feat_std += (x - m.feat_mean).cwiseAbs2();
    m.feat_std = (m.feat_std / n).cwiseSqrt().cwiseMax(1e-12);

    std::vector<RVec> Xs(n);
    for (int i = 0; i < n; ++i) Xs[i] = m.standardize(X[i]);

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::bernoulli_distribution keep(1.0 - m.dropout_rate);
    std::vector<double> curve;

    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        for (int start = 0; start < n; start += opt.batch) {
            int end = std::min(n, start + opt.batch);
            MlpGradients acc;
            acc.dW.resize(m.n_layers());
            acc.db.resize(m.n_layers());
            for (int l = 0; l < m.n_layers(); ++l) {
                acc.dW[l] = RMat::Zero(m.weights[l].rows(), m.weights[l].cols());
                acc.db[l] = RVec::Zero(m.biases[l].size());
            }
            for (int i = start; i < end; ++i) {
                RVec mask;
                if (m.dropout_rate > 0.0) {
                    mask = RVec(m.sizes[1]);
                    for (int j = 0; j < mask.size(); ++j)
                        mask(j) = keep(rng) ? 1.0 / (1.0 - m.dropout_rate) : 0.0;
                }
                auto g = detail_mlp::backprop(m, Xs[order[i]], y[order[i]], mask);
                total += g.loss;
                for (int l = 0; l < m.n_layers(); ++l) {
                    acc.dW[l] += g.dW[l];
                    acc.db[l] += g.db[l];
                }
            }
            double scale = opt.lr / (end - start);
            for (int l = 0; l < m.n_layers(); ++l) {
                m.weights[l] -= scale * acc.dW[l];
                m.biases[l] -= scale * acc.db[l];
            }
        }
        double mean_loss = total / n;
        if (!std::isfinite(mean_loss))
            throw ConvergenceError("train: loss diverged (lower the learning rate)");
        curve.push_back(mean_loss);
    }
    return curve;
}

// Flat binary model file: magic, layer sizes, dropout, standardization
// vectors, then row-major weight matrices and bias vectors, all f64 LE.
inline void save_model(const Mlp& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ContractViolation("save_model: cannot open " + path);
    const std::uint64_t magic = 0x53424d4c50303141ull;  // "SBMLP01A"
    auto put_u64 = [&](std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); };
    auto put_f64 = [&](double v) { out.write(reinterpret_cast<const char*>(&v), 8); };
    put_u64(magic);
    put_u64(m.sizes.size());
    for (int s : m.sizes) put_u64(static_cast<std::uint64_t>(s));
    put_f64(m.dropout_rate);
    for (int i = 0; i < m.feat_mean.size(); ++i) put_f64(m.feat_mean(i));
    for (int i = 0; i < m.feat_std.size(); ++i) put_f64(m.feat_std(i));
    for (int l = 0; l < m.n_layers(); ++l) {
        for (int i = 0; i < m.weights[l].rows(); ++i)
            for (int j = 0; j < m.weights[l].cols(); ++j) put_f64(m.weights[l](i, j));
        for (int i = 0; i < m.biases[l].size(); ++i) put_f64(m.biases[l](i));
    }
}

inline Mlp load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ContractViolation("load_model: cannot open " + path);
    auto get_u64 = [&]() {
        std::uint64_t v = 0;
        in.read(reinterpret_cast<char*>(&v), 8);
        return v;
    };
    auto get_f64 = [&]() {
        double v = 0;
        in.read(reinterpret_cast<char*>(&v), 8);
        return v;
    };
    if (get_u64() != 0x53424d4c50303141ull)
        throw ContractViolation("load_model: bad magic in " + path);
    Mlp m;
    std::uint64_t nl = get_u64();
    for (std::uint64_t i = 0; i < nl; ++i) m.sizes.push_back(static_cast<int>(get_u64()));
    m.dropout_rate = get_f64();
    m.feat_mean = RVec(m.sizes.front());
    m.feat_std = RVec(m.sizes.front());
    for (int i = 0; i < m.feat_mean.size(); ++i) m.feat_mean(i) = get_f64();
    for (int i = 0; i < m.feat_std.size(); ++i) m.feat_std(i) = get_f64();
    for (std::size_t l = 0; l + 1 < m.sizes.size(); ++l) {
        RMat W(m.sizes[l + 1], m.sizes[l]);
        for (int i = 0; i < W.rows(); ++i)
            for (int j = 0; j < W.cols(); ++j) W(i, j) = get_f64();
        m.weights.push_back(W);
        RVec b(m.sizes[l + 1]);
        for (int i = 0; i < b.size(); ++i) b(i) = get_f64();
        m.biases.push_back(b);
    }
    if (!in) throw ContractViolation("load_model: truncated file " + path);
    return m;
}

}  // namespace satbh
