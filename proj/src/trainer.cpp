#include "klora/trainer.hpp"

#include <cmath>

#include "klora/errors.hpp"

namespace klora {

namespace {

Matrix gather(const Matrix& src, std::span<const int> idx) {
    Matrix out(static_cast<int>(idx.size()), src.cols());
    for (size_t i = 0; i < idx.size(); ++i)
        for (int j = 0; j < src.cols(); ++j) out(static_cast<int>(i), j) = src(idx[i], j);
    return out;
}

void shuffle(std::vector<int>& idx, Rng& rng) {
    for (size_t i = idx.size(); i > 1; --i) {
        const size_t j = rng.below(i);
        std::swap(idx[i - 1], idx[j]);
    }
}

} // namespace

std::vector<int> encoder_blocks(const ParamVector& params, const std::string& prefix) {
    std::vector<int> blocks;
    const std::string pre = prefix + ".";
    for (size_t i = 0; i < params.layout.size(); ++i) {
        if (params.layout[i].name.rfind(pre, 0) == 0) blocks.push_back(static_cast<int>(i));
    }
    return blocks;
}

FeatureMap make_feature_map(const EncoderSpec& spec, const ParamVector& params,
                            const std::string& prefix) {
    std::vector<int> blocks = encoder_blocks(params, prefix);
    return [spec, params, blocks](const Matrix& states) {
        return encoder_apply(spec, params, blocks, states);
    };
}

ParamVector init_params(const EncoderSpec& enc_f, const EncoderSpec& enc_g, bool with_g,
                        uint64_t seed) {
    ParamVector params;
    std::vector<int> fb = encoder_register_params(enc_f, params, "f");
    Rng rng(derive_seed(seed, 0));
    encoder_init_params(enc_f, params, fb, rng);
    if (with_g) {
        std::vector<int> gb = encoder_register_params(enc_g, params, "g");
        encoder_init_params(enc_g, params, gb, rng);
    }
    return params;
}

TrainResult train_pairs(const TrainConfig& cfg, const PairDataset& pairs) {
    cfg.loss.validate();
    if (cfg.loss.kind == LossKind::lora_generator) {
        throw invalid_input_error("train_pairs: use train_generator for the generator objective");
    }
    TrainResult res;
    ParamVector params = init_params(cfg.enc_f, cfg.enc_g, true, cfg.seed);
    const std::vector<int> fb = encoder_blocks(params, "f");
    const std::vector<int> gb = encoder_blocks(params, "g");
    AdamState adam = AdamState::create(params.size(), cfg.lr);
    std::vector<double> ema;
    if (cfg.ema_decay > 0.0) ema = params.values;

    const int n = pairs.size();
    const int batch = std::min(cfg.batch, n);
    Rng shuffle_rng(derive_seed(cfg.seed, 1));
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;

    long step = 0;
    for (int epoch = 0; epoch < cfg.epochs && !res.diverged; ++epoch) {
        shuffle(order, shuffle_rng);
        double epoch_loss = 0.0;
        int n_batches = 0;
        for (int start = 0; start + batch <= n; start += batch) {
            std::span<const int> idx(order.data() + start, static_cast<size_t>(batch));
            Graph g;
            LossBatchNodes nodes;
            try {
                if (!cfg.split_moments) {
                    NodeId bx = g.constant(gather(pairs.x, idx));
                    NodeId bxp = g.constant(gather(pairs.xp, idx));
                    nodes.f_x = encoder_forward(g, cfg.enc_f, params, fb, bx);
                    nodes.g_xp = encoder_forward(g, cfg.enc_g, params, gb, bxp);
                    nodes.f_rho0 = nodes.f_x;
                    nodes.g_rho1 = nodes.g_xp;
                } else {
                    // first half estimates the joint moment, second half the
                    // marginal moments
                    const int half = batch / 2;
                    std::span<const int> pair_idx = idx.subspan(0, half);
                    std::span<const int> marg_idx = idx.subspan(half);
                    nodes.f_x = encoder_forward(g, cfg.enc_f, params, fb,
                                                g.constant(gather(pairs.x, pair_idx)));
                    nodes.g_xp = encoder_forward(g, cfg.enc_g, params, gb,
                                                 g.constant(gather(pairs.xp, pair_idx)));
                    nodes.f_rho0 = encoder_forward(g, cfg.enc_f, params, fb,
                                                   g.constant(gather(pairs.x, marg_idx)));
                    nodes.g_rho1 = encoder_forward(g, cfg.enc_g, params, gb,
                                                   g.constant(gather(pairs.xp, marg_idx)));
                }
                NodeId loss = build_loss(g, cfg.loss, nodes);
                const double lv = g.scalar(loss);
                if (!std::isfinite(lv)) {
                    res.diverged = true;
                    res.divergence_reason = "non-finite loss";
                    break;
                }
                epoch_loss += lv;
                ++n_batches;
                std::vector<double> grad(params.size(), 0.0);
                g.backward(loss, grad);
                adam_step(adam, params, grad);
            } catch (const numerical_error& e) {
                res.diverged = true;
                res.divergence_reason = e.what();
                break;
            }
            if (cfg.ema_decay > 0.0) ema_update(ema, params.values, cfg.ema_decay);
            ++step;
        }
        if (n_batches > 0) {
            res.log_steps.push_back(epoch);
            res.log_losses.push_back(epoch_loss / n_batches);
        }
    }

    res.checkpoint.spec_f = cfg.enc_f;
    res.checkpoint.spec_g = cfg.enc_g;
    res.checkpoint.params = std::move(params);
    res.checkpoint.ema = std::move(ema);
    res.checkpoint.seed = cfg.seed;
    res.checkpoint.step = step;
    return res;
}

TrainResult train_generator(const TrainConfig& cfg, const Matrix& states) {
    cfg.loss.validate();
    if (states.cols() != 1) throw invalid_input_error("train_generator: states must be 1D");
    TrainResult res;
    ParamVector params = init_params(cfg.enc_f, cfg.enc_f, false, cfg.seed);
    const std::vector<int> fb = encoder_blocks(params, "f");
    AdamState adam = AdamState::create(params.size(), cfg.lr);
    std::vector<double> ema;
    if (cfg.ema_decay > 0.0) ema = params.values;

    const int n = states.rows();
    const int batch = std::min(cfg.batch, n);
    const double h = cfg.jet_step;
    const long iters = cfg.iterations > 0 ? cfg.iterations : static_cast<long>(cfg.epochs) *
                                                                 std::max(1, n / batch);
    const int log_every = cfg.log_every > 0 ? cfg.log_every : std::max(1L, iters / 200);
    Rng batch_rng(derive_seed(cfg.seed, 1));

    double window_loss = 0.0;
    int window_count = 0;
    for (long it = 0; it < iters && !res.diverged; ++it) {
        Matrix bx(batch, 1), bp(batch, 1), bm(batch, 1);
        std::vector<double> drift(batch);
        for (int i = 0; i < batch; ++i) {
            const double x = states(static_cast<int>(batch_rng.below(n)), 0);
            bx(i, 0) = x;
            bp(i, 0) = x + h;
            bm(i, 0) = x - h;
            drift[i] = -potential_derivative(cfg.potential, x) / cfg.gamma;
        }
        try {
            Graph g;
            NodeId f = encoder_forward(g, cfg.enc_f, params, fb, g.constant(std::move(bx)));
            NodeId fp = encoder_forward(g, cfg.enc_f, params, fb, g.constant(std::move(bp)));
            NodeId fm = encoder_forward(g, cfg.enc_f, params, fb, g.constant(std::move(bm)));
            NodeId d1 = g.scale(g.sub(fp, fm), 1.0 / (2.0 * h));
            NodeId d2 = g.scale(g.sub(g.add(fp, fm), g.scale(f, 2.0)), 1.0 / (h * h));
            NodeId lf = g.add(g.scale_rows(d1, drift), g.scale(d2, cfg.kbt / cfg.gamma));
            NodeId loss = lora_generator_loss(g, f, lf, f, cfg.loss.generator_seq_nesting);
            const double lv = g.scalar(loss);
            if (!std::isfinite(lv)) {
                res.diverged = true;
                res.divergence_reason = "non-finite loss";
                break;
            }
            window_loss += lv;
            ++window_count;
            std::vector<double> grad(params.size(), 0.0);
            g.backward(loss, grad);
            adam_step(adam, params, grad);
        } catch (const numerical_error& e) {
            res.diverged = true;
            res.divergence_reason = e.what();
            break;
        }
        if (cfg.ema_decay > 0.0) ema_update(ema, params.values, cfg.ema_decay);
        if ((it + 1) % log_every == 0) {
            res.log_steps.push_back(it + 1);
            res.log_losses.push_back(window_loss / window_count);
            window_loss = 0.0;
            window_count = 0;
        }
    }

    res.checkpoint.spec_f = cfg.enc_f;
    res.checkpoint.params = std::move(params);
    res.checkpoint.ema = std::move(ema);
    res.checkpoint.seed = cfg.seed;
    res.checkpoint.step = iters;
    return res;
}

} // namespace klora
