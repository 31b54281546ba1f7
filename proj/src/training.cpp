#include "tkat/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "tkat/rng.hpp"

namespace tkat {

void TrainConfig::validate() const {
    if (learning_rate < 0.0) throw std::invalid_argument("TrainConfig: negative learning rate");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch size < 1");
    if (max_epochs < 1) throw std::invalid_argument("TrainConfig: max epochs < 1");
    if (early_stop_patience < 1 || plateau_patience < 1) {
        throw std::invalid_argument("TrainConfig: patience values must be positive");
    }
    if (plateau_factor <= 0.0 || plateau_factor >= 1.0) {
        throw std::invalid_argument("TrainConfig: plateau factor must be in (0,1)");
    }
}

Tensor mse_loss(const Tensor& predicted, const Tensor& truth) {
    if (predicted.shape() != truth.shape()) {
        throw std::invalid_argument("mse_loss: shape mismatch " + shape_str(predicted.shape()) +
                                    " vs " + shape_str(truth.shape()));
    }
    return mean(square(sub(predicted, truth)));
}

double r_squared(std::span<const double> predicted, std::span<const double> truth) {
    const size_t n = truth.size();
    if (predicted.size() != n) throw std::invalid_argument("r_squared: length mismatch");
    if (n < 2) throw std::invalid_argument("r_squared: needs at least 2 points");
    double mean_y = 0.0;
    for (double y : truth) mean_y += y;
    mean_y /= static_cast<double>(n);
    double ss_res = 0.0, ss_tot = 0.0;
    for (size_t i = 0; i < n; ++i) {
        ss_res += (predicted[i] - truth[i]) * (predicted[i] - truth[i]);
        ss_tot += (truth[i] - mean_y) * (truth[i] - mean_y);
    }
    if (ss_tot <= 0.0) throw std::invalid_argument("r_squared: zero variance in truth");
    return 1.0 - ss_res / ss_tot;
}

Adam::Adam(const std::vector<Tensor*>& params, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Tensor* p : params) {
        m_.emplace_back(static_cast<size_t>(p->size()), 0.0);
        v_.emplace_back(static_cast<size_t>(p->size()), 0.0);
    }
}

void Adam::step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
                double lr) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
        throw std::invalid_argument("Adam: parameter list changed size");
    }
    ++t_;
    const double corr1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double corr2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t p = 0; p < params.size(); ++p) {
        if (!grads[p]) continue;  // parameter unused by this loss
        Tensor& param = *params[p];
        const Tensor& grad = *grads[p];
        if (grad.shape() != param.shape()) {
            throw std::invalid_argument("Adam: gradient shape " + shape_str(grad.shape()) +
                                        " does not match parameter " + shape_str(param.shape()));
        }
        std::vector<double> next = param.to_vector();
        const double* g = grad.data();
        std::vector<double>& m = m_[p];
        std::vector<double>& v = v_[p];
        for (size_t i = 0; i < next.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double mhat = m[i] / corr1;
            const double vhat = v[i] / corr2;
            next[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
        param = Tensor::from_vector(param.shape(), std::move(next)).set_requires_grad(true);
    }
}

std::string to_string(CallbackAction a) {
    switch (a) {
        case CallbackAction::Continue: return "continue";
        case CallbackAction::ReduceLr: return "reduce_lr";
        case CallbackAction::StopRestoreBest: return "stop_restore_best";
    }
    return "?";
}

PlateauCallback::PlateauCallback(int plateau_patience, int early_stop_patience)
    : plateau_patience_(plateau_patience),
      stop_patience_(early_stop_patience),
      best_(std::numeric_limits<double>::infinity()) {}

CallbackAction PlateauCallback::update(double val_loss) {
    if (val_loss < best_) {
        best_ = val_loss;
        plateau_stall_ = 0;
        stop_stall_ = 0;
        last_improved_ = true;
        return CallbackAction::Continue;
    }
    last_improved_ = false;
    ++plateau_stall_;
    ++stop_stall_;
    if (stop_stall_ >= stop_patience_) return CallbackAction::StopRestoreBest;
    if (plateau_stall_ >= plateau_patience_) {
        plateau_stall_ = 0;
        return CallbackAction::ReduceLr;
    }
    return CallbackAction::Continue;
}

Batch assemble_batch(std::span<const WindowSample> samples, std::span<const int64_t> indices) {
    if (indices.empty()) throw std::invalid_argument("assemble_batch: empty index list");
    const WindowSample& first = samples[static_cast<size_t>(indices[0])];
    const int64_t b = static_cast<int64_t>(indices.size());
    const int64_t p = first.past.dim(0), nf = first.past.dim(1);
    const int64_t h = first.future_known.dim(0), nk = first.future_known.dim(1);
    std::vector<double> past(static_cast<size_t>(b * p * nf));
    std::vector<double> fut(static_cast<size_t>(b * h * nk));
    std::vector<double> tgt(static_cast<size_t>(b * h));
    for (int64_t i = 0; i < b; ++i) {
        const WindowSample& s = samples[static_cast<size_t>(indices[static_cast<size_t>(i)])];
        std::copy_n(s.past.data(), p * nf, past.data() + i * p * nf);
        std::copy_n(s.future_known.data(), h * nk, fut.data() + i * h * nk);
        std::copy_n(s.target.data(), h, tgt.data() + i * h);
    }
    Batch out;
    out.past = Tensor::from_vector({b, p, nf}, std::move(past));
    out.future = Tensor::from_vector({b, h, nk}, std::move(fut));
    out.target = Tensor::from_vector({b, h}, std::move(tgt));
    return out;
}

std::vector<double> predict_matrix(ForecastModel& model, std::span<const WindowSample> samples,
                                   int batch_size) {
    const int64_t n = static_cast<int64_t>(samples.size());
    const int64_t h = samples.empty() ? 0 : samples[0].target.dim(0);
    std::vector<double> out(static_cast<size_t>(n * h));
    std::vector<int64_t> idx;
    for (int64_t start = 0; start < n; start += batch_size) {
        const int64_t count = std::min<int64_t>(batch_size, n - start);
        idx.resize(static_cast<size_t>(count));
        for (int64_t i = 0; i < count; ++i) idx[static_cast<size_t>(i)] = start + i;
        Batch batch = assemble_batch(samples, idx);
        Tensor pred = model.forward(batch.past, batch.future);
        std::copy_n(pred.data(), count * h, out.data() + start * h);
    }
    return out;
}

std::vector<double> target_matrix(std::span<const WindowSample> samples) {
    const int64_t n = static_cast<int64_t>(samples.size());
    const int64_t h = samples.empty() ? 0 : samples[0].target.dim(0);
    std::vector<double> out(static_cast<size_t>(n * h));
    for (int64_t i = 0; i < n; ++i) {
        std::copy_n(samples[static_cast<size_t>(i)].target.data(), h, out.data() + i * h);
    }
    return out;
}

namespace {

double mse_of(std::span<const double> pred, std::span<const double> truth) {
    double acc = 0.0;
    for (size_t i = 0; i < truth.size(); ++i) {
        acc += (pred[i] - truth[i]) * (pred[i] - truth[i]);
    }
    return acc / static_cast<double>(truth.size());
}

TestMetrics compute_metrics(std::span<const double> pred, std::span<const double> truth,
                            int64_t horizon) {
    TestMetrics m;
    const int64_t n = static_cast<int64_t>(truth.size()) / horizon;
    std::vector<double> col_pred(static_cast<size_t>(n)), col_truth(static_cast<size_t>(n));
    for (int64_t k = 0; k < horizon; ++k) {
        double sq = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            col_pred[static_cast<size_t>(i)] = pred[static_cast<size_t>(i * horizon + k)];
            col_truth[static_cast<size_t>(i)] = truth[static_cast<size_t>(i * horizon + k)];
            const double e = col_pred[static_cast<size_t>(i)] - col_truth[static_cast<size_t>(i)];
            sq += e * e;
        }
        m.r2_per_step.push_back(r_squared(col_pred, col_truth));
        m.rmse_per_step.push_back(std::sqrt(sq / static_cast<double>(n)));
    }
    double acc = 0.0;
    for (double r : m.r2_per_step) acc += r;
    m.r2 = acc / static_cast<double>(horizon);
    m.r2_flat = r_squared(pred, truth);
    return m;
}

}  // namespace

TrainResult train_loop(ForecastModel& model, const SplitDataset& data, const TrainConfig& cfg) {
    cfg.validate();
    if (data.train.empty() || data.val.empty() || data.test.empty()) {
        throw std::invalid_argument("train_loop: all three splits must be non-empty");
    }
    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    auto named = named_params(model);
    std::vector<Tensor*> slots;
    slots.reserve(named.size());
    for (auto& [name, t] : named) slots.push_back(t);
    Adam optimizer(slots);

    Rng shuffle_rng(mix_seed(cfg.seed, fnv1a("shuffle")));
    PlateauCallback callback(cfg.plateau_patience, cfg.early_stop_patience);

    const int64_t n_train = static_cast<int64_t>(data.train.size());
    std::vector<int64_t> order(static_cast<size_t>(n_train));
    for (int64_t i = 0; i < n_train; ++i) order[static_cast<size_t>(i)] = i;

    const std::vector<double> val_truth = target_matrix(data.val);

    double lr = cfg.learning_rate;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> best_snapshot;
    auto snapshot = [&] {
        best_snapshot.clear();
        for (Tensor* t : slots) best_snapshot.push_back(t->to_vector());
    };
    auto restore = [&] {
        for (size_t i = 0; i < slots.size(); ++i) {
            *slots[i] = Tensor::from_vector(slots[i]->shape(), best_snapshot[i])
                            .set_requires_grad(true);
        }
    };
    snapshot();  // epoch-0 weights are the fallback

    TrainResult result;
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double train_loss_acc = 0.0;
        try {
            for (int64_t start = 0; start < n_train; start += cfg.batch_size) {
                const int64_t count = std::min<int64_t>(cfg.batch_size, n_train - start);
                Batch batch = assemble_batch(
                    data.train, std::span<const int64_t>(order.data() + start,
                                                         static_cast<size_t>(count)));
                Tape tape;
                Tensor loss = mse_loss(model.forward(batch.past, batch.future), batch.target);
                GradMap grads = tape.backward(loss);
                std::vector<const Tensor*> grad_ptrs;
                grad_ptrs.reserve(slots.size());
                for (Tensor* t : slots) grad_ptrs.push_back(grads.find(*t));
                optimizer.step(slots, grad_ptrs, lr);
                train_loss_acc += loss.value() * static_cast<double>(count);
            }
        } catch (const TrainTimeout&) {
            throw;
        } catch (const std::runtime_error& e) {
            throw std::runtime_error("training diverged at epoch " + std::to_string(epoch) +
                                     ": " + e.what());
        }
        const double train_loss = train_loss_acc / static_cast<double>(n_train);

        const std::vector<double> val_pred = predict_matrix(model, data.val, cfg.batch_size);
        const double val_loss = mse_of(val_pred, val_truth);
        const CallbackAction action = callback.update(val_loss);
        if (callback.last_improved()) {
            best_val = val_loss;
            result.best_epoch = epoch;
            snapshot();
        }
        result.history.push_back({epoch, train_loss, val_loss, lr, to_string(action)});
        if (cfg.verbose) {
            std::printf("epoch %3d  train %.6f  val %.6f  lr %.2e  %s\n", epoch, train_loss,
                        val_loss, lr, to_string(action).c_str());
        }
        if (action == CallbackAction::ReduceLr) lr *= cfg.plateau_factor;
        if (action == CallbackAction::StopRestoreBest) break;
        if (cfg.time_budget_s > 0.0 && elapsed() > cfg.time_budget_s) {
            throw TrainTimeout("training exceeded its wall-time budget of " +
                               std::to_string(cfg.time_budget_s) + "s");
        }
    }

    restore();
    result.best_val = best_val;

    const std::vector<double> test_pred = predict_matrix(model, data.test, cfg.batch_size);
    const std::vector<double> test_truth = target_matrix(data.test);
    result.test = compute_metrics(test_pred, test_truth, data.test[0].target.dim(0));
    result.test.n_params = count_parameters(model);
    result.test.wall_time_s = elapsed();
    return result;
}

void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "epoch,train_loss,val_loss,lr,action\n";
    char buf[128];
    for (const EpochRecord& r : history) {
        std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g,%.10g,%s\n", r.epoch, r.train_loss,
                      r.val_loss, r.lr, r.action.c_str());
        out << buf;
    }
}

nlohmann::json metrics_to_json(const TestMetrics& m) {
    return nlohmann::json{{"r2_mean", m.r2},
                          {"r2_flat", m.r2_flat},
                          {"r2_per_step", m.r2_per_step},
                          {"rmse_per_step", m.rmse_per_step},
                          {"n_params", m.n_params},
                          {"wall_time_s", m.wall_time_s}};
}

}  // namespace tkat
