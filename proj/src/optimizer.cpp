#include "mtseg/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "mtseg/io_util.hpp"
#include "mtseg/kernels.hpp"
#include "mtseg/layers.hpp"
#include "mtseg/rng.hpp"

namespace mtseg {

void TrainConfig::validate() const {
    if (batch_size < 1) throw DataError("train config: batch_size must be >= 1");
    if (!(lr_start > 0.0f) || !(lr_min > 0.0f))
        throw DataError("train config: learning rates must be positive");
    if (lr_min > lr_start) throw DataError("train config: lr_min must be <= lr_start");
    if (!(lr_decay > 0.0f && lr_decay < 1.0f))
        throw DataError("train config: lr_decay must be in (0,1)");
    if (epochs < 1) throw DataError("train config: epochs must be >= 1");
    if (max_steps < 0) throw DataError("train config: max_steps must be >= 0");
    if (smooth_window < 1 || plateau_windows < 1)
        throw DataError("train config: plateau parameters must be >= 1");
    if (window_steps < 0) throw DataError("train config: window_steps must be >= 0");
    if (!(min_improvement >= 0.0 && min_improvement < 1.0))
        throw DataError("train config: min_improvement must be in [0,1)");
}

AdamState AdamState::init_for(const std::vector<ParamView>& views) {
    AdamState s;
    s.t = 0;
    s.m.reserve(views.size());
    s.v.reserve(views.size());
    for (const auto& view : views) {
        s.m.emplace_back(view.len, 0.0f);
        s.v.emplace_back(view.len, 0.0f);
    }
    return s;
}

void adam_step(std::vector<ParamView>& views, AdamState& state, const AdamConfig& cfg) {
    if (state.m.size() != views.size() || state.v.size() != views.size())
        throw DataError("adam state does not match parameter views");
    for (size_t i = 0; i < views.size(); ++i) {
        const ParamView& view = views[i];
        if (state.m[i].size() != view.len || state.v[i].size() != view.len)
            throw DataError("adam buffer length mismatch for " + view.name);
        for (size_t k = 0; k < view.len; ++k)
            if (!std::isfinite(view.g[k]))
                throw NumericalError("non-finite gradient in " + view.name + " at index " +
                                     std::to_string(k));
    }

    state.t += 1;
    kernels::AdamScalars s;
    s.lr = cfg.lr;
    s.beta1 = cfg.beta1;
    s.beta2 = cfg.beta2;
    const double b1t = std::pow(double(cfg.beta1), double(state.t));
    const double b2t = std::pow(double(cfg.beta2), double(state.t));
    s.bias1 = float(1.0 / (1.0 - b1t));
    s.bias2 = float(1.0 / (1.0 - b2t));
    // Denominator is the bias-corrected root plus eps*sqrt(1 - beta2^t), so the
    // epsilon handed to the kernel carries that factor.
    s.eps = float(double(cfg.eps) * std::sqrt(1.0 - b2t));

    const auto& ops = kernels::active();
    for (size_t i = 0; i < views.size(); ++i)
        ops.adam_step(views[i].p, views[i].g, state.m[i].data(), state.v[i].data(),
                      views[i].len, s);
}

std::string loss_csv_header() { return "step,lr,loss_components,loss_fingertips,loss_total"; }

std::string loss_csv_row(const StepRecord& r) {
    return std::to_string(r.step) + "," + io::format_float(r.lr) + "," +
           io::format_float(r.loss_comp) + "," + io::format_float(r.loss_tip) + "," +
           io::format_float(r.loss_total);
}

namespace {

struct Snapshot {
    std::vector<std::vector<float>> buffers;
    AdamState adam;
    TrainMeta meta;
    int64_t step = 0;
};

Snapshot take_snapshot(Network& net, const AdamState& adam, const TrainMeta& meta,
                       int64_t step) {
    Snapshot s;
    for (const auto& view : net.param_views())
        s.buffers.emplace_back(view.p, view.p + view.len);
    for (const auto& l : net.layers())
        if (l.def.bn) {
            s.buffers.emplace_back(l.stats.mean);
            s.buffers.emplace_back(l.stats.var);
        }
    s.adam = adam;
    s.meta = meta;
    s.step = step;
    return s;
}

void restore_snapshot(Network& net, AdamState& adam, TrainMeta& meta, const Snapshot& s) {
    size_t at = 0;
    for (auto& view : net.param_views()) {
        std::copy(s.buffers[at].begin(), s.buffers[at].end(), view.p);
        ++at;
    }
    for (auto& l : net.layers())
        if (l.def.bn) {
            l.stats.mean = s.buffers[at++];
            l.stats.var = s.buffers[at++];
        }
    adam = s.adam;
    meta = s.meta;
}

}  // namespace

TrainResult train_loop(Network& net, const std::vector<TrainSample>& dataset,
                       const TrainConfig& cfg, const TrainCallbacks& callbacks,
                       const ResumeState* resume) {
    cfg.validate();
    if (dataset.empty()) throw DataError("train_loop: dataset is empty");
    const NetworkSpec& spec = net.spec();
    for (const auto& s : dataset)
        if (s.input.h != spec.input_h || s.input.w != spec.input_w ||
            s.input.c != spec.in_channels)
            throw DataError("train_loop: sample shape " + s.input.shape_str() +
                            " does not match the network input");

    const int n = int(dataset.size());
    const int bs = std::min(cfg.batch_size, n);
    const int64_t batches_per_epoch = std::max(1, n / cfg.batch_size);
    int64_t total_steps = int64_t(cfg.epochs) * batches_per_epoch;
    if (cfg.max_steps > 0) total_steps = std::min(total_steps, cfg.max_steps);

    const int64_t window_steps = cfg.window_steps > 0 ? cfg.window_steps : batches_per_epoch;

    auto views = net.param_views();
    AdamState adam = resume ? resume->adam : AdamState::init_for(views);
    if (adam.m.size() != views.size())
        throw DataError("train_loop: resume state does not match the network");

    TrainMeta meta;
    int64_t start_step = 0;
    if (resume) {
        meta = resume->meta;
        start_step = int64_t(meta.iteration);
        if (meta.seed != cfg.seed)
            throw DataError("train_loop: resume seed does not match the config");
    } else {
        meta.seed = cfg.seed;
        meta.lr = cfg.lr_start;
        meta.best_smoothed = std::numeric_limits<double>::infinity();
        meta.bad_windows = 0;
    }

    TrainResult result;
    if (total_steps > start_step) result.history.reserve(size_t(total_steps - start_step));

    std::deque<float> tail(meta.loss_tail.begin(), meta.loss_tail.end());
    const bool use_augment = cfg.augment && bool(callbacks.augment);

    auto write_csv = [&] {
        if (cfg.out_dir.empty()) return;
        std::filesystem::create_directories(cfg.out_dir);
        std::string csv = loss_csv_header() + "\n";
        for (const auto& r : result.history) csv += loss_csv_row(r) + "\n";
        io::write_file_atomic(cfg.out_dir / "loss.csv", csv);
    };
    auto write_checkpoint = [&](int64_t step) {
        if (cfg.out_dir.empty()) return std::filesystem::path{};
        std::filesystem::create_directories(cfg.out_dir);
        meta.iteration = uint64_t(step);
        meta.loss_tail.assign(tail.begin(), tail.end());
        auto path = cfg.out_dir / "model.ckpt";
        save_checkpoint(path, net, meta, &adam);
        return path;
    };

    Snapshot good = take_snapshot(net, adam, meta, start_step);

    int64_t step = start_step;
    bool stop = false;
    std::string stop_message;

    for (int64_t epoch = start_step / batches_per_epoch;
         !stop && step < total_steps && epoch < int64_t(cfg.epochs); ++epoch) {
        std::vector<int> order(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) order[size_t(i)] = i;
        Rng shuffle_rng(Rng::key(cfg.seed, 31, uint64_t(epoch)));
        shuffle_rng.shuffle(order);

        double epoch_loss = 0;
        int64_t epoch_steps = 0;

        for (int64_t b = step % batches_per_epoch; b < batches_per_epoch && step < total_steps;
             ++b) {
            Tensor4 input(bs, spec.in_channels, spec.input_h, spec.input_w);
            ClassMap comp(bs, spec.input_h, spec.input_w);
            ClassMap tip(bs, spec.input_h, spec.input_w);
            for (int j = 0; j < bs; ++j) {
                const int src = order[size_t((b * bs + j) % n)];
                const TrainSample* sample = &dataset[size_t(src)];
                TrainSample scratch;
                if (use_augment) {
                    scratch = callbacks.augment(
                        *sample, Rng::key(cfg.seed, 41, uint64_t(epoch), uint64_t(b * bs + j)));
                    sample = &scratch;
                }
                std::copy(sample->input.v.begin(), sample->input.v.end(),
                          input.v.begin() + size_t(j) * sample->input.size());
                std::copy(sample->comp.v.begin(), sample->comp.v.end(),
                          comp.v.begin() + size_t(j) * sample->comp.size());
                std::copy(sample->tip.v.begin(), sample->tip.v.end(),
                          tip.v.begin() + size_t(j) * sample->tip.size());
            }

            Network::TrainCache cache;
            auto out = net.forward_train(input, cache);
            auto xc = softmax_xent(out.comp_logits, comp);
            auto xt = softmax_xent(out.tip_logits, tip);
            const float total = xc.loss + xt.loss;

            auto abort_diverged = [&](const std::string& why) {
                restore_snapshot(net, adam, meta, good);
                tail.assign(meta.loss_tail.begin(), meta.loss_tail.end());
                result.diverged = true;
                stop = true;
                stop_message = why + " at step " + std::to_string(step + 1) +
                               "; restored state from step " + std::to_string(good.step);
                step = good.step;
            };
            if (!std::isfinite(total)) {
                abort_diverged("non-finite loss");
                break;
            }

            net.zero_grads();
            net.backward(cache, &xc.grad_logits, &xt.grad_logits);
            AdamConfig ac = cfg.adam;
            ac.lr = meta.lr;
            try {
                adam_step(views, adam, ac);
            } catch (const NumericalError& e) {
                abort_diverged(std::string(e.what()));
                break;
            }

            ++step;
            ++epoch_steps;
            epoch_loss += double(total);

            StepRecord rec{step, meta.lr, xc.loss, xt.loss, total};
            result.history.push_back(rec);
            if (callbacks.on_step) callbacks.on_step(rec);

            tail.push_back(total);
            while (int(tail.size()) > cfg.smooth_window) tail.pop_front();

            if (step % window_steps == 0) {
                double smoothed = 0;
                for (float v : tail) smoothed += double(v);
                smoothed /= double(tail.size());
                if (smoothed < meta.best_smoothed * (1.0 - cfg.min_improvement)) {
                    meta.best_smoothed = smoothed;
                    meta.bad_windows = 0;
                } else if (++meta.bad_windows >= uint32_t(cfg.plateau_windows)) {
                    meta.lr = std::max(meta.lr * cfg.lr_decay, cfg.lr_min);
                    meta.bad_windows = 0;
                }
            }
        }

        if (stop) break;
        if (callbacks.on_epoch && epoch_steps > 0)
            callbacks.on_epoch(int(epoch), epoch_loss / double(epoch_steps), meta.lr);

        meta.loss_tail.assign(tail.begin(), tail.end());
        good = take_snapshot(net, adam, meta, step);
        write_csv();
        if (cfg.checkpoint_every_epochs > 0 && (epoch + 1) % cfg.checkpoint_every_epochs == 0)
            result.checkpoint_path = write_checkpoint(step);
    }

    result.steps_run = step - start_step;
    result.message = stop_message;
    result.checkpoint_path = write_checkpoint(step);
    write_csv();
    return result;
}

}  // namespace mtseg
