#include "r2upp/trainer.hpp"

#include <cmath>
#include <sstream>

namespace r2upp {

void adam_step(ParamStore& store, const TrainConfig& config) {
    for (auto& p : store.all()) {
        if (!p->trainable) continue;
        p->step += 1;
        const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(p->step));
        const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(p->step));
        for (size_t i = 0; i < p->value.data.size(); ++i) {
            const double g = p->grad.data[i];
            double& m = p->adam_m.data[i];
            double& v = p->adam_v.data[i];
            m = config.beta1 * m + (1.0 - config.beta1) * g;
            v = config.beta2 * v + (1.0 - config.beta2) * g * g;
            p->value.data[i] -=
                config.learning_rate * (m / bc1) / (std::sqrt(v / bc2) + config.eps_adam);
        }
    }
}

Tensor images_to_tensor(const std::vector<const data::Image*>& images) {
    if (images.empty()) throw ShapeError("images_to_tensor: empty batch");
    const int h = images[0]->h, w = images[0]->w;
    Tensor t(static_cast<int>(images.size()), 1, h, w);
    for (size_t n = 0; n < images.size(); ++n) {
        if (images[n]->h != h || images[n]->w != w)
            throw ShapeError("images_to_tensor: inconsistent image sizes");
        std::copy(images[n]->px.begin(), images[n]->px.end(),
                  t.data.begin() + static_cast<size_t>(n) * h * w);
    }
    return t;
}

namespace {

std::vector<double> head_weights(int n_heads, bool deep_supervision) {
    std::vector<double> eta(n_heads, deep_supervision ? 1.0 : 0.0);
    eta.back() = 1.0;
    return eta;
}

struct EvalPass {
    double loss = 0.0;
    double dice = 0.0;  // mean per-image ensemble dice
};

// One inference sweep computing both the supervised loss and the mean
// per-image ensemble dice; batching is bit-equivalent to per-image forwards.
EvalPass eval_pass(Model& model, const std::vector<data::ImageSample>& set, int batch_size,
                   bool deep_supervision, double threshold) {
    EvalPass out;
    size_t pos = 0;
    while (pos < set.size()) {
        const size_t end = std::min(pos + batch_size, set.size());
        std::vector<const data::Image*> imgs, masks;
        for (size_t i = pos; i < end; ++i) {
            imgs.push_back(&set[i].image);
            masks.push_back(&set[i].mask);
        }
        Tensor x = images_to_tensor(imgs);
        Tensor y = images_to_tensor(masks);
        ForwardResult fwd = forward(model.plan, model.arch, model.store, x, /*train=*/false);
        const std::vector<double> eta =
            head_weights(static_cast<int>(fwd.heads.size()), deep_supervision);
        for (size_t i = 0; i < fwd.heads.size(); ++i)
            if (eta[i] != 0.0)
                out.loss += eta[i] * hybrid_loss_value(y, fwd.heads[i]->value) * (end - pos);

        std::vector<Tensor> outs;
        for (const autograd::Var& h : fwd.heads) outs.push_back(h->value);
        Tensor prob = ensemble(outs);
        const size_t px = static_cast<size_t>(prob.h()) * prob.w();
        for (size_t i = pos; i < end; ++i) {
            std::vector<double> pred(prob.data.begin() + (i - pos) * px,
                                     prob.data.begin() + (i - pos + 1) * px);
            out.dice += metrics::dice(set[i].mask.px, metrics::binarize(pred, threshold));
        }
        pos = end;
    }
    out.loss /= static_cast<double>(set.size());
    out.dice /= static_cast<double>(set.size());
    return out;
}

double dataset_dice(Model& model, const std::vector<data::ImageSample>& set, int batch_size,
                    double threshold) {
    return eval_pass(model, set, batch_size, true, threshold).dice;
}

struct Snapshot {
    std::vector<Tensor> values;
};

Snapshot snapshot(const ParamStore& store) {
    Snapshot s;
    for (const auto& p : store.all()) s.values.push_back(p->value);
    return s;
}

void restore(ParamStore& store, const Snapshot& s) {
    for (size_t i = 0; i < store.all().size(); ++i) store.all()[i]->value = s.values[i];
}

}  // namespace

FitResult fit(Model& model, const std::vector<data::ImageSample>& train_set,
              const std::vector<data::ImageSample>& val_set, const TrainConfig& config) {
    config.validate();
    if (train_set.empty() || val_set.empty()) throw data::DataError("fit: empty dataset split");

    Rng rng(config.seed + 0x5eed);
    FitResult result;
    Snapshot best = snapshot(model.store);
    double best_val = 1e300;
    int bad_epochs = 0;

    std::vector<size_t> order(train_set.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

        double train_loss = 0.0;
        size_t pos = 0;
        while (pos < order.size()) {
            const size_t end = std::min(pos + config.batch_size, order.size());
            std::vector<const data::Image*> imgs, masks;
            for (size_t i = pos; i < end; ++i) {
                imgs.push_back(&train_set[order[i]].image);
                masks.push_back(&train_set[order[i]].mask);
            }
            Tensor x = images_to_tensor(imgs);
            Tensor y = images_to_tensor(masks);

            model.store.zero_grad();
            ForwardResult fwd = forward(model.plan, model.arch, model.store, x, /*train=*/true);
            autograd::Var loss = total_loss(
                y, fwd.heads,
                head_weights(static_cast<int>(fwd.heads.size()), config.deep_supervision));
            autograd::backward(loss);
            adam_step(model.store, config);

            train_loss += loss->value.data[0] * static_cast<double>(end - pos);
            pos = end;
        }
        train_loss /= static_cast<double>(order.size());

        EvalPass val = eval_pass(model, val_set, config.batch_size, config.deep_supervision, 0.5);
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = train_loss;
        rec.val_loss = val.loss;
        rec.val_dice = val.dice;
        result.history.push_back(rec);

        if (rec.val_loss < best_val) {
            best_val = rec.val_loss;
            best = snapshot(model.store);
            result.best_epoch = epoch;
            bad_epochs = 0;
        } else {
            ++bad_epochs;
        }

        if (config.train_dice_stop > 0.0) {
            result.final_train_dice =
                &train_set == &val_set
                    ? rec.val_dice
                    : dataset_dice(model, train_set, config.batch_size, 0.5);
            if (result.final_train_dice >= config.train_dice_stop) {
                best = snapshot(model.store);  // keep the model that reached the target
                result.best_epoch = epoch;
                break;
            }
        }
        if (bad_epochs >= config.patience) break;
    }

    result.final_values = snapshot(model.store).values;
    restore(model.store, best);
    result.best_val_loss = best_val;
    if (config.train_dice_stop == 0.0)
        result.final_train_dice = dataset_dice(model, train_set, config.batch_size, 0.5);
    return result;
}

data::Image predict_probability(Model& model, const data::Image& image, EvalMode mode, int q) {
    std::vector<const data::Image*> one{&image};
    Tensor x = images_to_tensor(one);
    ForwardResult fwd = forward(model.plan, model.arch, model.store, x, /*train=*/false);
    Tensor prob;
    if (mode == EvalMode::Ensemble) {
        std::vector<Tensor> outs;
        for (const autograd::Var& h : fwd.heads) outs.push_back(h->value);
        prob = ensemble(outs);
    } else {
        int idx = -1;
        for (size_t i = 0; i < fwd.head_depths.size(); ++i)
            if (fwd.head_depths[i] == q) idx = static_cast<int>(i);
        if (idx < 0) throw ConfigError("predict: no head at depth " + std::to_string(q));
        prob = fwd.heads[idx]->value;
    }
    data::Image out(image.h, image.w);
    out.px.assign(prob.data.begin(), prob.data.end());
    return out;
}

MetricSummary evaluate(Model& model, const std::vector<data::ImageSample>& dataset, EvalMode mode,
                       int q, double threshold) {
    MetricSummary summary;
    for (const data::ImageSample& s : dataset) {
        data::Image prob = predict_probability(model, s.image, mode, q);
        summary.per_image.push_back(
            metrics::all_metrics(s.mask.px, metrics::binarize(prob.px, threshold)));
    }
    const double n = static_cast<double>(summary.per_image.size());
    auto fields = {&metrics::MetricRow::dice, &metrics::MetricRow::iou,
                   &metrics::MetricRow::accuracy, &metrics::MetricRow::sensitivity,
                   &metrics::MetricRow::specificity};
    for (auto f : fields) {
        double mean = 0.0;
        for (const auto& r : summary.per_image) mean += r.*f;
        mean /= n;
        double var = 0.0;
        for (const auto& r : summary.per_image) var += (r.*f - mean) * (r.*f - mean);
        summary.mean.*f = mean;
        summary.sd.*f = std::sqrt(var / n);
    }
    return summary;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
    std::ostringstream out;
    out.precision(12);
    out << "epoch,train_loss,val_loss,val_dice\n";
    for (const EpochRecord& r : history)
        out << r.epoch << "," << r.train_loss << "," << r.val_loss << "," << r.val_dice << "\n";
    return out.str();
}

}  // namespace r2upp
