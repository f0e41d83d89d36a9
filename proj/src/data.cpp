#include "flgn/data.hpp"

#include <cmath>
#include <string>

namespace flgn {

void validate(const DataConfig& cfg) {
    if (cfg.grid_h < 4 || cfg.grid_w < 4) {
        throw ConfigError("grid must be at least 4x4, got " + std::to_string(cfg.grid_h) + "x" +
                          std::to_string(cfg.grid_w));
    }
    if (cfg.frames_T < 2) throw ConfigError("frames_T must be >= 2");
    if (cfg.n_classes < 2) throw ConfigError("n_classes must be >= 2");
    if (cfg.blob_sigma <= 0.0) throw ConfigError("blob_sigma must be positive");
    if (cfg.speed < 0.0) throw ConfigError("speed must be non-negative");
}

namespace {

// Motion per class, cells per frame before the speed factor. Classes beyond
// the canonical five cycle through the four directions.
void class_velocity(int64_t label, double speed, double* dr, double* dc) {
    switch (label % 5) {
        case 0: *dr = -1.0; *dc = 0.0; break;  // up
        case 1: *dr = 1.0;  *dc = 0.0; break;  // down
        case 2: *dr = 0.0;  *dc = -1.0; break; // left
        case 3: *dr = 0.0;  *dc = 1.0; break;  // right
        default: *dr = 0.0; *dc = 0.0; break;  // static
    }
    *dr *= speed;
    *dc *= speed;
}

double toroidal_delta(double a, double b, double extent) {
    double d = std::fabs(a - b);
    d = std::fmod(d, extent);
    return std::min(d, extent - d);
}

void render_frame(const DataConfig& cfg, double cr, double cc, double* out) {
    const double inv = 1.0 / (2.0 * cfg.blob_sigma * cfg.blob_sigma);
    for (int64_t r = 0; r < cfg.grid_h; ++r) {
        const double dr = toroidal_delta(static_cast<double>(r), cr,
                                         static_cast<double>(cfg.grid_h));
        for (int64_t c = 0; c < cfg.grid_w; ++c) {
            const double dc = toroidal_delta(static_cast<double>(c), cc,
                                             static_cast<double>(cfg.grid_w));
            out[r * cfg.grid_w + c] = std::exp(-(dr * dr + dc * dc) * inv);
        }
    }
}

}  // namespace

std::vector<VideoSample> generate_dataset(const DataConfig& cfg, int64_t n, uint64_t seed) {
    validate(cfg);
    if (n < 1) throw PreconditionError("dataset size must be >= 1");
    RngStream root(seed, "dataset");
    std::vector<VideoSample> out;
    out.reserve(n);
    const int64_t dim = cfg.grid_h * cfg.grid_w;
    for (int64_t i = 0; i < n; ++i) {
        RngStream s = root.fork(static_cast<uint64_t>(i));
        VideoSample sample;
        sample.label = static_cast<int64_t>(s.next_below(static_cast<uint64_t>(cfg.n_classes)));
        const double r0 = s.uniform(1.0, static_cast<double>(cfg.grid_h - 1));
        const double c0 = s.uniform(1.0, static_cast<double>(cfg.grid_w - 1));
        double dr = 0.0, dc = 0.0;
        class_velocity(sample.label, cfg.speed, &dr, &dc);
        sample.x0 = make_tensor(cfg.frames_T, dim);
        for (int64_t f = 0; f < cfg.frames_T; ++f) {
            const double cr = std::fmod(r0 + f * dr + 16.0 * cfg.grid_h,
                                        static_cast<double>(cfg.grid_h));
            const double cc = std::fmod(c0 + f * dc + 16.0 * cfg.grid_w,
                                        static_cast<double>(cfg.grid_w));
            render_frame(cfg, cr, cc, sample.x0->data.data() + f * dim);
        }
        out.push_back(std::move(sample));
    }
    return out;
}

Tensor interpolant(const Tensor& x0, const Tensor& x1, double t) {
    if (!same_shape(x0, x1)) {
        throw ShapeError("interpolant: x0 and x1 shapes differ");
    }
    auto xt = make_tensor(x0->rows, x0->cols);
    const double a = 1.0 - t;
    for (int64_t i = 0; i < x0->size(); ++i) {
        xt->data[i] = a * x0->data[i] + t * x1->data[i];
    }
    return xt;
}

DiffusionBatch make_batch(const std::vector<VideoSample>& samples, int64_t batch_size,
                          TSampling ts, RngStream& stream, int64_t null_label,
                          double uncond_drop) {
    if (samples.empty()) throw PreconditionError("make_batch: empty sample list");
    if (batch_size < 1 || batch_size > static_cast<int64_t>(samples.size())) {
        throw PreconditionError("make_batch: batch_size " + std::to_string(batch_size) +
                                " exceeds pool of " + std::to_string(samples.size()));
    }
    // Partial Fisher-Yates over indices: a batch never repeats a sample.
    std::vector<int64_t> idx(samples.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int64_t>(i);
    for (int64_t i = 0; i < batch_size; ++i) {
        const uint64_t j = i + stream.next_below(idx.size() - static_cast<uint64_t>(i));
        std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
    }

    DiffusionBatch batch;
    for (int64_t b = 0; b < batch_size; ++b) {
        const VideoSample& s = samples[static_cast<size_t>(idx[static_cast<size_t>(b)])];
        Tensor x1 = make_tensor(s.x0->rows, s.x0->cols);
        for (auto& v : x1->data) v = stream.normal();
        const double t = ts.fixed ? ts.t : stream.uniform(kTMin, kTMax);
        int64_t label = s.label;
        if (uncond_drop > 0.0 && stream.next_unit() < uncond_drop) label = null_label;
        batch.x0.push_back(clone_values(s.x0));
        batch.xt.push_back(interpolant(s.x0, x1, t));
        batch.x1.push_back(std::move(x1));
        batch.t.push_back(t);
        batch.labels.push_back(label);
    }
    return batch;
}

DiffusionBatch make_batch(const std::vector<VideoSample>& samples, int64_t batch_size,
                          TSampling ts, uint64_t seed, int64_t null_label, double uncond_drop) {
    RngStream stream(seed, "batch");
    return make_batch(samples, batch_size, ts, stream, null_label, uncond_drop);
}

}  // namespace flgn
