#include "trackattr/kernels.hpp"

#include <omp.h>

#include <atomic>
#include <cstring>

#include "trackattr/error.hpp"

namespace trackattr::kernels {

namespace {

std::atomic<Mode> g_mode{Mode::parallel};

// Per-iteration bodies shared by the serial and OpenMP drivers. The parallel
// variants only split the outer index across threads, so results match the
// serial reference bit for bit.

void conv_fwd_item(int n, const double* x, const double* k, const double* b, double* y,
                   const Conv2dDims& d) {
    for (int ho = 0; ho < d.ho; ++ho)
        for (int wo = 0; wo < d.wo; ++wo) {
            double* yp = y + ((static_cast<long>(n) * d.ho + ho) * d.wo + wo) * d.co;
            for (int co = 0; co < d.co; ++co) yp[co] = b ? b[co] : 0.0;
            for (int i = 0; i < d.kh; ++i) {
                int hi = ho * d.stride + i - d.pad_h;
                if (hi < 0 || hi >= d.h) continue;
                for (int j = 0; j < d.kw; ++j) {
                    int wi = wo * d.stride + j - d.pad_w;
                    if (wi < 0 || wi >= d.w) continue;
                    const double* xp = x + ((static_cast<long>(n) * d.h + hi) * d.w + wi) * d.ci;
                    const double* kp = k + ((static_cast<long>(i) * d.kw + j) * d.ci) * d.co;
                    for (int ci = 0; ci < d.ci; ++ci) {
                        double xv = xp[ci];
                        const double* krow = kp + static_cast<long>(ci) * d.co;
                        for (int co = 0; co < d.co; ++co) yp[co] += xv * krow[co];
                    }
                }
            }
        }
}

void conv_bwd_input_item(int n, const double* k, const double* gy, double* gx,
                         const Conv2dDims& d) {
    for (int hi = 0; hi < d.h; ++hi)
        for (int wi = 0; wi < d.w; ++wi) {
            double* gxp = gx + ((static_cast<long>(n) * d.h + hi) * d.w + wi) * d.ci;
            for (int ci = 0; ci < d.ci; ++ci) gxp[ci] = 0.0;
            for (int i = 0; i < d.kh; ++i) {
                int t = hi + d.pad_h - i;
                if (t < 0 || t % d.stride != 0) continue;
                int ho = t / d.stride;
                if (ho >= d.ho) continue;
                for (int j = 0; j < d.kw; ++j) {
                    int u = wi + d.pad_w - j;
                    if (u < 0 || u % d.stride != 0) continue;
                    int wo = u / d.stride;
                    if (wo >= d.wo) continue;
                    const double* gyp =
                        gy + ((static_cast<long>(n) * d.ho + ho) * d.wo + wo) * d.co;
                    const double* kp = k + ((static_cast<long>(i) * d.kw + j) * d.ci) * d.co;
                    for (int ci = 0; ci < d.ci; ++ci) {
                        const double* krow = kp + static_cast<long>(ci) * d.co;
                        double acc = 0.0;
                        for (int co = 0; co < d.co; ++co) acc += krow[co] * gyp[co];
                        gxp[ci] += acc;
                    }
                }
            }
        }
}

// One value of f = (i*kw + j)*Ci + ci owns one row of gk.
void conv_bwd_weight_row(int f, const double* x, const double* gy, double* gk,
                         const Conv2dDims& d) {
    int ci = f % d.ci;
    int j = (f / d.ci) % d.kw;
    int i = f / (d.ci * d.kw);
    double* gkp = gk + static_cast<long>(f) * d.co;
    for (int co = 0; co < d.co; ++co) gkp[co] = 0.0;
    for (int n = 0; n < d.n; ++n)
        for (int ho = 0; ho < d.ho; ++ho) {
            int hi = ho * d.stride + i - d.pad_h;
            if (hi < 0 || hi >= d.h) continue;
            for (int wo = 0; wo < d.wo; ++wo) {
                int wi = wo * d.stride + j - d.pad_w;
                if (wi < 0 || wi >= d.w) continue;
                double xv = x[((static_cast<long>(n) * d.h + hi) * d.w + wi) * d.ci + ci];
                const double* gyp = gy + ((static_cast<long>(n) * d.ho + ho) * d.wo + wo) * d.co;
                for (int co = 0; co < d.co; ++co) gkp[co] += xv * gyp[co];
            }
        }
}

void conv_bwd_bias(const double* gy, double* gb, const Conv2dDims& d) {
    for (int co = 0; co < d.co; ++co) gb[co] = 0.0;
    long rows = static_cast<long>(d.n) * d.ho * d.wo;
    for (long r = 0; r < rows; ++r) {
        const double* gyp = gy + r * d.co;
        for (int co = 0; co < d.co; ++co) gb[co] += gyp[co];
    }
}

void dense_fwd_item(int n, const double* x, const double* w, const double* b, double* y, int ni,
                    int no) {
    double* yp = y + static_cast<long>(n) * no;
    for (int o = 0; o < no; ++o) yp[o] = b ? b[o] : 0.0;
    const double* xp = x + static_cast<long>(n) * ni;
    for (int i = 0; i < ni; ++i) {
        double xv = xp[i];
        const double* wp = w + static_cast<long>(i) * no;
        for (int o = 0; o < no; ++o) yp[o] += xv * wp[o];
    }
}

void dense_bwd_input_item(int n, const double* w, const double* gy, double* gx, int ni, int no) {
    const double* gyp = gy + static_cast<long>(n) * no;
    double* gxp = gx + static_cast<long>(n) * ni;
    for (int i = 0; i < ni; ++i) {
        const double* wp = w + static_cast<long>(i) * no;
        double acc = 0.0;
        for (int o = 0; o < no; ++o) acc += wp[o] * gyp[o];
        gxp[i] = acc;
    }
}

void dense_bwd_weight_row(int i, const double* x, const double* gy, double* gw, int n, int ni,
                          int no) {
    double* gwp = gw + static_cast<long>(i) * no;
    for (int o = 0; o < no; ++o) gwp[o] = 0.0;
    for (int b = 0; b < n; ++b) {
        double xv = x[static_cast<long>(b) * ni + i];
        const double* gyp = gy + static_cast<long>(b) * no;
        for (int o = 0; o < no; ++o) gwp[o] += xv * gyp[o];
    }
}

void dense_bwd_bias(const double* gy, double* gb, int n, int no) {
    for (int o = 0; o < no; ++o) gb[o] = 0.0;
    for (int b = 0; b < n; ++b) {
        const double* gyp = gy + static_cast<long>(b) * no;
        for (int o = 0; o < no; ++o) gb[o] += gyp[o];
    }
}

}  // namespace

void set_mode(Mode m) { g_mode.store(m); }
Mode mode() { return g_mode.load(); }

namespace {

// With one thread the OpenMP fork/join is pure overhead; the serial body is
// bit-identical, so take it directly.
bool run_parallel() { return mode() == Mode::parallel && omp_get_max_threads() > 1; }

}  // namespace

Conv2dDims conv2d_dims(int n, int h, int w, int ci, int kh, int kw, int co, int stride) {
    if (stride < 1) throw ShapeError("conv2d stride must be >= 1");
    Conv2dDims d;
    d.n = n;
    d.h = h;
    d.w = w;
    d.ci = ci;
    d.kh = kh;
    d.kw = kw;
    d.co = co;
    d.stride = stride;
    d.ho = (h + stride - 1) / stride;
    d.wo = (w + stride - 1) / stride;
    int total_h = (d.ho - 1) * stride + kh - h;
    int total_w = (d.wo - 1) * stride + kw - w;
    d.pad_h = total_h > 0 ? total_h / 2 : 0;
    d.pad_w = total_w > 0 ? total_w / 2 : 0;
    return d;
}

void dense_forward_serial(const double* x, const double* w, const double* b, double* y, int n,
                          int i, int o) {
    for (int r = 0; r < n; ++r) dense_fwd_item(r, x, w, b, y, i, o);
}

void dense_forward_parallel(const double* x, const double* w, const double* b, double* y, int n,
                            int i, int o) {
#pragma omp parallel for schedule(static)
    for (int r = 0; r < n; ++r) dense_fwd_item(r, x, w, b, y, i, o);
}

void dense_backward_serial(const double* x, const double* w, const double* gy, double* gx,
                           double* gw, double* gb, int n, int i, int o) {
    if (gx)
        for (int r = 0; r < n; ++r) dense_bwd_input_item(r, w, gy, gx, i, o);
    if (gw)
        for (int r = 0; r < i; ++r) dense_bwd_weight_row(r, x, gy, gw, n, i, o);
    if (gb) dense_bwd_bias(gy, gb, n, o);
}

void dense_backward_parallel(const double* x, const double* w, const double* gy, double* gx,
                             double* gw, double* gb, int n, int i, int o) {
    if (gx) {
#pragma omp parallel for schedule(static)
        for (int r = 0; r < n; ++r) dense_bwd_input_item(r, w, gy, gx, i, o);
    }
    if (gw) {
#pragma omp parallel for schedule(static)
        for (int r = 0; r < i; ++r) dense_bwd_weight_row(r, x, gy, gw, n, i, o);
    }
    if (gb) dense_bwd_bias(gy, gb, n, o);
}

void conv2d_forward_serial(const double* x, const double* k, const double* b, double* y,
                           const Conv2dDims& d) {
    for (int n = 0; n < d.n; ++n) conv_fwd_item(n, x, k, b, y, d);
}

void conv2d_forward_parallel(const double* x, const double* k, const double* b, double* y,
                             const Conv2dDims& d) {
#pragma omp parallel for schedule(static)
    for (int n = 0; n < d.n; ++n) conv_fwd_item(n, x, k, b, y, d);
}

void conv2d_backward_serial(const double* x, const double* k, const double* gy, double* gx,
                            double* gk, double* gb, const Conv2dDims& d) {
    if (gx)
        for (int n = 0; n < d.n; ++n) conv_bwd_input_item(n, k, gy, gx, d);
    if (gk) {
        int rows = d.kh * d.kw * d.ci;
        for (int f = 0; f < rows; ++f) conv_bwd_weight_row(f, x, gy, gk, d);
    }
    if (gb) conv_bwd_bias(gy, gb, d);
}

void conv2d_backward_parallel(const double* x, const double* k, const double* gy, double* gx,
                              double* gk, double* gb, const Conv2dDims& d) {
    if (gx) {
#pragma omp parallel for schedule(static)
        for (int n = 0; n < d.n; ++n) conv_bwd_input_item(n, k, gy, gx, d);
    }
    if (gk) {
        int rows = d.kh * d.kw * d.ci;
#pragma omp parallel for schedule(static)
        for (int f = 0; f < rows; ++f) conv_bwd_weight_row(f, x, gy, gk, d);
    }
    if (gb) conv_bwd_bias(gy, gb, d);
}

void dense_forward(const double* x, const double* w, const double* b, double* y, int n, int i,
                   int o) {
    if (run_parallel())
        dense_forward_parallel(x, w, b, y, n, i, o);
    else
        dense_forward_serial(x, w, b, y, n, i, o);
}

void dense_backward(const double* x, const double* w, const double* gy, double* gx, double* gw,
                    double* gb, int n, int i, int o) {
    if (run_parallel())
        dense_backward_parallel(x, w, gy, gx, gw, gb, n, i, o);
    else
        dense_backward_serial(x, w, gy, gx, gw, gb, n, i, o);
}

void conv2d_forward(const double* x, const double* k, const double* b, double* y,
                    const Conv2dDims& d) {
    if (run_parallel())
        conv2d_forward_parallel(x, k, b, y, d);
    else
        conv2d_forward_serial(x, k, b, y, d);
}

void conv2d_backward(const double* x, const double* k, const double* gy, double* gx, double* gk,
                     double* gb, const Conv2dDims& d) {
    if (run_parallel())
        conv2d_backward_parallel(x, k, gy, gx, gk, gb, d);
    else
        conv2d_backward_serial(x, k, gy, gx, gk, gb, d);
}

}  // namespace trackattr::kernels
