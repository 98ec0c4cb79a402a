#pragma once

// Compute kernels for the dense and convolution layers. Each kernel has a
// serial reference implementation and an OpenMP variant with the same loop
// nest, so every output element is written by exactly one iteration and the
// inner accumulation order is identical; the two variants are bit-equal.

namespace trackattr::kernels {

enum class Mode { serial, parallel };

void set_mode(Mode m);
Mode mode();

struct Conv2dDims {
    int n = 0;           // batch
    int h = 0, w = 0;    // input spatial
    int ci = 0;          // input channels
    int kh = 0, kw = 0;  // kernel spatial
    int co = 0;          // output channels
    int stride = 1;
    int ho = 0, wo = 0;  // output spatial
    int pad_h = 0, pad_w = 0;
};

// Output spatial size and padding for same-convolution at the given stride.
Conv2dDims conv2d_dims(int n, int h, int w, int ci, int kh, int kw, int co, int stride);

// y[N,O] = x[N,I] * W[I,O] + b[O]
void dense_forward(const double* x, const double* w, const double* b, double* y, int n, int i,
                   int o);
// Any of gx, gw, gb may be null to skip that gradient. gw/gb are overwritten.
void dense_backward(const double* x, const double* w, const double* gy, double* gx, double* gw,
                    double* gb, int n, int i, int o);

// x NHWC, k [kh,kw,Ci,Co], y [N,Ho,Wo,Co]
void conv2d_forward(const double* x, const double* k, const double* b, double* y,
                    const Conv2dDims& d);
void conv2d_backward(const double* x, const double* k, const double* gy, double* gx, double* gk,
                     double* gb, const Conv2dDims& d);

// Serial reference entry points, used by the equivalence test and benchmark.
void dense_forward_serial(const double* x, const double* w, const double* b, double* y, int n,
                          int i, int o);
void dense_backward_serial(const double* x, const double* w, const double* gy, double* gx,
                           double* gw, double* gb, int n, int i, int o);
void conv2d_forward_serial(const double* x, const double* k, const double* b, double* y,
                           const Conv2dDims& d);
void conv2d_backward_serial(const double* x, const double* k, const double* gy, double* gx,
                            double* gk, double* gb, const Conv2dDims& d);

void dense_forward_parallel(const double* x, const double* w, const double* b, double* y, int n,
                            int i, int o);
void dense_backward_parallel(const double* x, const double* w, const double* gy, double* gx,
                             double* gw, double* gb, int n, int i, int o);
void conv2d_forward_parallel(const double* x, const double* k, const double* b, double* y,
                             const Conv2dDims& d);
void conv2d_backward_parallel(const double* x, const double* k, const double* gy, double* gx,
                              double* gk, double* gb, const Conv2dDims& d);

}  // namespace trackattr::kernels
