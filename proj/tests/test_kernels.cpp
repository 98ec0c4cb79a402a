#include <doctest.h>

#include <omp.h>

#include <array>
#include <vector>

#include "trackattr/kernels.hpp"
#include "trackattr/rng.hpp"

using namespace trackattr;
using namespace trackattr::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

// Textbook direct convolution: walk every output element and sum the
// receptive field, bounds-checked per tap. No shared helpers with the
// production kernels.
void naive_conv2d(const std::vector<double>& x, const std::vector<double>& k,
                  const std::vector<double>& b, std::vector<double>& y, const Conv2dDims& d) {
    for (int n = 0; n < d.n; ++n)
        for (int oy = 0; oy < d.ho; ++oy)
            for (int ox = 0; ox < d.wo; ++ox)
                for (int co = 0; co < d.co; ++co) {
                    double acc = b[static_cast<std::size_t>(co)];
                    for (int ky = 0; ky < d.kh; ++ky)
                        for (int kx = 0; kx < d.kw; ++kx)
                            for (int ci = 0; ci < d.ci; ++ci) {
                                int iy = oy * d.stride + ky - d.pad_h;
                                int ix = ox * d.stride + kx - d.pad_w;
                                if (iy < 0 || iy >= d.h || ix < 0 || ix >= d.w) continue;
                                std::size_t xi =
                                    ((static_cast<std::size_t>(n) * d.h + iy) * d.w + ix) * d.ci +
                                    ci;
                                std::size_t ki =
                                    ((static_cast<std::size_t>(ky) * d.kw + kx) * d.ci + ci) *
                                        d.co +
                                    co;
                                acc += x[xi] * k[ki];
                            }
                    y[((static_cast<std::size_t>(n) * d.ho + oy) * d.wo + ox) * d.co + co] = acc;
                }
}

// Plain triple loop for y = xW + b.
void naive_dense(const std::vector<double>& x, const std::vector<double>& w,
                 const std::vector<double>& b, std::vector<double>& y, int n, int i, int o) {
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < o; ++c) {
            double acc = b[static_cast<std::size_t>(c)];
            for (int m = 0; m < i; ++m)
                acc += x[static_cast<std::size_t>(r) * i + m] * w[static_cast<std::size_t>(m) * o + c];
            y[static_cast<std::size_t>(r) * o + c] = acc;
        }
}

struct ConvCase {
    int n, h, w, ci, k, co, stride;
};

const std::vector<ConvCase> kConvCases = {
    {1, 4, 4, 1, 3, 1, 1}, {2, 5, 7, 2, 3, 3, 1}, {1, 6, 6, 1, 3, 2, 2},
    {3, 8, 8, 2, 5, 4, 1}, {2, 9, 5, 3, 3, 2, 2}, {1, 1, 1, 1, 1, 1, 1},
};

}  // namespace

TEST_CASE("conv2d forward matches the naive direct convolution") {
    Rng rng(71);
    for (const ConvCase& c : kConvCases) {
        Conv2dDims d = conv2d_dims(c.n, c.h, c.w, c.ci, c.k, c.k, c.co, c.stride);
        std::vector<double> x = random_vec(static_cast<std::size_t>(c.n) * c.h * c.w * c.ci, rng);
        std::vector<double> k =
            random_vec(static_cast<std::size_t>(c.k) * c.k * c.ci * c.co, rng);
        std::vector<double> b = random_vec(static_cast<std::size_t>(c.co), rng);
        std::size_t out_n = static_cast<std::size_t>(d.n) * d.ho * d.wo * d.co;
        std::vector<double> got(out_n), want(out_n);

        conv2d_forward_serial(x.data(), k.data(), b.data(), got.data(), d);
        naive_conv2d(x, k, b, want, d);
        for (std::size_t e = 0; e < out_n; ++e)
            CHECK(got[e] == doctest::Approx(want[e]).epsilon(1e-12));
    }
}

TEST_CASE("same padding preserves spatial size at stride 1 and halves it at 2") {
    Conv2dDims d1 = conv2d_dims(1, 9, 7, 1, 3, 3, 1, 1);
    CHECK(d1.ho == 9);
    CHECK(d1.wo == 7);
    Conv2dDims d2 = conv2d_dims(1, 8, 8, 1, 3, 3, 1, 2);
    CHECK(d2.ho == 4);
    CHECK(d2.wo == 4);
}

TEST_CASE("dense forward matches the naive triple loop") {
    Rng rng(72);
    for (auto [n, i, o] : std::vector<std::array<int, 3>>{{1, 1, 1}, {3, 5, 2}, {4, 8, 8}}) {
        std::vector<double> x = random_vec(static_cast<std::size_t>(n) * i, rng);
        std::vector<double> w = random_vec(static_cast<std::size_t>(i) * o, rng);
        std::vector<double> b = random_vec(static_cast<std::size_t>(o), rng);
        std::vector<double> got(static_cast<std::size_t>(n) * o), want(got);
        dense_forward_serial(x.data(), w.data(), b.data(), got.data(), n, i, o);
        naive_dense(x, w, b, want, n, i, o);
        for (std::size_t e = 0; e < got.size(); ++e)
            CHECK(got[e] == doctest::Approx(want[e]).epsilon(1e-12));
    }
}

TEST_CASE("backward kernels match finite differences of the forward") {
    Rng rng(73);
    const double h_step = 1e-6;

    SUBCASE("dense") {
        int n = 3, i = 4, o = 2;
        std::vector<double> x = random_vec(static_cast<std::size_t>(n) * i, rng);
        std::vector<double> w = random_vec(static_cast<std::size_t>(i) * o, rng);
        std::vector<double> b = random_vec(static_cast<std::size_t>(o), rng);
        std::vector<double> gy = random_vec(static_cast<std::size_t>(n) * o, rng);

        std::vector<double> gx(x.size()), gw(w.size()), gb(b.size());
        dense_backward_serial(x.data(), w.data(), gy.data(), gx.data(), gw.data(), gb.data(), n,
                              i, o);

        auto loss = [&](const std::vector<double>& xv, const std::vector<double>& wv,
                        const std::vector<double>& bv) {
            std::vector<double> y(static_cast<std::size_t>(n) * o);
            dense_forward_serial(xv.data(), wv.data(), bv.data(), y.data(), n, i, o);
            double s = 0.0;
            for (std::size_t e = 0; e < y.size(); ++e) s += y[e] * gy[e];
            return s;
        };
        for (std::size_t e = 0; e < x.size(); ++e) {
            std::vector<double> xp = x, xm = x;
            xp[e] += h_step;
            xm[e] -= h_step;
            CHECK(gx[e] ==
                  doctest::Approx((loss(xp, w, b) - loss(xm, w, b)) / (2 * h_step)).epsilon(1e-5));
        }
        for (std::size_t e = 0; e < w.size(); ++e) {
            std::vector<double> wp = w, wm = w;
            wp[e] += h_step;
            wm[e] -= h_step;
            CHECK(gw[e] ==
                  doctest::Approx((loss(x, wp, b) - loss(x, wm, b)) / (2 * h_step)).epsilon(1e-5));
        }
        for (std::size_t e = 0; e < b.size(); ++e) {
            std::vector<double> bp = b, bm = b;
            bp[e] += h_step;
            bm[e] -= h_step;
            CHECK(gb[e] ==
                  doctest::Approx((loss(x, w, bp) - loss(x, w, bm)) / (2 * h_step)).epsilon(1e-5));
        }
    }

    SUBCASE("conv2d") {
        Conv2dDims d = conv2d_dims(2, 5, 4, 2, 3, 3, 2, 1);
        std::vector<double> x = random_vec(static_cast<std::size_t>(d.n) * d.h * d.w * d.ci, rng);
        std::vector<double> k =
            random_vec(static_cast<std::size_t>(d.kh) * d.kw * d.ci * d.co, rng);
        std::vector<double> b = random_vec(static_cast<std::size_t>(d.co), rng);
        std::size_t out_n = static_cast<std::size_t>(d.n) * d.ho * d.wo * d.co;
        std::vector<double> gy = random_vec(out_n, rng);

        std::vector<double> gx(x.size()), gk(k.size()), gb(b.size());
        conv2d_backward_serial(x.data(), k.data(), gy.data(), gx.data(), gk.data(), gb.data(), d);

        auto loss = [&](const std::vector<double>& xv, const std::vector<double>& kv,
                        const std::vector<double>& bv) {
            std::vector<double> y(out_n);
            conv2d_forward_serial(xv.data(), kv.data(), bv.data(), y.data(), d);
            double s = 0.0;
            for (std::size_t e = 0; e < out_n; ++e) s += y[e] * gy[e];
            return s;
        };
        for (std::size_t e = 0; e < x.size(); ++e) {
            std::vector<double> xp = x, xm = x;
            xp[e] += h_step;
            xm[e] -= h_step;
            CHECK(gx[e] ==
                  doctest::Approx((loss(xp, k, b) - loss(xm, k, b)) / (2 * h_step)).epsilon(1e-5));
        }
        for (std::size_t e = 0; e < k.size(); ++e) {
            std::vector<double> kp = k, km = k;
            kp[e] += h_step;
            km[e] -= h_step;
            CHECK(gk[e] ==
                  doctest::Approx((loss(x, kp, b) - loss(x, km, b)) / (2 * h_step)).epsilon(1e-5));
        }
        for (std::size_t e = 0; e < b.size(); ++e) {
            std::vector<double> bp = b, bm = b;
            bp[e] += h_step;
            bm[e] -= h_step;
            CHECK(gb[e] ==
                  doctest::Approx((loss(x, k, bp) - loss(x, k, bm)) / (2 * h_step)).epsilon(1e-5));
        }
    }
}

TEST_CASE("null gradient outputs are skipped") {
    Rng rng(74);
    int n = 2, i = 3, o = 2;
    std::vector<double> x = random_vec(static_cast<std::size_t>(n) * i, rng);
    std::vector<double> w = random_vec(static_cast<std::size_t>(i) * o, rng);
    std::vector<double> gy = random_vec(static_cast<std::size_t>(n) * o, rng);
    std::vector<double> gw(w.size()), gb(static_cast<std::size_t>(o));
    dense_backward_serial(x.data(), w.data(), gy.data(), nullptr, gw.data(), gb.data(), n, i, o);
    std::vector<double> gw2(w.size());
    dense_backward_serial(x.data(), w.data(), gy.data(), nullptr, gw2.data(), nullptr, n, i, o);
    CHECK(gw == gw2);
}

TEST_CASE("parallel kernels are bit-identical to the serial reference") {
    int old_threads = omp_get_max_threads();
    omp_set_num_threads(2);

    Rng rng(75);
    for (const ConvCase& c : kConvCases) {
        Conv2dDims d = conv2d_dims(c.n, c.h, c.w, c.ci, c.k, c.k, c.co, c.stride);
        std::vector<double> x = random_vec(static_cast<std::size_t>(c.n) * c.h * c.w * c.ci, rng);
        std::vector<double> k =
            random_vec(static_cast<std::size_t>(c.k) * c.k * c.ci * c.co, rng);
        std::vector<double> b = random_vec(static_cast<std::size_t>(c.co), rng);
        std::size_t out_n = static_cast<std::size_t>(d.n) * d.ho * d.wo * d.co;

        std::vector<double> ys(out_n), yp(out_n);
        conv2d_forward_serial(x.data(), k.data(), b.data(), ys.data(), d);
        conv2d_forward_parallel(x.data(), k.data(), b.data(), yp.data(), d);
        CHECK(ys == yp);

        std::vector<double> gy = random_vec(out_n, rng);
        std::vector<double> gxs(x.size()), gks(k.size()), gbs(b.size());
        std::vector<double> gxp(x.size()), gkp(k.size()), gbp(b.size());
        conv2d_backward_serial(x.data(), k.data(), gy.data(), gxs.data(), gks.data(), gbs.data(),
                               d);
        conv2d_backward_parallel(x.data(), k.data(), gy.data(), gxp.data(), gkp.data(),
                                 gbp.data(), d);
        CHECK(gxs == gxp);
        CHECK(gks == gkp);
        CHECK(gbs == gbp);
    }

    for (auto [n, i, o] : std::vector<std::array<int, 3>>{{1, 1, 1}, {5, 9, 3}, {8, 16, 16}}) {
        std::vector<double> x = random_vec(static_cast<std::size_t>(n) * i, rng);
        std::vector<double> w = random_vec(static_cast<std::size_t>(i) * o, rng);
        std::vector<double> b = random_vec(static_cast<std::size_t>(o), rng);
        std::vector<double> ys(static_cast<std::size_t>(n) * o), yp(ys);
        dense_forward_serial(x.data(), w.data(), b.data(), ys.data(), n, i, o);
        dense_forward_parallel(x.data(), w.data(), b.data(), yp.data(), n, i, o);
        CHECK(ys == yp);

        std::vector<double> gy = random_vec(ys.size(), rng);
        std::vector<double> gxs(x.size()), gws(w.size()), gbs(b.size());
        std::vector<double> gxp(x.size()), gwp(w.size()), gbp(b.size());
        dense_backward_serial(x.data(), w.data(), gy.data(), gxs.data(), gws.data(), gbs.data(),
                              n, i, o);
        dense_backward_parallel(x.data(), w.data(), gy.data(), gxp.data(), gwp.data(),
                                gbp.data(), n, i, o);
        CHECK(gxs == gxp);
        CHECK(gws == gwp);
        CHECK(gbs == gbp);
    }

    omp_set_num_threads(old_threads);
}

TEST_CASE("mode switch routes the dispatching entry points") {
    Mode before = mode();
    set_mode(Mode::serial);
    CHECK(mode() == Mode::serial);

    Rng rng(76);
    int n = 2, i = 3, o = 2;
    std::vector<double> x = random_vec(static_cast<std::size_t>(n) * i, rng);
    std::vector<double> w = random_vec(static_cast<std::size_t>(i) * o, rng);
    std::vector<double> b = random_vec(static_cast<std::size_t>(o), rng);
    std::vector<double> y1(static_cast<std::size_t>(n) * o), y2(y1);
    dense_forward(x.data(), w.data(), b.data(), y1.data(), n, i, o);
    set_mode(Mode::parallel);
    CHECK(mode() == Mode::parallel);
    dense_forward(x.data(), w.data(), b.data(), y2.data(), n, i, o);
    CHECK(y1 == y2);
    set_mode(before);
}
