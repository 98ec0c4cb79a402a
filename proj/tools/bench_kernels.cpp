// Times the serial and OpenMP kernel variants on training-shaped workloads
// and checks the outputs stay bit-equal while timing.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

#include "trackattr/kernels.hpp"
#include "trackattr/rng.hpp"

using namespace trackattr;
namespace K = trackattr::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warm up caches and the thread pool
    auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r) fn();
    auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] != b[i]) return false;
    }
    return true;
}

struct Case {
    const char* name;
    double serial_ms = 0.0;
    double parallel_ms = 0.0;
    bool equal = false;
};

void report(const Case& c) {
    std::printf("%-22s serial %9.3f ms  parallel %9.3f ms  speedup %5.2fx  %s\n", c.name,
                c.serial_ms, c.parallel_ms, c.serial_ms / c.parallel_ms,
                c.equal ? "bit-equal" : "MISMATCH");
}

}  // namespace

int main() {
    constexpr int reps = 10;
    bool all_equal = true;

    {
        const int n = 64, i = 1024, o = 256;
        auto x = random_vec(static_cast<std::size_t>(n) * i, 1);
        auto w = random_vec(static_cast<std::size_t>(i) * o, 2);
        auto b = random_vec(o, 3);
        std::vector<double> ys(static_cast<std::size_t>(n) * o), yp(ys.size());
        Case c{"dense forward"};
        c.serial_ms =
            time_ms([&] { K::dense_forward_serial(x.data(), w.data(), b.data(), ys.data(), n, i, o); },
                    reps);
        c.parallel_ms = time_ms(
            [&] { K::dense_forward_parallel(x.data(), w.data(), b.data(), yp.data(), n, i, o); },
            reps);
        c.equal = bit_equal(ys, yp);
        all_equal = all_equal && c.equal;
        report(c);
    }
    {
        const int n = 64, i = 1024, o = 256;
        auto x = random_vec(static_cast<std::size_t>(n) * i, 4);
        auto w = random_vec(static_cast<std::size_t>(i) * o, 5);
        auto gy = random_vec(static_cast<std::size_t>(n) * o, 6);
        std::vector<double> gxs(x.size()), gws(w.size()), gbs(o);
        std::vector<double> gxp(x.size()), gwp(w.size()), gbp(o);
        Case c{"dense backward"};
        c.serial_ms = time_ms(
            [&] {
                K::dense_backward_serial(x.data(), w.data(), gy.data(), gxs.data(), gws.data(),
                                         gbs.data(), n, i, o);
            },
            reps);
        c.parallel_ms = time_ms(
            [&] {
                K::dense_backward_parallel(x.data(), w.data(), gy.data(), gxp.data(), gwp.data(),
                                           gbp.data(), n, i, o);
            },
            reps);
        c.equal = bit_equal(gxs, gxp) && bit_equal(gws, gwp) && bit_equal(gbs, gbp);
        all_equal = all_equal && c.equal;
        report(c);
    }

    K::Conv2dDims d = K::conv2d_dims(32, 32, 32, 8, 3, 3, 16, 1);
    auto x = random_vec(static_cast<std::size_t>(d.n) * d.h * d.w * d.ci, 7);
    auto k = random_vec(static_cast<std::size_t>(d.kh) * d.kw * d.ci * d.co, 8);
    auto b = random_vec(static_cast<std::size_t>(d.co), 9);
    auto gy = random_vec(static_cast<std::size_t>(d.n) * d.ho * d.wo * d.co, 10);
    {
        std::vector<double> ys(gy.size()), yp(gy.size());
        Case c{"conv2d forward"};
        c.serial_ms =
            time_ms([&] { K::conv2d_forward_serial(x.data(), k.data(), b.data(), ys.data(), d); },
                    reps);
        c.parallel_ms =
            time_ms([&] { K::conv2d_forward_parallel(x.data(), k.data(), b.data(), yp.data(), d); },
                    reps);
        c.equal = bit_equal(ys, yp);
        all_equal = all_equal && c.equal;
        report(c);
    }
    {
        std::vector<double> gxs(x.size()), gks(k.size()), gbs(b.size());
        std::vector<double> gxp(x.size()), gkp(k.size()), gbp(b.size());
        Case c{"conv2d backward"};
        c.serial_ms = time_ms(
            [&] {
                K::conv2d_backward_serial(x.data(), k.data(), gy.data(), gxs.data(), gks.data(),
                                          gbs.data(), d);
            },
            reps);
        c.parallel_ms = time_ms(
            [&] {
                K::conv2d_backward_parallel(x.data(), k.data(), gy.data(), gxp.data(), gkp.data(),
                                            gbp.data(), d);
            },
            reps);
        c.equal = bit_equal(gxs, gxp) && bit_equal(gks, gkp) && bit_equal(gbs, gbp);
        all_equal = all_equal && c.equal;
        report(c);
    }

    if (!all_equal) {
        std::printf("serial and parallel outputs differ\n");
        return 1;
    }
    return 0;
}
