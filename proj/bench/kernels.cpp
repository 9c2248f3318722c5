// Serial reference kernels against their OpenMP versions at the default volume size.

#include <benchmark/benchmark.h>

#include "octnav/phantom.hpp"
#include "octnav/projection.hpp"
#include "octnav/slicing.hpp"

using namespace octnav;

namespace {

const IoctVolume& volume() {
    static const IoctVolume v = render_volume(default_scene());
    return v;
}

PlaneSpec oblique() { return tool_aligned_plane(0.35, 1300, 1250, volume().geometry()); }

void BM_render_serial(benchmark::State& st) {
    const PhantomScene s = default_scene();
    for (auto _ : st) benchmark::DoNotOptimize(render_volume_serial(s));
}
void BM_render_omp(benchmark::State& st) {
    const PhantomScene s = default_scene();
    for (auto _ : st) benchmark::DoNotOptimize(render_volume(s));
}

void BM_projection_serial(benchmark::State& st) {
    const auto op = ProjectionOp(st.range(0));
    for (auto _ : st) benchmark::DoNotOptimize(axial_projection_serial(volume(), op));
}
void BM_projection_omp(benchmark::State& st) {
    const auto op = ProjectionOp(st.range(0));
    for (auto _ : st) benchmark::DoNotOptimize(axial_projection(volume(), op));
}

void BM_slice_serial(benchmark::State& st) {
    const PlaneSpec p = oblique();
    for (auto _ : st) benchmark::DoNotOptimize(virtual_bscan_serial(volume(), p));
}
void BM_slice_omp(benchmark::State& st) {
    const PlaneSpec p = oblique();
    for (auto _ : st) benchmark::DoNotOptimize(virtual_bscan(volume(), p));
}

}  // namespace

BENCHMARK(BM_render_serial)->Unit(benchmark::kMillisecond)->Iterations(2);
BENCHMARK(BM_render_omp)->Unit(benchmark::kMillisecond)->Iterations(2);
BENCHMARK(BM_projection_serial)->Arg(0)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_projection_omp)->Arg(0)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_slice_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_slice_omp)->Unit(benchmark::kMillisecond);

int main(int argc, char** argv) {
    benchmark::Initialize(&argc, argv);
    if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
    volume();  // render the shared volume outside the timed regions
    benchmark::RunSpecifiedBenchmarks();
    benchmark::Shutdown();
    return 0;
}
