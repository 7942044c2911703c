"""Time the numba kernels against their numpy twins.

Run ``python3 benchmarks/bench_kernels.py [--repeat N]``.  Each case checks
that both backends agree before reporting per-call times.
"""

import argparse
import time

import numpy as np

from crystalwulff import kernels, load_preset, random_norm
from crystalwulff.crystal import cone_fan, cone_volumes, offset_faces
from crystalwulff.harness import PerturbationFamily
from crystalwulff.projection import ProjectionProblem, project_to_family


def _time(fn, repeat):
    fn()  # warm-up (JIT compile on the numba path)
    t0 = time.perf_counter()
    for _ in range(repeat):
        out = fn()
    return (time.perf_counter() - t0) / repeat, out


def cases():
    cube = load_preset("cube")
    rnd = random_norm(3, np.random.default_rng(3), n_sigmas=24)
    a = np.random.default_rng(4).uniform(-0.05, 0.05, cube.N)
    E, _ = PerturbationFamily("vertex-jitter", 0.1, seed=1).generate(cube, 0)
    fan = cone_fan(cube, a)
    pts = np.random.default_rng(5).normal(size=(200_000, 3))
    ar = np.random.default_rng(6).uniform(-0.03, 0.03, rnd.N)
    return {
        "offset_faces cube": lambda: offset_faces(cube, a).areas,
        "offset_faces 24-sigma": lambda: offset_faces(rnd, ar).areas,
        "cone_volumes jitter": lambda: cone_volumes(E, fan),
        "max_affine 2e5 pts": lambda: kernels.max_affine(pts, rnd.sigmas, np.ones(rnd.N)),
        "project jitter": lambda: project_to_family(ProjectionProblem(cube, E, eta=0.2)).a,
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=50)
    args = ap.parse_args(argv)
    print(f"{'case':<24} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8}")
    for name, fn in cases().items():
        res = {}
        for b in ("numba", "numpy"):
            kernels.set_backend(b)
            res[b] = _time(fn, args.repeat)
        kernels.set_backend("numba")
        ref, alt = np.asarray(res["numba"][1]), np.asarray(res["numpy"][1])
        if not np.allclose(ref, alt, rtol=1e-9, atol=1e-12):
            raise SystemExit(f"{name}: backends disagree")
        tn, tp = res["numba"][0], res["numpy"][0]
        print(f"{name:<24} {1e3 * tn:10.3f} {1e3 * tp:10.3f} {tp / tn:8.1f}")


if __name__ == "__main__":
    main()
