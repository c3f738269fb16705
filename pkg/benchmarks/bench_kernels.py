"""Compare the compiled and pure-Python kernel backends.

Times one right-hand-side evaluation, one adaptive step and one full
trajectory on a pumped particle coupled to a lossy mode.

    python3 benchmarks/bench_kernels.py --resolution 128 --cutoff 6
"""

import argparse
import time

import numpy as np

from qtraj import elements as el
from qtraj import kernels
from qtraj.integrate import OdeStepper
from qtraj.mcwf import TrajectoryParams, advance_to, run_trajectory, start
from qtraj.statevec import direct_product, fock_state, wave_packet
from qtraj.system import Composite


def build(backend, resolution, cutoff):
    part = el.PumpedMovingParticle(0.01, resolution, 0.5, el.ModeFunction.parse("cos:1"))
    mode = el.LossyMode(0.0, 40.0, cutoff)
    inter = el.ParticleOrthogonalToCavity(mode, part, -2.0)
    return Composite([mode, part], [(inter, (0, 1))], backend=backend)


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench(backend, args):
    sys = build(backend, args.resolution, args.cutoff)
    psi0 = direct_product(fock_state(0, args.cutoff), wave_packet(-2.4, 30.0, 0.2, args.resolution))
    params = TrajectoryParams(seed=1, t_end=args.t_end, display_dt=0.05)
    # the very first steps from a product state are tiny while empty levels fill,
    # so single steps are timed from a slightly evolved state
    traj = start(sys, psi0, params)
    advance_to(traj, sys, 0.05)
    psi, dttry = traj.psi, traj.stepper.dttry
    out = np.zeros_like(psi)

    def rhs():
        for _ in range(args.calls):
            sys.apply_H(0.3, psi, out)

    def step():
        for _ in range(args.calls):
            sys.ode_step(psi, 0.0, OdeStepper(eps=1e-6, dttry=dttry))

    return {
        "rhs": best_of(rhs, args.repeat) / args.calls,
        "step": best_of(step, args.repeat) / args.calls,
        "trajectory": best_of(lambda: run_trajectory(sys, psi0, params), 1),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--resolution", type=int, default=128)
    parser.add_argument("--cutoff", type=int, default=6)
    parser.add_argument("--calls", type=int, default=50)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--t-end", type=float, default=0.5)
    args = parser.parse_args(argv)

    backends = kernels.available_backends()
    results = {b: bench(b, args) for b in backends}
    print(f"dimension {args.resolution * args.cutoff}, backends: {', '.join(backends)}")
    print(f"{'':12s}" + "".join(f"{b:>14s}" for b in backends)
          + ("    speedup" if len(backends) > 1 else ""))
    for key in ("rhs", "step", "trajectory"):
        row = f"{key:12s}" + "".join(f"{results[b][key] * 1e3:11.3f} ms" for b in backends)
        if "python" in results and "cython" in results:
            row += f"    {results['python'][key] / results['cython'][key]:7.1f}x"
        print(row)


if __name__ == "__main__":
    main()
