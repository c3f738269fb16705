"""Monte Carlo wave-function trajectories.

One adaptive step:

1. evolve the interaction-picture state with the non-Hermitian Hamiltonian
   over an accepted ODE step ``dtdid``,
2. apply the exact free propagator ``U(dtdid)`` and restart the picture at
   the new time,
3. normalize, compute the jump rates on the evolved state, draw a uniform
   number and jump if it falls below ``dp = dtdid * sum(rates)``,
4. shrink the next trial step if ``sum(rates) * dttry`` would exceed
   ``dplimit``,
5. record averages when an output instant has been passed.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigError, StepSizeError
from .integrate import OdeStepper, RngStream
from .statevec import ZERO_NORM, StateVector
from .system import Composite

#: initial trial step is INIT_FRACTION / highest frequency
INIT_FRACTION = 0.1


@dataclass
class TrajectoryParams:
    seed: int = 0
    eps: float = 1e-6
    dplimit: float = 0.1
    t_end: float = 1.0
    display_dt: float = 0.1
    dump_times: Sequence[float] = ()

    def __post_init__(self):
        if not 0 < self.dplimit < 1:
            raise ConfigError(f"dplimit must lie in (0, 1), got {self.dplimit}")
        if not self.eps > 0:
            raise ConfigError(f"eps must be positive, got {self.eps}")
        if not self.display_dt > 0:
            raise ConfigError(f"display_dt must be positive, got {self.display_dt}")
        if not self.t_end >= 0:
            raise ConfigError(f"t_end must be non-negative, got {self.t_end}")
        self.seed = int(self.seed)
        self.dump_times = tuple(sorted(float(t) for t in self.dump_times))

    def with_seed(self, seed: int) -> "TrajectoryParams":
        return TrajectoryParams(
            seed, self.eps, self.dplimit, self.t_end, self.display_dt, self.dump_times
        )

    def grid(self) -> np.ndarray:
        """Output instants ``0, display_dt, ...`` up to ``t_end``."""
        n = int(math.floor(self.t_end / self.display_dt + 1e-9))
        return self.display_dt * np.arange(n + 1)


@dataclass
class TrajectoryState:
    t: float
    psi: np.ndarray  # flat normalized amplitudes
    stepper: OdeStepper
    rng: RngStream
    picture_origin: float = 0.0
    dplimit: float = 0.1
    max_dttry: float = math.inf


@dataclass
class StepInfo:
    dtdid: float
    dp: float
    jump: Optional[int]
    norm_error: float


@dataclass
class TrajectoryResult:
    """Output rows (``t``, ``dtdid``, averages...) at the display instants."""

    rows: np.ndarray
    labels: list
    dumps: List[Tuple[float, np.ndarray]] = field(default_factory=list)
    dps: Optional[np.ndarray] = None
    norm_errors: Optional[np.ndarray] = None
    jumps: List[Tuple[float, int]] = field(default_factory=list)
    nsteps: int = 0

    @property
    def times(self) -> np.ndarray:
        return self.rows[:, 0]


def _amps(psi, total_dim):
    amps = psi.amps if isinstance(psi, StateVector) else np.asarray(psi)
    if amps.size != total_dim:
        raise ConfigError(f"initial state has {amps.size} amplitudes, system needs {total_dim}")
    amps = np.array(amps, dtype=complex).ravel()
    n = math.sqrt(np.vdot(amps, amps).real)
    if n < ZERO_NORM:
        raise ConfigError("initial state has zero norm")
    return amps / n


def init_dttry(sys: Composite, params: Optional[TrajectoryParams] = None, psi=None) -> float:
    """``0.1 / highest_frequency``, clamped to ``display_dt`` and to the jump budget of ``psi``."""
    dt = INIT_FRACTION / sys.highest_frequency()
    if params is not None:
        dt = min(dt, params.display_dt)
        if psi is not None:
            total = float(np.sum(sys.jump_rates(psi)))
            if total > 0:
                dt = min(dt, params.dplimit / total)
    return dt


def start(sys: Composite, psi0, params: TrajectoryParams) -> TrajectoryState:
    psi = _amps(psi0, sys.total_dim)
    dttry = init_dttry(sys, params, psi)
    return TrajectoryState(
        t=0.0,
        psi=psi,
        stepper=OdeStepper(eps=params.eps, dttry=dttry),
        rng=RngStream(params.seed),
        picture_origin=0.0,
        dplimit=params.dplimit,
        max_dttry=params.display_dt,
    )


def mcwf_step(traj: TrajectoryState, sys: Composite) -> StepInfo:
    """Advance ``traj`` by one adaptive step in place."""
    stepper = traj.stepper
    tau = traj.t - traj.picture_origin
    psi = sys.ode_step(traj.psi, tau, stepper)
    dtdid = stepper.dtdid
    sys.apply_U(dtdid, psi)
    traj.t += dtdid
    traj.picture_origin = traj.t

    n = math.sqrt(np.vdot(psi, psi).real)
    if n < ZERO_NORM:
        raise StepSizeError(f"state norm collapsed to {n:.3g} at t={traj.t:.6g}")
    psi /= n
    jump = None
    dp = 0.0
    if sys.channels:
        rates = sys.jump_rates(psi)
        total = float(rates.sum())
        dp = dtdid * total
        if dp >= 1.0:
            raise StepSizeError(
                f"jump probability {dp:.3g} >= 1 in one step at t={traj.t:.6g}; "
                "dplimit is far too large for this system"
            )
        if total > 0:
            eps = traj.rng.uniform()
            if eps < dp:
                cum = np.cumsum(dtdid * rates)
                jump = int(np.argmax(cum > eps))
                psi = sys.do_jump(jump, psi)
                rates = sys.jump_rates(psi)
                total = float(rates.sum())
        if total * stepper.dttry > traj.dplimit:
            stepper.dttry = traj.dplimit / total
    if stepper.dttry > traj.max_dttry:
        stepper.dttry = traj.max_dttry
    traj.psi = psi
    norm_error = abs(math.sqrt(np.vdot(psi, psi).real) - 1.0)
    return StepInfo(dtdid, dp, jump, norm_error)


def advance_to(traj: TrajectoryState, sys: Composite, t_final: float) -> List[StepInfo]:
    """Step until exactly ``t_final``, shortening only the last step."""
    infos = []
    tiny = 1e-14 * max(1.0, abs(t_final))
    while t_final - traj.t > tiny:
        traj.stepper.dttry = min(traj.stepper.dttry, t_final - traj.t)
        infos.append(mcwf_step(traj, sys))
    return infos


def run_trajectory(sys: Composite, psi0, params: TrajectoryParams, keep_stats: bool = False
                   ) -> TrajectoryResult:
    """Run one trajectory to ``params.t_end``.

    Records are taken at the end of the first step reaching each output
    instant (the step is not shortened), so the time column holds actual
    times. With ``keep_stats`` the per-step ``dp`` and norm errors are kept.
    """
    traj = start(sys, psi0, params)
    grid = params.grid()
    tol = 1e-12 * params.display_dt
    rows = [sys.display(0.0, 0.0, traj.psi)]
    dumps = []
    pending = list(params.dump_times)
    while pending and pending[0] <= tol:
        dumps.append((0.0, traj.psi.copy()))
        pending.pop(0)
    dps, norms, jumps = [], [], []
    nsteps = 0
    k = 1
    while k < len(grid) or pending:
        info = mcwf_step(traj, sys)
        nsteps += 1
        if keep_stats:
            dps.append(info.dp)
            norms.append(info.norm_error)
        if info.jump is not None:
            jumps.append((traj.t, info.jump))
        if k < len(grid) and traj.t + tol >= grid[k]:
            rows.append(sys.display(traj.t, info.dtdid, traj.psi))
            while k < len(grid) and traj.t + tol >= grid[k]:
                k += 1
        while pending and traj.t + tol >= pending[0]:
            dumps.append((traj.t, traj.psi.copy()))
            pending.pop(0)
    return TrajectoryResult(
        rows=np.array(rows),
        labels=sys.labels,
        dumps=dumps,
        dps=np.array(dps) if keep_stats else None,
        norm_errors=np.array(norms) if keep_stats else None,
        jumps=jumps,
        nsteps=nsteps,
    )


@dataclass
class EnsembleResult:
    """Means and standard errors over trajectories on the shared output grid.

    ``samples[j]`` holds the rows of trajectory ``j``; the time column of
    ``mean`` is the average of the actual record times.
    """

    mean: np.ndarray
    stderr: np.ndarray
    samples: np.ndarray
    labels: list
    max_dp: Optional[np.ndarray] = None  # per trajectory, steps after the first
    max_norm_error: Optional[np.ndarray] = None

    @property
    def n_traj(self) -> int:
        return self.samples.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.mean[:, 0]

    def subset(self, n: int) -> "EnsembleResult":
        """Statistics of the first ``n`` trajectories."""
        return ensemble_stats(self.samples[:n], self.labels)


def ensemble_stats(samples: np.ndarray, labels) -> EnsembleResult:
    samples = np.asarray(samples)
    n = samples.shape[0]
    mean = samples.mean(axis=0)
    if n > 1:
        se = samples.std(axis=0, ddof=1) / math.sqrt(n)
    else:
        se = np.zeros_like(mean)
    return EnsembleResult(mean, se, samples, labels)


def _as_factory(system) -> Callable[[], Composite]:
    if isinstance(system, Composite):
        return lambda: system
    return system


def _summary(result: TrajectoryResult, keep_stats: bool):
    if not keep_stats:
        return result.rows, None, None
    dp = float(result.dps[1:].max()) if result.dps.size > 1 else 0.0
    ne = float(result.norm_errors.max()) if result.norm_errors.size else 0.0
    return result.rows, dp, ne


def _run_one(factory, psi0, params, keep_stats=False):
    return _summary(run_trajectory(factory(), psi0, params, keep_stats), keep_stats)


def run_ensemble(system: Union[Composite, Callable[[], Composite]], psi0,
                 params: TrajectoryParams, n_traj: int, workers: int = 1,
                 keep_stats: bool = False, first_index: int = 0) -> EnsembleResult:
    """Average ``n_traj`` trajectories; trajectory ``j`` uses seed ``params.seed + j``.

    ``system`` is a composite or a zero-argument factory returning one. With
    ``workers > 1`` trajectories run in worker processes, each building its
    own composite; the factory must then be picklable. ``first_index``
    offsets the trajectory numbering, so that blocks run separately can be
    concatenated into one ensemble. With ``keep_stats`` the largest ``dp``
    (after the first step) and norm error of each trajectory are kept.
    """
    if n_traj < 1:
        raise ConfigError(f"n_traj must be at least 1, got {n_traj}")
    factory = _as_factory(system)
    seeds = [params.with_seed(params.seed + first_index + j) for j in range(n_traj)]
    if workers > 1 and n_traj > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(
                _run_one, [factory] * n_traj, [psi0] * n_traj, seeds, [keep_stats] * n_traj
            ))
        labels = factory().labels
    else:
        sys = factory()
        out = [_summary(run_trajectory(sys, psi0, p, keep_stats), keep_stats) for p in seeds]
        labels = sys.labels
    rows = [o[0] for o in out]
    shapes = {r.shape for r in rows}
    if len(shapes) != 1:
        raise RuntimeError(f"trajectories produced different output grids: {shapes}")
    result = ensemble_stats(np.stack(rows), labels)
    if keep_stats:
        result.max_dp = np.array([o[1] for o in out])
        result.max_norm_error = np.array([o[2] for o in out])
    return result


__all__ = [
    "EnsembleResult",
    "StepInfo",
    "TrajectoryParams",
    "TrajectoryResult",
    "TrajectoryState",
    "advance_to",
    "ensemble_stats",
    "init_dttry",
    "mcwf_step",
    "run_ensemble",
    "run_trajectory",
    "start",
]
