"""Killed diffusion on the strip: simulation, survival estimates, rate fits.

The process clock matches the heat equation with a full Laplacian, so the
diffusion coefficient is sqrt(2) per coordinate (twice a probabilist's
Brownian motion). Kills happen at the transverse walls only, with a per-step
Brownian-bridge crossing correction against each wall.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadStart,
    CheckpointMissing,
    InsufficientSignal,
    StepTooLarge,
    TooFewSurvivors,
)
from .geometry import MetricField

__all__ = [
    "SdeSpec",
    "PathEnsemble",
    "SurvivalEstimate",
    "RateFit",
    "sde_from_metric",
    "simulate_killed",
    "survival_estimate",
    "pointwise_rate",
    "conditional_distribution",
]

_CHUNK = 1 << 16
_SQRT2 = math.sqrt(2.0)


@dataclass(eq=False)
class SdeSpec:
    """Drift and diffusion fields of the strip diffusion.

    Outside the curvature support the drift vanishes identically and the
    diffusion is the constant sqrt(2) pair; inside, fields are tabulated on
    the metric grid and interpolated bilinearly.
    """

    a: float
    flat: bool
    support: float           # |x1| beyond which the fields are exactly flat
    x1: np.ndarray = None
    x2: np.ndarray = None
    b1: np.ndarray = None
    b2: np.ndarray = None
    inv_f: np.ndarray = None

    def _bilinear(self, table, p1, p2):
        h1 = self.x1[1] - self.x1[0]
        h2 = self.x2[1] - self.x2[0]
        s = np.clip((p1 - self.x1[0]) / h1, 0.0, self.x1.size - 1.001)
        t = np.clip((p2 - self.x2[0]) / h2, 0.0, self.x2.size - 1.001)
        i = s.astype(np.int64)
        j = t.astype(np.int64)
        fs = s - i
        ft = t - j
        return (
            table[i, j] * (1 - fs) * (1 - ft)
            + table[i + 1, j] * fs * (1 - ft)
            + table[i, j + 1] * (1 - fs) * ft
            + table[i + 1, j + 1] * fs * ft
        )

    def fields(self, p1, p2):
        """(b1, b2, sigma1) at the given positions; sigma2 is constant."""
        if self.flat:
            z = np.zeros_like(p1)
            return z, z, np.full_like(p1, _SQRT2)
        b1 = np.zeros_like(p1)
        b2 = np.zeros_like(p1)
        s1 = np.full_like(p1, _SQRT2)
        inside = np.abs(p1) <= self.support
        if inside.any():
            q1, q2 = p1[inside], p2[inside]
            b1[inside] = self._bilinear(self.b1, q1, q2)
            b2[inside] = self._bilinear(self.b2, q1, q2)
            s1[inside] = _SQRT2 * self._bilinear(self.inv_f, q1, q2)
        return b1, b2, s1


def sde_from_metric(metric: MetricField) -> SdeSpec:
    """Drift-diffusion form of the strip generator.

    b = (-f^-3 d1f, f^-1 d2f), sigma = diag(sqrt2/f, sqrt2); the longitudinal
    derivative comes from central differences of the sampled metric.
    """
    a = float(metric.x2[-1])
    if metric.flat:
        return SdeSpec(a=a, flat=True, support=0.0)
    f = metric.f
    d1f = np.gradient(f, metric.x1, axis=0)
    b1 = -d1f / f**3
    b2 = metric.d2f / f
    # pad the support so interpolation cells straddling the edge stay exact
    h1 = metric.x1[1] - metric.x1[0]
    nonflat = np.flatnonzero(np.abs(f - 1.0).max(axis=1) > 1e-14)
    support = abs(metric.x1[nonflat]).max() + 2 * h1 if nonflat.size else 0.0
    return SdeSpec(
        a=a,
        flat=False,
        support=float(support),
        x1=metric.x1,
        x2=metric.x2,
        b1=b1,
        b2=b2,
        inv_f=1.0 / f,
    )


@dataclass(eq=False)
class PathEnsemble:
    n_paths: int
    x0: tuple
    dt: float
    seed: int
    a: float
    checkpoint_times: np.ndarray
    positions: np.ndarray     # (n_checkpoints, n_paths, 2), frozen at death
    kill_time: np.ndarray     # inf when censored at t_max
    t_max: float
    beyond_box_fraction: float = 0.0

    def checkpoint_index(self, t: float) -> int:
        hits = np.flatnonzero(np.isclose(self.checkpoint_times, t, rtol=0, atol=1e-9))
        if hits.size == 0:
            raise CheckpointMissing(f"time {t} was not recorded")
        return int(hits[0])

    def alive_at(self, t: float) -> np.ndarray:
        return self.kill_time > t + 1e-12


def simulate_killed(
    sde: SdeSpec,
    x0,
    t_max: float,
    dt: float,
    n_paths: int,
    seed: int,
    checkpoints=None,
    box_limit: float = None,
    bridge: bool = True,
) -> PathEnsemble:
    """Euler-Maruyama ensemble with Brownian-bridge wall-kill correction.

    Per substep and wall, a crossing of the straight bridge between the old
    and new transverse positions is sampled with probability
    exp(-2 d_old d_new / (2 dt)) for the doubled-clock diffusion. Chunked,
    with one counter-based stream per fixed-size chunk, so results are
    bit-reproducible from (seed, dt, n_paths) under any schedule.
    """
    a = sde.a
    x10, x20 = float(x0[0]), float(x0[1])
    if abs(x20) >= a:
        raise BadStart(f"|x2| = {abs(x20)} is not inside the strip of width {a}")
    if dt > a**2 / 100.0:
        raise StepTooLarge(f"dt = {dt} exceeds a^2/100 = {a ** 2 / 100.0:.3g}")
    if checkpoints is None:
        checkpoints = [t_max]
    n_steps = int(round(t_max / dt)) if t_max > 0 else 0
    check_steps = []
    for t in checkpoints:
        k = int(round(t / dt))
        if abs(k * dt - t) > 1e-9 * max(1.0, t_max):
            raise CheckpointMissing(f"checkpoint {t} is not a multiple of dt")
        check_steps.append(min(k, n_steps))
    check_steps = np.asarray(check_steps)
    times = check_steps * dt

    positions = np.empty((len(check_steps), n_paths, 2), dtype=np.float32)
    kill_time = np.full(n_paths, np.inf)

    sqdt = math.sqrt(dt)
    for c0 in range(0, n_paths, _CHUNK):
        c1 = min(c0 + _CHUNK, n_paths)
        m = c1 - c0
        rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(c0 // _CHUNK,)))
        )
        p1 = np.full(m, x10)
        p2 = np.full(m, x20)
        alive = np.ones(m, dtype=bool)
        ktime = np.full(m, np.inf)
        snap = check_steps == 0
        for ci in np.flatnonzero(snap):
            positions[ci, c0:c1, 0] = p1
            positions[ci, c0:c1, 1] = p2
        for step in range(1, n_steps + 1):
            z = rng.standard_normal((m, 2))
            u = rng.random(m)
            b1, b2, s1 = sde.fields(p1, p2)
            q1 = p1 + b1 * dt + s1 * sqdt * z[:, 0]
            q2 = p2 + b2 * dt + _SQRT2 * sqdt * z[:, 1]
            # wall kill: direct exit, then bridge crossing against each wall
            crossed = np.abs(q2) >= a
            if bridge:
                d0u, d1u = a - p2, a - q2
                d0l, d1l = a + p2, a + q2
                with np.errstate(over="ignore"):
                    pu = np.exp(-2.0 * d0u * d1u / (2.0 * dt))
                    pl = np.exp(-2.0 * d0l * d1l / (2.0 * dt))
                pkill = np.where(crossed, 1.0, pu + pl - pu * pl)
            else:
                pkill = crossed.astype(float)
            dead_now = alive & (u < pkill)
            ktime[dead_now] = step * dt
            alive &= ~dead_now
            p1 = np.where(alive, q1, p1)
            p2 = np.where(alive, q2, p2)
            for ci in np.flatnonzero(check_steps == step):
                positions[ci, c0:c1, 0] = p1
                positions[ci, c0:c1, 1] = p2
        kill_time[c0:c1] = ktime

    beyond = 0.0
    if box_limit is not None:
        final_alive = kill_time > t_max
        if final_alive.any():
            beyond = float(
                (np.abs(positions[-1, :, 0][final_alive]) > box_limit).mean()
            )
            if beyond > 1e-3:
                warnings.warn(
                    f"{beyond:.2%} of surviving paths left the bookkeeping box",
                    stacklevel=2,
                )
    return PathEnsemble(
        n_paths=n_paths,
        x0=(x10, x20),
        dt=dt,
        seed=seed,
        a=a,
        checkpoint_times=times,
        positions=positions,
        kill_time=kill_time,
        t_max=t_max,
        beyond_box_fraction=beyond,
    )


@dataclass(frozen=True)
class SurvivalEstimate:
    probability: float
    half_width: float        # 99% binomial (Wilson) half-width
    t: float
    target: tuple            # None means the whole strip
    n_alive_in_B: int
    n_paths: int


_Z99 = 2.5758293035489004


def survival_estimate(ensemble: PathEnsemble, B, t: float) -> SurvivalEstimate:
    """Fraction of paths alive at t and inside B, with 99% binomial interval.

    ``B`` is None for the whole strip or ((bx0, bx1), (by0, by1)).
    """
    ci = ensemble.checkpoint_index(t)
    alive = ensemble.alive_at(t)
    if B is None:
        hit = alive
    else:
        (bx0, bx1), (by0, by1) = B
        p = ensemble.positions[ci]
        hit = (
            alive
            & (p[:, 0] >= bx0) & (p[:, 0] <= bx1)
            & (p[:, 1] >= by0) & (p[:, 1] <= by1)
        )
    n = ensemble.n_paths
    k = int(hit.sum())
    phat = k / n
    z2 = _Z99**2
    half = (_Z99 / (1.0 + z2 / n)) * math.sqrt(
        phat * (1.0 - phat) / n + z2 / (4.0 * n**2)
    )
    return SurvivalEstimate(
        probability=phat, half_width=half, t=float(t), target=B,
        n_alive_in_B=k, n_paths=n,
    )


@dataclass(frozen=True)
class RateFit:
    slope: float
    stderr: float
    lambda_hat: float
    stderr_lambda: float
    n_points: int


def pointwise_rate(estimates, E1: float) -> RateFit:
    """Weighted fit of log(estimate) + E1 t against log t.

    Estimates whose confidence interval touches zero are discarded; fewer
    than six usable points raise InsufficientSignal. The two-parameter
    variant leaves the exponential rate free and reports it as lambda_hat.
    """
    usable = [e for e in estimates if e.probability - e.half_width > 0.0]
    if len(usable) < 6:
        raise InsufficientSignal(
            f"only {len(usable)} estimates are bounded away from the confidence floor"
        )
    t = np.array([e.t for e in usable])
    p = np.array([e.probability for e in usable])
    n = np.array([e.n_paths for e in usable])
    y = np.log(p) + E1 * t
    # delta method: var(log p) ~ (1-p)/(n p)
    w = n * p / (1.0 - p)
    X = np.column_stack([np.ones_like(t), np.log(t)])
    WX = X * w[:, None]
    cov = np.linalg.inv(X.T @ WX)
    coef = cov @ (WX.T @ y)
    slope = float(coef[1])
    stderr = float(math.sqrt(cov[1, 1]))

    X2 = np.column_stack([np.ones_like(t), t, np.log(t)])
    WX2 = X2 * w[:, None]
    cov2 = np.linalg.inv(X2.T @ WX2)
    coef2 = cov2 @ (WX2.T @ np.log(p))
    return RateFit(
        slope=slope,
        stderr=stderr,
        lambda_hat=float(-coef2[1]),
        stderr_lambda=float(math.sqrt(cov2[1, 1])),
        n_points=len(usable),
    )


def conditional_distribution(ensemble: PathEnsemble, t: float, bins) -> tuple:
    """Normalized 2D histogram of surviving positions at time t.

    ``bins`` is (edges_x1, edges_x2). Returns (H, edges_x1, edges_x2) with
    the mass over all bins summing to one (positions outside the bin range
    are clipped into the edge bins so no survivor is dropped).
    """
    ci = ensemble.checkpoint_index(t)
    alive = ensemble.alive_at(t)
    k = int(alive.sum())
    if k < 100:
        raise TooFewSurvivors(f"only {k} survivors at t = {t}")
    e1, e2 = np.asarray(bins[0], float), np.asarray(bins[1], float)
    p = ensemble.positions[ci][alive]
    x = np.clip(p[:, 0], e1[0], e1[-1] - 1e-9)
    y = np.clip(p[:, 1], e2[0], e2[-1] - 1e-9)
    H, _, _ = np.histogram2d(x, y, bins=(e1, e2))
    return H / k, e1, e2
