"""Phase spaces, noise models, and the built-in random map families.

A random map here is a family ``x -> f(x; omega)`` with the noise parameter
``omega`` drawn from a fixed density on ``[-1, 1]``. The noise amplitude
enters through the family's ``sigma`` in the map formula, so the noise
support never changes. Every built-in family is strictly monotone in
``omega`` for fixed ``x`` whenever ``sigma > 0``; ``sigma = 0`` is accepted
as the deterministic limit (orbit sampling and orbit tracking work, kernel
and transfer-operator construction raise :class:`~rds.errors.DegenerateFiber`).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import InvalidParameter

__all__ = [
    "PhaseSpace",
    "NoiseModel",
    "RandomMap1D",
    "OrbitSample",
    "make_map",
    "sample_orbit",
]

_MONOTONE_X_PROBES = 33
_MONOTONE_OMEGA_PROBES = 65


@dataclass(frozen=True)
class PhaseSpace:
    """Circle ``R/Z`` or a compact interval ``[lower, upper]``."""

    kind: str  # "circle" | "interval"
    bounds: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if self.kind not in ("circle", "interval"):
            raise InvalidParameter(f"unknown phase space kind {self.kind!r}")
        lo, hi = self.bounds
        if self.kind == "circle":
            if (lo, hi) != (0.0, 1.0):
                raise InvalidParameter("circle bounds are fixed to [0, 1)")
        elif not lo < hi:
            raise InvalidParameter(f"interval bounds must satisfy lower < upper, got {self.bounds}")

    @property
    def is_circle(self) -> bool:
        return self.kind == "circle"

    @property
    def length(self) -> float:
        return self.bounds[1] - self.bounds[0]

    def wrap(self, x):
        """Map points into the phase space (mod 1 on the circle)."""
        if self.is_circle:
            return np.mod(x, 1.0)
        return x

    def contains(self, x, tol: float = 1e-12) -> bool:
        if self.is_circle:
            return bool(np.all(np.isfinite(x)))
        lo, hi = self.bounds
        return bool(np.all((np.asarray(x) >= lo - tol) & (np.asarray(x) <= hi + tol)))

    def distance(self, x, y):
        """Distance between points; on the circle mod 1, lies in [0, 1/2]."""
        d = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
        if self.is_circle:
            d = np.mod(d, 1.0)
            d = np.minimum(d, 1.0 - d)
        return d


@dataclass(frozen=True)
class NoiseModel:
    """Noise density on the fixed support ``[-1, 1]``.

    ``uniform`` has density 1/2; ``smooth_bump`` has the C^1-flat density
    ``(15/16)(1 - omega^2)^2``. Both integrate to 1 in closed form.
    """

    kind: str = "uniform"

    def __post_init__(self):
        if self.kind not in ("uniform", "smooth_bump"):
            raise InvalidParameter(f"unknown noise kind {self.kind!r}")

    def pdf(self, omega):
        w = np.asarray(omega, dtype=float)
        inside = (w >= -1.0) & (w <= 1.0)
        if self.kind == "uniform":
            return np.where(inside, 0.5, 0.0)
        return np.where(inside, 0.9375 * (1.0 - w * w) ** 2, 0.0)

    def cdf(self, omega):
        w = np.clip(np.asarray(omega, dtype=float), -1.0, 1.0)
        if self.kind == "uniform":
            return 0.5 * (w + 1.0)
        # integral of (15/16)(1-w^2)^2 from -1
        return 0.5 + 0.9375 * (w - 2.0 * w**3 / 3.0 + w**5 / 5.0)

    def mean(self) -> float:
        return 0.0  # both densities are even

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        u = rng.uniform(0.0, 1.0, size=size)
        return self.ppf(u)

    def ppf(self, u):
        """Quantile function (inverse CDF) on [0, 1]."""
        u = np.asarray(u, dtype=float)
        if self.kind == "uniform":
            return 2.0 * u - 1.0
        grid = _smooth_bump_grid()
        return np.interp(u, grid[1], grid[0])


_SMOOTH_BUMP_GRID: Optional[tuple[np.ndarray, np.ndarray]] = None


def _smooth_bump_grid():
    # dense monotone CDF table for inverse sampling; endpoints exact
    global _SMOOTH_BUMP_GRID
    if _SMOOTH_BUMP_GRID is None:
        w = np.linspace(-1.0, 1.0, 8193)
        c = 0.5 + 0.9375 * (w - 2.0 * w**3 / 3.0 + w**5 / 5.0)
        c[0], c[-1] = 0.0, 1.0
        _SMOOTH_BUMP_GRID = (w, c)
    return _SMOOTH_BUMP_GRID


@dataclass(frozen=True)
class RandomMap1D:
    """A parametrized random map family on the circle or an interval.

    Families (selected by ``family``):

    - ``standard_circle``: ``x + a + sigma*omega + (eps/2pi) sin(2 pi x)`` mod 1
    - ``logistic``:        ``(a + sigma*omega) x (1 - x)`` on [0, 1]
    - ``affine``:          ``c + lam*x + sigma*omega`` on a given interval
    - ``pure_noise``:      ``x + sigma*omega`` mod 1

    Every family is affine in ``omega``: ``f(x; omega) = A(x) + B(x) omega``
    with ``B = d f / d omega``. ``omega_affine`` exposes the pair; generic
    code that must not rely on it can use :func:`omega_solve`.
    """

    family: str
    a: float = 0.0
    sigma: float = 0.0
    eps: float = 0.0
    lam: float = 0.0
    space: PhaseSpace = field(default_factory=lambda: PhaseSpace("circle"))
    noise: NoiseModel = field(default_factory=NoiseModel)

    # --- evaluation -----------------------------------------------------

    def lift(self, x, omega):
        """Unwrapped image: the lift on the circle, plain value on an interval."""
        x = np.asarray(x, dtype=float)
        omega = np.asarray(omega, dtype=float)
        A, B = self.omega_affine(x)
        return A + B * omega

    def step(self, x, omega):
        """One iterate inside the phase space."""
        return self.space.wrap(self.lift(x, omega))

    def omega_affine(self, x):
        """Return ``(A(x), B(x))`` with ``f(x; omega) = A + B omega``."""
        x = np.asarray(x, dtype=float)
        if self.family == "standard_circle":
            A = x + self.a + (self.eps / (2.0 * np.pi)) * np.sin(2.0 * np.pi * x)
            return A, np.full_like(A, self.sigma)
        if self.family == "logistic":
            q = x * (1.0 - x)
            return self.a * q, self.sigma * q
        if self.family == "affine":
            A = self.a + self.lam * x
            return A, np.full_like(A, self.sigma)
        if self.family == "pure_noise":
            A = x + 0.0
            return A, np.full_like(A, self.sigma)
        raise InvalidParameter(f"unknown family {self.family!r}")

    def scalar_stepper(self):
        """A fast pure-Python ``(x, omega) -> (x_next, displacement)`` closure.

        ``displacement`` is the lift increment ``lift(x; omega) - x``; for
        interval families ``x_next = x + displacement``. Used by the long
        Monte Carlo loops, where per-step numpy dispatch would dominate.
        """
        import math

        a, sig, eps, lam = self.a, self.sigma, self.eps, self.lam
        two_pi = 2.0 * math.pi
        if self.family == "standard_circle":
            amp = eps / two_pi

            def step(x, w):
                d = a + sig * w + amp * math.sin(two_pi * x)
                return (x + d) % 1.0, d

        elif self.family == "pure_noise":

            def step(x, w):
                d = sig * w
                return (x + d) % 1.0, d

        elif self.family == "logistic":

            def step(x, w):
                y = (a + sig * w) * x * (1.0 - x)
                return y, y - x

        elif self.family == "affine":

            def step(x, w):
                y = a + lam * x + sig * w
                return y, y - x

        else:  # pragma: no cover
            raise InvalidParameter(f"unknown family {self.family!r}")
        return step

    def dlift_dx(self, x, omega):
        """d f / d x along the lift."""
        x = np.asarray(x, dtype=float)
        omega = np.asarray(omega, dtype=float)
        if self.family == "standard_circle":
            return 1.0 + self.eps * np.cos(2.0 * np.pi * x) + 0.0 * omega
        if self.family == "logistic":
            return (self.a + self.sigma * omega) * (1.0 - 2.0 * x)
        if self.family == "affine":
            return self.lam + 0.0 * x + 0.0 * omega
        if self.family == "pure_noise":
            return 1.0 + 0.0 * x + 0.0 * omega
        raise InvalidParameter(f"unknown family {self.family!r}")

    def dlift_domega(self, x, omega=None):
        _, B = self.omega_affine(x)
        return B

    def omega_solve(self, x, y_lift, tol: float = 1e-14, max_iter: int = 200):
        """Solve ``lift(x; omega) = y_lift`` for ``omega`` in [-1, 1].

        Bisection bracketed on [-1, 1] (monotone in omega by the model
        invariant) polished by Newton; works for any family without a
        closed-form inverse. Values outside the image are clipped to the
        nearest endpoint.
        """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y_lift, dtype=float)
        lo = np.full(np.broadcast(x, y).shape, -1.0)
        hi = np.full(lo.shape, 1.0)
        f_lo = self.lift(x, lo) - y
        f_hi = self.lift(x, hi) - y
        increasing = f_hi >= f_lo
        below = np.where(increasing, f_lo > 0, f_hi > 0)
        above = np.where(increasing, f_hi < 0, f_lo < 0)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            f_mid = self.lift(x, mid) - y
            go_right = np.where(increasing, f_mid < 0, f_mid > 0)
            lo = np.where(go_right, mid, lo)
            hi = np.where(go_right, hi, mid)
            if np.all(hi - lo < tol):
                break
        w = 0.5 * (lo + hi)
        # Newton polish
        for _ in range(3):
            d = self.dlift_domega(x, w)
            stepv = np.where(np.abs(d) > 0, (self.lift(x, w) - y) / np.where(d == 0, 1.0, d), 0.0)
            w = np.clip(w - stepv, -1.0, 1.0)
        w = np.where(below, np.where(increasing, -1.0, 1.0), w)
        w = np.where(above, np.where(increasing, 1.0, -1.0), w)
        return w

    # --- family structure ----------------------------------------------

    def with_param(self, a: float) -> "RandomMap1D":
        """Same family at a new value of the sweep parameter (unvalidated)."""
        return replace(self, a=float(a))

    def x_critical(self) -> tuple[float, ...]:
        """Interior critical points of ``x -> f(x; omega)`` (omega-independent)."""
        if self.family == "logistic":
            return (0.5,)
        if self.family == "affine" and self.lam == 0.0:
            return ()  # constant in x; handled by endpoint sampling anyway
        return ()

    def validate(self) -> "RandomMap1D":
        for name in ("a", "sigma", "eps", "lam"):
            if not np.isfinite(getattr(self, name)):
                raise InvalidParameter(f"{name} must be finite")
        if self.sigma < 0:
            raise InvalidParameter("sigma must be >= 0")
        if self.family == "logistic":
            lo, hi = self.a - self.sigma, self.a + self.sigma
            if not (lo > 1.0 and hi < 4.0):
                raise InvalidParameter(
                    f"logistic requires a + sigma*omega in (1, 4) for all omega; got [{lo}, {hi}]"
                )
        if self.family == "standard_circle":
            # eps < 1 keeps each x -> f(x; omega) a diffeomorphism; eps = 0 is
            # the pure-rotation limit and is accepted.
            if not (0.0 <= self.eps < 1.0):
                raise InvalidParameter(f"standard_circle requires eps in [0, 1), got {self.eps}")
        if self.sigma > 0.0:
            self._check_omega_monotone()
        if self.space.kind == "interval":
            self._check_interval_invariance()
        return self

    def _check_omega_monotone(self):
        lo, hi = self.space.bounds
        # interior probe points: the logistic endpoints x = 0, 1 are fixed
        # under every omega and are excluded by construction
        xs = lo + (np.arange(_MONOTONE_X_PROBES) + 0.5) * (hi - lo) / _MONOTONE_X_PROBES
        ws = np.linspace(-1.0, 1.0, _MONOTONE_OMEGA_PROBES)
        vals = self.lift(xs[:, None], ws[None, :])
        diffs = np.diff(vals, axis=1)
        if not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise InvalidParameter("omega -> f(x; omega) is not strictly monotone on the probe grid")

    def _check_interval_invariance(self):
        lo, hi = self.space.bounds
        xs = np.linspace(lo, hi, 257)
        xs = np.concatenate([xs, [c for c in self.x_critical() if lo < c < hi]])
        tol = 1e-9 * max(1.0, abs(lo), abs(hi))
        for w in (-1.0, 1.0):
            img = self.lift(xs, w)
            if img.min() < lo - tol or img.max() > hi + tol:
                raise InvalidParameter(
                    f"map does not keep the interval [{lo}, {hi}] invariant "
                    f"(image [{img.min()}, {img.max()}] at omega={w})"
                )


def make_map(
    family: str,
    *,
    a: float = 0.0,
    sigma: float = 0.0,
    eps: float = 0.0,
    c: float = 0.0,
    lam: float = 0.0,
    bounds: tuple[float, float] = (-2.0, 2.0),
    noise: str = "uniform",
) -> RandomMap1D:
    """Construct and validate a built-in random map.

    ``family`` is one of ``standard_circle``, ``logistic``, ``affine``,
    ``pure_noise``. For the affine family the sweep parameter ``a`` is the
    offset ``c`` (pass either).

    Raises
    ------
    InvalidParameter
        If the parameters leave the family's validity region, e.g.
        ``a + sigma*omega`` outside (1, 4) for the logistic family, or the
        omega-monotonicity probe fails.
    """
    family = family.replace("-", "_")
    if family in ("standard_circle", "pure_noise"):
        space = PhaseSpace("circle")
    elif family == "logistic":
        space = PhaseSpace("interval", (0.0, 1.0))
    elif family == "affine":
        space = PhaseSpace("interval", tuple(map(float, bounds)))
    else:
        raise InvalidParameter(f"unknown family {family!r}")
    if family == "affine" and c != 0.0 and a == 0.0:
        a = c
    m = RandomMap1D(
        family=family,
        a=float(a),
        sigma=float(sigma),
        eps=float(eps),
        lam=float(lam),
        space=space,
        noise=NoiseModel(noise.replace("-", "_")),
    )
    return m.validate()


@dataclass(frozen=True)
class OrbitSample:
    """A sampled orbit together with the noise draws that produced it.

    ``points[k+1] = f(points[k]; draws[k+1])`` exactly; ``draws[0]`` is
    unused and fixed to 0. Replaying the draws reproduces the points
    bit-for-bit.
    """

    seed: int
    points: np.ndarray
    draws: np.ndarray

    def replay_matches(self, m: RandomMap1D) -> bool:
        step = m.scalar_stepper()
        x = float(self.points[0])
        for k in range(1, len(self.points)):
            x, _ = step(x, float(self.draws[k]))
            if x != self.points[k]:
                return False
        return True


def sample_orbit(m: RandomMap1D, x0: float, n: int, seed: int) -> OrbitSample:
    """Iterate the random map ``n - 1`` times from ``x0`` with i.i.d. noise.

    Deterministic given ``seed`` (64-bit); the generator is numpy's
    default PCG64 stream.
    """
    if n < 1:
        raise InvalidParameter("n must be >= 1")
    if not m.space.contains(x0):
        raise InvalidParameter(f"x0={x0} outside the phase space")
    rng = np.random.default_rng(seed)
    draws = np.empty(n)
    draws[0] = 0.0
    if n > 1:
        draws[1:] = m.noise.sample(rng, n - 1)
    points = np.empty(n)
    x = float(m.space.wrap(float(x0)))
    points[0] = x
    step = m.scalar_stepper()
    dl = draws.tolist()
    for k in range(1, n):
        x, _ = step(x, dl[k])
        points[k] = x
    return OrbitSample(seed=int(seed), points=points, draws=draws)
