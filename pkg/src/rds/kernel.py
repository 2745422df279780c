"""Transition density k(x, .), forward image U_x, and preimage set V_y."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateFiber, InvalidParameter
from .model import RandomMap1D

__all__ = ["KernelSlice", "PreimageSet", "kernel_at", "preimage_set"]

_DEGENERATE_TOL = 1e-14
_BISECT_TOL = 1e-12


@dataclass(frozen=True)
class KernelSlice:
    """Density of the one-step image of a single point ``x``.

    ``support`` holds at most two non-wrapping intervals (a circle arc is
    split at the seam). ``density`` vanishes outside the support and
    integrates to 1 over it.
    """

    x: float
    support: tuple[tuple[float, float], ...]
    density: Callable[[np.ndarray], np.ndarray]

    def support_length(self) -> float:
        return sum(hi - lo for lo, hi in self.support)

    def contains(self, y: float, tol: float = 1e-12) -> bool:
        return any(lo - tol <= y <= hi + tol for lo, hi in self.support)


@dataclass(frozen=True)
class PreimageSet:
    """The set V_y of points whose one-step image can contain ``y``.

    Components are disjoint closed intervals. On the circle a component may
    wrap the seam; it is then stored as ``(lo, hi)`` with ``hi > 1`` and
    membership is evaluated mod 1.
    """

    y: float
    components: tuple[tuple[float, float], ...]
    circle: bool = False

    def contains(self, x: float, tol: float = 1e-9) -> bool:
        for lo, hi in self.components:
            if self.circle:
                d = float(np.mod(x - lo, 1.0))
                if d <= (hi - lo) + tol or d >= 1.0 - tol:
                    return True
            elif lo - tol <= x <= hi + tol:
                return True
        return False


def kernel_at(m: RandomMap1D, x: float) -> KernelSlice:
    """Transition density of ``f(x; .)`` by the change-of-variables formula.

    ``density(y) = g(omega(x, y)) |d omega / d y|`` on the image of the
    noise interval; the inverse ``omega(x, y)`` is found by the family's
    monotone solve (bisection + Newton), so no closed form is assumed.

    Raises
    ------
    DegenerateFiber
        If ``|d f / d omega|`` drops below 1e-14 anywhere on [-1, 1].
    """
    x = float(x)
    if not m.space.contains(x):
        raise InvalidParameter(f"x={x} outside the phase space")
    ws = np.linspace(-1.0, 1.0, 65)
    dmin = np.abs(m.dlift_domega(np.full_like(ws, x), ws)).min()
    if dmin < _DEGENERATE_TOL:
        raise DegenerateFiber(f"|df/domega| = {dmin:.3e} < 1e-14 at x = {x}")

    end_lo = float(m.lift(x, -1.0))
    end_hi = float(m.lift(x, 1.0))
    lo, hi = (end_lo, end_hi) if end_lo <= end_hi else (end_hi, end_lo)
    circle = m.space.is_circle

    if circle:
        support = _wrap_split(lo, hi)
    else:
        support = ((lo, hi),)

    def density(y):
        y = np.asarray(y, dtype=float)
        out = np.zeros(y.shape)
        if circle:
            # sum over the integer shifts whose copy of y lands in [lo, hi]
            k0 = int(np.floor(lo - np.max(y))) if y.size else 0
            k1 = int(np.ceil(hi - np.min(y))) if y.size else 0
            for k in range(k0, k1 + 1):
                yy = y + k
                inside = (yy >= lo) & (yy <= hi)
                if np.any(inside):
                    out = out + inside * _branch_density(m, x, np.clip(yy, lo, hi))
        else:
            inside = (y >= lo) & (y <= hi)
            if np.any(inside):
                out = inside * _branch_density(m, x, np.clip(y, lo, hi))
        return out

    return KernelSlice(x=x, support=support, density=density)


def _branch_density(m: RandomMap1D, x: float, y_lift: np.ndarray) -> np.ndarray:
    w = m.omega_solve(np.full_like(y_lift, x), y_lift)
    dfd = np.abs(m.dlift_domega(np.full_like(y_lift, x), w))
    return m.noise.pdf(w) / dfd


def _wrap_split(lo: float, hi: float) -> tuple[tuple[float, float], ...]:
    if hi - lo >= 1.0:
        return ((0.0, 1.0),)
    s = np.mod(lo, 1.0)
    e = np.mod(hi, 1.0)
    if s < e:
        return ((s, e),)
    if e == 0.0:
        return ((s, 1.0),)
    return ((0.0, e), (s, 1.0))


def preimage_set(m: RandomMap1D, y: float, resolution: int = 256) -> PreimageSet:
    """V_y found by sign-scanning the extremal-image bracket.

    Scans ``x -> [min_w f(x;w) - y] [max_w f(x;w) - y]`` (with integer
    shifts of y on the circle) at ``resolution`` points and refines each
    boundary by bisection to 1e-12. An empty component list is a valid
    result (y above the maximal image, for instance).
    """
    if resolution < 64:
        raise InvalidParameter("resolution must be >= 64")
    y = float(y)
    if not m.space.contains(y):
        raise InvalidParameter(f"y={y} outside the phase space")
    lo_b, hi_b = m.space.bounds
    circle = m.space.is_circle

    def bracket(xv):
        xv = np.asarray(xv, dtype=float)
        e1 = m.lift(xv, -1.0)
        e2 = m.lift(xv, 1.0)
        fmin = np.minimum(e1, e2)
        fmax = np.maximum(e1, e2)
        if circle:
            k0 = int(np.floor(fmin.min() - y))
            k1 = int(np.ceil(fmax.max() - y))
            best = None
            for k in range(k0, k1 + 1):
                p = (fmin - y - k) * (fmax - y - k)
                best = p if best is None else np.minimum(best, p)
            return best
        return (fmin - y) * (fmax - y)

    xs = np.linspace(lo_b, hi_b, resolution + 1)
    if circle:
        xs = xs[:-1]
    ps = bracket(xs)

    def refine(xa, xb):
        pa = float(bracket(np.array([xa]))[0])
        for _ in range(200):
            if xb - xa < _BISECT_TOL:
                break
            mid = 0.5 * (xa + xb)
            pm = float(bracket(np.array([mid]))[0])
            if (pa <= 0) == (pm <= 0):
                xa, pa = mid, pm
            else:
                xb = mid
        return 0.5 * (xa + xb)

    inside = ps <= 0
    comps: list[tuple[float, float]] = []
    n = len(xs)
    if np.all(inside):
        return PreimageSet(y=y, components=(((lo_b, hi_b)),), circle=circle)
    if not np.any(inside):
        return PreimageSet(y=y, components=(), circle=circle)

    # walk runs of inside points; step size for neighbors
    step = xs[1] - xs[0]
    runs = []
    i = 0
    while i < n:
        if inside[i]:
            j = i
            while j + 1 < n and inside[j + 1]:
                j += 1
            runs.append((i, j))
            i = j + 1
        else:
            i += 1
    # circle: merge run touching the seam
    wrapped = False
    if circle and len(runs) >= 2 and runs[0][0] == 0 and runs[-1][1] == n - 1:
        first = runs.pop(0)
        last = runs.pop()
        runs.append((last[0], first[1] + n))
        wrapped = True

    for i0, j0 in runs:
        xa = xs[i0 % n] + (i0 // n)  # unwrapped coordinate
        xb = xs[j0 % n] + (j0 // n)
        left = xa if (i0 % n == 0 and not circle) else refine_left(xa, step, refine)
        right = xb if (j0 % n == n - 1 and not circle) else refine_right(xb, step, refine)
        comps.append((left, right))

    comps.sort()
    return PreimageSet(y=y, components=tuple(comps), circle=circle)


def refine_left(xa: float, step: float, refine) -> float:
    return refine(xa - step, xa)


def refine_right(xb: float, step: float, refine) -> float:
    return refine(xb, xb + step)
