"""Support geometry, set-valued invariant sets, and Birkhoff averages."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import AllBelowThreshold, InvalidParameter, NoFixedSet
from .model import RandomMap1D
from .transfer import Grid

__all__ = [
    "SupportSet",
    "BirkhoffEstimate",
    "support_from_density",
    "minimal_invariant_set",
    "birkhoff_average",
    "set_image_cells",
    "support_is_invariant",
    "hausdorff_distance",
]


@dataclass(frozen=True)
class SupportSet:
    """Disjoint closed intervals carrying (numerically) all stationary mass."""

    components: tuple[tuple[float, float], ...]
    method: str  # "density" | "setvalued"
    threshold: float = 0.0

    @property
    def n_components(self) -> int:
        return len(self.components)

    def total_length(self) -> float:
        return sum(hi - lo for lo, hi in self.components)

    def contains(self, x: float, tol: float = 1e-12) -> bool:
        return any(lo - tol <= x <= hi + tol for lo, hi in self.components)


@dataclass(frozen=True)
class BirkhoffEstimate:
    observable: tuple
    value: float
    n: int
    burn_in: int
    std_error: float


def _cells_to_components(grid: Grid, cells: np.ndarray) -> tuple[tuple[float, float], ...]:
    """Merge a sorted cell-index set into maximal runs of intervals."""
    if cells.size == 0:
        return ()
    n = grid.n_cells
    edges = grid.edges
    cells = np.sort(cells)
    breaks = np.where(np.diff(cells) > 1)[0]
    starts = np.concatenate([[0], breaks + 1])
    ends = np.concatenate([breaks, [len(cells) - 1]])
    comps = [(edges[cells[s]], edges[cells[e] + 1]) for s, e in zip(starts, ends)]
    # circle: a run ending at the last cell joins a run starting at cell 0
    if grid.space.is_circle and len(comps) >= 2:
        if cells[0] == 0 and cells[-1] == n - 1:
            first = comps.pop(0)
            last = comps.pop()
            comps.append((last[0], first[1] + grid.space.length))
    return tuple(comps)


def support_from_density(grid: Grid, phi: np.ndarray, tau_rel: float = 1e-6) -> SupportSet:
    """Cells with ``phi >= tau_rel * max(phi)`` merged into maximal runs.

    Stationary densities are flat at their support boundary, so the result
    is insensitive to ``tau_rel`` over several orders of magnitude.
    """
    if not (0.0 < tau_rel <= 1e-2):
        raise InvalidParameter("tau_rel must be in (0, 1e-2]")
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (grid.n_cells,):
        raise InvalidParameter("density length does not match the grid")
    if np.any(phi < -1e-12 * max(1.0, np.abs(phi).max())):
        raise InvalidParameter("density must be nonnegative")
    peak = phi.max()
    tau = tau_rel * peak
    cells = np.where(phi >= tau)[0]
    if peak <= 0 or cells.size == 0:
        raise AllBelowThreshold("no cell reaches the support threshold")
    return SupportSet(components=_cells_to_components(grid, cells), method="density", threshold=tau)


def set_image_cells(m: RandomMap1D, grid: Grid, cells: np.ndarray, subsamples: int = 8) -> np.ndarray:
    """Cells meeting ``f(C; [-1, 1])`` for a cell set C (outer estimate).

    Each cell is subsampled and the family's interior critical points are
    included when covered, so the estimate never misses an extremum.
    """
    cells = np.asarray(cells, dtype=int)
    if cells.size == 0:
        return cells
    lo = grid.space.bounds[0]
    h = grid.h
    t = np.linspace(0.0, 1.0, subsamples + 1)
    xs = (lo + cells[:, None] * h + t[None, :] * h).ravel()
    inside = [c for c in m.x_critical() if np.any(cells == grid.cell_of(c))]
    if inside:
        xs = np.concatenate([xs, np.asarray(inside, dtype=float)])
    e1 = m.lift(xs, -1.0)
    e2 = m.lift(xs, 1.0)
    lo_img = np.minimum(e1, e2)
    hi_img = np.maximum(e1, e2)
    n = grid.n_cells
    j0 = np.floor((lo_img - lo) / h + 1e-12).astype(int)
    j1 = np.ceil((hi_img - lo) / h - 1e-12).astype(int) - 1
    j1 = np.maximum(j1, j0)
    mask = np.zeros(n, dtype=bool)
    if grid.space.is_circle:
        full = (j1 - j0) >= n - 1
        if np.any(full):
            return np.arange(n)
        j0m = np.mod(j0, n)
        j1m = np.mod(j1, n)
        wrap = j1m < j0m
        for a, b in zip(j0m[~wrap], j1m[~wrap]):
            mask[a : b + 1] = True
        for a, b in zip(j0m[wrap], j1m[wrap]):
            mask[a:] = True
            mask[: b + 1] = True
    else:
        j0 = np.clip(j0, 0, n - 1)
        j1 = np.clip(j1, 0, n - 1)
        for a, b in zip(j0, j1):
            mask[a : b + 1] = True
    return np.where(mask)[0]


def support_is_invariant(m: RandomMap1D, grid: Grid, cells: np.ndarray, slack_cells: int = 2) -> bool:
    """Forward invariance of a cell set under the set-valued map.

    ``slack_cells`` dilates the target to absorb discretization rounding
    at component boundaries.
    """
    cells = np.asarray(cells, dtype=int)
    img = set_image_cells(m, grid, cells)
    n = grid.n_cells
    mask = np.zeros(n, dtype=bool)
    mask[cells] = True
    for d in range(1, slack_cells + 1):
        if grid.space.is_circle:
            mask |= np.roll(mask, d) | np.roll(mask, -d)
        else:
            shifted = np.zeros(n, dtype=bool)
            shifted[d:] = mask[:-d]
            shifted[:-d] |= mask[d:]
            mask |= shifted
    return bool(np.all(mask[img]))


def _interval_image(m: RandomMap1D, lo: float, hi: float) -> tuple[float, float]:
    """Exact hull of ``f([lo, hi]; [-1, 1])`` on the lift (one interval)."""
    xs = [lo, hi]
    xs += [c for c in m.x_critical() if lo < c < hi]
    xs = np.asarray(xs, dtype=float)
    e1 = m.lift(xs, -1.0)
    e2 = m.lift(xs, 1.0)
    return float(min(e1.min(), e2.min())), float(max(e1.max(), e2.max()))


def _merge_intervals(ivals: list[tuple[float, float]], gap_tol: float) -> list[tuple[float, float]]:
    if not ivals:
        return []
    ivals = sorted(ivals)
    out = [list(ivals[0])]
    for lo, hi in ivals[1:]:
        if lo <= out[-1][1] + gap_tol:
            out[-1][1] = max(out[-1][1], hi)
        else:
            out.append([lo, hi])
    return [tuple(v) for v in out]


def _wrap_intervals(ivals: list[tuple[float, float]], gap_tol: float) -> list[tuple[float, float]]:
    """Normalize lift intervals into non-wrapping [0, 1] pieces (circle only).

    Arcs crossing the seam are stored split; the final cell conversion
    rejoins them when reporting components.
    """
    if sum(hi - lo for lo, hi in ivals) >= 1.0:
        return [(0.0, 1.0)]
    pieces = []
    for lo, hi in ivals:
        base = np.floor(lo)
        lo, hi = lo - base, hi - base
        if hi <= 1.0:
            pieces.append((lo, hi))
        else:
            pieces.append((lo, 1.0))
            pieces.append((0.0, hi - 1.0))
    return _merge_intervals(pieces, gap_tol)


def minimal_invariant_set(m: RandomMap1D, seedpoint: float, grid: Grid) -> SupportSet:
    """Smallest forward-invariant region containing the seed's orbit closure.

    Iterates ``C -> C  +  f(C; [-1, 1])`` on exact interval endpoints (the
    union keeps cyclically permuted components from oscillating) and reports
    the components snapped outward to the grid. Working on endpoints rather
    than cell sets avoids compounding the per-step outward rounding, which
    can inflate marginally invariant islands into a spurious explosion.
    """
    if not m.space.contains(seedpoint):
        raise InvalidParameter(f"seedpoint {seedpoint} outside the phase space")
    circle = m.space.is_circle
    tol = 1e-12
    gap_tol = 1e-12
    cur: list[tuple[float, float]] = [(float(seedpoint), float(seedpoint))]
    cap = 10 * grid.n_cells
    prev_len = 0.0
    for _ in range(cap):
        images = []
        for lo, hi in cur:
            if circle and hi - lo >= 1.0 - gap_tol:
                return SupportSet(components=((grid.space.bounds[0], grid.space.bounds[1]),),
                                  method="setvalued")
            images.append(_interval_image(m, lo, min(hi, lo + 1.0) if circle else hi))
        if circle:
            new = _wrap_intervals(images, gap_tol) + [tuple(v) for v in cur]
            new = _merge_intervals(new, gap_tol)
            if sum(hi - lo for lo, hi in new) >= 1.0 - gap_tol:
                return SupportSet(components=((0.0, 1.0),), method="setvalued")
        else:
            lo_b, hi_b = m.space.bounds
            clipped = [
                (max(lo, lo_b), min(hi, hi_b)) for lo, hi in images if lo < hi_b and hi > lo_b
            ]
            new = _merge_intervals(clipped + list(cur), gap_tol)
        grown = (
            len(new) != len(cur)
            or any(abs(a[0] - b[0]) > tol or abs(a[1] - b[1]) > tol for a, b in zip(new, cur))
        )
        cur = new
        if not grown:
            cells = np.unique(np.concatenate([
                grid.cells_meeting(lo, hi) for lo, hi in cur
            ]))
            return SupportSet(
                components=_cells_to_components(grid, cells),
                method="setvalued",
            )
        prev_len = sum(hi - lo for lo, hi in cur)
    raise NoFixedSet(
        f"set-valued iteration did not stabilize (size {prev_len:.4f} after {cap} iterations)"
    )


def birkhoff_average(
    m: RandomMap1D,
    x0: float,
    observable: tuple,
    n: int,
    burn_in: int = 1000,
    seed: int = 0,
) -> BirkhoffEstimate:
    """Time average of an observable along one noise realization.

    ``observable`` is ``("indicator", lo, hi)`` or ``("coordinate",)``.
    The standard error comes from 32 batch means over the averaged stretch.
    """
    if n < 1000:
        raise InvalidParameter("n must be >= 1000")
    if not m.space.contains(x0):
        raise InvalidParameter(f"x0={x0} outside the phase space")
    kind = observable[0]
    if kind not in ("indicator", "coordinate"):
        raise InvalidParameter(f"unknown observable {observable!r}")
    rng = np.random.default_rng(seed)
    step = m.scalar_stepper()
    x = float(m.space.wrap(float(x0)))
    total_steps = burn_in + n
    draws = m.noise.sample(rng, total_steps).tolist()
    for k in range(burn_in):
        x, _ = step(x, draws[k])
    if kind == "indicator":
        lo, hi = float(observable[1]), float(observable[2])
        acc = 0.0
        nb = 32
        batch_len = n // nb
        batch_acc = 0.0
        batches = []
        for k in range(n):
            x, _ = step(x, draws[burn_in + k])
            val = 1.0 if lo <= x <= hi else 0.0
            acc += val
            batch_acc += val
            if (k + 1) % batch_len == 0 and len(batches) < nb:
                batches.append(batch_acc / batch_len)
                batch_acc = 0.0
        value = acc / n
    else:
        acc = 0.0
        nb = 32
        batch_len = n // nb
        batch_acc = 0.0
        batches = []
        for k in range(n):
            x, _ = step(x, draws[burn_in + k])
            acc += x
            batch_acc += x
            if (k + 1) % batch_len == 0 and len(batches) < nb:
                batches.append(batch_acc / batch_len)
                batch_acc = 0.0
        value = acc / n
    se = float(np.std(batches, ddof=1) / np.sqrt(len(batches))) if len(batches) > 1 else 0.0
    return BirkhoffEstimate(
        observable=tuple(observable), value=float(value), n=n, burn_in=burn_in, std_error=se
    )


def _sample_components(comps: Sequence[tuple[float, float]], step: float) -> np.ndarray:
    pts = []
    for lo, hi in comps:
        k = max(2, int(np.ceil((hi - lo) / step)) + 1)
        pts.append(np.linspace(lo, hi, k))
    return np.concatenate(pts) if pts else np.array([])


def hausdorff_distance(a: SupportSet, b: SupportSet, space, step: float = 1e-3) -> float:
    """Hausdorff distance between two interval unions (circle-aware)."""
    pa = _sample_components(a.components, step)
    pb = _sample_components(b.components, step)
    if pa.size == 0 or pb.size == 0:
        return np.inf if pa.size != pb.size else 0.0
    d1 = np.array([space.distance(x, pb).min() for x in pa]).max()
    d2 = np.array([space.distance(x, pa).min() for x in pb]).max()
    return float(max(d1, d2))
