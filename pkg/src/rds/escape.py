"""Quasi-stationary densities, escape rates alpha(a), and escape-time MC."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import AllCensored, InvalidParameter, NoConvergence
from .model import RandomMap1D
from .spectral import eigen
from .transfer import Grid, UlamMatrix, build_windowed

__all__ = ["EscapeReport", "quasi_stationary", "escape_time_mc", "escape_growth_probe"]

_ABSORBING_TOL = 1e-12


@dataclass
class EscapeReport:
    """Survival rate and expected escape time for a window W.

    ``alpha`` is the leading eigenvalue of the windowed operator (the
    per-step survival probability under the quasi-stationary start);
    the expected escape time under that start is ``1 / (1 - alpha)``,
    infinite when W is absorbing. ``qs_density`` lives on the window
    cells and integrates to 1 over W.
    """

    window: tuple[tuple[float, float], ...]
    alpha: float
    qs_density: np.ndarray
    window_cells: np.ndarray
    grid: Grid
    expected_escape_spectral: float
    mc_mean: Optional[float] = None
    mc_std_error: Optional[float] = None
    mc_censored: Optional[int] = None
    notes: list[str] = field(default_factory=list)

    @property
    def absorbing(self) -> bool:
        return not np.isfinite(self.expected_escape_spectral)


def quasi_stationary(
    m: RandomMap1D,
    window: Sequence[tuple[float, float]],
    grid: Grid,
    q: int = 5,
    tol: float = 1e-10,
    max_iter: int = 200_000,
) -> EscapeReport:
    """Leading eigenpair of the windowed Ulam matrix.

    Attaches a ``WindowAbsorbing`` note when alpha = 1 within 1e-12 (the
    window traps an invariant set; the escape time is infinite) and a
    near-degeneracy note when the subdominant eigenvalue comes within
    1e-3 of alpha, where the quasi-stationary pair may not continue a
    unique family.
    """
    Mw = build_windowed(m, grid, window, q=q)
    S = eigen(Mw, k=4, tol=min(tol, 1e-6), max_iter=max_iter)
    # cyclic windows carry complex partners at the Perron modulus; alpha is
    # the real member of that cluster
    real_idx = [i for i, lam in enumerate(S.eigenvalues) if abs(lam.imag) <= 1e-8]
    if not real_idx:
        raise NoConvergence(f"no real leading windowed eigenvalue among {S.eigenvalues}")
    lead_i = real_idx[int(np.argmax([abs(S.eigenvalues[i].real) for i in real_idx]))]
    lead = S.eigenvalues[lead_i]
    if lead.real < 0:
        raise NoConvergence(f"leading real windowed eigenvalue is negative: {lead}")
    v = np.real(S.eigenvectors[:, lead_i])
    if v.sum() < 0:
        v = -v
    v = np.maximum(v, 0.0)
    # polish the Perron pair: absorbing windows must resolve alpha = 1 to
    # well below the 1e-12 classification threshold
    A = Mw.entries.T
    alpha = float(lead.real)
    for _ in range(200):
        w = A @ v
        nw = np.linalg.norm(w)
        if nw == 0:
            alpha = 0.0
            break
        w /= nw
        new_alpha = float(w @ (A @ w)) / float(w @ w)
        v = w
        if abs(new_alpha - alpha) < 1e-15:
            alpha = new_alpha
            break
        alpha = new_alpha
    alpha = min(alpha, float(Mw.row_sums().max()))  # Perron bound for substochastic rows
    v = np.maximum(v, 0.0)
    h = grid.h
    v /= v.sum() * h
    notes = list(Mw.notes)
    if alpha >= 1.0 - _ABSORBING_TOL:
        expected = float("inf")
        notes.append("WindowAbsorbing: alpha = 1 within 1e-12, escape time infinite")
    else:
        expected = 1.0 / (1.0 - alpha)
    others = [abs(lam) for i, lam in enumerate(S.eigenvalues) if i != lead_i]
    if others and abs(alpha - max(others)) < 1e-3:
        notes.append(
            f"near-degenerate window: subdominant eigenvalue within 1e-3 of alpha ({max(others):.6f})"
        )
    return EscapeReport(
        window=tuple(tuple(map(float, w)) for w in window),
        alpha=alpha,
        qs_density=v,
        window_cells=Mw.window_cells,
        grid=grid,
        expected_escape_spectral=expected,
        notes=notes,
    )


def _window_membership(window, circle: bool):
    ivals = [(float(lo), float(hi)) for lo, hi in window]

    def inside(x: np.ndarray) -> np.ndarray:
        ok = np.zeros(x.shape, dtype=bool)
        for lo, hi in ivals:
            if circle:
                d = np.mod(x - lo, 1.0)
                ok |= d <= (hi - lo)
            else:
                ok |= (x >= lo) & (x <= hi)
        return ok

    return inside


def _start_points(report: EscapeReport, n: int, rng, start: str) -> np.ndarray:
    grid = report.grid
    h = grid.h
    cells = report.window_cells
    if start == "uniform":
        weights = np.full(len(cells), 1.0 / len(cells))
    elif start == "qs":
        weights = report.qs_density * h
        weights = np.maximum(weights, 0.0)
        weights /= weights.sum()
    else:
        raise InvalidParameter(f"unknown start distribution {start!r}")
    pick = rng.choice(len(cells), size=n, p=weights)
    lo = grid.space.bounds[0]
    return lo + (cells[pick] + rng.uniform(0.0, 1.0, size=n)) * h


def escape_time_mc(
    m: RandomMap1D,
    report: EscapeReport,
    n_trials: int = 10_000,
    max_steps: int = 10_000_000,
    seed: int = 0,
    start: str = "uniform",
) -> tuple[float, float, int]:
    """Monte Carlo escape times from the report's window.

    Returns ``(mean, std_error, censored_count)`` over the uncensored
    trials; trials still inside W after ``max_steps`` are censored (the
    result is flagged in the report notes when they exceed 1%).
    """
    if n_trials < 100:
        raise InvalidParameter("n_trials must be >= 100")
    if max_steps < 1000:
        raise InvalidParameter("max_steps must be >= 1000")
    rng = np.random.default_rng(seed)
    x = _start_points(report, n_trials, rng, start)
    inside = _window_membership(report.window, m.space.is_circle)
    idx = np.arange(n_trials)  # indices of trials still inside W
    times = np.zeros(n_trials, dtype=np.int64)
    # start points are inside W by construction; trials step in lockstep
    for step_k in range(1, max_steps + 1):
        if idx.size == 0:
            break
        draws = m.noise.ppf(rng.uniform(0.0, 1.0, size=idx.size))
        x[idx] = m.step(x[idx], draws)
        out = ~inside(x[idx])
        if np.any(out):
            times[idx[out]] = step_k
            idx = idx[~out]
    censored = int(idx.size)
    alive = np.zeros(n_trials, dtype=bool)
    alive[idx] = True
    esc = times[~alive]
    if esc.size == 0:
        raise AllCensored(f"all {n_trials} trials still inside W after {max_steps} steps")
    mean = float(esc.mean())
    se = float(esc.std(ddof=1) / np.sqrt(esc.size)) if esc.size > 1 else 0.0
    report.mc_mean = mean
    report.mc_std_error = se
    report.mc_censored = censored
    if censored > 0.01 * n_trials:
        report.notes.append(f"censored trials exceed 1%: {censored}/{n_trials}")
    return mean, se, censored


def escape_growth_probe(
    m: RandomMap1D,
    a0: float,
    window: Sequence[tuple[float, float]],
    a_offsets: Sequence[float],
    grid: Grid,
    side: int = +1,
    q: int = 5,
) -> dict:
    """Escape-time growth T(a) = 1/(1 - alpha) at offsets from a bifurcation.

    ``a_offsets`` must be positive and decreasing; the map is rebuilt at
    ``a0 + side * offset``. Rows where the window is absorbing to machine
    precision are flagged (T is beyond measurement there, consistent with
    faster-than-polynomial growth). Fitted local slopes
    ``s_i = (log T_{i+1} - log T_i) / (log off_i - log off_{i+1})``
    are reported for consecutive unflagged rows.
    """
    offs = [float(o) for o in a_offsets]
    if any(o <= 0 for o in offs):
        raise InvalidParameter("offsets must be positive")
    if any(b >= a for a, b in zip(offs, offs[1:])):
        raise InvalidParameter("offsets must be decreasing")
    rows = []
    for off in offs:
        a = a0 + side * off
        mm = m.with_param(a).validate()
        rep = quasi_stationary(mm, window, grid, q=q)
        rows.append({
            "a": a,
            "offset": off,
            "alpha": rep.alpha,
            "T": rep.expected_escape_spectral,
            "absorbing": rep.absorbing,
        })
    slopes = []
    for r0, r1 in zip(rows, rows[1:]):
        if r0["absorbing"] or r1["absorbing"]:
            slopes.append(float("inf") if r1["absorbing"] and not r0["absorbing"] else float("nan"))
            continue
        num = np.log(r1["T"]) - np.log(r0["T"])
        den = np.log(r0["offset"]) - np.log(r1["offset"])
        slopes.append(float(num / den))
    return {"rows": rows, "slopes": slopes}
