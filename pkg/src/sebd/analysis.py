"""Post-processing: purification-time fits, tripartite mutual information,
finite-size data collapse, and fidelity/noise-rate conversion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.optimize

__all__ = [
    "AnalysisError",
    "PurificationFit",
    "CollapseFit",
    "fit_tau",
    "tripartite_mi",
    "data_collapse",
    "pair_crossings",
    "crossing_estimate",
    "epsilon_to_fidelity",
    "fidelity_to_epsilon",
    "linear_epsilon_estimate",
]

ENTROPY_FLOOR = 1e-12


class AnalysisError(ValueError):
    pass


@dataclass(frozen=True)
class PurificationFit:
    """Exponential-decay fit S_R(t) ~ exp(-t/tau) over a fixed window."""

    tau: float
    row_lo: int
    row_hi: int
    residual: float
    n_points: int


def fit_tau(series, l_x: int | None = None, window: tuple | None = None, times=None) -> PurificationFit:
    """Least-squares fit of log S_R against time.

    The window defaults to rows [l_x, 2*l_x] (inclusive), dropping the
    early-time transient; an explicit (lo, hi) window overrides it and
    omitting both fits the whole series. Entries at or below the positivity
    floor are excluded; a non-decaying series raises (tau unbounded).
    """
    series = np.asarray(series, dtype=float)
    t = np.arange(len(series)) if times is None else np.asarray(times, dtype=float)
    if len(t) != len(series):
        raise AnalysisError("times and series lengths differ")
    if window is not None:
        lo, hi = int(window[0]), int(window[1])
    elif l_x is not None:
        lo, hi = int(l_x), int(2 * l_x)
    else:
        lo, hi = 0, len(series) - 1
    if not 0 <= lo <= hi < len(series):
        raise AnalysisError(f"window [{lo}, {hi}] outside series of length {len(series)}")
    mask = np.zeros(len(series), dtype=bool)
    mask[lo : hi + 1] = True
    mask &= series > ENTROPY_FLOOR
    if mask.sum() < 2:
        raise AnalysisError("window empty after positivity filtering")
    x = t[mask]
    y = np.log(series[mask])
    slope, intercept = np.polyfit(x, y, 1)
    if slope >= 0.0:
        raise AnalysisError(f"series does not decay on the window (tau unbounded, slope {slope:g})")
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return PurificationFit(
        tau=float(-1.0 / slope),
        row_lo=lo,
        row_hi=hi,
        residual=resid,
        n_points=int(mask.sum()),
    )


def tripartite_mi(entropy, quarters, n: float = 1.0) -> float:
    """Seven-term alternating entropy sum over three disjoint blocks.

    `entropy` is any callable (sites, n) -> real, e.g. a bound
    MatrixProductState.subsystem_renyi or Tableau entropy adapter.
    """
    blocks = [tuple(q) for q in quarters]
    if len(blocks) != 3:
        raise AnalysisError("need exactly three blocks")
    seen: set = set()
    for b in blocks:
        if seen & set(b):
            raise AnalysisError("blocks overlap")
        seen |= set(b)
    a, b, c = blocks
    return float(
        entropy(a, n)
        + entropy(b, n)
        + entropy(c, n)
        - entropy(a + b, n)
        - entropy(a + c, n)
        - entropy(b + c, n)
        + entropy(a + b + c, n)
    )


@dataclass(frozen=True)
class CollapseFit:
    """Scaling-collapse result with the R <= 1.3 R_min error region.

    box is the bounding rectangle (eps_lo, eps_hi, nu_lo, nu_hi) of grid
    cells inside the contour; identifiable is False when the objective is
    flat (data carry no scaling signal).
    """

    eps_c: float
    nu: float
    r_min: float
    box: tuple
    identifiable: bool


def collapse_objective(points, eps_c: float, nu: float) -> float:
    """Mean squared deviation of each interior point from the straight line
    through its neighbors on the sorted master curve x = (eps-eps_c)*L^(1/nu)."""
    eps, ell, y = points
    x = (eps - eps_c) * ell ** (1.0 / nu)
    order = np.argsort(x)
    xs, ys = x[order], y[order]
    x0, x1, x2 = xs[:-2], xs[1:-1], xs[2:]
    y0, y2 = ys[:-2], ys[2:]
    span = x2 - x0
    safe = np.where(np.abs(span) > 1e-300, span, 1.0)
    pred = y0 + (y2 - y0) * (x1 - x0) / safe
    return float(np.mean((ys[1:-1] - pred) ** 2))


def _as_point_arrays(points) -> tuple:
    pts = [(float(e), float(l), float(v)) for e, l, v in points]
    if len(pts) < 3:
        raise AnalysisError("need at least three points")
    eps = np.array([p[0] for p in pts])
    ell = np.array([p[1] for p in pts])
    y = np.array([p[2] for p in pts])
    if len(set(ell.tolist())) < 2:
        raise AnalysisError("need at least two distinct system sizes")
    return eps, ell, y


def data_collapse(
    points,
    eps_res: float = 1e-3,
    nu_range: tuple = (0.7, 2.0),
    nu_res: float = 1e-2,
    return_grid: bool = False,
):
    """Grid minimization of the collapse objective, then local refinement.

    The eps_c grid spans the swept epsilon range at eps_res; nu runs over
    nu_range at nu_res. The error box is the bounding rectangle of grid
    cells with R <= 1.3 R_min (using the refined minimum), widened to
    contain the refined optimum.
    """
    arrs = _as_point_arrays(points)
    eps = arrs[0]
    eps_grid = np.arange(eps.min(), eps.max() + eps_res / 2, eps_res)
    nu_grid = np.arange(nu_range[0], nu_range[1] + nu_res / 2, nu_res)
    r = np.empty((len(eps_grid), len(nu_grid)))
    for i, ec in enumerate(eps_grid):
        for j, nu in enumerate(nu_grid):
            r[i, j] = collapse_objective(arrs, ec, nu)
    i0, j0 = np.unravel_index(np.argmin(r), r.shape)
    spread = float(r.max() - r.min())
    identifiable = spread > 1e-18

    best = scipy.optimize.minimize(
        lambda p: collapse_objective(arrs, p[0], p[1]),
        x0=[eps_grid[i0], nu_grid[j0]],
        method="Nelder-Mead",
        bounds=[(eps_grid[0], eps_grid[-1]), (nu_range[0], nu_range[1])],
    )
    eps_c, nu = float(best.x[0]), float(best.x[1])
    r_min = float(best.fun)

    inside = r <= 1.3 * max(r_min, 1e-300)
    if inside.any():
        ii, jj = np.nonzero(inside)
        box = (
            min(float(eps_grid[ii.min()]), eps_c),
            max(float(eps_grid[ii.max()]), eps_c),
            min(float(nu_grid[jj.min()]), nu),
            max(float(nu_grid[jj.max()]), nu),
        )
    else:
        box = (eps_c, eps_c, nu, nu)
    fit = CollapseFit(eps_c=eps_c, nu=nu, r_min=r_min, box=box, identifiable=identifiable)
    if return_grid:
        return fit, (eps_grid, nu_grid, r)
    return fit


def pair_crossings(curves, tail_floor: float = 0.05) -> list:
    """Interpolated crossing locations for every pair of size-labelled curves.

    curves maps a size label to (x, y) arrays on a shared grid. For each
    size pair the gap y_small - y_large is scanned for the first transition
    between the two cleanly ordered regions, where "clean" means the gap
    exceeds tail_floor times its own peak magnitude; the zero inside that
    bracket is linearly interpolated. Sign wiggles in the flat tail past
    the transition never reach the floor and are ignored.
    """
    labels = sorted(curves)
    if len(labels) < 2:
        raise AnalysisError("need at least two curves")
    out = []
    for ia in range(len(labels)):
        for ib in range(ia + 1, len(labels)):
            xa, ya = (np.asarray(v, dtype=float) for v in curves[labels[ia]])
            xb, yb = (np.asarray(v, dtype=float) for v in curves[labels[ib]])
            if len(xa) != len(xb) or not np.allclose(xa, xb):
                raise AnalysisError("curves must share an x grid")
            diff = ya - yb
            floor = tail_floor * np.max(np.abs(diff))
            live = np.nonzero(np.abs(diff) >= floor)[0]
            if live.size == 0 or floor == 0.0:
                continue
            d = np.sign(diff[live[0]]) * diff
            neg = np.nonzero(d <= -floor)[0]
            if neg.size == 0:
                continue
            b = neg[0]
            a = int(np.nonzero(d[:b] >= floor)[0][-1])
            for k in range(a, b):
                if d[k] > 0.0 >= d[k + 1]:
                    frac = d[k] / (d[k] - d[k + 1])
                    out.append(float(xa[k] + (xa[k + 1] - xa[k]) * frac))
                    break
    if not out:
        raise AnalysisError("no curve crossings found")
    return out


def crossing_estimate(curves, tail_floor: float = 0.05) -> tuple:
    """Mean pairwise crossing location and half the pairwise spread."""
    xs = pair_crossings(curves, tail_floor=tail_floor)
    return float(np.mean(xs)), float(0.5 * (max(xs) - min(xs)))


def epsilon_to_fidelity(epsilon: float) -> float:
    """Two-qubit cycle fidelity of a depolarizing rate (exact quadratic)."""
    if not 0.0 <= epsilon <= 1.0:
        raise AnalysisError(f"epsilon {epsilon} outside [0, 1]")
    return (1.0 - epsilon) ** 2 + epsilon * (2.0 - epsilon) / 5.0


def fidelity_to_epsilon(f: float) -> float:
    """Exact inverse of epsilon_to_fidelity (smaller quadratic root)."""
    if not 0.0 < f <= 1.0:
        raise AnalysisError(f"fidelity {f} outside (0, 1]")
    disc = 1.0 - 1.25 * (1.0 - f)
    if disc < 0.0:
        raise AnalysisError(f"fidelity {f} below the invertible range (>= 0.2)")
    return 1.0 - np.sqrt(disc)


def linear_epsilon_estimate(f: float) -> float:
    """First-order rule epsilon ~ (5/8)(1 - f)."""
    if not 0.0 < f <= 1.0:
        raise AnalysisError(f"fidelity {f} outside (0, 1]")
    return 0.625 * (1.0 - f)
