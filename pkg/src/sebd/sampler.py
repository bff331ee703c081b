"""Trajectory driver for compiled effective 1D circuits.

Runs matrix-product-state trajectories of a compiled strip: gates apply
unitarily, noise events Born-sample one Kraus branch each, readout events
measure and reset their slot. Each trajectory's (z, m) pair is a valid
joint sample, so the z marginal samples the noisy output distribution.

Per-trajectory randomness comes from a counter-based Philox stream keyed by
(master_seed, trajectory index), so results do not depend on scheduling or
worker count.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .lightcone import Circuit2D, EffectiveCircuit1D, Gate, MeasureReset, Noise, compile_sebd
from .mps import DEFAULT_POLICY, MatrixProductState, MpsError, TruncationPolicy

__all__ = [
    "SamplerError",
    "TrajectoryRecord",
    "RunConfig",
    "run_trajectory",
    "sample",
    "failure_counts",
    "estimate_probability",
    "purification_run",
]


class SamplerError(ValueError):
    pass


@dataclass(frozen=True)
class TrajectoryRecord:
    """One trajectory's output.

    z maps each readout's 2D coordinate to its bit (one entry per lattice
    site). m lists the sampled Kraus index of every noise event in stream
    order. entropies holds one tuple per row-step with the von Neumann
    entropy at each configured bond cut; ref_entropies likewise tracks the
    attached reference qubit. A failed trajectory carries the error text in
    `failed` and partial telemetry; it is never silently dropped.
    """

    seed: int
    z: dict
    m: tuple
    entropies: tuple = ()
    ref_entropies: tuple = ()
    chi_max_seen: int = 1
    trunc_total: float = 0.0
    failed: str | None = None

    @property
    def ok(self) -> bool:
        return self.failed is None

    def bits_scan_order(self) -> tuple:
        return tuple(self.z[c] for c in sorted(self.z, key=lambda c: (c[1], c[0])))


@dataclass(eq=False)
class RunConfig:
    """Shared immutable configuration for a batch of trajectories.

    circuit may be a 2D circuit (compiled on first use, with unravel_form
    picking the noise Kraus representation) or an already-compiled effective
    1D circuit (whose unraveling is baked in; unravel_form must then be
    None). entropy_cuts selects bond cuts recorded after every row-step;
    reference_site attaches a Bell-pair probe to that chain site before the
    first row.
    """

    circuit: object
    unravel_form: str | None = None
    policy: TruncationPolicy = DEFAULT_POLICY
    n_trajectories: int = 1
    master_seed: int = 0
    entropy_cuts: tuple | None = None
    reference_site: int | None = None
    _effective: EffectiveCircuit1D | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.n_trajectories < 1:
            raise SamplerError("need at least one trajectory")
        if isinstance(self.circuit, EffectiveCircuit1D):
            if self.unravel_form is not None:
                raise SamplerError(
                    "a compiled circuit carries its unraveling already; "
                    "pass the 2D circuit to select a form"
                )
        elif not isinstance(self.circuit, Circuit2D):
            raise SamplerError(f"cannot run {type(self.circuit).__name__}")
        if self.entropy_cuts is not None:
            self.entropy_cuts = tuple(int(c) for c in self.entropy_cuts)

    def effective(self) -> EffectiveCircuit1D:
        if isinstance(self.circuit, EffectiveCircuit1D):
            return self.circuit
        if self._effective is None:
            self._effective = compile_sebd(self.circuit, unraveling=self.unravel_form)
        return self._effective


def _trajectory_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.Philox(key=[master_seed, index]))


def run_trajectory(cfg: RunConfig, index: int) -> TrajectoryRecord:
    """Execute one trajectory; deterministic for fixed (master_seed, index)."""
    eff = cfg.effective()
    rng = _trajectory_rng(cfg.master_seed, index)
    psi = MatrixProductState.new_product_state(eff.n_sites)
    handle = None
    if cfg.reference_site is not None:
        handle = psi.attach_reference(cfg.reference_site)
    z: dict = {}
    m: list = []
    entropies: list = []
    refs: list = []
    chi_max = 1
    failed = None
    try:
        for row in eff.rows:
            for ev in row:
                if isinstance(ev, Gate):
                    if ev.j is None:
                        psi.apply_1q(ev.i, ev.matrix)
                    else:
                        psi.apply_2q(ev.i, ev.j, ev.matrix, cfg.policy)
                elif isinstance(ev, Noise):
                    m.append(psi.apply_kraus(ev.i, ev.kraus, rng))
                elif isinstance(ev, MeasureReset):
                    z[ev.coord] = psi.measure_reset(ev.i, rng)
                else:
                    raise SamplerError(f"unknown event {ev!r}")
                if isinstance(ev, Gate) and ev.j is not None:
                    chi_max = max(chi_max, psi.max_bond())
            chi_max = max(chi_max, psi.max_bond())
            if cfg.entropy_cuts is not None:
                entropies.append(
                    tuple(psi.renyi_entropy(c, n=1.0) for c in cfg.entropy_cuts)
                )
            if handle is not None:
                refs.append(psi.reference_entropy(handle))
    except MpsError as exc:
        failed = f"{type(exc).__name__}: {exc}"
    return TrajectoryRecord(
        seed=index,
        z=z,
        m=tuple(m),
        entropies=tuple(entropies),
        ref_entropies=tuple(refs),
        chi_max_seen=chi_max,
        trunc_total=psi.trunc_log,
        failed=failed,
    )


def _run_one(args) -> TrajectoryRecord:
    cfg, index = args
    return run_trajectory(cfg, index)


def sample(cfg: RunConfig, workers: int = 1) -> list:
    """All n_trajectories records, ordered by trajectory index."""
    indices = range(cfg.n_trajectories)
    if workers <= 1:
        return [run_trajectory(cfg, i) for i in indices]
    cfg.effective()  # compile once before forking
    with ProcessPoolExecutor(max_workers=workers) as pool:
        chunk = max(1, cfg.n_trajectories // (8 * workers))
        return list(pool.map(_run_one, [(cfg, i) for i in indices], chunksize=chunk))


def failure_counts(records) -> dict:
    counts: dict = {}
    for rec in records:
        if not rec.ok:
            counts[rec.failed] = counts.get(rec.failed, 0) + 1
    return counts


def _bits_by_coord(eff: EffectiveCircuit1D, z_target) -> dict:
    coords = eff.coords()
    if isinstance(z_target, dict):
        missing = [c for c in coords if c not in z_target]
        if missing:
            raise SamplerError(f"target missing coordinates {missing[:4]}")
        return {c: int(z_target[c]) for c in coords}
    bits = [int(b) for b in z_target]
    if len(bits) != len(coords):
        raise SamplerError(f"target needs {len(coords)} bits, got {len(bits)}")
    return dict(zip(coords, bits))


def estimate_probability(cfg: RunConfig, z_target) -> tuple:
    """Monte Carlo estimate of the noisy output probability of one bitstring.

    Per trajectory, noise events stay Born-sampled while every readout is
    projected onto the target bit; the product of projection probabilities
    is an unbiased per-trajectory estimate. A projection onto a
    zero-probability branch ends that trajectory with contribution 0.
    Returns (mean, standard error) over the non-failed trajectories.
    """
    eff = cfg.effective()
    target = _bits_by_coord(eff, z_target)
    values = []
    n_failed = 0
    for index in range(cfg.n_trajectories):
        rng = _trajectory_rng(cfg.master_seed, index)
        psi = MatrixProductState.new_product_state(eff.n_sites)
        weight = 1.0
        try:
            for ev in eff.events():
                if isinstance(ev, Gate):
                    if ev.j is None:
                        psi.apply_1q(ev.i, ev.matrix)
                    else:
                        psi.apply_2q(ev.i, ev.j, ev.matrix, cfg.policy)
                elif isinstance(ev, Noise):
                    psi.apply_kraus(ev.i, ev.kraus, rng)
                else:
                    try:
                        weight *= psi.project_onto(ev.i, target[ev.coord])
                    except MpsError:
                        weight = 0.0
                        break
        except MpsError:
            n_failed += 1
            continue
        values.append(weight)
    if not values:
        raise SamplerError(f"all {cfg.n_trajectories} trajectories failed")
    if n_failed:
        import warnings

        warnings.warn(f"{n_failed} trajectories failed and were excluded")
    arr = np.array(values)
    se = float(arr.std(ddof=1) / np.sqrt(len(arr))) if len(arr) > 1 else 0.0
    return float(arr.mean()), se


def purification_run(cfg: RunConfig, max_rows: int | None = None) -> np.ndarray:
    """Mean reference-qubit entropy after each row-step.

    The Bell-pair reference attaches to cfg.reference_site before the first
    row; the returned series is averaged over cfg.n_trajectories.
    """
    if cfg.reference_site is None:
        raise SamplerError("purification needs a reference site")
    eff = cfg.effective()
    n_rows = len(eff.rows) if max_rows is None else min(max_rows, len(eff.rows))
    acc = np.zeros(n_rows)
    for index in range(cfg.n_trajectories):
        rng = _trajectory_rng(cfg.master_seed, index)
        psi = MatrixProductState.new_product_state(eff.n_sites)
        handle = psi.attach_reference(cfg.reference_site)
        for r in range(n_rows):
            for ev in eff.rows[r]:
                if isinstance(ev, Gate):
                    if ev.j is None:
                        psi.apply_1q(ev.i, ev.matrix)
                    else:
                        psi.apply_2q(ev.i, ev.j, ev.matrix, cfg.policy)
                elif isinstance(ev, Noise):
                    psi.apply_kraus(ev.i, ev.kraus, rng)
                elif isinstance(ev, MeasureReset):
                    psi.measure_reset(ev.i, rng)
            acc[r] += psi.reference_entropy(handle)
    return acc / cfg.n_trajectories
