"""2D lattices, random shallow circuits, and their 1D lightcone compilation.

A shallow noisy circuit on a 2D lattice is measured all at once at the end,
but any single output row only depends on the events inside its past
lightcone.  Sweeping the readout row across the lattice therefore turns the
2D circuit into a 1D monitored circuit on a narrow strip of "slots": emit
the not-yet-emitted cone of each row, measure the row, and recycle its
slots for later rows.  This module builds the lattices and circuit
instances and performs that compilation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channels import KrausSet, NoiseModel
from .gates import CLIFFORD_1Q, ROTATION_SET, SWAP, fsim, iswap

__all__ = [
    "LatticeError",
    "CompileError",
    "Lattice2D",
    "Circuit2D",
    "LayerGates",
    "Gate",
    "Noise",
    "MeasureReset",
    "EffectiveCircuit1D",
    "build_lattice",
    "random_instance",
    "compile_sebd",
    "fsim",
    "iswap",
    "circuit_to_dict",
    "circuit_from_dict",
    "effective_to_dict",
    "effective_from_dict",
]

FSIM_THETA = np.pi / 2
FSIM_PHI = np.pi / 6
LAYER_LABELS = "ABCD"
GATE_FAMILIES = ("fsim", "iswap", "clifford-iswap-swap")


class LatticeError(ValueError):
    pass


class CompileError(ValueError):
    pass


def _check_unitary(m: np.ndarray, dim: int, what: str):
    m = np.asarray(m, dtype=complex)
    if m.shape != (dim, dim):
        raise CompileError(f"{what} must be {dim}x{dim}")
    if np.max(np.abs(m.conj().T @ m - np.eye(dim))) > 1e-12:
        raise CompileError(f"{what} is not unitary")


# ---------------------------------------------------------------------------
# lattices


@dataclass(frozen=True)
class Lattice2D:
    """Sites in scan order (sorted by (y, x)) plus layer-labelled bonds.

    Coordinates are zero-based throughout.  ``bonds`` holds
    (site index, site index, label) triples; within one label the bonds
    form a matching.
    """

    kind: str
    L_x: int
    L_y: int
    sites: tuple
    bonds: tuple

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    def site_index(self) -> dict:
        return {c: i for i, c in enumerate(self.sites)}

    def layer_bonds(self, label: str) -> list:
        return [(a, b) for a, b, l in self.bonds if l == label]


def _square_lattice(L_x: int, L_y: int) -> Lattice2D:
    sites = [(x, y) for y in range(L_y) for x in range(L_x)]
    index = {c: i for i, c in enumerate(sites)}
    bonds = []
    # sheared square array: rows couple only upward, with x-offsets
    # {0,-1} below even rows and {-1,-2} below odd rows
    for (x, y) in sites:
        if y + 1 >= L_y:
            continue
        if y % 2 == 0:
            pairs = ((0, "A"), (-1, "B"))
        else:
            pairs = ((-1, "C"), (-2, "D"))
        for dx, label in pairs:
            other = (x + dx, y + 1)
            if other in index:
                bonds.append((index[(x, y)], index[other], label))
    return Lattice2D("square", L_x, L_y, tuple(sites), tuple(bonds))


def _heavy_hex_lattice(L: int) -> Lattice2D:
    # linear size L = 4k+3; long rows of sites at even y interleaved with
    # sparse bridge rows at odd y, bridge x alternating between the
    # 0 mod 4 and 2 mod 4 columns from one bridge row to the next
    k = (L - 3) // 4
    n_rows = 4 * k + 1
    sites = []
    for y in range(n_rows):
        if y % 2 == 0:
            lo = 1 if y == n_rows - 1 else 0
            hi = L - 2 if y == 0 else L - 1
            sites.extend((x, y) for x in range(lo, hi + 1))
        else:
            residue = 0 if y % 4 == 1 else 2
            sites.extend((x, y) for x in range(L) if x % 4 == residue)
    sites.sort(key=lambda c: (c[1], c[0]))
    index = {c: i for i, c in enumerate(sites)}
    bonds = []
    for (x, y) in sites:
        if y % 2 == 0:
            if (x + 1, y) in index:
                label = "A" if x % 2 == 0 else "B"
                bonds.append((index[(x, y)], index[(x + 1, y)], label))
        else:
            for dy, label in ((-1, "C"), (1, "D")):
                other = (x, y + dy)
                if other not in index:
                    raise LatticeError(f"bridge at {(x, y)} misses row site {other}")
                if dy < 0:
                    bonds.append((index[other], index[(x, y)], label))
                else:
                    bonds.append((index[(x, y)], index[other], label))
    return Lattice2D("heavy-hex", L, n_rows, tuple(sites), tuple(bonds))


def build_lattice(kind: str, L_x: int, L_y: int | None = None) -> Lattice2D:
    """Construct a named lattice; heavy-hex derives its row count from L_x."""
    if kind == "square":
        if L_y is None or L_x < 2 or L_y < 2:
            raise LatticeError("square lattice needs L_x, L_y >= 2")
        lat = _square_lattice(L_x, L_y)
    elif kind == "heavy-hex":
        if L_x < 7 or L_x % 4 != 3:
            raise LatticeError("heavy-hex linear size must be 4k+3 with k >= 1")
        if L_y is not None and L_y != L_x - 2:
            raise LatticeError(f"heavy-hex of size {L_x} has {L_x - 2} rows")
        lat = _heavy_hex_lattice(L_x)
    else:
        raise LatticeError(f"unknown lattice kind {kind!r}")
    for label in LAYER_LABELS:
        seen = set()
        for a, b in lat.layer_bonds(label):
            if a in seen or b in seen:
                raise LatticeError(f"layer {label} is not a matching")
            seen.update((a, b))
    return lat


# ---------------------------------------------------------------------------
# circuit instances


@dataclass(frozen=True, eq=False)
class LayerGates:
    rotations: tuple
    gates: tuple


@dataclass(frozen=True, eq=False)
class Circuit2D:
    """One scheduled layer per character; noise acts on every qubit after
    every layer (idle qubits included), or not at all when noise is None."""

    lattice: Lattice2D
    schedule: str
    layers: tuple
    noise: NoiseModel | None

    def __post_init__(self):
        if len(self.schedule) != len(self.layers):
            raise CompileError("schedule length must match layer count")
        for lg in self.layers:
            if len(lg.rotations) != self.lattice.n_sites:
                raise CompileError("need one rotation per site per layer")
            for g in lg.rotations:
                _check_unitary(g, 2, "rotation")
            for _, _, m in lg.gates:
                _check_unitary(m, 4, "two-qubit gate")

    @property
    def depth(self) -> int:
        return len(self.schedule)


def _validate_schedule(lattice: Lattice2D, schedule: str):
    if not schedule:
        raise CompileError("schedule must not be empty")
    bad = set(schedule) - set(LAYER_LABELS)
    if bad:
        raise CompileError(f"schedule labels {sorted(bad)} not in {LAYER_LABELS}")


def random_instance(
    lattice: Lattice2D,
    schedule: str,
    gate_family: str,
    noise: NoiseModel | None,
    seed: int,
) -> Circuit2D:
    """Draw a random circuit instance, deterministic in the seed.

    Families: 'fsim' pairs fSim(pi/2, pi/6) with uniform draws from the
    eight-element rotation set, 'iswap' swaps in iSWAP, and
    'clifford-iswap-swap' uses iSWAP (90%) / SWAP (10%) with uniform
    single-qubit Cliffords.
    """
    _validate_schedule(lattice, schedule)
    if gate_family not in GATE_FAMILIES:
        raise CompileError(f"unknown gate family {gate_family!r}")
    rng = np.random.default_rng(seed)
    clifford = gate_family == "clifford-iswap-swap"
    oneq = CLIFFORD_1Q if clifford else ROTATION_SET
    layers = []
    for label in schedule:
        idx = rng.integers(len(oneq), size=lattice.n_sites)
        rotations = tuple(oneq[i] for i in idx)
        gates = []
        for a, b in lattice.layer_bonds(label):
            if clifford:
                m = iswap() if rng.random() < 0.9 else SWAP
            elif gate_family == "iswap":
                m = iswap()
            else:
                m = fsim(FSIM_THETA, FSIM_PHI)
            gates.append((a, b, m))
        layers.append(LayerGates(rotations, tuple(gates)))
    return Circuit2D(lattice, schedule, tuple(layers), noise)


# ---------------------------------------------------------------------------
# 1D event stream


@dataclass(frozen=True, eq=False)
class Gate:
    """Unitary on slot i (2x2, j is None) or on slots (i, j) (4x4)."""

    i: int
    j: int | None
    matrix: np.ndarray


@dataclass(frozen=True, eq=False)
class Noise:
    i: int
    kraus: KrausSet


@dataclass(frozen=True, eq=False)
class MeasureReset:
    """Readout of slot i producing the output bit at 2D coordinate (x, y)."""

    i: int
    coord: tuple


@dataclass(frozen=True, eq=False)
class EffectiveCircuit1D:
    n_sites: int
    rows: tuple
    schedule: str
    lattice_kind: str
    lattice_shape: tuple
    strategy: str

    def events(self):
        for row in self.rows:
            yield from row

    def coords(self) -> list:
        return [ev.coord for ev in self.events() if isinstance(ev, MeasureReset)]

    def max_gate_range(self) -> int:
        r = 0
        for ev in self.events():
            if isinstance(ev, Gate) and ev.j is not None:
                r = max(r, abs(ev.i - ev.j))
        return r

    def counts(self) -> dict:
        out = {"gate1": 0, "gate2": 0, "noise": 0, "measure": 0}
        for ev in self.events():
            if isinstance(ev, Gate):
                out["gate1" if ev.j is None else "gate2"] += 1
            elif isinstance(ev, Noise):
                out["noise"] += 1
            else:
                out["measure"] += 1
        return out


# ---------------------------------------------------------------------------
# compilation


def _abstract_stream(circuit: Circuit2D, with_noise: bool):
    """Emit per-output-row batches of abstract events in causal order.

    Readouts are processed in scan order; each qubit's not-yet-emitted past
    cone goes out right before its own MeasureReset.  Interleaving the
    measurements with the gates this way (rather than measuring a full row
    at once) is what lets a slot freed early in a row be recycled while the
    row is still being read out, keeping the strip at its minimal width.

    Returns (rows_abstract, rows_y) where each abstract event is one of
    ('r', t, site, matrix), ('g', t, a, b, matrix), ('n', t, site),
    ('m', site).
    """
    lat = circuit.lattice
    n = lat.n_sites
    ev_time, ev_phase, ev_sites, ev_abs = [], [], [], []
    preds = []
    tail = [-1] * n

    def add(t, phase, ss, abstract):
        eid = len(ev_time)
        ev_time.append(t)
        ev_phase.append(phase)
        ev_sites.append(ss)
        ev_abs.append(abstract)
        preds.append(tuple(tail[s] for s in ss if tail[s] >= 0))
        for s in ss:
            tail[s] = eid
        return eid

    for t, lg in enumerate(circuit.layers, start=1):
        for s in range(n):
            add(t, 0, (s,), ("r", t, s, lg.rotations[s]))
        for a, b, m in lg.gates:
            add(t, 1, (a, b), ("g", t, a, b, m))
        if with_noise:
            for s in range(n):
                add(t, 2, (s,), ("n", t, s))

    rows_y = sorted({y for _, y in lat.sites})
    by_row = {y: [] for y in rows_y}
    for i, (x, y) in enumerate(lat.sites):
        by_row[y].append(i)

    done = [False] * len(ev_time)
    rows_abstract = []
    for y in rows_y:
        batch = []
        for s in by_row[y]:
            cone = []
            stack = [tail[s]]
            while stack:
                e = stack.pop()
                if e < 0 or done[e]:
                    continue
                done[e] = True
                cone.append(e)
                stack.extend(preds[e])
            cone.sort(key=lambda e: (ev_time[e], ev_phase[e], ev_sites[e]))
            batch.extend(ev_abs[e] for e in cone)
            batch.append(("m", s))
        rows_abstract.append(batch)
    if not all(done):
        raise CompileError("event stream failed to cover the circuit")
    return rows_abstract, rows_y


def _event_sites(ev) -> tuple:
    if ev[0] == "g":
        return (ev[2], ev[3])
    if ev[0] == "m":
        return (ev[1],)
    return (ev[2],)


def _site_intervals(rows_abstract, n: int):
    """First and last flat position at which each lattice site is touched."""
    first = [None] * n
    last = [None] * n
    partners = [[] for _ in range(n)]
    pos = 0
    for batch in rows_abstract:
        for ev in batch:
            ss = _event_sites(ev)
            for s in ss:
                if first[s] is None:
                    first[s] = pos
                last[s] = pos
            if ev[0] == "g":
                partners[ev[2]].append((pos, ev[3]))
                partners[ev[3]].append((pos, ev[2]))
            pos += 1
    return first, last, partners


def _map_ok(assign, first, last) -> bool:
    by_slot = {}
    for s, k in enumerate(assign):
        by_slot.setdefault(k, []).append(s)
    for occupants in by_slot.values():
        occupants.sort(key=lambda s: first[s])
        for a, b in zip(occupants, occupants[1:]):
            if last[a] >= first[b]:
                return False
    return True


def _compress(assign):
    used = sorted(set(assign))
    rank = {k: i for i, k in enumerate(used)}
    return [rank[k] for k in assign], len(used)


def _map_score(assign, rows_abstract):
    assign, n_used = _compress(assign)
    r = 0
    for batch in rows_abstract:
        for ev in batch:
            if ev[0] == "g":
                r = max(r, abs(assign[ev[2]] - assign[ev[3]]))
    return assign, (n_used, r)


def _periodic_slots(lat: Lattice2D, rows_abstract, first, last):
    """Search strided slot maps; these recycle each slot every W rows."""
    best = None
    for W in (2, 3, 4):
        for r in range(W):
            for name, fn in (
                (f"periodic-col-{W}-{r}", lambda x, y: W * x + (y + r) % W),
                (f"periodic-row-{W}-{r}", lambda x, y: ((y + r) % W) * lat.L_x + x),
            ):
                assign = [fn(x, y) for x, y in lat.sites]
                if not _map_ok(assign, first, last):
                    continue
                assign, score = _map_score(assign, rows_abstract)
                if best is None or score < best[2]:
                    best = (name, assign, score)
    return best


def _dynamic_slots(lat: Lattice2D, rows_abstract, first, last, partners):
    """Fallback interval allocation: nearest free slot to the earliest
    already-placed gate partner, else the most recently freed slot."""
    order = sorted(range(lat.n_sites), key=lambda s: first[s])
    release = []
    assign = [None] * lat.n_sites
    for s in order:
        free = [k for k in range(len(release)) if release[k] < first[s]]
        target = None
        for _, p in sorted(partners[s]):
            if assign[p] is not None:
                target = assign[p]
                break
        if free:
            if target is not None:
                k = min(free, key=lambda k: (abs(k - target), k))
            else:
                k = max(free, key=lambda k: release[k])
        else:
            k = len(release)
            release.append(-1)
        assign[s] = k
        release[k] = last[s]
    assign, score = _map_score(assign, rows_abstract)
    return "dynamic", assign, score


def compile_sebd(circuit: Circuit2D, unraveling=None) -> EffectiveCircuit1D:
    """Compile a 2D circuit into the effective 1D monitored circuit.

    ``unraveling`` selects the Kraus form attached to the noise events:
    a form name understood by the circuit's NoiseModel, an explicit
    KrausSet, or None for the model's default form.
    """
    _validate_schedule(circuit.lattice, circuit.schedule)
    lat = circuit.lattice
    kraus = None
    if circuit.noise is not None:
        if isinstance(unraveling, KrausSet):
            kraus = unraveling
        else:
            kraus = circuit.noise.kraus(unraveling)
        if kraus.d != 2:
            raise CompileError("noise unraveling must act on a single qubit")
    elif unraveling is not None:
        raise CompileError("unraveling given but the circuit is noiseless")

    rows_abstract, _ = _abstract_stream(circuit, with_noise=kraus is not None)
    first, last, partners = _site_intervals(rows_abstract, lat.n_sites)
    chosen = _periodic_slots(lat, rows_abstract, first, last)
    if chosen is None:
        chosen = _dynamic_slots(lat, rows_abstract, first, last, partners)
    strategy, assign, (n_used, _) = chosen

    rows = []
    for batch in rows_abstract:
        out = []
        for ev in batch:
            if ev[0] == "r":
                out.append(Gate(assign[ev[2]], None, ev[3]))
            elif ev[0] == "g":
                out.append(Gate(assign[ev[2]], assign[ev[3]], ev[4]))
            elif ev[0] == "n":
                out.append(Noise(assign[ev[2]], kraus))
            else:
                out.append(MeasureReset(assign[ev[1]], lat.sites[ev[1]]))
        rows.append(tuple(out))
    return EffectiveCircuit1D(
        n_sites=n_used,
        rows=tuple(rows),
        schedule=circuit.schedule,
        lattice_kind=lat.kind,
        lattice_shape=(lat.L_x, lat.L_y),
        strategy=strategy,
    )


# ---------------------------------------------------------------------------
# serialization


def _mat_to_list(m: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(m)]


def _mat_from_list(rows) -> np.ndarray:
    return np.array([[complex(a, b) for a, b in row] for row in rows])


def _noise_to_dict(noise: NoiseModel | None):
    if noise is None:
        return None
    rec = {"kind": noise.kind, "epsilon": noise.epsilon}
    if noise.unital is not None:
        rec["unital"] = list(noise.unital.as_array())
    return rec


def _noise_from_dict(rec) -> NoiseModel | None:
    from .channels import UnitalParams

    if rec is None:
        return None
    unital = UnitalParams(*rec["unital"]) if "unital" in rec else None
    return NoiseModel(rec["kind"], rec["epsilon"], unital)


def circuit_to_dict(c: Circuit2D) -> dict:
    return {
        "format": "sebd-circuit2d/1",
        "lattice": {"kind": c.lattice.kind, "L_x": c.lattice.L_x, "L_y": c.lattice.L_y},
        "schedule": c.schedule,
        "noise": _noise_to_dict(c.noise),
        "layers": [
            {
                "rotations": [_mat_to_list(g) for g in lg.rotations],
                "gates": [[a, b, _mat_to_list(m)] for a, b, m in lg.gates],
            }
            for lg in c.layers
        ],
    }


def circuit_from_dict(rec: dict) -> Circuit2D:
    if rec.get("format") != "sebd-circuit2d/1":
        raise CompileError("not a serialized 2D circuit")
    lat = build_lattice(rec["lattice"]["kind"], rec["lattice"]["L_x"], rec["lattice"]["L_y"])
    layers = tuple(
        LayerGates(
            tuple(_mat_from_list(g) for g in lg["rotations"]),
            tuple((a, b, _mat_from_list(m)) for a, b, m in lg["gates"]),
        )
        for lg in rec["layers"]
    )
    return Circuit2D(lat, rec["schedule"], layers, _noise_from_dict(rec["noise"]))


def effective_to_dict(e: EffectiveCircuit1D) -> dict:
    from .channels import kraus_to_dict

    kraus_tab = []
    kraus_ids = {}
    rows = []
    for row in e.rows:
        out = []
        for ev in row:
            if isinstance(ev, Gate):
                out.append(["g", ev.i, ev.j, _mat_to_list(ev.matrix)])
            elif isinstance(ev, Noise):
                key = id(ev.kraus)
                if key not in kraus_ids:
                    kraus_ids[key] = len(kraus_tab)
                    kraus_tab.append(kraus_to_dict(ev.kraus))
                out.append(["n", ev.i, kraus_ids[key]])
            else:
                out.append(["m", ev.i, ev.coord[0], ev.coord[1]])
        rows.append(out)
    return {
        "format": "sebd-effective1d/1",
        "n_sites": e.n_sites,
        "schedule": e.schedule,
        "lattice_kind": e.lattice_kind,
        "lattice_shape": list(e.lattice_shape),
        "strategy": e.strategy,
        "kraus": kraus_tab,
        "rows": rows,
    }


def effective_from_dict(rec: dict) -> EffectiveCircuit1D:
    from .channels import kraus_from_dict

    if rec.get("format") != "sebd-effective1d/1":
        raise CompileError("not a serialized 1D circuit")
    kraus_tab = [kraus_from_dict(r) for r in rec["kraus"]]
    rows = []
    for row in rec["rows"]:
        out = []
        for ev in row:
            if ev[0] == "g":
                out.append(Gate(ev[1], ev[2], _mat_from_list(ev[3])))
            elif ev[0] == "n":
                out.append(Noise(ev[1], kraus_tab[ev[2]]))
            else:
                out.append(MeasureReset(ev[1], (ev[2], ev[3])))
        rows.append(tuple(out))
    return EffectiveCircuit1D(
        n_sites=rec["n_sites"],
        rows=tuple(rows),
        schedule=rec["schedule"],
        lattice_kind=rec["lattice_kind"],
        lattice_shape=tuple(rec["lattice_shape"]),
        strategy=rec["strategy"],
    )
