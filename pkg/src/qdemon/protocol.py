"""Timed feedback protocols and ensemble runs.

Protocol A (three readouts): initialization, excitation, readout x, feedback
pi-pulse conditioned on x, readout z.

Protocol B (five readouts): as A, with a feedback readout k and a verifying
projective readout y inserted after x; the pi-pulse is conditioned on k.

All times are in microseconds measured from the start of the initialization
readout. Default gaps reproduce the 2.5 us / 4 us sequence lengths with 500 ns
readouts, 20 ns pulses and a 200 ns feedback delay; they are approximations of
the published pulse diagrams and every gap can be overridden.
"""
from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from collections.abc import Iterable, Sequence

import numpy as np

from .core import JumpEvent, Outcome, PhysicalParams, ShotRecord
from .measurement import FeedbackErrorModel, G, E, flip_batch, readout_batch
from .rng import shot_rngs
from .trajectory import DEFAULT_DT, EvolutionConfig, evolve_batch, jump_probabilities, n_steps, pi_pulse_batch

EVENT_KINDS = ("init_readout", "excite", "readout_x", "readout_k", "readout_y", "feedback", "readout_z", "delay")
READOUT_KINDS = ("readout_x", "readout_k", "readout_y", "readout_z")
CSV_COLUMNS = ("shot", "x", "k", "y", "z", "work_hw", "n_jumps")
ABSENT = -1
_TIME_TOL = 1e-9


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class TimelineEvent:
    kind: str
    start: float
    duration: float

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ConfigurationError(f"unknown event kind {self.kind!r}")
        if self.duration < 0 or self.start < 0:
            raise ConfigurationError(f"{self.kind}: negative start or duration")

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass(frozen=True)
class ProtocolTimeline:
    events: tuple[TimelineEvent, ...]

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        self.validate()

    def validate(self) -> None:
        ev = self.events
        for a, b in zip(ev, ev[1:]):
            if b.start < a.end - _TIME_TOL:
                raise ConfigurationError(f"{b.kind} at {b.start} us overlaps or precedes {a.kind} ending at {a.end} us")
        kinds = [e.kind for e in ev]
        for kind in set(kinds) - {"delay"}:
            if kinds.count(kind) > 1:
                raise ConfigurationError(f"event {kind} appears more than once")
        for required in ("excite", "readout_x", "readout_z"):
            if required not in kinds:
                raise ConfigurationError(f"timeline lacks {required}")
        if ("readout_k" in kinds) != ("readout_y" in kinds):
            raise ConfigurationError("readout_k and readout_y must appear together")
        order = ["excite", "readout_x"]
        if "readout_k" in kinds:
            order += ["readout_k", "readout_y"]
        if "feedback" in kinds:
            order.append("feedback")
        order.append("readout_z")
        positions = [kinds.index(k) for k in order]
        if positions != sorted(positions):
            raise ConfigurationError(f"events out of order; expected {' < '.join(order)}")
        if "init_readout" in kinds and kinds.index("init_readout") > kinds.index("excite"):
            raise ConfigurationError("init_readout must precede excite")

    @property
    def protocol(self) -> str:
        return "B" if self.has("readout_k") else "A"

    def has(self, kind: str) -> bool:
        return any(e.kind == kind for e in self.events)

    def get(self, kind: str) -> TimelineEvent:
        for e in self.events:
            if e.kind == kind:
                return e
        raise KeyError(kind)

    @property
    def span(self) -> float:
        return self.events[-1].end - self.events[0].start

    def without_feedback(self) -> "ProtocolTimeline":
        return ProtocolTimeline(tuple(e for e in self.events if e.kind != "feedback"))

    def to_list(self) -> list[dict]:
        return [{"kind": e.kind, "start": e.start, "duration": e.duration} for e in self.events]

    @classmethod
    def from_list(cls, items: Iterable[dict]) -> "ProtocolTimeline":
        return cls(tuple(TimelineEvent(d["kind"], float(d["start"]), float(d["duration"])) for d in items))

    @classmethod
    def default_a(cls, readout_width: float = 0.5, pulse_width: float = 0.02, feedback_delay: float = 0.2,
                  init_wait: float = 0.48, z_wait: float = 0.28) -> "ProtocolTimeline":
        """Three-readout sequence, 2.5 us long with the defaults."""
        ev = [TimelineEvent("init_readout", 0.0, readout_width)]
        t = readout_width + init_wait
        ev.append(TimelineEvent("excite", t, pulse_width))
        x = TimelineEvent("readout_x", t + pulse_width, readout_width)
        fb = TimelineEvent("feedback", x.end + feedback_delay, pulse_width)
        ev += [x, fb, TimelineEvent("readout_z", fb.end + z_wait, readout_width)]
        return cls(tuple(ev))

    @classmethod
    def default_b(cls, readout_width: float = 0.5, pulse_width: float = 0.02, feedback_delay: float = 0.2,
                  init_wait: float = 0.48, xk_gap: float = 0.3, ky_gap: float = 0.0, z_wait: float = 0.48,
                  k_width: float | None = None, y_width: float | None = None) -> "ProtocolTimeline":
        """Five-readout sequence, 4 us long with the defaults.

        The feedback delay is counted from the end of the verifying readout y,
        which must finish before the pi-pulse.
        """
        k_width = readout_width if k_width is None else k_width
        y_width = readout_width if y_width is None else y_width
        ev = [TimelineEvent("init_readout", 0.0, readout_width)]
        t = readout_width + init_wait
        ev.append(TimelineEvent("excite", t, pulse_width))
        x = TimelineEvent("readout_x", t + pulse_width, readout_width)
        k = TimelineEvent("readout_k", x.end + xk_gap, k_width)
        y = TimelineEvent("readout_y", k.end + ky_gap, y_width)
        fb = TimelineEvent("feedback", y.end + feedback_delay, pulse_width)
        ev += [x, k, y, fb, TimelineEvent("readout_z", fb.end + z_wait, readout_width)]
        return cls(tuple(ev))

    @classmethod
    def default(cls, protocol: str, **overrides) -> "ProtocolTimeline":
        protocol = protocol.upper()
        if protocol == "A":
            return cls.default_a(**overrides)
        if protocol == "B":
            return cls.default_b(**overrides)
        raise ConfigurationError(f"unknown protocol {protocol!r}")


@dataclass
class ShotTable(Sequence):
    """Columnar store of shot records; indexing yields :class:`ShotRecord`.

    Absent k/y outcomes are stored as -1. Jumps are kept as flat arrays sorted
    by shot index.
    """

    protocol: str
    x: np.ndarray
    k: np.ndarray
    y: np.ndarray
    z: np.ndarray
    jump_shot: np.ndarray
    jump_time: np.ndarray
    jump_down: np.ndarray

    def __post_init__(self):
        order = np.argsort(self.jump_shot, kind="stable")
        self.jump_shot = self.jump_shot[order]
        self.jump_time = self.jump_time[order]
        self.jump_down = self.jump_down[order]

    def __len__(self) -> int:
        return int(self.x.shape[0])

    @property
    def work(self) -> np.ndarray:
        return (self.x.astype(np.int8) - self.z.astype(np.int8)).astype(np.int8)

    @property
    def n_jumps(self) -> np.ndarray:
        return np.bincount(self.jump_shot, minlength=len(self)).astype(np.int64)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        i = range(len(self))[i]
        lo, hi = np.searchsorted(self.jump_shot, [i, i + 1])
        jumps = tuple(JumpEvent(float(self.jump_time[j]), "down" if self.jump_down[j] else "up") for j in range(lo, hi))
        k = None if self.k[i] == ABSENT else Outcome(int(self.k[i]))
        y = None if self.y[i] == ABSENT else Outcome(int(self.y[i]))
        return ShotRecord(Outcome(int(self.x[i])), Outcome(int(self.z[i])), k, y, int(self.work[i]), jumps)

    def counts(self) -> np.ndarray:
        """Counts over (x, k, y, z); protocol-A shots are embedded with k = y = x."""
        k = np.where(self.k == ABSENT, self.x, self.k)
        y = np.where(self.y == ABSENT, self.x, self.y)
        flat = ((self.x.astype(np.int64) * 2 + k) * 2 + y) * 2 + self.z
        return np.bincount(flat, minlength=16).reshape(2, 2, 2, 2)

    @classmethod
    def from_records(cls, records: Sequence[ShotRecord]) -> "ShotTable":
        if isinstance(records, ShotTable):
            return records
        n = len(records)
        if n == 0:
            raise ValueError("no records")
        x = np.array([int(r.x) for r in records], dtype=np.int8)
        z = np.array([int(r.z) for r in records], dtype=np.int8)
        k = np.array([ABSENT if r.k is None else int(r.k) for r in records], dtype=np.int8)
        y = np.array([ABSENT if r.y is None else int(r.y) for r in records], dtype=np.int8)
        js, jt, jd = [], [], []
        for i, r in enumerate(records):
            for j in r.jumps:
                js.append(i)
                jt.append(j.time)
                jd.append(j.kind == "down")
        protocol = "A" if np.all(k == ABSENT) else "B"
        return cls(protocol, x, k, y, z, np.array(js, dtype=np.int64), np.array(jt, dtype=float),
                   np.array(jd, dtype=bool))

    @classmethod
    def concat(cls, tables: Sequence["ShotTable"]) -> "ShotTable":
        offsets = np.cumsum([0] + [len(t) for t in tables[:-1]])
        return cls(
            tables[0].protocol,
            np.concatenate([t.x for t in tables]),
            np.concatenate([t.k for t in tables]),
            np.concatenate([t.y for t in tables]),
            np.concatenate([t.z for t in tables]),
            np.concatenate([t.jump_shot + o for t, o in zip(tables, offsets)]),
            np.concatenate([t.jump_time for t in tables]),
            np.concatenate([t.jump_down for t in tables]),
        )

    def csv_rows(self, first_shot: int = 0):
        lab = {0: "g", 1: "e", ABSENT: ""}
        n_jumps = self.n_jumps
        work = self.work
        for i in range(len(self)):
            yield (first_shot + i, lab[int(self.x[i])], lab[int(self.k[i])], lab[int(self.y[i])],
                   lab[int(self.z[i])], int(work[i]), int(n_jumps[i]))

    def to_csv(self, fh, first_shot: int = 0) -> None:
        """Columns: shot,x,k,y,z,work_hw,n_jumps (k, y empty for protocol A)."""
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        w.writerows(self.csv_rows(first_shot))

    def to_jsonl(self, fh, first_shot: int = 0) -> None:
        """One object per line with keys in CSV column order plus ``jumps`` = [[time_us, kind], ...]."""
        for row, rec in zip(self.csv_rows(first_shot), self):
            obj = dict(zip(CSV_COLUMNS, row))
            for key in ("k", "y"):
                obj[key] = obj[key] or None
            obj["jumps"] = [[j.time, j.kind] for j in rec.jumps]
            fh.write(json.dumps(obj) + "\n")

    def csv_text(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()


def _draw(gens: list[np.random.Generator], n: int) -> np.ndarray:
    out = np.empty((len(gens), n))
    for row, g in zip(out, gens):
        g.random(out=row)
    return out


def _draw_one(gens: list[np.random.Generator]) -> np.ndarray:
    return np.fromiter((g.random() for g in gens), dtype=float, count=len(gens))


class _Batch:
    """State of a batch of shots walking through a timeline."""

    def __init__(self, gens, params: PhysicalParams, dt: float):
        self.gens = gens
        self.params = params
        self.dt = dt
        self.jumps: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []

    def _rates(self, duration):
        n = n_steps(duration, self.dt)
        if n == 0:
            return 0, 0.0, 0.0, 0.0
        h = duration / n
        a_down, a_up = jump_probabilities(self.params, h)
        return n, h, a_down, a_up

    def _log(self, raw, t0, h):
        for s, idx, down in raw:
            self.jumps.append((idx, np.full(idx.shape, t0 + (s + 1) * h), down))

    def evolve(self, cg, ce, t0, duration):
        n, h, a_down, a_up = self._rates(duration)
        if n == 0 or (a_down == 0 and a_up == 0):
            return
        _, raw = evolve_batch(cg, ce, _draw(self.gens, n), a_down, a_up, n)
        self._log(raw, t0, h)

    def readout(self, cg, ce, t0, width):
        n, h, a_down, a_up = self._rates(width)
        u_born = _draw_one(self.gens)
        uniforms = _draw(self.gens, n) if n and (a_down or a_up) else None
        labels, raw = readout_batch(cg, ce, u_born, uniforms, a_down, a_up, n)
        self._log(raw, t0, h)
        return labels


def _simulate(timeline: ProtocolTimeline, p_e_init: float, params: PhysicalParams, errors: FeedbackErrorModel,
              dt: float, gens: list[np.random.Generator]) -> ShotTable:
    """Run one batch of shots; each shot consumes only its own generator, in timeline order."""
    if not 0.0 <= p_e_init <= 1.0:
        raise ValueError("p_e_init must lie in [0, 1]")
    b = len(gens)
    batch = _Batch(gens, params, dt)
    # amplitudes stay real: real preparation, sigma_x, real decay factors
    cg = np.full(b, np.sqrt(1.0 - p_e_init))
    ce = np.full(b, np.sqrt(p_e_init))
    labels: dict[str, np.ndarray] = {}
    started = False
    t = 0.0
    for ev in timeline.events:
        if ev.kind == "excite":
            # initialization is idealized as a perfect reset; the pulse prepares the superposition
            started = True
            t = ev.end
            continue
        if not started or ev.kind == "init_readout":
            continue
        batch.evolve(cg, ce, t, ev.start - t)
        if ev.kind in READOUT_KINDS:
            labels[ev.kind] = batch.readout(cg, ce, ev.start, ev.duration)
            if ev.kind == "readout_k":
                labels["k_reported"] = flip_batch(labels["readout_k"], _draw_one(gens), errors)
        elif ev.kind == "feedback":
            if "k_reported" in labels:
                decision = labels["k_reported"]
            else:
                decision = flip_batch(labels["readout_x"], _draw_one(gens), errors)
            pi_pulse_batch(cg, ce, decision == E)
            batch.evolve(cg, ce, ev.start, ev.duration)
        else:  # delay
            batch.evolve(cg, ce, ev.start, ev.duration)
        t = ev.end

    absent = np.full(b, ABSENT, dtype=np.int8)
    if batch.jumps:
        js = np.concatenate([j[0] for j in batch.jumps]).astype(np.int64)
        jt = np.concatenate([j[1] for j in batch.jumps])
        jd = np.concatenate([j[2] for j in batch.jumps])
        order = np.lexsort((jt, js))
        js, jt, jd = js[order], jt[order], jd[order]
    else:
        js, jt, jd = np.zeros(0, np.int64), np.zeros(0), np.zeros(0, bool)
    return ShotTable(
        timeline.protocol,
        labels["readout_x"],
        labels.get("k_reported", absent),
        labels.get("readout_y", absent),
        labels["readout_z"],
        js, jt, jd,
    )


def _check(timeline: ProtocolTimeline, protocol: str, params: PhysicalParams, dt: float) -> None:
    if timeline.protocol != protocol:
        raise ConfigurationError(f"timeline describes protocol {timeline.protocol}, expected {protocol}")
    EvolutionConfig(dt).check(params)


def run_shot_A(p_e_init: float, timeline: ProtocolTimeline, params: PhysicalParams, errors: FeedbackErrorModel,
               rng: np.random.Generator, dt: float = DEFAULT_DT) -> ShotRecord:
    _check(timeline, "A", params, dt)
    return _simulate(timeline, p_e_init, params, errors, dt, [rng])[0]


def run_shot_B(p_e_init: float, timeline: ProtocolTimeline, params: PhysicalParams, errors: FeedbackErrorModel,
               rng: np.random.Generator, dt: float = DEFAULT_DT) -> ShotRecord:
    _check(timeline, "B", params, dt)
    return _simulate(timeline, p_e_init, params, errors, dt, [rng])[0]


def run_ensemble(protocol: str, n_shots: int, p_e_init: float, params: PhysicalParams | None = None,
                 errors: FeedbackErrorModel | None = None, timeline: ProtocolTimeline | None = None,
                 master_seed: int = 0, dt: float = DEFAULT_DT, threads: int = 1,
                 chunk_size: int = 8192) -> ShotTable:
    """``n_shots`` independent shots; shot i draws from the substream (master_seed, i).

    The result does not depend on ``threads`` or ``chunk_size``.
    """
    protocol = protocol.upper()
    if n_shots < 1:
        raise ValueError("n_shots must be >= 1")
    params = params or PhysicalParams()
    errors = errors or FeedbackErrorModel()
    timeline = timeline or ProtocolTimeline.default(protocol)
    _check(timeline, protocol, params, dt)
    bounds = [(lo, min(lo + chunk_size, n_shots)) for lo in range(0, n_shots, chunk_size)]

    def work(bound):
        lo, hi = bound
        return _simulate(timeline, p_e_init, params, errors, dt, shot_rngs(master_seed, lo, hi))

    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, bounds))
    else:
        parts = [work(bd) for bd in bounds]
    return parts[0] if len(parts) == 1 else ShotTable.concat(parts)
