"""Slot-level energy bookkeeping for multi-base-station networks.

Holds the deterministic update of available energy (one active base station
per slot draws a column of the cost matrix, everyone harvests), the residual
matrix, the D3/D4 optimality condition checks and the solar recharge formula.
All vectors are joules, all rates watts, slot lengths seconds.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .errors import DimensionError, TraceError, ValidationError


class Lifetime(NamedTuple):
    """Network lifetime in slots; ``capped`` marks runs that survived the
    whole horizon (treated as infinite by the experiments)."""

    slots: int
    capped: bool = False

    @property
    def value(self) -> float:
        """Lifetime as a float with capped runs counting as +inf."""
        return math.inf if self.capped else float(self.slots)


@dataclass(frozen=True)
class SlotConfig:
    """Slot length and horizon. ``capacity`` of None means the analysis mode
    where available energy is unbounded above."""

    tau: float = 7200.0
    max_slots: int = 2400
    capacity: float | None = None

    def __post_init__(self):
        if self.tau <= 0:
            raise ValidationError(f"slot length must be positive, got {self.tau}")
        if self.max_slots < 1:
            raise ValidationError(f"max_slots must be >= 1, got {self.max_slots}")
        if self.capacity is not None and self.capacity <= 0:
            raise ValidationError(f"capacity must be positive, got {self.capacity}")


@dataclass(frozen=True)
class CostMatrix:
    """M x M consumption rates in watts; entry (i, j) is what BS i draws while
    BS j is active."""

    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise DimensionError(f"cost matrix must be square, got shape {entries.shape}")
        if entries.shape[0] < 1:
            raise DimensionError("cost matrix must have at least one base station")
        if not np.all(np.isfinite(entries)):
            raise ValidationError("cost matrix entries must be finite")
        if np.any(entries < 0):
            raise ValidationError("cost matrix entries must be nonnegative")
        object.__setattr__(self, "entries", entries)

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    def has_active_dominance(self) -> bool:
        """True when every diagonal entry strictly exceeds the off-diagonal
        entries of its row (being active costs more than being passive)."""
        c = self.entries
        off = c + np.diag(np.full(self.m, -np.inf))
        return bool(np.all(np.diag(c) > off.max(axis=1)))

    def column(self, j: int) -> np.ndarray:
        return self.entries[:, j]


@dataclass(frozen=True)
class RechargeTrace:
    """Per-slot recharge rates: ``samples[t - 1]`` is the M-vector of watts for
    slot t. ``bound_s`` is the D2 bound; ``mean_sbar`` is the D1 mean when it
    is known by construction (None for e.g. diurnal traces)."""

    samples: np.ndarray
    bound_s: float
    mean_sbar: np.ndarray | None = None

    def __post_init__(self):
        samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if samples.size and (np.any(samples < 0) or np.any(samples > self.bound_s + 1e-12)):
            raise ValidationError("recharge samples must lie within [0, bound_s]")
        object.__setattr__(self, "samples", samples)
        if self.mean_sbar is not None:
            object.__setattr__(self, "mean_sbar", np.asarray(self.mean_sbar, dtype=float))

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def m(self) -> int:
        return self.samples.shape[1]

    def stream(self) -> Iterator[np.ndarray]:
        """Yield one rate vector per slot; raises TraceError past the end."""
        for row in self.samples:
            yield row
        raise TraceError(f"recharge trace exhausted after {len(self)} slots")

    @classmethod
    def from_csv(cls, path: str | Path, bound_s: float | None = None) -> "RechargeTrace":
        """Load a trace from a CSV with header ``slot,bs0,bs1,...``; rates in
        watts, one row per slot. Malformed rows are hard errors."""
        path = Path(path)
        rows: list[list[float]] = []
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise TraceError(f"{path}: empty trace file") from None
            expected = ["slot"] + [f"bs{i}" for i in range(len(header) - 1)]
            if [h.strip() for h in header] != expected or len(header) < 2:
                raise TraceError(f"{path}:1: bad header {header!r}, expected slot,bs0,bs1,...")
            width = len(header) - 1
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != width + 1:
                    raise TraceError(f"{path}:{lineno}: expected {width + 1} fields, got {len(row)}")
                try:
                    values = [float(x) for x in row[1:]]
                except ValueError as exc:
                    raise TraceError(f"{path}:{lineno}: non-numeric rate: {exc}") from None
                if any(v < 0 for v in values):
                    raise TraceError(f"{path}:{lineno}: negative recharge rate")
                rows.append(values)
        if not rows:
            raise TraceError(f"{path}: trace has a header but no slots")
        samples = np.asarray(rows, dtype=float)
        if bound_s is None:
            bound_s = float(samples.max(initial=0.0))
        return cls(samples=samples, bound_s=bound_s)

    def to_csv(self, path: str | Path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["slot"] + [f"bs{i}" for i in range(self.m)])
            for t, row in enumerate(self.samples, start=1):
                writer.writerow([t] + [format(v, ".12g") for v in row])


def onehot(active_index: int, m: int) -> np.ndarray:
    """One-hot decision vector for the slot's active base station."""
    if not 0 <= active_index < m:
        raise ValidationError(f"active index {active_index} out of range [0, {m})")
    v = np.zeros(m)
    v[active_index] = 1.0
    return v


def _check_rates(s: np.ndarray, m: int) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.shape != (m,):
        raise DimensionError(f"recharge vector has shape {s.shape}, expected ({m},)")
    if np.any(s < 0):
        raise ValidationError("recharge rates must be nonnegative")
    return s


def step_energy(
    e: np.ndarray, s: np.ndarray, v: int, c: CostMatrix, cfg: SlotConfig
) -> np.ndarray:
    """One slot of the energy update: e + tau*s - tau*C.v with v one-hot on
    the active index. With cfg.capacity set, clamps at the capacity."""
    e_next, _ = step_energy_with_overflow(e, s, v, c, cfg)
    return e_next


def step_energy_with_overflow(
    e: np.ndarray, s: np.ndarray, v: int, c: CostMatrix, cfg: SlotConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Like step_energy but also returns the harvested energy discarded by the
    capacity clamp (zero vector in uncapped mode)."""
    e = np.asarray(e, dtype=float)
    if e.shape != (c.m,):
        raise DimensionError(f"energy vector has shape {e.shape}, expected ({c.m},)")
    s = _check_rates(s, c.m)
    if not 0 <= v < c.m:
        raise ValidationError(f"active index {v} out of range [0, {c.m})")
    e_next = e + cfg.tau * s - cfg.tau * c.column(v)
    overflow = np.zeros_like(e_next)
    if cfg.capacity is not None:
        overflow = np.maximum(e_next - cfg.capacity, 0.0)
        e_next = np.minimum(e_next, cfg.capacity)
    return e_next, overflow


def cumulative_energy(
    e0: float,
    trace: np.ndarray | RechargeTrace,
    decisions: Sequence[int],
    c: CostMatrix,
    cfg: SlotConfig,
) -> np.ndarray:
    """Closed-form energy after n slots: e0*u + tau*sum(s) - tau*C*sum(v).
    Identical to iterating step_energy in uncapped mode."""
    samples = trace.samples if isinstance(trace, RechargeTrace) else np.atleast_2d(np.asarray(trace, dtype=float))
    decisions = np.asarray(decisions, dtype=int)
    n = decisions.shape[0]
    if n == 0:
        return np.full(c.m, float(e0))
    if samples.shape[0] != n:
        raise DimensionError(f"{samples.shape[0]} recharge rows for {n} decisions")
    if samples.shape[1] != c.m:
        raise DimensionError(f"recharge width {samples.shape[1]} != {c.m} base stations")
    counts = np.bincount(decisions, minlength=c.m).astype(float)
    return e0 * np.ones(c.m) + cfg.tau * samples.sum(axis=0) - cfg.tau * (c.entries @ counts)


def residual_matrix(c: CostMatrix, sbar: np.ndarray) -> np.ndarray:
    """R = C - sbar * u^T: entry (i, j) is the expected net drain rate of BS i
    while BS j is active."""
    sbar = np.asarray(sbar, dtype=float)
    if sbar.shape != (c.m,):
        raise DimensionError(f"sbar has shape {sbar.shape}, expected ({c.m},)")
    return c.entries - np.outer(sbar, np.ones(c.m))


def check_d3(c: CostMatrix, sbar: np.ndarray) -> bool:
    """D3: every off-diagonal residual C_ij - sbar_i is strictly negative, so
    a passive BS always recharges faster than it drains."""
    r = residual_matrix(c, sbar)
    off = r[~np.eye(c.m, dtype=bool)]
    return bool(np.all(off < 0))


D4_POSITIVITY_TOL = 1e-12
D4_COND_LIMIT = 1e12


def d4_vector(c: CostMatrix) -> np.ndarray | None:
    """(C^T)^-1 u, or None when C is singular or too ill-conditioned to call."""
    if np.linalg.cond(c.entries) > D4_COND_LIMIT:
        return None
    try:
        return np.linalg.solve(c.entries.T, np.ones(c.m))
    except np.linalg.LinAlgError:
        return None


def check_d4(c: CostMatrix) -> bool:
    """D4: all components of (C^T)^-1 u exceed the positivity tolerance.
    Singular or near-singular C reports the condition as unsatisfiable."""
    x = d4_vector(c)
    if x is None:
        return False
    return bool(np.all(x > D4_POSITIVITY_TOL))


def solar_recharge(eta: float, gamma: float, irradiance: float, panel_area: float) -> float:
    """Recharge rate in watts from a solar panel: efficiency x loss coefficient
    x irradiance (W/m^2) x panel area (m^2)."""
    if min(eta, gamma, irradiance, panel_area) < 0:
        raise ValidationError("solar recharge inputs must be nonnegative")
    if eta > 1 or gamma > 1:
        raise ValidationError("eta and gamma are fractions in [0, 1]")
    return eta * gamma * irradiance * panel_area


def lifetime_of(energy_history: Sequence[np.ndarray], cfg: SlotConfig) -> Lifetime:
    """Last slot before any component first goes negative. ``energy_history``
    starts at e(0); a history that never goes negative through max_slots is
    capped."""
    history = list(energy_history)
    if not history:
        raise ValidationError("energy history must be nonempty")
    for i in range(1, len(history)):
        if np.any(np.asarray(history[i]) < 0):
            return Lifetime(i - 1, capped=False)
    survived = len(history) - 1
    if survived >= cfg.max_slots:
        return Lifetime(cfg.max_slots, capped=True)
    return Lifetime(survived, capped=False)
