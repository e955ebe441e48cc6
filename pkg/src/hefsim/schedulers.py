"""Active base-station selection policies and the offline optimum.

HEF activates the highest-energy BS each slot (ties uniform at random), RR
rotates, FIXED never moves. The offline optimum is exact at desk scale via a
frontier dynamic program over activation-count vectors (every prefix of the
horizon must respect the energy budgets); beyond that scale a labeled
heuristic built on the auxiliary-LP fractions provides a lower bound.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .auxlp import solve_auxiliary_lp
from .energy import CostMatrix, Lifetime, RechargeTrace, SlotConfig, residual_matrix
from .errors import BudgetExceeded, TraceError, ValidationError

HEF = "HEF"
ROUND_ROBIN = "RR"
FIXED = "FIXED"
OPT_OFFLINE = "OPT"

#: Relative tie tolerance for the HEF argmax.
HEF_TIE_RTOL = 1e-9

#: Exact offline optimum is computed up to these spec'd thresholds.
OPT_EXACT_MAX_M = 4
OPT_EXACT_MAX_SLOTS = 64

#: Enumeration guard for the exhaustive oracle.
EXHAUSTIVE_BUDGET = 5_000_000


@dataclass(frozen=True)
class Policy:
    kind: str
    fixed_index: int = 0
    rng_seed: int = 0

    def __post_init__(self):
        if self.kind not in (HEF, ROUND_ROBIN, FIXED, OPT_OFFLINE):
            raise ValidationError(f"unknown policy kind {self.kind!r}")
        if self.fixed_index < 0:
            raise ValidationError("fixed index must be nonnegative")


@dataclass
class RunResult:
    """Trajectory of one policy run. ``energy_history[t]`` is e(t); decisions
    include the slot that first drove a component negative."""

    lifetime: Lifetime
    decisions: np.ndarray
    energy_history: np.ndarray
    active_fractions: np.ndarray
    exact: bool = True

    @property
    def n_slots(self) -> int:
        return len(self.decisions)


def hef_select(e: np.ndarray, rng: np.random.Generator) -> int:
    """Argmax of available energy; indices within HEF_TIE_RTOL (relative) of
    the maximum are tied and drawn uniformly."""
    e = np.asarray(e, dtype=float)
    if e.size == 0:
        raise ValidationError("energy vector must be nonempty")
    top = e.max()
    tied = np.nonzero(e >= top - HEF_TIE_RTOL * max(1.0, abs(top)))[0]
    if tied.size == 1:
        return int(tied[0])
    return int(rng.choice(tied))


def rr_select(slot: int, m: int) -> int:
    """Round-robin: slot (0-based) modulo the number of base stations."""
    if m < 1:
        raise ValidationError("need at least one base station")
    return slot % m


def _stream_of(trace) -> "itertools.chain":
    if not hasattr(trace, "stream"):
        raise ValidationError("trace must expose a stream() of per-slot rate vectors")
    return trace.stream()


def run_policy(
    policy: Policy,
    e0: float,
    trace,
    c: CostMatrix,
    cfg: SlotConfig,
) -> RunResult:
    """Simulate a policy slot by slot. Decisions are taken from the previous
    slot's energy (HEF sees e(t-1), not the slot-t recharge); the run ends at
    the first negative component or when the horizon caps."""
    if policy.kind == OPT_OFFLINE:
        return opt_offline(e0, trace, c, cfg)
    if policy.kind == FIXED and policy.fixed_index >= c.m:
        raise ValidationError(f"fixed index {policy.fixed_index} out of range [0, {c.m})")

    rng = np.random.default_rng(policy.rng_seed)
    tau = cfg.tau
    cols = c.entries.T.copy()  # cols[j] is the drain vector when j is active
    e = np.full(c.m, float(e0))
    history = [e.copy()]
    decisions: list[int] = []
    lifetime = Lifetime(cfg.max_slots, capped=True)
    stream = _stream_of(trace)
    for t in range(1, cfg.max_slots + 1):
        if policy.kind == HEF:
            v = hef_select(e, rng)
        elif policy.kind == ROUND_ROBIN:
            v = rr_select(t - 1, c.m)
        else:
            v = policy.fixed_index
        try:
            s = next(stream)
        except StopIteration:  # pragma: no cover - streams raise TraceError
            raise TraceError("recharge stream ended unexpectedly") from None
        e = e + tau * s - tau * cols[v]
        if cfg.capacity is not None:
            e = np.minimum(e, cfg.capacity)
        decisions.append(v)
        history.append(e.copy())
        if np.any(e < 0):
            lifetime = Lifetime(t - 1, capped=False)
            break
    return _package_run(lifetime, decisions, history, c.m)


def _package_run(lifetime, decisions, history, m, exact=True) -> RunResult:
    decisions = np.asarray(decisions, dtype=int)
    fractions = (
        np.bincount(decisions, minlength=m) / len(decisions)
        if len(decisions)
        else np.zeros(m)
    )
    return RunResult(
        lifetime=lifetime,
        decisions=decisions,
        energy_history=np.asarray(history),
        active_fractions=fractions,
        exact=exact,
    )


def _materialize(trace, cfg: SlotConfig) -> np.ndarray:
    """Collect up to max_slots of rates; offline scheduling needs them all."""
    if isinstance(trace, RechargeTrace):
        if len(trace) < cfg.max_slots:
            raise TraceError(
                f"offline scheduling needs {cfg.max_slots} slots, trace has {len(trace)}"
            )
        return trace.samples[: cfg.max_slots]
    stream = _stream_of(trace)
    return np.asarray(list(itertools.islice(stream, cfg.max_slots)))


def opt_offline(e0: float, trace, c: CostMatrix, cfg: SlotConfig) -> RunResult:
    """Offline maximum-lifetime schedule for a known recharge realization.

    Exact (frontier DP over activation-count vectors) for m <= 4 and horizons
    <= 64 slots; larger instances fall back to the best of a greedy run, the
    auxiliary-LP quota schedule and randomized roundings, returned with
    ``exact=False``.
    """
    samples = _materialize(trace, cfg)
    if samples.shape[1] != c.m:
        raise TraceError(f"trace width {samples.shape[1]} != {c.m} base stations")
    if c.m <= OPT_EXACT_MAX_M and cfg.max_slots <= OPT_EXACT_MAX_SLOTS:
        decisions, capped = _opt_exact(e0, samples, c, cfg)
        return _replay(e0, samples, decisions, capped, c, cfg, exact=True)
    decisions, capped = _opt_heuristic(e0, samples, c, cfg)
    return _replay(e0, samples, decisions, capped, c, cfg, exact=False)


#: Shared feasibility slack so the DP and the exhaustive oracle agree on
#: knife-edge prefixes: C.counts <= budget + EPS is e >= -tau*EPS.
FEAS_EPS = 1e-9


def _opt_exact(e0, samples, c, cfg) -> tuple[list[int], bool]:
    """Frontier DP: a state is the vector of per-BS activation counts after n
    slots; feasibility of a prefix depends on its counts only."""
    m = c.m
    budgets = e0 / cfg.tau + np.cumsum(samples, axis=0)  # C.counts <= budgets[n-1]
    cols = [c.entries[:, j].copy() for j in range(m)]
    frontier: dict[tuple[int, ...], np.ndarray] = {tuple([0] * m): np.zeros(m)}
    parents: list[dict[tuple[int, ...], tuple[tuple[int, ...], int]]] = []
    horizon = min(cfg.max_slots, samples.shape[0])
    reached = 0
    for n in range(1, horizon + 1):
        nxt: dict[tuple[int, ...], np.ndarray] = {}
        level: dict[tuple[int, ...], tuple[tuple[int, ...], int]] = {}
        b = budgets[n - 1] + FEAS_EPS
        for counts, drain in frontier.items():
            for j in range(m):
                new_drain = drain + cols[j]
                if np.all(new_drain <= b):
                    key = counts[:j] + (counts[j] + 1,) + counts[j + 1 :]
                    if key not in nxt:
                        nxt[key] = new_drain
                        level[key] = (counts, j)
        if not nxt:
            break
        parents.append(level)
        frontier = nxt
        reached = n
    capped = reached >= cfg.max_slots
    best_decisions: list[int] = []
    if reached:
        key = min(frontier)
        for depth in range(reached - 1, -1, -1):
            prev, j = parents[depth][key]
            best_decisions.append(j)
            key = prev
        best_decisions.reverse()
    return best_decisions, capped


def _quota_schedule(vbar: np.ndarray, n: int) -> np.ndarray:
    """Integral schedule whose prefix counts track n*vbar (largest deficit
    first); this is the rounding used to prove the LP bound is achievable."""
    m = vbar.shape[0]
    counts = np.zeros(m)
    out = np.empty(n, dtype=int)
    for t in range(1, n + 1):
        deficit = t * vbar - counts
        j = int(np.argmax(deficit))
        out[t - 1] = j
        counts[j] += 1
    return out


def _simulate_schedule(e0, samples, schedule, c, cfg) -> tuple[int, bool]:
    tau = cfg.tau
    cols = c.entries.T
    e = np.full(c.m, float(e0))
    horizon = min(len(schedule), samples.shape[0], cfg.max_slots)
    for t in range(horizon):
        e = e + tau * samples[t] - tau * cols[schedule[t]]
        if np.any(e < 0):
            return t, False
    return horizon, horizon >= cfg.max_slots


def _opt_heuristic(e0, samples, c, cfg) -> tuple[list[int], bool]:
    horizon = min(cfg.max_slots, samples.shape[0])
    candidates: list[np.ndarray] = []
    # Greedy highest-energy schedule on the known trace.
    greedy = run_policy(Policy(HEF, rng_seed=0), e0, RechargeTrace(samples, float(samples.max(initial=0.0)) or 1.0), c, cfg)
    candidates.append(greedy.decisions)
    # Auxiliary-LP fractions, quota-rounded and sampled.
    sbar_hat = samples.mean(axis=0)
    sol = solve_auxiliary_lp(residual_matrix(c, sbar_hat))
    vbar = np.maximum(sol.v_star, 0.0)
    vbar = vbar / vbar.sum()
    candidates.append(_quota_schedule(vbar, horizon))
    for seed in range(3):
        rng = np.random.default_rng(seed)
        candidates.append(rng.choice(c.m, size=horizon, p=vbar))
    best: tuple[int, bool, np.ndarray] | None = None
    for schedule in candidates:
        survived, capped = _simulate_schedule(e0, samples, schedule, c, cfg)
        length = survived + (0 if capped else 1)  # include the fatal slot
        if best is None or survived > best[0]:
            best = (survived, capped, np.asarray(schedule[: min(length, len(schedule))], dtype=int))
    survived, capped, schedule = best
    return list(schedule), capped


def _replay(e0, samples, decisions, capped, c, cfg, exact) -> RunResult:
    """Re-run a schedule through the slot update so the RunResult is
    internally consistent with the energy model."""
    tau = cfg.tau
    cols = c.entries.T
    e = np.full(c.m, float(e0))
    history = [e.copy()]
    taken: list[int] = []
    for t, j in enumerate(decisions):
        e = e + tau * samples[t] - tau * cols[j]
        taken.append(int(j))
        history.append(e.copy())
        if np.any(e < 0):
            return _package_run(Lifetime(t, capped=False), taken, history, c.m, exact)
    if capped:
        lifetime = Lifetime(cfg.max_slots, capped=True)
    else:
        lifetime = Lifetime(len(taken), capped=False)
        # A maximal schedule dies on its next slot whatever is chosen; append
        # the least-bad slot so decisions cover lifetime + 1 when possible.
        t = len(taken)
        if t < min(cfg.max_slots, samples.shape[0]):
            trial = e[None, :] + tau * samples[t][None, :] - tau * cols
            j = int(np.argmax(trial.min(axis=1)))
            e = trial[j]
            taken.append(j)
            history.append(e.copy())
    return _package_run(lifetime, taken, history, c.m, exact)


def exhaustive_opt(e0: float, trace, c: CostMatrix, cfg: SlotConfig, n_max: int = 12) -> Lifetime:
    """Independent oracle: depth-first enumeration of all schedules up to
    n_max slots with prefix pruning. No memoization on purpose."""
    if n_max > 12:
        raise ValidationError("exhaustive oracle is limited to n_max <= 12")
    if c.m**n_max > EXHAUSTIVE_BUDGET:
        raise BudgetExceeded(f"{c.m}^{n_max} schedules exceed the enumeration budget")
    samples = _materialize(trace, SlotConfig(cfg.tau, min(cfg.max_slots, n_max), cfg.capacity))
    horizon = min(n_max, cfg.max_slots, samples.shape[0])
    tau = cfg.tau
    cols = c.entries.T
    best = 0

    def descend(depth: int, e: np.ndarray) -> None:
        nonlocal best
        if depth > best:
            best = depth
        if depth == horizon or best == horizon:
            return
        s = samples[depth]
        for j in range(c.m):
            e_next = e + tau * s - tau * cols[j]
            if np.all(e_next >= 0):
                descend(depth + 1, e_next)

    descend(0, np.full(c.m, float(e0)))
    return Lifetime(best, capped=best >= cfg.max_slots)
