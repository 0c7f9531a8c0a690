"""Randomized mux-clock model: waveform simulation and closed-form analysis.

A base clock of frequency ``base_hz`` drives a 4-way mux.  At every base
rising edge one of four free-running square-wave sources is selected
uniformly at random, and the mux output simply follows the level of the
selected source until the next base edge.  Three behaviours make the output
period spectrum rich, and all of them fall out of the level-following
semantics rather than being special-cased:

* a source slower than the base clock can span a whole base cycle without a
  rising edge, stretching the output period across several cycles;
* a source faster than the base clock can fit two rising edges into one
  cycle;
* switching from a low source to a high one creates a rising edge exactly on
  the base edge.

Simulation works in units of the base period (base edges sit on integers)
and scales to seconds only at the boundary, which keeps cycle arithmetic
exact.  Source ``i`` with period ratio ``rho_i = base_hz / f_i`` is high at
time ``t`` (base units) iff ``frac(t / rho_i - phase_i) < duty_cycle``; its
rising edges sit at ``(m + phase_i) * rho_i``.

Randomness comes from numpy's PCG64 generator; a fixed (frequency set, cycle
count, seed) triple always reproduces the same waveform bit for bit.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from itertools import combinations

import numpy as np

#: Output edges closer than this (seconds) are merged into one; real hardware
#: cannot resolve them and downstream period statistics should not either.
EDGE_COINCIDENCE_TOL_S = 1e-12

#: Reference period-histogram bin width as a fraction of the base period.
#: Calibrated against the reference occupancy figures of the built-in study
#: sets (see presets): measurement gear with coarser resolution merges
#: distinct periods, finer resolution splits them, and this width reproduces
#: the reference counts across all seven sets at 32000 cycles.  Every report
#: carries the width, so counts stay comparable.
REFERENCE_BIN_FRACTION = 5.2e-3

#: Output periods shorter than this fraction of the base period are treated
#: as encryption-error risks (the core cannot settle).
DEFAULT_ERROR_THRESHOLD_FACTOR = 0.25

#: Safety cap (in base cycles per required edge) for open-ended simulations.
STALL_CAP_CYCLES_PER_EDGE = 64


class ClampedProbabilityWarning(UserWarning):
    """A closed-form probability exceeded 1 and was clamped."""


class StalledClockError(RuntimeError):
    """The mux output never produced the required number of edges."""


@dataclass(frozen=True)
class FrequencySet:
    """A base clock plus the four mux source frequencies.

    ``phases`` are per-source offsets as fractions of each source period
    (source i rises at ``(m + phases[i]) * T_i``); the default of zero puts a
    rising edge of every source at t = 0.  Phases are a construction-time
    knob only and are not part of any serialized form.
    """

    base_hz: float
    fundamentals: tuple[float, float, float, float]
    label: str = ""
    duty_cycle: float = 0.5
    phases: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        if not (self.base_hz > 0 and math.isfinite(self.base_hz)):
            raise ValueError("base_hz must be a positive finite frequency")
        if len(self.fundamentals) != 4:
            raise ValueError("exactly 4 fundamentals required")
        if any(not (f > 0 and math.isfinite(f)) for f in self.fundamentals):
            raise ValueError("fundamentals must be positive finite frequencies")
        if not 0.0 < self.duty_cycle < 1.0:
            raise ValueError("duty_cycle must lie strictly between 0 and 1")
        if len(self.phases) != 4:
            raise ValueError("exactly 4 phases required")
        object.__setattr__(self, "fundamentals", tuple(float(f) for f in self.fundamentals))
        object.__setattr__(self, "phases", tuple(float(p) % 1.0 for p in self.phases))

    @property
    def base_period_s(self) -> float:
        return 1.0 / self.base_hz

    @property
    def periods_s(self) -> tuple[float, ...]:
        return tuple(1.0 / f for f in self.fundamentals)

    def ratios(self) -> np.ndarray:
        """Source periods in base-period units (T_i / T_b)."""
        return self.base_hz / np.asarray(self.fundamentals, dtype=np.float64)


@dataclass(frozen=True)
class OutputWaveform:
    """Rising-edge record of one simulated mux run.

    ``edges_s`` is strictly increasing, every timestamp lies inside the
    simulated span, and ``source_per_cycle[k]`` is the source selected at
    base edge k.  Arrays are not copied; treat them as read-only.
    """

    edges_s: np.ndarray
    source_per_cycle: np.ndarray
    n_base_cycles: int
    base_period_s: float


@dataclass(frozen=True)
class PeriodHistogram:
    bin_width_s: float
    bins: dict[int, int]
    total_periods: int

    @property
    def unique_bins(self) -> int:
        return len(self.bins)


@dataclass(frozen=True)
class EdgeCountDistribution:
    """P(exactly m of the 4 sources rise during one base cycle), m = 0..4."""

    probabilities: tuple[float, float, float, float, float]

    def __post_init__(self):
        if len(self.probabilities) != 5:
            raise ValueError("need probabilities for counts 0..4")


@dataclass(frozen=True)
class OverheadReport:
    mean_overhead: float
    worst_overhead: float
    max_delay_s: float
    error_risk: float
    rounds: int
    n_encryptions: int
    error_threshold_s: float


# ---------------------------------------------------------------------------
# Waveform simulation
# ---------------------------------------------------------------------------

def _mux_edges(ratios: np.ndarray, duty: float, phases: np.ndarray,
               selections: np.ndarray, first_cycle: int,
               prev_selection: int | None) -> np.ndarray:
    """Rising-edge times (base units, sorted, unmerged) for a run of cycles.

    ``selections[j]`` is the source chosen at base edge ``first_cycle + j``;
    ``prev_selection`` is the source active just before the first of those
    edges (None means the output was held low, i.e. power-on).
    """
    n = len(selections)
    k = np.arange(first_cycle, first_cycle + n, dtype=np.float64)
    src = np.asarray(selections, dtype=np.intp)

    # Edges on the base boundary: output switches from the previous source's
    # level (limit from the left) to the new source's level.
    r_new = np.mod(k / ratios[src] - phases[src], 1.0)
    new_high = r_new < duty
    prev_src = np.concatenate(([prev_selection if prev_selection is not None else -1],
                               src[:-1]))
    valid_prev = prev_src >= 0
    safe_prev = np.where(valid_prev, prev_src, 0)
    r_prev = np.mod(k / ratios[safe_prev] - phases[safe_prev], 1.0)
    # Left limit of a square wave: high on (0, duty], low at exactly 0 (the
    # tail of the previous period) and on (duty, 1).
    prev_high = (r_prev > 0.0) & (r_prev <= duty) & valid_prev
    parts = [k[new_high & ~prev_high]]

    # Edges strictly inside a cycle: the selected source's own rising edges.
    t_lo = float(first_cycle)
    t_hi = float(first_cycle + n)
    for i in range(4):
        rho = float(ratios[i])
        m_lo = math.floor(t_lo / rho - phases[i]) - 1
        m_hi = math.ceil(t_hi / rho - phases[i]) + 1
        m = np.arange(m_lo, m_hi + 1, dtype=np.float64)
        e = (m + phases[i]) * rho
        cyc = np.floor(e)
        ok = (e > cyc) & (cyc >= t_lo) & (cyc < t_hi)
        e = e[ok]
        cyc_idx = cyc[ok].astype(np.intp) - first_cycle
        parts.append(e[src[cyc_idx] == i])

    edges = np.concatenate(parts)
    edges.sort(kind="stable")
    return edges


def _merge_close(edges: np.ndarray, tol: float) -> np.ndarray:
    """Greedily drop edges within ``tol`` of the previously kept one."""
    if len(edges) < 2 or not (np.diff(edges) < tol).any():
        return edges
    kept = [edges[0]]
    for e in edges[1:]:
        if e - kept[-1] >= tol:
            kept.append(e)
    return np.asarray(kept)


def simulate_mux_clock(fs: FrequencySet, n_base_cycles: int, seed: int) -> OutputWaveform:
    """Simulate the mux output over ``n_base_cycles`` base periods.

    One source index is drawn per base rising edge (uniform over the four),
    the output follows the selected source's level for the whole cycle, and
    the returned waveform lists every output rising edge in seconds.
    """
    if n_base_cycles < 1:
        raise ValueError("n_base_cycles must be at least 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    sel = rng.integers(0, 4, size=n_base_cycles, dtype=np.int8)
    edges = _mux_edges(fs.ratios(), fs.duty_cycle,
                       np.asarray(fs.phases, dtype=np.float64),
                       sel, 0, None)
    tb = fs.base_period_s
    edges = _merge_close(edges, EDGE_COINCIDENCE_TOL_S / tb)
    return OutputWaveform(edges_s=edges * tb, source_per_cycle=sel,
                          n_base_cycles=int(n_base_cycles), base_period_s=tb)


def _edges_until(fs: FrequencySet, rng: np.random.Generator, n_edges: int,
                 cycle_cap: int, base_phase: float = 0.0,
                 source_phases: tuple[float, ...] | None = None) -> np.ndarray:
    """First ``n_edges`` output edge times (base units, offset by base_phase).

    Draws selections from ``rng`` in fixed-size chunks until enough edges
    exist; raises StalledClockError at the cycle cap.  ``base_phase`` shifts
    the whole base grid (edge k sits at base_phase + k), modelling a core
    whose clock is not aligned to the capture trigger.
    """
    ratios = fs.ratios()
    phases = np.asarray(source_phases if source_phases is not None else fs.phases,
                        dtype=np.float64)
    duty = fs.duty_cycle
    chunk = max(16, n_edges)
    collected: list[np.ndarray] = []
    count = 0
    first_cycle = 0
    prev_sel: int | None = None
    while count < n_edges:
        if first_cycle >= cycle_cap:
            raise StalledClockError(
                f"only {count} edges after {first_cycle} base cycles "
                f"(needed {n_edges})")
        size = min(chunk, cycle_cap - first_cycle)
        sel = rng.integers(0, 4, size=size, dtype=np.int8)
        part = _mux_edges(ratios, duty, phases, sel, first_cycle, prev_sel)
        collected.append(part)
        count += len(part)
        first_cycle += size
        prev_sel = int(sel[-1])
    edges = np.concatenate(collected)
    edges = _merge_close(edges, EDGE_COINCIDENCE_TOL_S / fs.base_period_s)
    while len(edges) < n_edges:
        # merging swallowed a needed edge; extend by one more chunk
        if first_cycle >= cycle_cap:
            raise StalledClockError(
                f"only {len(edges)} edges after {first_cycle} base cycles "
                f"(needed {n_edges})")
        size = min(chunk, cycle_cap - first_cycle)
        sel = rng.integers(0, 4, size=size, dtype=np.int8)
        part = _mux_edges(ratios, duty, phases, sel, first_cycle, prev_sel)
        edges = _merge_close(np.concatenate([edges, part]),
                             EDGE_COINCIDENCE_TOL_S / fs.base_period_s)
        first_cycle += size
        prev_sel = int(sel[-1])
    return edges[:n_edges] + base_phase


# ---------------------------------------------------------------------------
# Period statistics
# ---------------------------------------------------------------------------

def extract_periods(w: OutputWaveform) -> np.ndarray:
    """Successive rising-edge gaps in seconds (empty if fewer than 2 edges)."""
    if len(w.edges_s) < 2:
        return np.empty(0, dtype=np.float64)
    return np.diff(w.edges_s)


def period_histogram(periods: np.ndarray, bin_width_s: float) -> PeriodHistogram:
    """Histogram of periods with fixed-width bins anchored at zero.

    Bin k covers [k * bin_width_s, (k + 1) * bin_width_s).
    """
    if not bin_width_s > 0:
        raise ValueError("bin_width_s must be positive")
    periods = np.asarray(periods, dtype=np.float64)
    if (periods < 0).any():
        raise ValueError("periods must be non-negative")
    idx = np.floor(periods / bin_width_s).astype(np.int64)
    uniq, counts = np.unique(idx, return_counts=True)
    return PeriodHistogram(
        bin_width_s=float(bin_width_s),
        bins={int(u): int(c) for u, c in zip(uniq, counts)},
        total_periods=int(periods.size),
    )


def reference_bin_width(fs: FrequencySet) -> float:
    return fs.base_period_s * REFERENCE_BIN_FRACTION


# ---------------------------------------------------------------------------
# Closed-form models
# ---------------------------------------------------------------------------

def rising_edge_probability(source_period_s: float, base_period_s: float) -> float:
    """P(a free-running source rises at least once during one base cycle).

    A source with period T_i >= T_b has a rising edge in a uniformly placed
    window of length T_b with probability T_b / T_i; a faster source always
    has at least one.
    """
    if not (source_period_s > 0 and base_period_s > 0):
        raise ValueError("periods must be positive")
    if source_period_s >= base_period_s:
        return base_period_s / source_period_s
    return 1.0


def double_edge_probability(source_period_s: float, base_period_s: float) -> float:
    """P(a source rises twice during one base cycle).

    Zero for sources at or below the base rate; (T_b - T_i) / T_i above it.
    For sources faster than twice the base rate the expression exceeds 1 and
    is clamped (with a warning): two edges are then guaranteed and higher
    multiplicities are out of this model's scope.
    """
    if not (source_period_s > 0 and base_period_s > 0):
        raise ValueError("periods must be positive")
    if source_period_s > base_period_s:
        return 0.0
    p = (base_period_s - source_period_s) / source_period_s
    if p > 1.0:
        warnings.warn(
            "double-edge probability clamped to 1 (source faster than twice "
            "the base clock)", ClampedProbabilityWarning, stacklevel=2)
        return 1.0
    return p


def presence_probabilities(fs: FrequencySet) -> tuple[float, float, float, float]:
    """Per-source probability of rising at least once in one base cycle."""
    tb = fs.base_period_s
    return tuple(rising_edge_probability(t, tb) for t in fs.periods_s)


def edge_count_distribution(p: tuple[float, float, float, float]) -> EdgeCountDistribution:
    """Distribution of how many of the 4 sources rise in one base cycle.

    Exact expansion over the four independent presence events, written out as
    the sum over source subsets of each size: P(m) = sum over |S| = m of
    prod_{i in S} p_i * prod_{i not in S} (1 - p_i).
    """
    if len(p) != 4:
        raise ValueError("exactly 4 probabilities required")
    p = tuple(float(x) for x in p)
    if any(not 0.0 <= x <= 1.0 for x in p):
        raise ValueError("probabilities must lie in [0, 1]")
    probs = []
    for m in range(5):
        total = 0.0
        for subset in combinations(range(4), m):
            term = 1.0
            for i in range(4):
                term *= p[i] if i in subset else 1.0 - p[i]
            total += term
        probs.append(total)
    return EdgeCountDistribution(probabilities=tuple(probs))


def permutation_count(n_missing: int) -> int:
    """Distinct output-period values when ``n_missing`` sources rise together.

    With all four sources free-running, 4 x 4 (previous source, next source)
    pairings give 16 period values.  Each source whose edge coincides with
    the others removes its distinct pairings: 4 * ((4 - n) + 4) - 4 * n for
    n >= 1, i.e. 24, 16, 8, 0 for n = 1..4.
    """
    if not 0 <= n_missing <= 4:
        raise ValueError("n_missing must be in 0..4")
    if n_missing == 0:
        return 16
    n = n_missing
    return 4 * ((4 - n) + 4) - 4 * n


def completion_time_count(n_freqs: int, rounds: int) -> int:
    """Number of distinct encryption completion times.

    Each of ``rounds`` output periods takes one of ``n_freqs`` values and
    only the multiset matters, giving C(rounds + n - 1, rounds) exactly
    (Python integers, no overflow).
    """
    if n_freqs < 1:
        raise ValueError("n_freqs must be at least 1")
    if rounds < 1:
        raise ValueError("rounds must be at least 1")
    return math.comb(rounds + n_freqs - 1, rounds)


# ---------------------------------------------------------------------------
# Empirical checks used to validate the closed forms
# ---------------------------------------------------------------------------

def source_edge_counts(fs: FrequencySet, n_cycles: int) -> np.ndarray:
    """(4, n_cycles) int array: rising edges of each source per base cycle.

    Counts grid points (m + phase_i) * rho_i inside [k, k+1) regardless of
    which source the mux selected; this is the quantity the closed-form
    presence probabilities describe.
    """
    if n_cycles < 1:
        raise ValueError("n_cycles must be at least 1")
    ratios = fs.ratios()
    phases = np.asarray(fs.phases, dtype=np.float64)
    k = np.arange(n_cycles + 1, dtype=np.float64)
    out = np.empty((4, n_cycles), dtype=np.int64)
    for i in range(4):
        bounds = np.ceil(k / ratios[i] - phases[i])
        out[i] = (bounds[1:] - bounds[:-1]).astype(np.int64)
    return out


def per_source_edge_presence(w: OutputWaveform, fs: FrequencySet) -> np.ndarray:
    """Fraction of cycles, per selected source, containing that source's edge.

    Interior output edges are the selected source's own edges; an edge
    sitting exactly on a base boundary counts only when the source's grid is
    exactly aligned there (otherwise it is a switch artifact, which the
    presence model does not describe).
    """
    tau = w.edges_s / w.base_period_s
    cyc = np.floor(tau).astype(np.int64)
    cyc = np.minimum(cyc, w.n_base_cycles - 1)
    interior = tau > cyc
    has_edge = np.zeros(w.n_base_cycles, dtype=bool)
    has_edge[cyc[interior]] = True
    boundary_cycles = cyc[~interior]
    if len(boundary_cycles):
        src = w.source_per_cycle[boundary_cycles].astype(np.intp)
        ratios = fs.ratios()
        phases = np.asarray(fs.phases, dtype=np.float64)
        r = np.mod(boundary_cycles / ratios[src] - phases[src], 1.0)
        has_edge[boundary_cycles[r == 0.0]] = True
    out = np.empty(4, dtype=np.float64)
    for i in range(4):
        mask = w.source_per_cycle == i
        out[i] = has_edge[mask].mean() if mask.any() else np.nan
    return out


def simulated_edge_count_distribution(fs: FrequencySet, n_cycles: int) -> np.ndarray:
    """Empirical counterpart of edge_count_distribution over ``n_cycles``."""
    presence = source_edge_counts(fs, n_cycles) >= 1
    counts = presence.sum(axis=0)
    hist = np.bincount(counts, minlength=5).astype(np.float64)
    return hist / n_cycles


# ---------------------------------------------------------------------------
# Overhead and error risk
# ---------------------------------------------------------------------------

def overhead_and_error(fs: FrequencySet, rounds: int = 10,
                       n_encryptions: int = 1000, seed: int = 0,
                       error_threshold_factor: float = DEFAULT_ERROR_THRESHOLD_FACTOR,
                       ) -> OverheadReport:
    """Monte Carlo timing overhead and short-period risk of one frequency set.

    Each encryption is an independent clock run: the first output edge loads
    the state and round k completes at the k-th edge after it, so completion
    time is the timestamp of edge index ``rounds``.  Overheads are relative
    to ``rounds`` base periods (the fixed-clock time); error_risk is the
    fraction of driving periods shorter than ``error_threshold_factor`` base
    periods, i.e. instantaneous frequency more than 1/factor times the base.
    """
    if rounds < 1:
        raise ValueError("rounds must be at least 1")
    if n_encryptions < 1:
        raise ValueError("n_encryptions must be at least 1")
    cap = STALL_CAP_CYCLES_PER_EDGE * (rounds + 1)
    seeds = np.random.SeedSequence(seed).spawn(n_encryptions)
    tb = fs.base_period_s
    completions = np.empty(n_encryptions, dtype=np.float64)
    short = 0
    total_periods = 0
    threshold = error_threshold_factor  # base units
    for i, ss in enumerate(seeds):
        rng = np.random.Generator(np.random.PCG64(ss))
        edges = _edges_until(fs, rng, rounds + 1, cap)
        completions[i] = edges[rounds]
        periods = np.diff(edges)
        short += int((periods < threshold).sum())
        total_periods += len(periods)
    nominal = float(rounds)
    mean_overhead = float(completions.mean() / nominal - 1.0)
    worst_overhead = float(completions.max() / nominal - 1.0)
    return OverheadReport(
        mean_overhead=mean_overhead,
        worst_overhead=worst_overhead,
        max_delay_s=float(completions.max() * tb),
        error_risk=short / total_periods,
        rounds=int(rounds),
        n_encryptions=int(n_encryptions),
        error_threshold_s=float(threshold * tb),
    )
