"""Synthetic power traces driven by the randomized clock and AES round flips.

A trace is a fixed capture window sampled at ``base_period / oversampling``.
The first output edge of the (randomized) clock loads the state; each of the
following ``rounds`` edges clocks one AES round and deposits a pulse whose
amplitude is ``amplitude * HD(state[k-1], state[k])`` over the full 128-bit
state.  Gaussian noise is added on top.  Encryptions whose clock produced a
period below the error threshold are marked failed and report a uniformly
random ciphertext, mimicking a core that violated its timing margin.

Dual-core traces superpose two such renders on one sample grid: core 1 is
trigger-aligned (phase 0), core 2 runs its own base frequency (required to
be distinct) and, by default, a per-trace random base/source phase, as two
free-running clock domains would.  The stored ciphertext is core 1's.

Per-trace randomness comes from PCG64 generators seeded by
``SeedSequence(seed).spawn(n)``; within a trace the draw order is fixed
(plaintext, dual-core phases, core-1 clock, core-2 clock, failure
ciphertext, noise) and the noise draw always happens, scaled by
``noise_sigma``, so different noise levels reuse identical clocks and
plaintexts.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import aes
from .clock import (DEFAULT_ERROR_THRESHOLD_FACTOR, FrequencySet,
                    STALL_CAP_CYCLES_PER_EDGE, _edges_until)

TRACE_MAGIC = b"CLKBTRC1"
TRACE_FORMAT_VERSION = 1

#: Capture window length in base cycles per AES round (the randomized clock
#: can stretch an encryption well past the nominal 10 cycles; encryptions
#: that overrun the window lose their tail peaks and get filtered later).
WINDOW_CYCLES_PER_ROUND = 3

#: Pulse half-width as a fraction of the base period.
PULSE_HALF_WIDTH_FRACTION = 1.0 / 8.0

PULSE_SHAPES = ("triangular", "rectangular", "raised_cosine")


class TraceFormatError(Exception):
    """Base class for trace-file format violations."""


class TraceMagicError(TraceFormatError):
    pass


class TraceVersionError(TraceFormatError):
    pass


class TraceTruncatedError(TraceFormatError):
    pass


@dataclass
class PowerTrace:
    """One capture: samples plus the encryption it observed.

    ``clock_meta`` holds the per-core round edge times in seconds (load edge
    plus one per round) when the trace came from the generator; it is not
    persisted and is excluded from equality, as is ``ciphertext2`` (the dummy
    core's result, recomputable from key2 and the plaintext).
    """

    samples: np.ndarray
    sample_period_s: float
    plaintext: bytes
    ciphertext: bytes
    failed: bool
    core_count: int = 1
    ciphertext2: bytes | None = None
    clock_meta: tuple[np.ndarray, ...] | None = None

    def __eq__(self, other):
        if not isinstance(other, PowerTrace):
            return NotImplemented
        return (self.sample_period_s == other.sample_period_s
                and self.plaintext == other.plaintext
                and self.ciphertext == other.ciphertext
                and self.failed == other.failed
                and self.core_count == other.core_count
                and self.samples.dtype == other.samples.dtype
                and np.array_equal(self.samples, other.samples))


@dataclass
class TraceSet:
    """A batch of traces captured under one configuration."""

    traces: list[PowerTrace]
    key: bytes
    fs: FrequencySet
    oversampling: int
    noise_sigma: float
    key2: bytes | None = None
    fs2: FrequencySet | None = None

    def __len__(self):
        return len(self.traces)

    @property
    def core_count(self) -> int:
        return 2 if self.fs2 is not None else 1

    def failed_fraction(self) -> float:
        if not self.traces:
            return 0.0
        return sum(t.failed for t in self.traces) / len(self.traces)

    def ciphertext_matrix(self) -> np.ndarray:
        return np.array([np.frombuffer(t.ciphertext, np.uint8) for t in self.traces],
                        dtype=np.uint8).reshape(len(self.traces), 16)

    def __eq__(self, other):
        if not isinstance(other, TraceSet):
            return NotImplemented
        return (self.key == other.key and self.key2 == other.key2
                and self.fs == other.fs and self.fs2 == other.fs2
                and self.oversampling == other.oversampling
                and self.noise_sigma == other.noise_sigma
                and self.traces == other.traces)


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def _render_pulses(edge_times_s: np.ndarray, amplitudes: np.ndarray,
                   n_samples: int, sample_period_s: float,
                   half_width_s: float, pulse: str) -> np.ndarray:
    """Deposit one pulse per edge onto a zero-initialized sample grid."""
    if pulse not in PULSE_SHAPES:
        raise ValueError(f"unknown pulse shape {pulse!r}")
    out = np.zeros(n_samples, dtype=np.float64)
    for e, a in zip(edge_times_s, amplitudes):
        lo = max(0, int(np.ceil((e - half_width_s) / sample_period_s)))
        hi = min(n_samples - 1, int(np.floor((e + half_width_s) / sample_period_s)))
        if hi < lo:
            continue
        t = np.arange(lo, hi + 1) * sample_period_s
        delta = np.abs(t - e) / half_width_s
        if pulse == "triangular":
            w = 1.0 - delta
        elif pulse == "rectangular":
            w = np.ones_like(delta)
        else:  # raised cosine
            w = 0.5 * (1.0 + np.cos(np.pi * delta))
        np.clip(w, 0.0, None, out=w)
        out[lo:hi + 1] += a * w
    return out


def _core_render(fs: FrequencySet, rng: np.random.Generator, states: np.ndarray,
                 rounds: int, amplitude: float, n_samples: int,
                 sample_period_s: float, half_width_s: float, pulse: str,
                 error_threshold_factor: float, base_phase: float = 0.0,
                 source_phases: tuple[float, ...] | None = None):
    """Simulate one core's clock and render its pulses.

    Returns (float32 samples, failed flag, edge times in seconds).
    """
    cap = STALL_CAP_CYCLES_PER_EDGE * (rounds + 1)
    edges = _edges_until(fs, rng, rounds + 1, cap, base_phase=base_phase,
                         source_phases=source_phases)
    tb = fs.base_period_s
    edges_s = edges * tb
    periods = np.diff(edges_s)
    failed = bool((periods < error_threshold_factor * tb).any())
    dists = aes.round_distances(states).astype(np.float64)
    clean = _render_pulses(edges_s[1:rounds + 1], amplitude * dists,
                           n_samples, sample_period_s, half_width_s, pulse)
    return clean.astype(np.float32), failed, edges_s


def _resolve_grid(fs: FrequencySet, oversampling: int, rounds: int,
                  window_cycles: int | None, sample_period_s: float | None,
                  pulse_half_width_s: float | None):
    if oversampling < 2:
        raise ValueError("oversampling must be at least 2 (Nyquist floor)")
    if window_cycles is None:
        window_cycles = WINDOW_CYCLES_PER_ROUND * rounds
    sp = fs.base_period_s / oversampling if sample_period_s is None else float(sample_period_s)
    hw = fs.base_period_s * PULSE_HALF_WIDTH_FRACTION if pulse_half_width_s is None \
        else float(pulse_half_width_s)
    n_samples = int(round(window_cycles * fs.base_period_s / sp))
    return sp, hw, n_samples


def generate_trace(fs: FrequencySet, key: bytes, plaintext: bytes, *,
                   noise_sigma: float = 0.0, oversampling: int = 16,
                   seed: int = 0, rng: np.random.Generator | None = None,
                   rounds: int = 10, amplitude: float = 1.0,
                   error_threshold_factor: float = DEFAULT_ERROR_THRESHOLD_FACTOR,
                   window_cycles: int | None = None,
                   pulse: str = "triangular",
                   pulse_half_width_s: float | None = None,
                   sample_period_s: float | None = None) -> PowerTrace:
    """Generate a single-core trace for one (key, plaintext) encryption.

    ``rng`` overrides ``seed`` when supplied (the caller owns the stream;
    generate_set uses this to hand each trace its spawned generator).
    The grid overrides (``sample_period_s``, ``pulse_half_width_s``,
    ``window_cycles``) exist so renders from different frequency sets can be
    composed on a common grid.
    """
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(seed))
    sp, hw, n_samples = _resolve_grid(fs, oversampling, rounds, window_cycles,
                                      sample_period_s, pulse_half_width_s)
    pts = np.frombuffer(bytes(plaintext), np.uint8)[None, :]
    states, cts = aes.encrypt_blocks_with_states(key, pts)
    clean, failed, edges_s = _core_render(
        fs, rng, states[:, 0, :], rounds, amplitude, n_samples, sp, hw, pulse,
        error_threshold_factor)
    ciphertext = cts[0].tobytes()
    if failed:
        ciphertext = rng.integers(0, 256, 16, dtype=np.uint8).tobytes()
    samples = (clean.astype(np.float64)
               + noise_sigma * rng.standard_normal(n_samples)).astype(np.float32)
    return PowerTrace(samples=samples, sample_period_s=sp,
                      plaintext=bytes(plaintext), ciphertext=ciphertext,
                      failed=failed, core_count=1,
                      clock_meta=(edges_s[:rounds + 1],))


def generate_dual_trace(fs: FrequencySet, fs2: FrequencySet, key: bytes,
                        key2: bytes, plaintext: bytes, *,
                        noise_sigma: float = 0.0, oversampling: int = 16,
                        seed: int = 0, rng: np.random.Generator | None = None,
                        rounds: int = 10, amplitude: float = 1.0,
                        error_threshold_factor: float = DEFAULT_ERROR_THRESHOLD_FACTOR,
                        window_cycles: int | None = None,
                        pulse: str = "triangular",
                        pulse_half_width_s: float | None = None,
                        randomize_core2_phase: bool = True,
                        core2_base_phase: float = 0.0,
                        core2_source_phases: tuple[float, float, float, float] | None = None,
                        ) -> PowerTrace:
    """Generate a dual-core trace: both cores encrypt the same plaintext.

    The two base clocks must differ; the sample grid, capture window, and
    pulse width follow core 1.  With ``randomize_core2_phase`` (default) core
    2 gets a uniform base-phase offset and uniform source phases per trace;
    pass False plus explicit offsets for constructed scenarios.  The failed
    flag reflects core 1 only (the dummy core's output is discarded anyway);
    its ciphertext is kept in ``ciphertext2`` for bookkeeping.
    """
    if fs2.base_hz == fs.base_hz:
        raise ValueError("dual-core base clocks must have distinct frequencies")
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(seed))
    sp, hw, n_samples = _resolve_grid(fs, oversampling, rounds, window_cycles,
                                      None, pulse_half_width_s)
    if randomize_core2_phase:
        core2_base_phase = float(rng.random())
        core2_source_phases = tuple(rng.random(4))
    pts = np.frombuffer(bytes(plaintext), np.uint8)[None, :]
    states1, cts1 = aes.encrypt_blocks_with_states(key, pts)
    states2, cts2 = aes.encrypt_blocks_with_states(key2, pts)
    clean1, failed, edges1 = _core_render(
        fs, rng, states1[:, 0, :], rounds, amplitude, n_samples, sp, hw, pulse,
        error_threshold_factor)
    clean2, _, edges2 = _core_render(
        fs2, rng, states2[:, 0, :], rounds, amplitude, n_samples, sp, hw, pulse,
        error_threshold_factor, base_phase=core2_base_phase,
        source_phases=core2_source_phases)
    ciphertext = cts1[0].tobytes()
    if failed:
        ciphertext = rng.integers(0, 256, 16, dtype=np.uint8).tobytes()
    samples = (clean1.astype(np.float64) + clean2.astype(np.float64)
               + noise_sigma * rng.standard_normal(n_samples)).astype(np.float32)
    return PowerTrace(samples=samples, sample_period_s=sp,
                      plaintext=bytes(plaintext), ciphertext=ciphertext,
                      failed=failed, core_count=2,
                      ciphertext2=cts2[0].tobytes(),
                      clock_meta=(edges1[:rounds + 1], edges2[:rounds + 1]))


def generate_set(fs: FrequencySet, key: bytes, n_traces: int, *,
                 plaintext_mode: str = "random",
                 fixed_plaintext: bytes | None = None,
                 noise_sigma: float = 0.0, oversampling: int = 16,
                 seed: int = 0, rounds: int = 10, amplitude: float = 1.0,
                 error_threshold_factor: float = DEFAULT_ERROR_THRESHOLD_FACTOR,
                 window_cycles: int | None = None, pulse: str = "triangular",
                 fs2: FrequencySet | None = None, key2: bytes | None = None,
                 ) -> TraceSet:
    """Generate a full trace set with per-trace spawned seeds.

    ``plaintext_mode`` is "random" (fresh block per trace) or "fixed" (all
    traces share ``fixed_plaintext``; correlation attacks are then expected
    to fail for lack of hypothesis variance).
    """
    if n_traces < 0:
        raise ValueError("n_traces must be non-negative")
    if plaintext_mode not in ("random", "fixed"):
        raise ValueError("plaintext_mode must be 'random' or 'fixed'")
    if plaintext_mode == "fixed" and fixed_plaintext is None:
        raise ValueError("fixed plaintext mode requires fixed_plaintext")
    if (fs2 is None) != (key2 is None):
        raise ValueError("dual-core generation needs both fs2 and key2")
    rngs = [np.random.Generator(np.random.PCG64(s))
            for s in np.random.SeedSequence(seed).spawn(n_traces)]
    traces = []
    for rng in rngs:
        if plaintext_mode == "random":
            pt = rng.integers(0, 256, 16, dtype=np.uint8).tobytes()
        else:
            pt = bytes(fixed_plaintext)
        if fs2 is None:
            tr = generate_trace(
                fs, key, pt, noise_sigma=noise_sigma, oversampling=oversampling,
                rng=rng, rounds=rounds, amplitude=amplitude,
                error_threshold_factor=error_threshold_factor,
                window_cycles=window_cycles, pulse=pulse)
        else:
            tr = generate_dual_trace(
                fs, fs2, key, key2, pt, noise_sigma=noise_sigma,
                oversampling=oversampling, rng=rng, rounds=rounds,
                amplitude=amplitude,
                error_threshold_factor=error_threshold_factor,
                window_cycles=window_cycles, pulse=pulse)
        traces.append(tr)
    return TraceSet(traces=traces, key=bytes(key), fs=fs,
                    oversampling=int(oversampling),
                    noise_sigma=float(noise_sigma),
                    key2=None if key2 is None else bytes(key2), fs2=fs2)


def first_round_coincidence_fraction(ts: TraceSet, tol_s: float | None = None) -> float:
    """Fraction of dual-core traces whose first-round pulses coincide.

    Ground truth straight from generation metadata: the two cores' first
    round edges (index 1; index 0 is the load edge) closer than ``tol_s``,
    default half a sample period (closer than that, the two pulses land on
    the same sample and are indistinguishable).  Only generator-fresh traces
    carry the metadata; file round-trips lose it.
    """
    if ts.core_count != 2:
        raise ValueError("coincidence is defined for dual-core sets")
    considered = 0
    hits = 0
    for tr in ts.traces:
        if tr.clock_meta is None or len(tr.clock_meta) != 2:
            continue
        considered += 1
        tol = tol_s if tol_s is not None else tr.sample_period_s / 2
        if abs(float(tr.clock_meta[0][1]) - float(tr.clock_meta[1][1])) < tol:
            hits += 1
    if considered == 0:
        raise ValueError("no traces carry clock metadata")
    return hits / considered


# ---------------------------------------------------------------------------
# Binary trace format
#
# Little-endian throughout.
#   magic            8s   "CLKBTRC1"
#   version          u32  1
#   core_count       u32  1 or 2
#   n_traces         u32
#   sample_period_s  f64
#   oversampling     u32
#   noise_sigma      f64
#   key              16s
#   fs               u16 label length + utf-8 label, f64 base_hz,
#                    4 x f64 fundamentals, f64 duty_cycle
#   [key2, fs2]      present iff core_count == 2
#   per trace: u8 failed, 16s plaintext, 16s ciphertext, u32 n_samples,
#              n_samples x f32 samples
#
# Source phases and generation metadata are not persisted.
# ---------------------------------------------------------------------------

def _pack_fs(fs: FrequencySet) -> bytes:
    label = fs.label.encode("utf-8")
    return (struct.pack("<H", len(label)) + label
            + struct.pack("<6d", fs.base_hz, *fs.fundamentals, fs.duty_cycle))


def write_trace_set(ts: TraceSet, path) -> None:
    with open(path, "wb") as f:
        f.write(TRACE_MAGIC)
        f.write(struct.pack("<III", TRACE_FORMAT_VERSION, ts.core_count,
                            len(ts.traces)))
        sp = (ts.traces[0].sample_period_s if ts.traces
              else ts.fs.base_period_s / ts.oversampling)
        f.write(struct.pack("<dId", sp, ts.oversampling, ts.noise_sigma))
        f.write(ts.key)
        f.write(_pack_fs(ts.fs))
        if ts.core_count == 2:
            f.write(ts.key2)
            f.write(_pack_fs(ts.fs2))
        for tr in ts.traces:
            samples = np.ascontiguousarray(tr.samples, dtype="<f4")
            f.write(struct.pack("<B", 1 if tr.failed else 0))
            f.write(tr.plaintext)
            f.write(tr.ciphertext)
            f.write(struct.pack("<I", len(samples)))
            f.write(samples.tobytes())


def _read_exact(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise TraceTruncatedError(f"truncated while reading {what} "
                                  f"(wanted {n} bytes, got {len(buf)})")
    return buf


def _unpack_fs(f) -> FrequencySet:
    (label_len,) = struct.unpack("<H", _read_exact(f, 2, "frequency-set label length"))
    label = _read_exact(f, label_len, "frequency-set label").decode("utf-8")
    vals = struct.unpack("<6d", _read_exact(f, 48, "frequency-set values"))
    return FrequencySet(base_hz=vals[0], fundamentals=tuple(vals[1:5]),
                        label=label, duty_cycle=vals[5])


def read_trace_set(path) -> TraceSet:
    with open(path, "rb") as f:
        magic = _read_exact(f, 8, "magic")
        if magic != TRACE_MAGIC:
            raise TraceMagicError(f"bad magic {magic!r}")
        version, core_count, n_traces = struct.unpack(
            "<III", _read_exact(f, 12, "header"))
        if version != TRACE_FORMAT_VERSION:
            raise TraceVersionError(f"unsupported version {version}")
        if core_count not in (1, 2):
            raise TraceFormatError(f"invalid core count {core_count}")
        sp, oversampling, noise_sigma = struct.unpack(
            "<dId", _read_exact(f, 20, "header"))
        key = _read_exact(f, 16, "key")
        fs = _unpack_fs(f)
        key2 = fs2 = None
        if core_count == 2:
            key2 = _read_exact(f, 16, "key2")
            fs2 = _unpack_fs(f)
        traces = []
        for i in range(n_traces):
            (failed,) = struct.unpack("<B", _read_exact(f, 1, f"trace {i} flag"))
            pt = _read_exact(f, 16, f"trace {i} plaintext")
            ct = _read_exact(f, 16, f"trace {i} ciphertext")
            (n_samples,) = struct.unpack("<I", _read_exact(f, 4, f"trace {i} count"))
            raw = _read_exact(f, 4 * n_samples, f"trace {i} samples")
            samples = np.frombuffer(raw, dtype="<f4").copy()
            traces.append(PowerTrace(
                samples=samples, sample_period_s=sp, plaintext=pt,
                ciphertext=ct, failed=bool(failed), core_count=core_count))
        extra = f.read(1)
        if extra:
            raise TraceFormatError("trailing bytes after final trace")
    return TraceSet(traces=traces, key=key, fs=fs, oversampling=oversampling,
                    noise_sigma=noise_sigma, key2=key2, fs2=fs2)
