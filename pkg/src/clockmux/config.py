"""Experiment configuration: a strict, flat key-value format with sections.

One config file describes a whole experiment: which frequency sets to run,
how many base cycles to simulate, how many traces to synthesize and at what
noise level, and the attack and spectrum parameters.  Parsing is strict so
that a config fully pins an experiment: unknown sections or keys are errors,
every diagnostic carries the line number, and the canonical digest of the
parsed config is stamped into every artifact a command writes.

Sections:

``[sets]``
    ``use = 1 2 5`` or ``use = all`` selects study sets by table position.
``[set]``
    One explicit frequency set (``base_hz``, ``f1`` .. ``f4``, optional
    ``duty``, ``phase1`` .. ``phase4``, ``label``).  May repeat; explicit
    sets are appended after any selected study sets.
``[set2]``
    Second-core frequency set, same keys as ``[set]``.  Required when
    ``core_count = 2``.
``[run]``
    ``seed``, ``out_dir``.
``[simulate]``
    ``n_base_cycles``, ``n_encryptions``, ``error_threshold_factor``.
``[traces]``
    ``n_traces``, ``oversampling``, ``noise_sigma``, ``amplitude``,
    ``core_count``, ``key``, ``key2`` (hex), ``window_cycles``.
``[attack]``
    ``step``, ``round``, ``no_sync``, ``threshold_k``, ``expected_peaks``,
    ``min_peak_separation``, ``window_halfwidth``, ``nyquist_floor``.
``[fft]``
    ``bin_hz``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .attack import DEFAULT_STEP, FilterParams
from .clock import FrequencySet
from .presets import STUDY_SETS

DEFAULT_KEY = bytes(range(16))

_SET_KEYS = {"base_hz", "f1", "f2", "f3", "f4", "duty",
             "phase1", "phase2", "phase3", "phase4", "label"}

_KNOWN_KEYS: dict[str, set[str]] = {
    "sets": {"use"},
    "set": _SET_KEYS,
    "set2": _SET_KEYS,
    "run": {"seed", "out_dir"},
    "simulate": {"n_base_cycles", "n_encryptions", "error_threshold_factor"},
    "traces": {"n_traces", "oversampling", "noise_sigma", "amplitude",
               "core_count", "key", "key2", "window_cycles"},
    "attack": {"step", "round", "no_sync", "threshold_k", "expected_peaks",
               "min_peak_separation", "window_halfwidth", "nyquist_floor"},
    "fft": {"bin_hz"},
}


class ConfigError(ValueError):
    """Raised for malformed, unknown, or inconsistent configuration input."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment parameters shared by all commands."""

    sets: tuple[FrequencySet, ...] = ()
    fs2: FrequencySet | None = None
    core_count: int = 1
    key: bytes = DEFAULT_KEY
    key2: bytes | None = None
    seed: int = 1
    out_dir: str = "."
    n_base_cycles: int = 32000
    n_encryptions: int = 200
    error_threshold_factor: float = 0.25
    n_traces: int = 1000
    oversampling: int = 12
    noise_sigma: float = 0.0
    amplitude: float = 1.0
    window_cycles: int | None = None
    step: int = DEFAULT_STEP
    attack_round: int = 10
    no_sync: bool = False
    threshold_k: float = 3.0
    expected_peaks: int = 10
    min_peak_separation: int | None = None
    window_halfwidth: int | None = None
    nyquist_floor: float = 2.0
    fft_bin_hz: float = 1e6

    def filter_params(self) -> FilterParams:
        return FilterParams(expected_peaks=self.expected_peaks,
                            threshold_k=self.threshold_k,
                            min_peak_separation=self.min_peak_separation,
                            nyquist_floor=self.nyquist_floor)

    def digest(self) -> str:
        """Canonical hash of every parameter, for artifact headers."""
        parts = []
        for fs in self.sets:
            parts.append(_fs_dump(fs))
        parts.append(_fs_dump(self.fs2) if self.fs2 else "none")
        parts.append(self.key.hex())
        parts.append(self.key2.hex() if self.key2 else "none")
        for name in ("core_count", "seed", "n_base_cycles", "n_encryptions",
                     "error_threshold_factor", "n_traces", "oversampling",
                     "noise_sigma", "amplitude", "window_cycles", "step",
                     "attack_round", "no_sync", "threshold_k",
                     "expected_peaks", "min_peak_separation",
                     "window_halfwidth", "nyquist_floor", "fft_bin_hz"):
            parts.append(f"{name}={getattr(self, name)!r}")
        blob = "\n".join(parts).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _fs_dump(fs: FrequencySet) -> str:
    return (f"base={fs.base_hz!r} f={tuple(float(f) for f in fs.fundamentals)!r} "
            f"duty={fs.duty_cycle!r} phases={tuple(float(p) for p in fs.phases)!r}")


@dataclass
class _Entry:
    lineno: int
    value: str


@dataclass
class _Section:
    name: str
    lineno: int
    entries: dict[str, _Entry] = field(default_factory=dict)

    def fail(self, key: str, problem: str) -> ConfigError:
        entry = self.entries.get(key)
        where = f"line {entry.lineno}" if entry else f"line {self.lineno}"
        return ConfigError(f"{where}: [{self.name}] {key}: {problem}")

    def get_str(self, key: str, default: str | None = None) -> str | None:
        entry = self.entries.get(key)
        return entry.value if entry else default

    def get_int(self, key: str, default: int | None = None) -> int | None:
        entry = self.entries.get(key)
        if entry is None:
            return default
        try:
            return int(entry.value)
        except ValueError:
            raise self.fail(key, f"expected an integer, got {entry.value!r}") from None

    def get_float(self, key: str, default: float | None = None) -> float | None:
        entry = self.entries.get(key)
        if entry is None:
            return default
        try:
            return float(entry.value)
        except ValueError:
            raise self.fail(key, f"expected a number, got {entry.value!r}") from None

    def get_bool(self, key: str, default: bool) -> bool:
        entry = self.entries.get(key)
        if entry is None:
            return default
        text = entry.value.lower()
        if text in ("true", "yes", "on", "1"):
            return True
        if text in ("false", "no", "off", "0"):
            return False
        raise self.fail(key, f"expected true/false, got {entry.value!r}")

    def get_key_bytes(self, key: str) -> bytes | None:
        entry = self.entries.get(key)
        if entry is None:
            return None
        text = entry.value.replace(" ", "")
        try:
            raw = bytes.fromhex(text)
        except ValueError:
            raise self.fail(key, "expected 32 hex digits") from None
        if len(raw) != 16:
            raise self.fail(key, f"expected 16 bytes, got {len(raw)}")
        return raw


def _split_sections(text: str) -> list[_Section]:
    sections: list[_Section] = []
    current: _Section | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith(";"):
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip().lower()
            if name not in _KNOWN_KEYS:
                raise ConfigError(f"line {lineno}: unknown section [{name}]")
            current = _Section(name=name, lineno=lineno)
            sections.append(current)
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        if current is None:
            raise ConfigError(f"line {lineno}: key outside any [section]")
        key, _, value = line.partition("=")
        key = key.strip().lower()
        value = value.strip()
        if key not in _KNOWN_KEYS[current.name]:
            raise ConfigError(f"line {lineno}: [{current.name}] unknown key {key!r}")
        if key in current.entries:
            raise ConfigError(f"line {lineno}: [{current.name}] duplicate key {key!r}")
        current.entries[key] = _Entry(lineno=lineno, value=value)
    return sections


def _build_set(sec: _Section) -> FrequencySet:
    base = sec.get_float("base_hz")
    if base is None:
        raise sec.fail("base_hz", "required")
    fundamentals = []
    for i in range(1, 5):
        f = sec.get_float(f"f{i}")
        if f is None:
            raise sec.fail(f"f{i}", "required")
        fundamentals.append(f)
    duty = sec.get_float("duty", 0.5)
    phases = tuple(sec.get_float(f"phase{i}", 0.0) for i in range(1, 5))
    label = sec.get_str("label", "")
    try:
        return FrequencySet(base_hz=base, fundamentals=tuple(fundamentals),
                            duty_cycle=duty, phases=phases, label=label)
    except ValueError as exc:
        raise ConfigError(f"line {sec.lineno}: [{sec.name}]: {exc}") from None


def _selected_sets(sec: _Section) -> list[FrequencySet]:
    text = sec.get_str("use")
    if text is None:
        raise sec.fail("use", "required")
    if text.lower() == "all":
        return [entry.fs for entry in STUDY_SETS]
    chosen = []
    for token in text.split():
        try:
            idx = int(token)
        except ValueError:
            raise sec.fail("use", f"expected set numbers or 'all', got {token!r}") from None
        if not 1 <= idx <= len(STUDY_SETS):
            raise sec.fail("use", f"set number {idx} out of range 1..{len(STUDY_SETS)}")
        chosen.append(STUDY_SETS[idx - 1].fs)
    return chosen


def parse_config_text(text: str) -> ExperimentConfig:
    """Parse and validate a config document; raise ConfigError with line info."""
    sections = _split_sections(text)
    seen_single: set[str] = set()
    sets: list[FrequencySet] = []
    explicit: list[FrequencySet] = []
    fs2: FrequencySet | None = None
    fields: dict[str, object] = {}
    for sec in sections:
        if sec.name != "set":
            if sec.name in seen_single:
                raise ConfigError(f"line {sec.lineno}: duplicate section [{sec.name}]")
            seen_single.add(sec.name)
        if sec.name == "sets":
            sets.extend(_selected_sets(sec))
        elif sec.name == "set":
            explicit.append(_build_set(sec))
        elif sec.name == "set2":
            fs2 = _build_set(sec)
        elif sec.name == "run":
            fields["seed"] = sec.get_int("seed", 1)
            fields["out_dir"] = sec.get_str("out_dir", ".")
        elif sec.name == "simulate":
            fields["n_base_cycles"] = sec.get_int("n_base_cycles", 32000)
            fields["n_encryptions"] = sec.get_int("n_encryptions", 200)
            fields["error_threshold_factor"] = sec.get_float("error_threshold_factor", 0.25)
            if fields["n_base_cycles"] < 1:
                raise sec.fail("n_base_cycles", "must be at least 1")
            if fields["n_encryptions"] < 1:
                raise sec.fail("n_encryptions", "must be at least 1")
        elif sec.name == "traces":
            fields["n_traces"] = sec.get_int("n_traces", 1000)
            fields["oversampling"] = sec.get_int("oversampling", 12)
            fields["noise_sigma"] = sec.get_float("noise_sigma", 0.0)
            fields["amplitude"] = sec.get_float("amplitude", 1.0)
            fields["core_count"] = sec.get_int("core_count", 1)
            fields["window_cycles"] = sec.get_int("window_cycles", None)
            key = sec.get_key_bytes("key")
            if key is not None:
                fields["key"] = key
            key2 = sec.get_key_bytes("key2")
            if key2 is not None:
                fields["key2"] = key2
            if fields["n_traces"] < 1:
                raise sec.fail("n_traces", "must be at least 1")
            if fields["oversampling"] < 1:
                raise sec.fail("oversampling", "must be at least 1")
            if fields["noise_sigma"] < 0:
                raise sec.fail("noise_sigma", "must not be negative")
            if fields["core_count"] not in (1, 2):
                raise sec.fail("core_count", "must be 1 or 2")
        elif sec.name == "attack":
            fields["step"] = sec.get_int("step", DEFAULT_STEP)
            fields["attack_round"] = sec.get_int("round", 10)
            fields["no_sync"] = sec.get_bool("no_sync", False)
            fields["threshold_k"] = sec.get_float("threshold_k", 3.0)
            fields["expected_peaks"] = sec.get_int("expected_peaks", 10)
            fields["min_peak_separation"] = sec.get_int("min_peak_separation", None)
            fields["window_halfwidth"] = sec.get_int("window_halfwidth", None)
            fields["nyquist_floor"] = sec.get_float("nyquist_floor", 2.0)
            if fields["step"] < 1:
                raise sec.fail("step", "must be at least 1")
            if not 1 <= fields["attack_round"] <= 10:
                raise sec.fail("round", "must be between 1 and 10")
        elif sec.name == "fft":
            fields["fft_bin_hz"] = sec.get_float("bin_hz", 1e6)
            if fields["fft_bin_hz"] <= 0:
                raise sec.fail("bin_hz", "must be positive")
    sets.extend(explicit)
    fields["sets"] = tuple(sets)
    fields["fs2"] = fs2
    cfg = ExperimentConfig(**fields)
    if cfg.core_count == 2:
        if cfg.key2 is None:
            raise ConfigError("[traces] core_count = 2 requires key2")
        if cfg.fs2 is None:
            raise ConfigError("[traces] core_count = 2 requires a [set2] section")
    return cfg


def parse_config(path: str) -> ExperimentConfig:
    """Load a config file from disk; raise ConfigError on any problem."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from None
    return parse_config_text(text)
