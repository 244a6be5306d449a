"""INI experiment configs: strict parsing with line-numbered diagnostics.

A config file has five sections.  [system] describes the plant, either
scalar (a, M, and exactly one of L or a_bar) or vector (A, Q, L, Sigma
as row-major comma lists; the state dimension is inferred from A).
[channel] has the success probability p, [spec] the envelope (c, B, D),
[run] the experiment shape (horizon, n_runs, seed, x0), and [policy]
the schedule (kind plus T, D, or anchor as the kind requires).

Parsing is deliberately unforgiving: unknown keys, malformed numbers,
wrong matrix sizes, and contradictory combinations are all rejected
with the file line they came from, because a silently ignored typo in
an experiment config produces a wrong figure, not an error.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, replace

import numpy as np

from .model import Channel, PerformanceSpec, ScalarSystem, System, VectorSystem
from .sim import POLICY_KINDS, PolicySpec, RunConfig

__all__ = [
    "ConfigError",
    "RawConfig",
    "read_config",
    "build_run_config",
    "load_config",
    "apply_param",
    "SWEEPABLE_PARAMS",
]

_SECTIONS = ("system", "channel", "spec", "run", "policy")
_SCALAR_SYSTEM_KEYS = {"a", "L", "a_bar", "M"}
_VECTOR_SYSTEM_KEYS = {"A", "Q", "L", "Sigma"}
_CHANNEL_KEYS = {"p"}
_SPEC_KEYS = {"c", "B", "D"}
_RUN_KEYS = {"horizon", "n_runs", "seed", "x0"}
_POLICY_KEYS = {"kind", "T", "D", "anchor"}

# Parameter paths the sweep runner may override: numeric scalars only.
SWEEPABLE_PARAMS = {
    "system.a", "system.L", "system.a_bar", "system.M",
    "channel.p",
    "spec.c", "spec.B", "spec.D",
    "run.horizon", "run.n_runs", "run.seed",
    "policy.T", "policy.D", "policy.anchor",
}


class ConfigError(ValueError):
    '''Config problem, with the source line when one can be pinned.'''


@dataclass(frozen=True)
class RawConfig:
    """Parsed-but-untyped config: string values plus source locations.

    The sweep runner edits this form (values stay strings) and rebuilds
    the typed RunConfig afterwards, so overridden values go through the
    exact same validation as hand-written ones.
    """

    path: str
    sections: dict[str, dict[str, str]]
    lines: dict[tuple[str, str], int]

    def line(self, section: str, key: str) -> int | None:
        return self.lines.get((section, key))


def _err(raw: RawConfig, section: str, key: str | None, msg: str) -> ConfigError:
    where = raw.path
    if key is not None:
        lineno = raw.line(section, key)
        if lineno is not None:
            return ConfigError(f"{where}:{lineno}: [{section}] {key}: {msg}")
        return ConfigError(f"{where}: [{section}] {key}: {msg}")
    return ConfigError(f"{where}: [{section}]: {msg}")


def read_config(path: str) -> RawConfig:
    '''Parse the INI file, recording the line each key was set on.'''
    parser = configparser.ConfigParser(
        strict=True,
        interpolation=None,
        inline_comment_prefixes=("#", ";"),
    )
    parser.optionxform = str  # keys are case-sensitive (B and D are not b and d)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        parser.read_string(text, source=path)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    sections = {name: dict(parser[name]) for name in parser.sections()}
    lines = _locate_keys(text, sections)
    raw = RawConfig(path=path, sections=sections, lines=lines)
    _check_shape(raw)
    return raw


def _locate_keys(text: str, sections: dict[str, dict[str, str]]):
    """Map (section, key) to the line number where the key is assigned.

    configparser does not expose positions, so this rescan does; it
    follows the same syntax (section headers, key = value / key : value).
    """
    lines: dict[tuple[str, str], int] = {}
    current = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith(("#", ";")):
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            current = stripped[1:-1].strip()
            continue
        if current is None or line[:1].isspace():
            continue  # continuation lines belong to the previous key
        for sep in ("=", ":"):
            head, _, _ = line.partition(sep)
            key = head.strip()
            if key and key in sections.get(current, ()):
                lines.setdefault((current, key), lineno)
                break
    return lines


def _check_shape(raw: RawConfig) -> None:
    for name in raw.sections:
        if name not in _SECTIONS:
            raise ConfigError(
                f"{raw.path}: unknown section [{name}]; expected {_SECTIONS}")
    for name in _SECTIONS:
        if name not in raw.sections:
            raise ConfigError(f"{raw.path}: missing section [{name}]")

    system = raw.sections["system"]
    allowed = _VECTOR_SYSTEM_KEYS if "A" in system else _SCALAR_SYSTEM_KEYS
    _reject_unknown(raw, "system", allowed)
    _reject_unknown(raw, "channel", _CHANNEL_KEYS)
    _reject_unknown(raw, "spec", _SPEC_KEYS)
    _reject_unknown(raw, "run", _RUN_KEYS)
    _reject_unknown(raw, "policy", _POLICY_KEYS)


def _reject_unknown(raw: RawConfig, section: str, allowed: set[str]) -> None:
    for key in raw.sections[section]:
        if key not in allowed:
            raise _err(raw, section, key,
                       f"unknown key; allowed keys are {sorted(allowed)}")


def _get(raw: RawConfig, section: str, key: str) -> str:
    try:
        return raw.sections[section][key]
    except KeyError:
        raise _err(raw, section, key, "required key is missing") from None


def _parse_float(raw: RawConfig, section: str, key: str, value: str) -> float:
    try:
        out = float(value)
    except ValueError:
        raise _err(raw, section, key, f"not a number: {value!r}") from None
    if not math.isfinite(out):
        raise _err(raw, section, key, f"must be finite, got {value!r}")
    return out


def _parse_int(raw: RawConfig, section: str, key: str, value: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise _err(raw, section, key, f"not an integer: {value!r}") from None


def _parse_vector(raw: RawConfig, section: str, key: str, value: str) -> np.ndarray:
    parts = [p for p in (piece.strip() for piece in value.split(",")) if p]
    if not parts:
        raise _err(raw, section, key, "empty value")
    try:
        return np.array([float(p) for p in parts])
    except ValueError:
        raise _err(raw, section, key, f"not a comma list of numbers: {value!r}") from None


def _parse_matrix(raw: RawConfig, section: str, key: str, value: str,
                  n: int | None) -> np.ndarray:
    flat = _parse_vector(raw, section, key, value)
    if n is None:
        n = math.isqrt(flat.size)
        if n * n != flat.size:
            raise _err(raw, section, key,
                       f"{flat.size} entries do not form a square matrix")
    elif flat.size != n * n:
        raise _err(raw, section, key,
                   f"expected {n * n} entries for a {n}x{n} matrix, got {flat.size}")
    return flat.reshape(n, n)


def _build_system(raw: RawConfig) -> System:
    section = raw.sections["system"]
    if "A" in section:
        A = _parse_matrix(raw, "system", "A", _get(raw, "system", "A"), None)
        n = A.shape[0]
        Q = _parse_matrix(raw, "system", "Q", _get(raw, "system", "Q"), n)
        L = _parse_matrix(raw, "system", "L", _get(raw, "system", "L"), n)
        Sigma = _parse_matrix(raw, "system", "Sigma", _get(raw, "system", "Sigma"), n)
        return VectorSystem(A=A, Q=Q, L=L, Sigma=Sigma)

    a = _parse_float(raw, "system", "a", _get(raw, "system", "a"))
    M = _parse_float(raw, "system", "M", _get(raw, "system", "M"))
    has_L = "L" in section
    has_ab = "a_bar" in section
    if has_L == has_ab:
        key = "a_bar" if has_ab else "L"
        raise _err(raw, "system", key if key in section else "a",
                   "scalar systems take exactly one of L or a_bar")
    if has_L:
        return ScalarSystem(a=a, L=_parse_float(raw, "system", "L", section["L"]), M=M)
    a_bar = _parse_float(raw, "system", "a_bar", section["a_bar"])
    return ScalarSystem.from_closed_loop(a=a, a_bar=a_bar, M=M)


def _build_policy(raw: RawConfig) -> PolicySpec:
    section = raw.sections["policy"]
    kind = _get(raw, "policy", "kind")
    if kind not in POLICY_KINDS:
        raise _err(raw, "policy", "kind",
                   f"unknown kind {kind!r}; expected one of {POLICY_KINDS}")

    period = anchor = horizon = None
    if "T" in section:
        if kind != "periodic":
            raise _err(raw, "policy", "T", f"T applies to periodic, not {kind!r}")
        period = _parse_int(raw, "policy", "T", section["T"])
    if "D" in section:
        if kind not in ("event", "event_vector", "nominal"):
            raise _err(raw, "policy", "D", f"D does not apply to {kind!r}")
        horizon = _parse_int(raw, "policy", "D", section["D"])
    if "anchor" in section:
        if kind != "nominal":
            raise _err(raw, "policy", "anchor",
                       f"anchor applies to nominal, not {kind!r}")
        anchor = _parse_int(raw, "policy", "anchor", section["anchor"])

    if kind == "periodic" and period is None:
        raise _err(raw, "policy", None, "periodic policy requires T")
    try:
        return PolicySpec(kind=kind, period=period,
                          anchor=0 if anchor is None else anchor,
                          horizon=horizon)
    except ValueError as exc:
        raise _err(raw, "policy", "kind", str(exc)) from None


def build_run_config(raw: RawConfig) -> RunConfig:
    '''Typed, validated RunConfig from a raw parse.'''
    system = _build_system(raw)

    p = _parse_float(raw, "channel", "p", _get(raw, "channel", "p"))
    channel = Channel(p=p)

    c = _parse_float(raw, "spec", "c", _get(raw, "spec", "c"))
    B = _parse_float(raw, "spec", "B", _get(raw, "spec", "B"))
    D = _parse_int(raw, "spec", "D", _get(raw, "spec", "D"))
    spec = PerformanceSpec(c=c, B=B, D=D)

    horizon = _parse_int(raw, "run", "horizon", _get(raw, "run", "horizon"))
    n_runs = _parse_int(raw, "run", "n_runs", _get(raw, "run", "n_runs"))
    seed = _parse_int(raw, "run", "seed", _get(raw, "run", "seed"))
    x0_text = _get(raw, "run", "x0")
    if isinstance(system, VectorSystem):
        x0 = _parse_vector(raw, "run", "x0", x0_text)
        if x0.size != system.n:
            raise _err(raw, "run", "x0",
                       f"expected {system.n} entries, got {x0.size}")
    else:
        x0 = _parse_float(raw, "run", "x0", x0_text)

    policy = _build_policy(raw)
    if policy.kind == "event" and isinstance(system, VectorSystem):
        raise _err(raw, "policy", "kind",
                   "kind 'event' needs a scalar system; use 'event_vector'")
    if policy.kind == "event_vector" and not isinstance(system, VectorSystem):
        raise _err(raw, "policy", "kind",
                   "kind 'event_vector' needs a vector system")

    try:
        return RunConfig(system=system, spec=spec, channel=channel,
                         policy=policy, x0=x0, horizon=horizon,
                         n_runs=n_runs, seed=seed)
    except ValueError as exc:
        raise ConfigError(f"{raw.path}: {exc}") from None


def load_config(path: str) -> RunConfig:
    '''One-call form: parse the file and build the typed config.'''
    return build_run_config(read_config(path))


def apply_param(raw: RawConfig, path: str, value: str) -> RawConfig:
    """Override one numeric parameter, addressed as section.key.

    Values stay strings and are re-validated by build_run_config, so a
    sweep cannot smuggle in anything a hand-written config could not
    say.  Only scalar numeric leaves are sweepable; matrices and the
    policy kind are not.
    """
    if path not in SWEEPABLE_PARAMS:
        raise ConfigError(
            f"unknown parameter path {path!r}; sweepable parameters are "
            f"{sorted(SWEEPABLE_PARAMS)}")
    section, key = path.split(".", 1)
    if section == "system" and "A" in raw.sections["system"] \
            and key in ("a", "L", "a_bar", "M"):
        if key == "L":
            raise ConfigError(
                "system.L is a matrix in vector configs and cannot be swept")
        raise ConfigError(f"{path} does not exist in a vector config")
    sections = {name: dict(keys) for name, keys in raw.sections.items()}
    sections[section][key] = value
    return replace(raw, sections=sections)
