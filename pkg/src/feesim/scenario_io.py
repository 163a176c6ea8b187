"""Scenario documents: a small structured-text format with sections.

Example::

    # Ethereum-like environment
    capacity = 200
    valuation = 3
    tick = 1e-7

    [interval]
    kind = fixed
    duration = 10

    [arrivals]
    kind = linear
    rate = 40

    [fees]
    kind = pareto
    minimum = 1
    mean = 5.9512

    [semi_strategic]       # optional: enables the fee-bumping analysis
    n = 10
    gamma = 1
    gamma_s = 4
    v_hat = 8

Unknown sections or keys are rejected with the offending line number, as
are all constraint violations that can be tied to a line.  Parsing and
serialization round-trip exactly.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .ctmc import CtmcParams
from .errors import DomainError, ScenarioError
from .model import (
    BlockInterval,
    EmpiricalFees,
    ExponentialInterval,
    FixedInterval,
    LinearArrivals,
    ParetoFees,
    PoissonArrivals,
    Scenario,
    UniformFees,
)

__all__ = ["ScenarioDocument", "parse_scenario", "parse_scenario_file",
           "serialize_scenario", "scenario_digest"]

_TOP_KEYS = ("capacity", "valuation", "tick")
_SECTION_KEYS = {
    "interval": {"kind", "rate", "duration"},
    "arrivals": {"kind", "rate"},
    "fees": {"kind", "minimum", "mean", "lo", "hi", "samples"},
    "semi_strategic": {"n", "gamma", "gamma_s", "v_hat"},
}


@dataclass(frozen=True)
class ScenarioDocument:
    """A parsed scenario plus the optional fee-bumping parameters."""

    scenario: Scenario
    semi_strategic: CtmcParams | None = None


def _to_float(raw: str, line: int) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ScenarioError(f"expected a number, got {raw!r}", line) from None


def _to_int(raw: str, line: int) -> int:
    try:
        value = int(raw)
    except ValueError:
        raise ScenarioError(f"expected an integer, got {raw!r}", line) from None
    return value


class _Entries:
    """Key/value pairs of one section with their line numbers."""

    def __init__(self, name: str):
        self.name = name
        self.values: dict[str, str] = {}
        self.lines: dict[str, int] = {}

    def put(self, key: str, value: str, line: int):
        if key in self.values:
            raise ScenarioError(f"duplicate key {key!r}", line)
        self.values[key] = value
        self.lines[key] = line

    def take(self, key: str) -> tuple[str, int]:
        if key not in self.values:
            raise ScenarioError(
                f"missing key {key!r} in section [{self.name}]"
                if self.name else f"missing top-level key {key!r}"
            )
        return self.values[key], self.lines[key]

    def line(self, key: str, default: int | None = None) -> int | None:
        return self.lines.get(key, default)


def _scan(text: str) -> dict[str, _Entries]:
    sections: dict[str, _Entries] = {"": _Entries("")}
    current = sections[""]
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in _SECTION_KEYS:
                raise ScenarioError(f"unknown section [{name}]", lineno)
            if name in sections:
                raise ScenarioError(f"duplicate section [{name}]", lineno)
            sections[name] = _Entries(name)
            current = sections[name]
            continue
        if "=" not in line:
            raise ScenarioError(f"expected 'key = value', got {line!r}", lineno)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        allowed = _TOP_KEYS if current.name == "" else _SECTION_KEYS[current.name]
        if key not in allowed:
            where = f"section [{current.name}]" if current.name else "top level"
            raise ScenarioError(f"unknown key {key!r} in {where}", lineno)
        if not value:
            raise ScenarioError(f"empty value for {key!r}", lineno)
        current.put(key, value, lineno)
    return sections


def _parse_interval(entries: _Entries) -> BlockInterval:
    kind, kline = entries.take("kind")
    if kind == "exponential":
        raw, line = entries.take("rate")
        value = _to_float(raw, line)
        try:
            return ExponentialInterval(value)
        except DomainError as exc:
            raise ScenarioError(str(exc), line) from None
    if kind == "fixed":
        raw, line = entries.take("duration")
        value = _to_float(raw, line)
        try:
            return FixedInterval(value)
        except DomainError as exc:
            raise ScenarioError(str(exc), line) from None
    raise ScenarioError(
        f"interval kind must be 'exponential' or 'fixed', got {kind!r}", kline
    )


def _parse_arrivals(entries: _Entries):
    kind, kline = entries.take("kind")
    raw, line = entries.take("rate")
    value = _to_float(raw, line)
    cls = {"linear": LinearArrivals, "poisson": PoissonArrivals}.get(kind)
    if cls is None:
        raise ScenarioError(
            f"arrivals kind must be 'linear' or 'poisson', got {kind!r}", kline
        )
    try:
        return cls(value)
    except DomainError as exc:
        raise ScenarioError(str(exc), line) from None


def _parse_fees(entries: _Entries):
    kind, kline = entries.take("kind")
    if kind == "pareto":
        lo_raw, lo_line = entries.take("minimum")
        mean_raw, mean_line = entries.take("mean")
        try:
            return ParetoFees(_to_float(lo_raw, lo_line), _to_float(mean_raw, mean_line))
        except DomainError as exc:
            raise ScenarioError(str(exc), mean_line) from None
    if kind == "uniform":
        lo_raw, lo_line = entries.take("lo")
        hi_raw, hi_line = entries.take("hi")
        try:
            return UniformFees(_to_float(lo_raw, lo_line), _to_float(hi_raw, hi_line))
        except DomainError as exc:
            raise ScenarioError(str(exc), hi_line) from None
    if kind == "empirical":
        raw, line = entries.take("samples")
        samples = [_to_float(part.strip(), line) for part in raw.split(",") if part.strip()]
        try:
            return EmpiricalFees(tuple(samples))
        except DomainError as exc:
            raise ScenarioError(str(exc), line) from None
    raise ScenarioError(
        f"fees kind must be 'pareto', 'uniform' or 'empirical', got {kind!r}", kline
    )


def parse_scenario(text: str) -> ScenarioDocument:
    """Parse a scenario document, raising :class:`ScenarioError` with the
    offending line on any problem."""
    sections = _scan(text)
    top = sections[""]
    for name in ("interval", "arrivals", "fees"):
        if name not in sections:
            raise ScenarioError(f"missing section [{name}]")

    interval = _parse_interval(sections["interval"])
    arrivals = _parse_arrivals(sections["arrivals"])
    fees = _parse_fees(sections["fees"])

    cap_raw, cap_line = top.take("capacity")
    val_raw, val_line = top.take("valuation")
    tick_raw, tick_line = top.take("tick")
    capacity = _to_int(cap_raw, cap_line)
    valuation = _to_float(val_raw, val_line)
    tick = _to_float(tick_raw, tick_line)
    try:
        scenario = Scenario(interval, arrivals, fees, capacity, valuation, tick)
    except DomainError as exc:
        message = str(exc)
        line = cap_line
        if "valuation" in message:
            line = val_line
        if "tick" in message:
            line = tick_line
        raise ScenarioError(message, line) from None

    semi = None
    if "semi_strategic" in sections:
        sec = sections["semi_strategic"]
        if not isinstance(interval, ExponentialInterval):
            raise ScenarioError(
                "the fee-bumping analysis needs an exponential interval",
                sec.line("n"),
            )
        n_raw, n_line = sec.take("n")
        g_raw, g_line = sec.take("gamma")
        gs_raw, gs_line = sec.take("gamma_s")
        v_raw, v_line = sec.take("v_hat")
        try:
            semi = CtmcParams(
                n=_to_int(n_raw, n_line),
                m=capacity,
                v_hat=_to_int(v_raw, v_line),
                gamma=_to_float(g_raw, g_line),
                gamma_s=_to_float(gs_raw, gs_line),
                block_rate=interval.rate,
            )
        except DomainError as exc:
            raise ScenarioError(str(exc), n_line) from None
    return ScenarioDocument(scenario, semi)


def parse_scenario_file(path) -> ScenarioDocument:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_scenario(handle.read())


def _fmt(x: float) -> str:
    return repr(int(x)) if float(x).is_integer() and abs(x) < 1e15 else repr(float(x))


def serialize_scenario(doc: ScenarioDocument) -> str:
    """Canonical text form; parse(serialize(doc)) == doc."""
    s = doc.scenario
    lines = [
        f"capacity = {s.capacity}",
        f"valuation = {_fmt(s.valuation)}",
        f"tick = {_fmt(s.tick)}",
        "",
        "[interval]",
    ]
    if isinstance(s.interval, ExponentialInterval):
        lines += ["kind = exponential", f"rate = {_fmt(s.interval.rate)}"]
    else:
        lines += ["kind = fixed", f"duration = {_fmt(s.interval.duration)}"]
    lines += ["", "[arrivals]"]
    kind = "linear" if isinstance(s.arrivals, LinearArrivals) else "poisson"
    lines += [f"kind = {kind}", f"rate = {_fmt(s.arrivals.rate)}"]
    lines += ["", "[fees]"]
    if isinstance(s.fees, ParetoFees):
        lines += ["kind = pareto", f"minimum = {_fmt(s.fees.minimum)}",
                  f"mean = {_fmt(s.fees.mean)}"]
    elif isinstance(s.fees, UniformFees):
        lines += ["kind = uniform", f"lo = {_fmt(s.fees.lo)}", f"hi = {_fmt(s.fees.hi)}"]
    else:
        lines += ["kind = empirical",
                  "samples = " + ", ".join(_fmt(x) for x in s.fees.samples)]
    if doc.semi_strategic is not None:
        p = doc.semi_strategic
        lines += ["", "[semi_strategic]", f"n = {p.n}", f"gamma = {_fmt(p.gamma)}",
                  f"gamma_s = {_fmt(p.gamma_s)}", f"v_hat = {p.v_hat}"]
    return "\n".join(lines) + "\n"


def scenario_digest(doc: ScenarioDocument) -> str:
    """Short stable hash of the canonical serialization, for report metadata."""
    return hashlib.sha256(serialize_scenario(doc).encode()).hexdigest()[:12]
