"""Scenario files: TOML text describing a system, its reservoirs and run options.

Layout::

    name = "fig1"
    description = "..."
    kind = "trajectory"            # or "slot-check"

    [system]
    modes = [21.1, 21.5]           # units of the reference temperature
    unit_scale = 1000.0            # kelvin, labels only

    [options]                      # any IntegrationOptions field
    rtol = 1e-9

    [outputs]
    plots = true

    [[reservoir]]                  # one table per reservoir, in order
    temperature = 0.6
    chemical_potential = 20.8
    alpha = 1.5
    prefactor = 1000.0
    amplitude = 1e-4
    exponent = 0.5                 # optional, defaults to alpha - 1

A ``slot-check`` scenario has no system or reservoirs; it carries a
``[slot_check]`` table with ``heat`` and ``temperature`` arrays and evaluates
the second-law sum directly.

Unknown keys are errors. Every diagnostic names the file, the line and the
offending field.
"""

from __future__ import annotations

import dataclasses
import re
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .core import ReservoirGeometry, ReservoirState, SpectralCoupling, SystemSpec
from .dynamics import IntegrationOptions
from .errors import FermifluxError, ScenarioError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SUFFIX = ".scenario"
KINDS = ("trajectory", "slot-check")

_TOP_KEYS = {"name", "description", "kind", "system", "options", "outputs", "reservoir", "slot_check"}
_SYSTEM_KEYS = {"modes", "unit_scale"}
_OUTPUT_KEYS = {"plots"}
_RESERVOIR_KEYS = {"temperature", "chemical_potential", "alpha", "prefactor", "amplitude", "exponent"}
_SLOT_KEYS = {"heat", "temperature"}
_OPTION_KEYS = {f.name for f in dataclasses.fields(IntegrationOptions)}


@dataclass(frozen=True)
class SlotCheck:
    heat: tuple[float, ...]
    temperature: tuple[float, ...]


@dataclass(frozen=True)
class Scenario:
    name: str
    system: SystemSpec | None
    reservoirs: tuple[ReservoirState, ...]
    options: IntegrationOptions = field(default_factory=IntegrationOptions)
    description: str = ""
    kind: str = "trajectory"
    plots: bool = False
    slot_check: SlotCheck | None = None
    source: str | None = field(default=None, compare=False)

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)


class _Locator:
    """Maps ``(table path, key)`` to the line it was written on.

    Only the subset of TOML used by scenario files is understood: plain and
    array-of-tables headers followed by ``key = value`` lines.
    """

    _header = re.compile(r"^\s*(\[\[?)\s*([A-Za-z0-9_.\-\"]+)\s*\]\]?\s*(#.*)?$")
    _key = re.compile(r"^\s*([A-Za-z0-9_\-]+|\"[^\"]*\")\s*=")

    def __init__(self, text):
        self.lines = {}
        self.tables = {}
        counts = {}
        table = ()
        for no, line in enumerate(text.splitlines(), start=1):
            m = self._header.match(line)
            if m:
                name = m.group(2).strip('"')
                if m.group(1) == "[[":
                    idx = counts.get(name, 0)
                    counts[name] = idx + 1
                    table = (name, idx)
                else:
                    table = (name,)
                self.tables.setdefault(table, no)
                continue
            m = self._key.match(line)
            if m:
                self.lines.setdefault((table, m.group(1).strip('"')), no)

    def line(self, table, key=None):
        if key is not None and (table, key) in self.lines:
            return self.lines[(table, key)]
        return self.tables.get(table)


def bundled_scenarios() -> list[str]:
    root = resources.files("fermiflux") / "scenarios"
    return sorted(p.name[: -len(SUFFIX)] for p in root.iterdir() if p.name.endswith(SUFFIX))


def resolve(path) -> tuple[str, str]:
    """Return ``(text, source label)`` for a file path or a bundled scenario name.

    ``"fig1"``, ``"scenarios/fig1"`` and ``"fig1.scenario"`` all find the
    bundled file when no such path exists on disk.
    """
    p = Path(path)
    if p.is_file():
        return p.read_text(encoding="utf-8"), str(p)
    stem = p.name[: -len(SUFFIX)] if p.name.endswith(SUFFIX) else p.name
    if p.parent in (Path("."), Path("scenarios")):
        res = resources.files("fermiflux") / "scenarios" / f"{stem}{SUFFIX}"
        if res.is_file():
            return res.read_text(encoding="utf-8"), f"scenarios/{stem}{SUFFIX}"
    raise ScenarioError(
        f"no such file and no bundled scenario named {stem!r} (bundled: {', '.join(bundled_scenarios())})",
        path=str(path),
    )


def load_scenario(path) -> Scenario:
    text, source = resolve(path)
    return parse_scenario(text, source)


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ScenarioError(f"parse error: {exc}", path=source, line=int(m.group(1)) if m else None) from None
    loc = _Locator(text)

    def fail(message, table=(), key=None):
        label = ".".join(_label(table) + ([key] if key else [])) or None
        raise ScenarioError(message, path=source, line=loc.line(table, key), field=label)

    def check_keys(mapping, allowed, table):
        for key in mapping:
            if key not in allowed:
                fail(f"unknown key (allowed: {', '.join(sorted(allowed))})", table, key)

    def number(mapping, key, table, default=None, required=True):
        if key not in mapping:
            if required and default is None:
                fail("missing required field", table, key)
            return default
        v = mapping[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            fail(f"expected a number, got {v!r}", table, key)
        return float(v)

    def numbers(mapping, key, table):
        if key not in mapping:
            fail("missing required field", table, key)
        v = mapping[key]
        if not isinstance(v, list) or not v:
            fail("expected a non-empty array of numbers", table, key)
        for item in v:
            if isinstance(item, bool) or not isinstance(item, (int, float)):
                fail(f"expected a number, got {item!r}", table, key)
        return tuple(float(item) for item in v)

    check_keys(doc, _TOP_KEYS, ())
    name = doc.get("name")
    if not isinstance(name, str) or not name:
        fail("expected a non-empty string", (), "name")
    description = doc.get("description", "")
    if not isinstance(description, str):
        fail("expected a string", (), "description")
    kind = doc.get("kind", "trajectory")
    if kind not in KINDS:
        fail(f"unknown kind {kind!r} (expected one of {', '.join(KINDS)})", (), "kind")

    outputs = _table(doc, "outputs", fail)
    check_keys(outputs, _OUTPUT_KEYS, ("outputs",))
    plots = outputs.get("plots", False)
    if not isinstance(plots, bool):
        fail("expected true or false", ("outputs",), "plots")

    if kind == "slot-check":
        for key in ("system", "reservoir", "options"):
            if key in doc:
                fail("not used by a slot-check scenario", (key,) if key != "reservoir" else (key, 0))
        table = ("slot_check",)
        sc = _table(doc, "slot_check", fail)
        if not sc:
            fail("slot-check scenario needs a [slot_check] table", table)
        check_keys(sc, _SLOT_KEYS, table)
        heat = numbers(sc, "heat", table)
        temps = numbers(sc, "temperature", table)
        if len(heat) != len(temps):
            fail(f"{len(heat)} heat flows but {len(temps)} temperatures", table, "temperature")
        if any(t <= 0 for t in temps):
            fail("temperatures must be positive", table, "temperature")
        return Scenario(name, None, (), IntegrationOptions(), description, kind, plots, SlotCheck(heat, temps), source)

    if "slot_check" in doc:
        fail("only used by slot-check scenarios", ("slot_check",))

    table = ("system",)
    system_t = _table(doc, "system", fail)
    check_keys(system_t, _SYSTEM_KEYS, table)
    modes = numbers(system_t, "modes", table)
    try:
        system = SystemSpec(modes, number(system_t, "unit_scale", table, default=1000.0))
    except FermifluxError as exc:
        fail(str(exc), table, "modes")

    table = ("options",)
    options_t = _table(doc, "options", fail)
    check_keys(options_t, _OPTION_KEYS, table)
    opt_values = {}
    for key, v in options_t.items():
        if key in ("sampling", "method"):
            if not isinstance(v, str):
                fail("expected a string", table, key)
            opt_values[key] = v
        elif key in ("n_samples", "max_steps", "max_stiff_steps"):
            if isinstance(v, bool) or not isinstance(v, int):
                fail(f"expected an integer, got {v!r}", table, key)
            opt_values[key] = v
        else:
            opt_values[key] = number(options_t, key, table)
    try:
        options = IntegrationOptions(**opt_values)
    except FermifluxError as exc:
        fail(str(exc), table, _guess_field(str(exc), opt_values))

    res_list = doc.get("reservoir", [])
    if not isinstance(res_list, list):
        fail("reservoirs must be given as [[reservoir]] tables", ("reservoir",))
    if len(res_list) < 2:
        fail(f"at least two [[reservoir]] tables are required, found {len(res_list)}", ())
    reservoirs = []
    for i, r in enumerate(res_list):
        table = ("reservoir", i)
        check_keys(r, _RESERVOIR_KEYS, table)
        T = number(r, "temperature", table)
        mu = number(r, "chemical_potential", table)
        alpha = number(r, "alpha", table, default=1.5, required=False)
        B = number(r, "prefactor", table, default=1.0, required=False)
        g0 = number(r, "amplitude", table, default=1e-4, required=False)
        p = number(r, "exponent", table, default=alpha - 1.0, required=False)
        if not T > 0:
            fail(f"reservoir {i + 1}: temperature must be positive, got {T:g}", table, "temperature")
        try:
            geometry = ReservoirGeometry(alpha, B)
        except FermifluxError as exc:
            fail(f"reservoir {i + 1}: {exc}", table, "alpha" if "alpha" in str(exc) else "prefactor")
        try:
            coupling = SpectralCoupling(g0, p)
        except FermifluxError as exc:
            fail(f"reservoir {i + 1}: {exc}", table, "amplitude")
        state = ReservoirState(T, mu, geometry, coupling)
        if not state.x >= options.x_min:
            fail(
                f"reservoir {i + 1}: x = mu/T = {state.x:.6g} is below x_min = {options.x_min:g}",
                table,
                "chemical_potential",
            )
        reservoirs.append(state)

    return Scenario(name, system, tuple(reservoirs), options, description, kind, plots, None, source)


def _table(doc, key, fail):
    value = doc.get(key, {})
    if not isinstance(value, dict):
        fail(f"[{key}] must be a table", (), key)
    return value


def _label(table):
    if not table:
        return []
    if len(table) == 2:
        return [f"{table[0]}[{table[1] + 1}]"]
    return [table[0]]


def _guess_field(message, values):
    for key in values:
        if key in message:
            return key
    return None


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v) if v == v and v not in (float("inf"), float("-inf")) else str(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    raise TypeError(f"cannot serialize {v!r}")


def dump_scenario(scenario: Scenario) -> str:
    """Serialize to scenario text; ``parse_scenario`` reproduces an equal object."""
    out = [f"name = {_fmt(scenario.name)}"]
    if scenario.description:
        out.append(f"description = {_fmt(scenario.description)}")
    out.append(f"kind = {_fmt(scenario.kind)}")
    out += ["", "[outputs]", f"plots = {_fmt(scenario.plots)}"]
    if scenario.kind == "slot-check":
        sc = scenario.slot_check
        out += ["", "[slot_check]", f"heat = {_fmt(list(sc.heat))}", f"temperature = {_fmt(list(sc.temperature))}"]
        return "\n".join(out) + "\n"
    sysm = scenario.system
    out += ["", "[system]", f"modes = {_fmt(list(sysm.modes))}", f"unit_scale = {_fmt(sysm.unit_scale)}"]
    out += ["", "[options]"]
    for f in dataclasses.fields(IntegrationOptions):
        out.append(f"{f.name} = {_fmt(getattr(scenario.options, f.name))}")
    for r in scenario.reservoirs:
        out += [
            "",
            "[[reservoir]]",
            f"temperature = {_fmt(r.temperature)}",
            f"chemical_potential = {_fmt(r.chemical_potential)}",
            f"alpha = {_fmt(r.alpha)}",
            f"prefactor = {_fmt(r.prefactor)}",
            f"amplitude = {_fmt(r.coupling.amplitude)}",
            f"exponent = {_fmt(r.coupling.exponent)}",
        ]
    return "\n".join(out) + "\n"


_PATH = re.compile(r"^(?:(reservoir)\[(\d+)\]\.(\w+)|(system|options)\.(\w+))$")


def with_parameter(scenario: Scenario, path: str, value) -> Scenario:
    """Copy of ``scenario`` with one scalar field replaced.

    ``path`` is ``reservoir[i].<field>`` (1-based ``i``), ``system.<field>``,
    ``system.modes[k]`` or ``options.<field>``. The result is re-validated by a
    round trip through the scenario text.
    """
    m = re.match(r"^system\.modes\[(\d+)\]$", path)
    doc = tomllib.loads(dump_scenario(scenario))
    if m:
        k = int(m.group(1)) - 1
        modes = doc["system"]["modes"]
        if not 0 <= k < len(modes):
            raise ScenarioError(f"mode index {k + 1} out of range 1..{len(modes)}", field=path)
        modes[k] = value
    else:
        m = _PATH.match(path)
        if not m:
            raise ScenarioError("unrecognised parameter path", field=path)
        if m.group(1):
            i = int(m.group(2)) - 1
            if not 0 <= i < len(doc["reservoir"]):
                raise ScenarioError(f"reservoir index {i + 1} out of range 1..{len(doc['reservoir'])}", field=path)
            key = m.group(3)
            if key not in _RESERVOIR_KEYS:
                raise ScenarioError("unknown reservoir field", field=path)
            doc["reservoir"][i][key] = value
        else:
            table, key = m.group(4), m.group(5)
            allowed = _SYSTEM_KEYS if table == "system" else _OPTION_KEYS
            if key not in allowed:
                raise ScenarioError(f"unknown {table} field", field=path)
            doc[table][key] = value
    text = _dump_doc(doc)
    return dataclasses.replace(parse_scenario(text, f"{scenario.source or scenario.name} [{path}={value!r}]"), source=scenario.source)


def _dump_doc(doc) -> str:
    out = []
    for key, v in doc.items():
        if not isinstance(v, (dict, list)) or (isinstance(v, list) and v and not isinstance(v[0], dict)):
            out.append(f"{key} = {_fmt(v)}")
    for key, v in doc.items():
        if isinstance(v, dict):
            out += ["", f"[{key}]"] + [f"{k} = {_fmt(x)}" for k, x in v.items()]
    for key, v in doc.items():
        if isinstance(v, list) and v and isinstance(v[0], dict):
            for item in v:
                out += ["", f"[[{key}]]"] + [f"{k} = {_fmt(x)}" for k, x in item.items()]
    return "\n".join(out) + "\n"
