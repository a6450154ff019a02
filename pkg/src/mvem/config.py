"""Line-oriented run configuration: ``key = value`` pairs grouped under ``[section]`` headers.

Example::

    [problem]
    name = test2
    epsilon = 1e-6
    bc = nearly-neumann

    [mesh]
    family = distorted
    refinements = 1, 2, 3

    [discretization]
    degrees = 0, 1
    variants = Mon(a), Ortho(b)
    stabilizations = catalog

    [output]
    path = test2.csv
    format = csv
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .local import DofVariant, parse_stabilization
from .study import FAMILIES, RunConfig

_SECTION = re.compile(r"^\[\s*([A-Za-z_]+)\s*\]$")
_PAIR = re.compile(r"^([A-Za-z_]+)\s*=\s*(.*)$")


class ConfigError(ValueError):
    """Carries every validation problem, each tagged with its line number."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(str(e) for e in self.errors))


@dataclass(frozen=True)
class ConfigIssue:
    line: int
    message: str

    def __str__(self) -> str:
        return f"line {self.line}: {self.message}" if self.line else self.message


def _float(v):
    return float(v)


def _int(v):
    return int(v)


def _bool(v):
    low = v.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _int_list(v):
    items = [s.strip() for s in v.split(",") if s.strip()]
    return tuple(int(s) for s in items)


def _split_top_level(v):
    # commas inside parentheses belong to the item, e.g. "dofi-dofi(1), d-recipe(1)"
    out, depth, cur = [], 0, []
    for ch in v:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            out.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    out.append("".join(cur).strip())
    return [s for s in out if s]


def _variants(v):
    return tuple(DofVariant.parse(s) for s in _split_top_level(v))


def _stabilizations(v):
    if v.strip().lower() == "catalog":
        return None
    items = _split_top_level(v)
    for s in items:
        parse_stabilization(s)
    return tuple(items)


SCHEMA = {
    "problem": {"name": str, "epsilon": _float, "d_par": _float, "bc": str},
    "mesh": {"family": str, "refinements": _int_list, "amplitude": _float},
    "discretization": {"degrees": _int_list, "variants": _variants, "stabilizations": _stabilizations},
    "output": {"path": str, "format": str, "timing": _bool},
    "run": {"seed": _int, "threads": _int, "condition": _bool, "condition_max_rows": _int},
}

_BC_MODES = {"test1": ("dirichlet",), "test2": ("dirichlet", "mixed", "nearly-neumann"), "test3": ("dirichlet", "mixed")}
_DEFAULT_FAMILY = {"test1": "concave", "test2": "cartesian", "test3": "cartesian"}


def _read(text: str):
    values, lines, errors = {}, {}, []
    section = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        m = _SECTION.match(line)
        if m:
            section = m.group(1).lower()
            if section not in SCHEMA:
                errors.append(ConfigIssue(no, f"unknown section [{section}]"))
            continue
        m = _PAIR.match(line)
        if not m:
            errors.append(ConfigIssue(no, f"malformed line {raw.strip()!r}"))
            continue
        key, value = m.group(1).lower(), m.group(2).strip()
        if section is None:
            errors.append(ConfigIssue(no, f"key {key!r} outside any section"))
            continue
        if section not in SCHEMA:
            continue
        if key not in SCHEMA[section]:
            errors.append(ConfigIssue(no, f"unknown key {key!r} in [{section}]"))
            continue
        if (section, key) in values:
            errors.append(ConfigIssue(no, f"duplicate key {key!r} in [{section}] (first on line {lines[section, key]})"))
            continue
        try:
            values[section, key] = SCHEMA[section][key](value)
        except ValueError as exc:
            errors.append(ConfigIssue(no, f"bad value for {key!r}: {exc}"))
            continue
        lines[section, key] = no
    return values, lines, errors


def parse_config(text: str) -> RunConfig:
    """Parse and fully validate a run configuration.

    Raises
    ------
    ConfigError
        Listing every problem found, with line numbers where they apply.
    """
    values, lines, errors = _read(text)

    def err(key, message):
        errors.append(ConfigIssue(lines.get(key, 0), message))

    name = values.get(("problem", "name"))
    if name is None:
        err(None, "missing required key 'name' in [problem]")
    elif name not in _BC_MODES:
        err(("problem", "name"), f"unknown problem {name!r}")
        name = None

    params = {}
    if name is not None:
        for key, owner in (("epsilon", "test2"), ("d_par", "test3")):
            if ("problem", key) in values:
                if name != owner:
                    err(("problem", key), f"{key!r} does not apply to {name}")
                else:
                    params[key] = values["problem", key]
        eps = params.get("epsilon")
        if eps is not None and not 1e-6 <= eps <= 1.0:
            err(("problem", "epsilon"), "epsilon must lie in [1e-6, 1]")
        if params.get("d_par") is not None and params["d_par"] <= 0:
            err(("problem", "d_par"), "d_par must be positive")
        bc = values.get(("problem", "bc"), "dirichlet")
        if bc not in _BC_MODES[name]:
            err(("problem", "bc"), f"bc {bc!r} not available for {name} (choose from {', '.join(_BC_MODES[name])})")
        elif name != "test1":
            params["bc"] = bc

    family = values.get(("mesh", "family"), _DEFAULT_FAMILY.get(name, "cartesian"))
    if family not in FAMILIES:
        err(("mesh", "family"), f"unknown mesh family {family!r}")
    refinements = values.get(("mesh", "refinements"), (1,))
    if not refinements:
        err(("mesh", "refinements"), "refinement list is empty")
    elif min(refinements) < 1:
        err(("mesh", "refinements"), "refinement levels start at 1")
    elif len(set(refinements)) != len(refinements):
        err(("mesh", "refinements"), "repeated refinement level")
    amplitude = values.get(("mesh", "amplitude"), 0.3)
    if not 0 <= amplitude < 1:
        err(("mesh", "amplitude"), "amplitude must lie in [0, 1)")

    degrees = values.get(("discretization", "degrees"), (1,))
    if not degrees:
        err(("discretization", "degrees"), "degree list is empty")
    elif min(degrees) < 0:
        err(("discretization", "degrees"), "degrees must be non-negative")
    variants = values.get(("discretization", "variants"), (DofVariant.ORTHO_B,))
    if not variants:
        err(("discretization", "variants"), "variant list is empty")
    stabs = values.get(("discretization", "stabilizations"))
    if stabs is not None and not stabs:
        err(("discretization", "stabilizations"), "stabilization list is empty")

    fmt = values.get(("output", "format"), "csv")
    if fmt not in ("csv", "json"):
        err(("output", "format"), f"format must be csv or json, not {fmt!r}")
    threads = values.get(("run", "threads"), 1)
    if threads < 1:
        err(("run", "threads"), "threads must be >= 1")
    max_rows = values.get(("run", "condition_max_rows"), 4000)
    if max_rows < 1:
        err(("run", "condition_max_rows"), "condition_max_rows must be >= 1")

    if errors:
        raise ConfigError(sorted(errors, key=lambda e: (e.line == 0, e.line)))
    return RunConfig(
        problem=name,
        params=params,
        family=family,
        refinements=tuple(refinements),
        degrees=tuple(degrees),
        variants=tuple(variants),
        stabilizations=stabs,
        amplitude=amplitude,
        output=values.get(("output", "path")),
        format=fmt,
        seed=values.get(("run", "seed"), 0),
        condition=values.get(("run", "condition"), True),
        condition_max_rows=max_rows,
        timing=values.get(("output", "timing"), False),
        threads=threads,
    )
