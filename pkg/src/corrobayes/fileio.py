"""Parsing of config, topology, and inspection files, and atomic report
emission.

Config and prior files are flat key=value text whose keys mirror the prior
table's symbol names.  Inspection files are delimited text with header
``component,month,min_thickness_mm``; calendar months are mapped to 1-based
model indices against a configured origin month.  All numeric output is
full-precision decimal text, written via a temporary file and rename so a
failed stage never leaves a truncated report.
"""

from __future__ import annotations

import math
import os
import warnings

import numpy as np

from .errors import ConfigError
from .system import (
    CorrelationParams,
    InspectionDataset,
    InspectionRecord,
    PriorSpecification,
    SystemTopology,
    VarianceHyperprior,
)


def fmt(x) -> str:
    """Full-precision decimal text for a number."""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def atomic_write_text(path, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_keyvalues(path) -> dict:
    """key = value lines; '#' starts a comment; later keys override earlier."""
    out = {}
    try:
        with open(path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
                key, value = line.split("=", 1)
                out[key.strip()] = value.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return out


def _component_id(text: str):
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        return text


def parse_topology(path) -> SystemTopology:
    """Delimited text: component_id,circuit_id,position_in_circuit[,x0_mm]."""
    comps, circuit_of, position_of, x0_of = [], {}, {}, {}
    has_x0 = False
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if not lines:
        raise ConfigError(f"{path}: empty topology file")
    header = [h.strip() for h in lines[0].split(",")]
    if header[:3] != ["component_id", "circuit_id", "position_in_circuit"]:
        raise ConfigError(f"{path}:1: unexpected header {lines[0]!r}")
    has_x0 = len(header) > 3 and header[3] == "x0_mm"
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) < 3:
            raise ConfigError(f"{path}:{lineno}: expected at least 3 columns")
        comp = _component_id(parts[0])
        try:
            circuit = _component_id(parts[1])
            position = int(parts[2])
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from exc
        comps.append(comp)
        circuit_of[comp] = circuit
        position_of[comp] = position
        if has_x0:
            try:
                x0_of[comp] = float(parts[3])
            except (IndexError, ValueError) as exc:
                raise ConfigError(f"{path}:{lineno}: bad x0_mm value") from exc
    return SystemTopology(tuple(comps), circuit_of, position_of, x0_of if has_x0 else None)


INSPECTION_HEADER = "component,month,min_thickness_mm"


def parse_inspections(path, origin_month: int, horizon: int) -> InspectionDataset:
    """Observations with months mapped to indices: t = month - origin + 1."""
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if not lines or lines[0].strip() != INSPECTION_HEADER:
        raise ConfigError(f"{path}:1: expected header {INSPECTION_HEADER!r}")
    records = []
    seen = set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise ConfigError(f"{path}:{lineno}: expected 3 columns")
        comp = _component_id(parts[0])
        try:
            month_raw = float(parts[1])
            value = float(parts[2])
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from exc
        month = int(math.floor(month_raw))
        if month != month_raw:
            warnings.warn(f"{path}:{lineno}: month {month_raw} floored to {month}", stacklevel=2)
        t = month - origin_month + 1
        if not 1 <= t <= horizon:
            raise ConfigError(
                f"{path}:{lineno}: month {month} maps to index {t}, outside 1..{horizon}"
            )
        if (comp, t) in seen:
            raise ConfigError(f"{path}:{lineno}: duplicate record for component {comp} at index {t}")
        seen.add((comp, t))
        records.append(InspectionRecord(comp, t, value))
    return InspectionDataset(tuple(records), horizon)


def write_inspections(path, dataset: InspectionDataset, origin_month: int) -> None:
    rows = [
        (r.component, r.time + origin_month - 1, r.value)
        for r in sorted(dataset.records, key=lambda r: (r.component, r.time))
    ]
    write_csv(path, INSPECTION_HEADER.split(","), rows)


_PRIOR_KEYS = {
    "mu_WX": float,
    "sigma_WX": float,
    "gamma_WX": float,
    "lambda": float,
    "sigma_y": float,
    "sigma_r": float,
    "rho0": float,
    "rhoC": float,
    "rhoD": float,
}


def _get(config: dict, key: str, conv, default=None):
    if key not in config:
        if default is None:
            raise ConfigError(f"missing required config key {key!r}")
        return default
    try:
        return conv(config[key])
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: {exc}") from exc


def build_prior(config: dict, topology: SystemTopology) -> PriorSpecification:
    """Assemble the prior specification from key=value config text."""
    vals = {k: _get(config, k, conv) for k, conv in _PRIOR_KEYS.items()}
    hyper = VarianceHyperprior(
        vals["mu_WX"], vals["sigma_WX"], vals["gamma_WX"], vals["lambda"]
    )
    corr = CorrelationParams(
        vals["rho0"], vals["rhoC"], vals["rhoD"], _get(config, "nu", float, 1.0)
    )
    candidates = ()
    if "sigma_r_candidates" in config:
        candidates = tuple(float(v) for v in config["sigma_r_candidates"].split(",") if v.strip())
    alpha0 = np.full(topology.component_count, _get(config, "alpha0", float))
    x0 = topology.initial_thickness(default=config.get("x0") and float(config["x0"]))
    return PriorSpecification(
        hyper=hyper,
        corr=corr,
        sigma_y=vals["sigma_y"],
        sigma_r=vals["sigma_r"],
        sigma_r_candidates=candidates,
        locations_per_component=_get(config, "locations_per_component", int, 10),
        x0=x0,
        alpha0=alpha0,
        ensemble_size=_get(config, "realizations", int, 1000),
        critical_thickness=_get(config, "critical_thickness", float, 4.0),
        rng_seed=_get(config, "seed", int, 0),
        noise_dist=config.get("noise_dist", "gaussian"),
        t_dof=_get(config, "t_dof", float, 5.0),
        w_dist=config.get("w_dist", "gamma"),
    )
