"""Deterministic synthetic topologies and inspection designs.

The reference design mirrors the shape of the motivating offshore system:
64 weld components on four corrosion circuits, 174 minimum-thickness
observations over an 83-month window.  Observations are concentrated on a
spread-out subset of components (six visits each at irregularly jittered
times) because the variance-learning statistic only draws information from
components with three or more visits, and its per-term noise shrinks with
the number of difference terms available.  It is used by the
simulation-study mode and throughout the test suite.
"""

from __future__ import annotations

import numpy as np

from .system import InspectionDataset, InspectionRecord, SystemTopology

REFERENCE_COMPONENTS = 64
REFERENCE_CIRCUITS = 4
REFERENCE_HORIZON = 83
REFERENCE_OBSERVATIONS = 174


def four_circuit_topology(
    n_components: int = REFERENCE_COMPONENTS,
    n_circuits: int = REFERENCE_CIRCUITS,
    x0: float | None = 12.0,
) -> SystemTopology:
    """Components split evenly into circuits, positioned along each circuit."""
    per = n_components // n_circuits
    comps = tuple(range(n_components))
    circuit_of = {c: c // per if c // per < n_circuits else n_circuits - 1 for c in comps}
    position_of = {}
    counters = {}
    for c in comps:
        circ = circuit_of[c]
        position_of[c] = counters.get(circ, 0)
        counters[circ] = position_of[c] + 1
    x0_of = None if x0 is None else {c: float(x0) for c in comps}
    return SystemTopology(comps, circuit_of, position_of, x0_of)


def reference_design(
    topology: SystemTopology,
    horizon: int = REFERENCE_HORIZON,
    total_observations: int = REFERENCE_OBSERVATIONS,
    visits: int = 6,
    monitored: int = 29,
    jitter_seed: int = 1,
) -> InspectionDataset:
    """Irregular design: ``monitored`` components visited ``visits`` times.

    Components are taken with stride 7 so the monitored set spreads over all
    circuits.  Each component's visit times come from a per-component shuffled
    irregular spacing pattern (deterministic in ``jitter_seed``), so the lag
    pairs (k, l) vary both within and across components; staggered patterns
    reduce the correlation between difference terms of neighbouring
    components.
    """
    rng = np.random.default_rng(jitter_seed)
    n = len(topology.components)
    # stride through the component list, skipping repeats so small systems
    # never receive duplicate inspection records
    monitored_comps: list = []
    seen = set()
    j = 0
    while len(monitored_comps) < min(monitored, n):
        comp = topology.components[(j * 7) % n]
        j += 1
        if comp in seen:
            continue
        seen.add(comp)
        monitored_comps.append(comp)
    records = []
    total = 0
    for comp in monitored_comps:
        count = min(visits, total_observations - total)
        if count < 3:
            break
        gaps = rng.permutation(np.linspace(0.6, 1.4, count - 1))
        pos = np.concatenate([[0.0], np.cumsum(gaps)])
        lo = 1 + rng.integers(0, 4)
        hi = horizon - rng.integers(0, 4)
        times = sorted({int(round(t)) for t in lo + pos / pos[-1] * (hi - lo)})
        while len(times) < count:
            times = sorted(set(times + [min(horizon, times[-1] + 1)]))
        records.extend(InspectionRecord(comp, int(t)) for t in times[:count])
        total += len(times[:count])
    return InspectionDataset(tuple(records), horizon)


def regular_design(
    topology: SystemTopology, horizon: int, every: int = 1
) -> InspectionDataset:
    """Every component observed at t = every, 2*every, ... (full regular
    inspection when every=1)."""
    records = [
        InspectionRecord(c, t)
        for c in topology.components
        for t in range(every, horizon + 1, every)
    ]
    return InspectionDataset(tuple(records), horizon)


def design_from_times(times_by_component: dict, horizon: int) -> InspectionDataset:
    """Arbitrary per-component observation times (test helper)."""
    records = [
        InspectionRecord(c, t)
        for c, times in sorted(times_by_component.items())
        for t in sorted(times)
    ]
    return InspectionDataset(tuple(records), horizon)
