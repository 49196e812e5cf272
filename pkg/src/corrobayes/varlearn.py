"""Variance learning from irregular observation differences.

For each component with at least three observations, the combination
k_i*Y^(2) - l_i*Y^(1) of first and second observation-differences annihilates
both the wall-thickness level and the corrosion-rate slope, leaving only
evolution errors and local min-function terms.  Summing the squared
combinations (each divided by its lag weight K_i) gives the statistic Dbar
whose expectation and covariance with the population mean variance are known
in closed form, enabling a scalar Bayes linear adjustment of that variance.

The per-term normalization by K_i is what makes
cov(M(W_X), Dbar_c) = (T_c - 2) * gamma_wx exact.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import InsufficientDataError, ShapeError
from .system import VARIANCE_FLOOR, InspectionDataset, VarianceHyperprior


def lag_weight(k: int, l: int, lam: float) -> float:
    """K = k*l*(k-l)*(2*lam*k^2 - 2*lam*k*l - lam - 6)/6.

    This is the variance of the annihilating combination k*Y^(2) - l*Y^(1)
    per unit of evolution variance; it is strictly positive whenever
    l > k >= 1.  For k=1, l=2 it reduces to lam + 2, the coefficient of the
    population mean variance in the regular-inspection expectation.
    """
    return k * l * (k - l) * (2.0 * lam * k * k - 2.0 * lam * k * l - lam - 6.0) / 6.0


@dataclass(frozen=True)
class SchemeEntry:
    """One difference term: observation i >= 3 of a component."""

    component: object
    t0: int  # t_i
    t1: int  # t_{i-1}
    t2: int  # t_{i-2}
    k: int
    l: int
    weight: float


@dataclass(frozen=True)
class DifferenceScheme:
    """Per-component observation times with lags and weights.

    components lists (in canonical order) the components contributing at
    least one entry; skipped lists those with fewer than three observations.
    """

    entries: tuple
    components: tuple
    t_counts: dict
    lam: float
    skipped: tuple

    def component_index(self) -> dict:
        return {c: i for i, c in enumerate(self.components)}

    def entry_component_indices(self) -> np.ndarray:
        idx = self.component_index()
        return np.array([idx[e.component] for e in self.entries], dtype=int)


def build_scheme(dataset: InspectionDataset, lam: float) -> DifferenceScheme:
    """Sorted per-component times, lags k_i, l_i and weights K_i."""
    entries = []
    t_counts = {}
    skipped = []
    for comp, recs in sorted(dataset.by_component().items()):
        times = [r.time for r in recs]
        t_counts[comp] = len(times)
        if len(times) < 3:
            skipped.append(comp)
            continue
        for i in range(2, len(times)):
            k = times[i] - times[i - 1]
            l = times[i] - times[i - 2]
            entries.append(
                SchemeEntry(comp, times[i], times[i - 1], times[i - 2], k, l, lag_weight(k, l, lam))
            )
    comps = tuple(sorted({e.component for e in entries}))
    return DifferenceScheme(tuple(entries), comps, t_counts, lam, tuple(skipped))


def dbar_terms(values_at, scheme: DifferenceScheme, normalized: bool = True) -> np.ndarray:
    """Per-entry (k*Y^(2) - l*Y^(1))^2 terms, optionally divided by K_i.

    ``values_at`` maps (component, time) to the observed value.
    """
    out = np.empty(len(scheme.entries))
    for j, e in enumerate(scheme.entries):
        y0 = values_at[(e.component, e.t0)]
        y1 = values_at[(e.component, e.t1)]
        y2 = values_at[(e.component, e.t2)]
        comb = e.k * (y0 - y2) - e.l * (y0 - y1)
        term = comb * comb
        out[j] = term / e.weight if normalized else term
    return out


def compute_dbar(
    dataset: InspectionDataset, scheme: DifferenceScheme, normalized: bool = True
) -> np.ndarray:
    """Dbar vector over scheme.components from the dataset's observed values."""
    values = {(r.component, r.time): r.value for r in dataset.records}
    terms = dbar_terms(values, scheme, normalized)
    out = np.zeros(len(scheme.components))
    np.add.at(out, scheme.entry_component_indices(), terms)
    return out


def entry_expectation(
    entry: SchemeEntry,
    mu_wx: float,
    m1_sq: float,
    m2_sq: float,
    m1m2: float,
    normalized: bool = True,
) -> float:
    """E of one Dbar term: K*mu_wx plus the local min-difference moments."""
    m_part = entry.l**2 * m1_sq + entry.k**2 * m2_sq - 2.0 * entry.k * entry.l * m1m2
    raw = entry.weight * mu_wx + m_part
    return raw / entry.weight if normalized else raw


def expected_dbar(
    scheme: DifferenceScheme,
    hyper: VarianceHyperprior,
    m_moments,
    normalized: bool = True,
) -> np.ndarray:
    """Closed-form E(Dbar) per component given simulated local min moments.

    ``m_moments`` supplies arrays m1_sq, m2_sq, m1m2 aligned with
    scheme.entries (a MomentEstimates works, as does any object with those
    attributes).
    """
    for name in ("m1_sq", "m2_sq", "m1m2"):
        arr = getattr(m_moments, name, None)
        if arr is None or len(arr) != len(scheme.entries):
            missing = scheme.entries[0] if scheme.entries else None
            raise ShapeError(
                f"m_moments.{name} missing or misaligned with scheme "
                f"(first entry: component {getattr(missing, 'component', '?')})"
            )
    out = np.zeros(len(scheme.components))
    idx = scheme.entry_component_indices()
    vals = np.array(
        [
            entry_expectation(e, hyper.mu_wx, m1, m2, m12, normalized)
            for e, m1, m2, m12 in zip(
                scheme.entries, m_moments.m1_sq, m_moments.m2_sq, m_moments.m1m2
            )
        ]
    )
    np.add.at(out, idx, vals)
    return out


@dataclass
class DbarStatistic:
    """Dbar with its closed-form expectation, cross-covariance, and
    simulation-estimated variance."""

    components: tuple
    values: np.ndarray
    expectation: np.ndarray
    cross_cov: np.ndarray
    variance: np.ndarray
    t_counts: dict


def build_dbar_statistic(
    dataset: InspectionDataset,
    scheme: DifferenceScheme,
    hyper: VarianceHyperprior,
    moments,
) -> DbarStatistic:
    """Assemble the adjustment inputs for the observed dataset.

    ``moments`` must provide m1_sq/m2_sq/m1m2 (entry-aligned) and dbar_var
    (the ensemble variance matrix of Dbar over scheme.components).
    """
    if not scheme.components:
        raise InsufficientDataError("no component has three or more observations")
    values = compute_dbar(dataset, scheme)
    expectation = expected_dbar(scheme, hyper, moments)
    cross = np.array([(scheme.t_counts[c] - 2) * hyper.gamma_wx for c in scheme.components])
    variance = np.asarray(moments.dbar_var, dtype=float)
    if variance.shape != (len(scheme.components),) * 2:
        raise ShapeError("dbar variance matrix does not match scheme components")
    return DbarStatistic(scheme.components, values, expectation, cross, variance, scheme.t_counts)


def adjust_wx(dbar: DbarStatistic, hyper: VarianceHyperprior, floor: float = VARIANCE_FLOOR):
    """Scalar adjusted expectation and variance of the population mean
    variance M(W_X) given Dbar."""
    prior = linalg.MomentPair([hyper.mu_wx], [[hyper.gamma_wx]])
    data_prior = linalg.MomentPair(dbar.expectation, dbar.variance)
    cross = dbar.cross_cov.reshape(1, -1)
    mean = float(linalg.adjusted_expectation(prior, data_prior, cross, dbar.values)[0])
    var = float(linalg.adjusted_variance(prior, data_prior, cross)[0, 0])
    if mean < floor:
        warnings.warn(
            f"adjusted variance expectation {mean:g} floored at {floor:g}", stacklevel=2
        )
        mean = floor
    if var < floor:
        warnings.warn(f"adjusted variance {var:g} floored at {floor:g}", stacklevel=2)
        var = floor
    return mean, var
