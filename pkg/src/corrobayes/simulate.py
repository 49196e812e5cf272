"""Forward simulation and Monte Carlo moment estimation.

Each realization draws fresh evolution covariance matrices from the variance
hyperprior (so uncertainty about the variances propagates into var(Y)), runs
the linear-growth model forward, evolves per-location local random walks, and
observes the minimum over locations with measurement error.  Moments are
accumulated streaming, so memory is O(design size squared) rather than
O(realizations).

Separability of the min: Y_{c,t} = X_{c,t} + M_{c,t} with
M_{c,t} = min_l(r_{l,c,t} + eps_y), which is how the local min-difference
moments needed by variance learning are extracted per realization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import varlearn
from .errors import ConfigError, InsufficientDataError, ShapeError
from .system import (
    InspectionDataset,
    PriorSpecification,
    SystemTopology,
    build_correlation,
    draw_variance_scales,
)

TARGET_KINDS = ("zmin", "x", "alpha")


def _as_seedseq(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def correlation_factor(pi: np.ndarray) -> np.ndarray:
    """A with A A' = Pi, valid for merely positive semi-definite Pi."""
    vals, vecs = np.linalg.eigh(pi)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def _noise(rng: np.random.Generator, shape, dist: str, dof: float) -> np.ndarray:
    if dist == "gaussian":
        return rng.standard_normal(shape)
    # unit-variance Student t
    return rng.standard_t(dof, shape) / math.sqrt(dof / (dof - 2.0))


@dataclass
class _PathArrays:
    """One realization's trajectories, rows indexed by t-1 for t=1..T."""

    x: np.ndarray       # (T, C) wall thickness
    alpha: np.ndarray   # (T, C) corrosion rate
    mr: np.ndarray      # (T, C) min over locations of local effects
    m: np.ndarray       # (T, C) min over locations of local effects + meas. error
    w_x: np.ndarray
    w_alpha: np.ndarray
    m_wx: float


def _simulate_paths(
    prior: PriorSpecification,
    factor: np.ndarray,
    horizon: int,
    rng: np.random.Generator,
    sigma_r: float,
    mu_wx: float,
    fixed_scales=None,
) -> _PathArrays:
    hyper = prior.hyper.with_mean(mu_wx)
    n = factor.shape[0]
    if fixed_scales is not None:
        w_x, m_wx, w_a = fixed_scales
    else:
        w_x, m_wx = draw_variance_scales(hyper, n, rng, prior.w_dist)
        w_a = hyper.lam * w_x

    t_len = horizon
    l_cnt = prior.locations_per_component
    dist, dof = prior.noise_dist, prior.t_dof

    eps_a = (_noise(rng, (t_len, n), dist, dof) @ factor.T) * np.sqrt(w_a)
    alpha = prior.alpha0 + np.cumsum(eps_a, axis=0)
    eps_x = (_noise(rng, (t_len, n), dist, dof) @ factor.T) * np.sqrt(w_x)
    x = prior.x0 + np.cumsum(alpha + eps_x, axis=0)

    r = np.cumsum(math.sqrt(sigma_r) * _noise(rng, (t_len, l_cnt, n), dist, dof), axis=0)
    noisy = r + math.sqrt(prior.sigma_y) * _noise(rng, (t_len, l_cnt, n), dist, dof)
    return _PathArrays(x, alpha, r.min(axis=1), noisy.min(axis=1), w_x, w_a, m_wx)


@dataclass
class EnsembleRealization:
    """Full trajectories of one realization (row t of each array is time t,
    row 0 the initial state)."""

    x: np.ndarray        # (T+1, C)
    alpha: np.ndarray    # (T+1, C)
    r: np.ndarray        # (T+1, L, C)
    zmin: np.ndarray     # (T+1, C)
    y: dict              # (component, t) -> observed minimum at designed points
    w_x: np.ndarray
    w_alpha: np.ndarray
    m_wx: float


def simulate_realization(
    prior: PriorSpecification,
    topology: SystemTopology,
    design: InspectionDataset,
    rng: np.random.Generator,
    sigma_r: float | None = None,
    mu_wx: float | None = None,
    fix_scales: bool = False,
) -> EnsembleRealization:
    """Run the model forward once, observing at the designed points.

    With ``fix_scales`` every component's evolution variance is held at
    ``mu_wx`` exactly (known-truth data generation) instead of being drawn
    from the hyperprior.
    """
    pi = build_correlation(topology, prior.corr)
    factor = correlation_factor(pi)
    sigma_r = prior.sigma_r if sigma_r is None else sigma_r
    mu_wx = prior.hyper.mu_wx if mu_wx is None else mu_wx
    t_len, n, l_cnt = design.horizon, topology.component_count, prior.locations_per_component

    hyper = prior.hyper.with_mean(mu_wx)
    if fix_scales:
        w_x, m_wx = np.full(n, mu_wx), mu_wx
    else:
        w_x, m_wx = draw_variance_scales(hyper, n, rng, prior.w_dist)
    w_a = hyper.lam * w_x

    dist, dof = prior.noise_dist, prior.t_dof
    eps_a = (_noise(rng, (t_len, n), dist, dof) @ factor.T) * np.sqrt(w_a)
    alpha = np.vstack([prior.alpha0, prior.alpha0 + np.cumsum(eps_a, axis=0)])
    eps_x = (_noise(rng, (t_len, n), dist, dof) @ factor.T) * np.sqrt(w_x)
    x = np.vstack([prior.x0, prior.x0 + np.cumsum(alpha[1:] + eps_x, axis=0)])

    r = np.zeros((t_len + 1, l_cnt, n))
    r[1:] = np.cumsum(math.sqrt(sigma_r) * _noise(rng, (t_len, l_cnt, n), dist, dof), axis=0)
    zmin = x + r.min(axis=1)

    eps_y = math.sqrt(prior.sigma_y) * _noise(rng, (t_len, l_cnt, n), dist, dof)
    noisy_min = (r[1:] + eps_y).min(axis=1)
    comp_idx = {c: i for i, c in enumerate(topology.components)}
    y = {
        (c, t): float(x[t, comp_idx[c]] + noisy_min[t - 1, comp_idx[c]])
        for (c, t) in design.design_points()
    }
    return EnsembleRealization(x, alpha, r, zmin, y, w_x, w_a, m_wx)


def draw_dataset(
    prior: PriorSpecification,
    topology: SystemTopology,
    design: InspectionDataset,
    seed: int,
    sigma_r: float | None = None,
    mu_wx: float | None = None,
    fix_scales: bool = False,
) -> InspectionDataset:
    """One synthetic inspection dataset drawn under the model."""
    rng = np.random.default_rng(_as_seedseq(seed))
    real = simulate_realization(prior, topology, design, rng, sigma_r, mu_wx, fix_scales)
    values = np.array([real.y[pt] for pt in design.design_points()])
    return design.with_values(values)


@dataclass
class MomentEstimates:
    """Ensemble moment estimates over the designed observation points.

    m1_sq / m2_sq / m1m2 are entry-aligned raw moments of the local
    min-differences used by variance learning; dbar_* describe the Dbar
    statistic across realizations; mw_* track the drawn population mean
    variance for oracle checks.
    """

    design_points: list
    e_y: np.ndarray
    var_y: np.ndarray
    targets: tuple
    e_targets: np.ndarray
    var_targets: np.ndarray
    cov_targets: np.ndarray      # (n_targets, n_obs)
    n_realizations: int
    seed: int
    sigma_r: float
    mu_wx: float
    scheme: object = None
    m1_sq: np.ndarray = None
    m2_sq: np.ndarray = None
    m1m2: np.ndarray = None
    dbar_mean: np.ndarray = None
    dbar_var: np.ndarray = None
    mw_mean: float = math.nan
    mw_var: float = math.nan
    mw_dbar_cov: np.ndarray = None
    target_samples: np.ndarray = None
    skipped_components: tuple = ()

    def y_moment_pair(self):
        from .linalg import MomentPair

        return MomentPair(self.e_y, self.var_y)


def _target_arrays(targets, topology, horizon):
    kinds, comps, times = [], [], []
    comp_idx = {c: i for i, c in enumerate(topology.components)}
    for kind, c, t in targets:
        if kind not in TARGET_KINDS:
            raise ConfigError(f"unknown target kind {kind!r}")
        if c not in comp_idx:
            raise ConfigError(f"unknown target component {c}")
        if not 1 <= t <= horizon:
            raise ConfigError(f"target time {t} outside 1..{horizon}")
        kinds.append(kind)
        comps.append(comp_idx[c])
        times.append(t)
    return kinds, np.array(comps, dtype=int), np.array(times, dtype=int)


def estimate_moments(
    prior: PriorSpecification,
    topology: SystemTopology,
    design: InspectionDataset,
    targets=(),
    n_realizations: int | None = None,
    seed: int | None = None,
    sigma_r: float | None = None,
    mu_wx: float | None = None,
    scheme=None,
    store_target_samples: bool = False,
    redraw_variances: bool = True,
    allow_empty_design: bool = False,
) -> MomentEstimates:
    """Sample moments over independent realizations; deterministic given seed.

    When a difference scheme is supplied, the Dbar statistic and the local
    min-difference moments of each scheme entry are accumulated alongside the
    observation moments.
    """
    n = prior.ensemble_size if n_realizations is None else int(n_realizations)
    if n < 2:
        raise ConfigError("need at least 2 realizations")
    seed = prior.rng_seed if seed is None else seed
    sigma_r = prior.sigma_r if sigma_r is None else float(sigma_r)
    mu_wx = prior.hyper.mu_wx if mu_wx is None else float(mu_wx)
    targets = tuple(targets)

    points = design.design_points()
    if not points and not allow_empty_design:
        raise InsufficientDataError("design contains no observation points")
    if prior.x0.shape[0] != topology.component_count:
        raise ShapeError("x0 length does not match component count")

    comp_idx = {c: i for i, c in enumerate(topology.components)}
    obs_c = np.array([comp_idx[c] for c, _ in points], dtype=int)
    obs_t = np.array([t for _, t in points], dtype=int)
    if points and (obs_t.min() < 1 or obs_t.max() > design.horizon):
        raise ConfigError("design times outside horizon")

    kinds, tgt_c, tgt_t = _target_arrays(targets, topology, design.horizon)

    pi = build_correlation(topology, prior.corr)
    factor = correlation_factor(pi)

    n_obs, n_tgt = len(points), len(targets)
    base_y = prior.x0[obs_c] + prior.alpha0[obs_c] * obs_t
    base_t = np.where(
        np.array([k == "alpha" for k in kinds]),
        prior.alpha0[tgt_c] if n_tgt else 0.0,
        (prior.x0[tgt_c] + prior.alpha0[tgt_c] * tgt_t) if n_tgt else 0.0,
    ) if n_tgt else np.zeros(0)

    s_y = np.zeros(n_obs)
    s_yy = np.zeros((n_obs, n_obs))
    s_t = np.zeros(n_tgt)
    s_tt = np.zeros(n_tgt)
    s_ty = np.zeros((n_tgt, n_obs))
    samples = np.empty((n, n_tgt)) if store_target_samples else None

    if scheme is not None:
        entries = scheme.entries
        ent_c = np.array([comp_idx[e.component] for e in entries], dtype=int)
        ent_t0 = np.array([e.t0 for e in entries], dtype=int)
        ent_t1 = np.array([e.t1 for e in entries], dtype=int)
        ent_t2 = np.array([e.t2 for e in entries], dtype=int)
        ent_k = np.array([e.k for e in entries], dtype=float)
        ent_l = np.array([e.l for e in entries], dtype=float)
        ent_w = np.array([e.weight for e in entries], dtype=float)
        pos = {pt: j for j, pt in enumerate(points)}
        pos0 = np.array([pos[(e.component, e.t0)] for e in entries], dtype=int)
        pos1 = np.array([pos[(e.component, e.t1)] for e in entries], dtype=int)
        pos2 = np.array([pos[(e.component, e.t2)] for e in entries], dtype=int)
        seg = scheme.entry_component_indices()
        n_comp_eff = len(scheme.components)
        n_ent = len(entries)
        sc_idx = np.array([comp_idx[c] for c in scheme.components], dtype=int)
        tc_eff = np.zeros(n_comp_eff)
        np.add.at(tc_eff, seg, 1.0)
        s_m1sq = np.zeros(n_ent)
        s_m2sq = np.zeros(n_ent)
        s_m1m2 = np.zeros(n_ent)
        s_d = np.zeros(n_comp_eff)
        s_r = np.zeros(n_comp_eff)
        s_rr = np.zeros((n_comp_eff, n_comp_eff))
        s_mw = 0.0
        s_mwsq = 0.0
        s_mwd = np.zeros(n_comp_eff)

    streams = _as_seedseq(seed).spawn(n + 1)
    fixed_scales = None
    if not redraw_variances:
        rng0 = np.random.default_rng(streams[n])
        hyper = prior.hyper.with_mean(mu_wx)
        w_x, m_wx = draw_variance_scales(hyper, topology.component_count, rng0, prior.w_dist)
        fixed_scales = (w_x, m_wx, hyper.lam * w_x)

    for i in range(n):
        rng = np.random.default_rng(streams[i])
        paths = _simulate_paths(prior, factor, design.horizon, rng, sigma_r, mu_wx, fixed_scales)
        y = paths.x[obs_t - 1, obs_c] + paths.m[obs_t - 1, obs_c]
        yc = y - base_y
        s_y += yc
        s_yy += np.outer(yc, yc)

        if n_tgt:
            tv = np.empty(n_tgt)
            for j, kind in enumerate(kinds):
                row, col = tgt_t[j] - 1, tgt_c[j]
                if kind == "zmin":
                    tv[j] = paths.x[row, col] + paths.mr[row, col]
                elif kind == "x":
                    tv[j] = paths.x[row, col]
                else:
                    tv[j] = paths.alpha[row, col]
            if samples is not None:
                samples[i] = tv
            tc = tv - base_t
            s_t += tc
            s_tt += tc * tc
            s_ty += np.outer(tc, yc)

        if scheme is not None and n_ent:
            m1 = paths.m[ent_t0 - 1, ent_c] - paths.m[ent_t1 - 1, ent_c]
            m2 = paths.m[ent_t0 - 1, ent_c] - paths.m[ent_t2 - 1, ent_c]
            s_m1sq += m1 * m1
            s_m2sq += m2 * m2
            s_m1m2 += m1 * m2
            comb = ent_k * (y[pos0] - y[pos2]) - ent_l * (y[pos0] - y[pos1])
            terms = comb * comb / ent_w
            dvec = np.zeros(n_comp_eff)
            np.add.at(dvec, seg, terms)
            s_d += dvec
            # conditional residual: the drawn-variance contribution has known
            # conditional mean (T_c - 2) * W_c, so only the remainder's
            # covariance needs Monte Carlo (law of total variance).
            res = dvec - tc_eff * paths.w_x[sc_idx]
            s_r += res
            s_rr += np.outer(res, res)
            s_mw += paths.m_wx
            s_mwsq += paths.m_wx**2
            s_mwd += paths.m_wx * dvec

    def _cov(sxy, sx, sy_):
        c = (sxy - np.outer(sx, sy_) / n) / (n - 1)
        return c

    e_y = s_y / n + base_y
    var_y = _cov(s_yy, s_y, s_y)
    var_y = 0.5 * (var_y + var_y.T)

    e_t = s_t / n + base_t if n_tgt else np.zeros(0)
    var_t = np.clip((s_tt - s_t**2 / n) / (n - 1), 0.0, None) if n_tgt else np.zeros(0)
    cov_ty = _cov(s_ty, s_t, s_y) if n_tgt else np.zeros((0, n_obs))

    est = MomentEstimates(
        design_points=points,
        e_y=e_y,
        var_y=var_y,
        targets=targets,
        e_targets=e_t,
        var_targets=var_t,
        cov_targets=cov_ty,
        n_realizations=n,
        seed=seed,
        sigma_r=sigma_r,
        mu_wx=mu_wx,
        target_samples=samples,
    )
    if scheme is not None:
        est.scheme = scheme
        est.skipped_components = scheme.skipped
        est.m1_sq = s_m1sq / n
        est.m2_sq = s_m2sq / n
        est.m1m2 = s_m1m2 / n
        if n_ent:
            est.dbar_mean = s_d / n
            res_cov = _cov(s_rr, s_r, s_r)
            if fixed_scales is None:
                gam, sig = prior.hyper.gamma_wx, prior.hyper.sigma_wx
                drawn = gam * np.outer(tc_eff, tc_eff) + np.diag(tc_eff**2 * (sig - gam))
            else:
                drawn = 0.0
            dv = drawn + res_cov
            est.dbar_var = 0.5 * (dv + dv.T)
            est.mw_mean = s_mw / n
            est.mw_var = (s_mwsq - s_mw**2 / n) / (n - 1)
            est.mw_dbar_cov = (s_mwd - s_mw * s_d / n) / (n - 1)
    return est


def forecast_extend(design: InspectionDataset, extra_months: int) -> InspectionDataset:
    """Same records, horizon extended so forecast targets beyond T are valid."""
    return design.extended(extra_months)
