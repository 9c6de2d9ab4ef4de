"""Pullback experiments: absorption, contraction, the single-point attractor.

All experiments evaluate the state at a fixed time while sending the
start time backwards with one frozen noise realization per seed
(pullback convergence); the counter-keyed path generation guarantees
that growing the horizon never redraws old randomness.

Gating: ensemble pullback requires a gauge-monotonicity certificate (the
compact-absorption hypothesis); the contraction bound, the single-point
estimate and invariant-measure sampling additionally require the strong
monotonicity certificate, whose grid constant eta enters the explicit
decay bound

    ||S(t,s1)x - S(t,s2)y||_H^2
        <= { ||S(s2,s1)x - y||_H^(1-p) + eta lam1^((p+1)/2) (p-1) (t-s2) }
           ^(-2/(p-1))
        <= { eta lam1^((p+1)/2) (p-1) (t-s2) }^(-2/(p-1)).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .domain import Domain, SpectralField
from .integrator import SolverConfig, Trajectory, solve
from .nonlinearity import CertificationError, Hypothesis, Nonlinearity, certify, require
from .noise import NoiseOperator, WienerPath, qw

__all__ = [
    "PullbackReport",
    "ContractionCurve",
    "Eta0Result",
    "pullback_ensemble",
    "contraction_check",
    "estimate_eta0",
    "sample_invariant_measure",
    "absorption_radius",
    "random_low_mode_field",
]

#: squared-distance values below this floor are ignored by the slope fit
SLOPE_FLOOR = 1e-11


def random_low_mode_field(domain: Domain, rng, n_low: int = 4,
                          h_radius: float = 1.0) -> SpectralField:
    """Random field supported on the first n_low modes with given dual norm."""
    c = np.zeros(domain.n_modes)
    k = min(n_low, domain.n_modes)
    c[:k] = rng.standard_normal(k)
    f = SpectralField(domain, c)
    scale = f.h_norm()
    if scale == 0.0 or h_radius == 0.0:
        return domain.zero_field()
    return f * (h_radius / scale)


def _make_path(seed: int, Q: NoiseOperator, dt_grid: float,
               t_min: float, t_max: float) -> WienerPath:
    return WienerPath(seed=seed, m=Q.m, dt_grid=dt_grid,
                      t_min=min(t_min, 0.0), t_max=max(t_max, 0.0))


def _gauge_certified(nl: Nonlinearity) -> bool:
    return (
        certify(nl, Hypothesis.ZETA_MONOTONE).passed
        or certify(nl, Hypothesis.SMOOTH_POSITIVE_DERIV).passed
    )


def _strong_bound(eta: float, lam1: float, p: float, d0: Optional[float], tau):
    """The contraction bound on the squared dual-norm distance."""
    tau = np.asarray(tau, dtype=float)
    rate = eta * lam1 ** ((p + 1.0) / 2.0) * (p - 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        core = rate * tau
        if d0 is not None:
            core = core + (d0 ** (1.0 - p) if d0 > 0 else np.inf)
        out = np.where(core > 0, core ** (-2.0 / (p - 1.0)), np.inf)
    return out


# ---------------------------------------------------------------------------
# ensemble pullback


@dataclass
class PullbackReport:
    """Absorption radii, ensemble diameters and the contraction bound."""

    seed: int
    horizons: np.ndarray          # increasing pullback horizons T
    radii: np.ndarray             # max_x ||S(0,-T)x||_2
    diameters: np.ndarray         # max pairwise ||.||_H at time 0
    bound_curve: Optional[np.ndarray]  # data-free bound at each horizon
    eta: Optional[float]          # certified strong-monotonicity constant
    endpoint_coeffs: np.ndarray   # (n_ics, n_modes) states at the last horizon
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "horizons": self.horizons.tolist(),
            "radii": self.radii.tolist(),
            "diameters": self.diameters.tolist(),
            "bound_curve": None if self.bound_curve is None else self.bound_curve.tolist(),
            "eta": self.eta,
            "metadata": self.metadata,
        }


def pullback_ensemble(
    x_list,
    T_list,
    seed: int,
    cfg: SolverConfig,
    nl: Nonlinearity,
    Q: Optional[NoiseOperator],
    domain: Domain,
    noise_dt: Optional[float] = None,
) -> PullbackReport:
    """Run S(0, -T)x over the ensemble with one nested realization.

    Larger horizons reuse the same noise cells, so diameters are expected
    to shrink monotonically (up to solver tolerance) whenever the strong
    bound applies.
    """
    if not _gauge_certified(nl):
        raise CertificationError(
            f"{nl.name} carries no gauge-monotonicity certificate; "
            "compact absorption is not certified"
        )
    T_list = np.asarray(sorted(float(T) for T in T_list))
    if len(T_list) == 0 or T_list[0] < 0:
        raise ValueError("horizons must be nonnegative")
    path = None
    if Q is not None:
        path = _make_path(seed, Q, noise_dt or cfg.dt, -float(T_list[-1]), 0.0)
    x_fields = [x if isinstance(x, SpectralField) else domain.field(x) for x in x_list]

    radii = np.empty(len(T_list))
    diameters = np.empty(len(T_list))
    endpoints = None
    for i, T in enumerate(T_list):
        finals = []
        for x in x_fields:
            if T == 0.0:
                finals.append(x)
                continue
            traj = solve(x, -float(T), 0.0, cfg, nl, path, Q, domain=domain)
            finals.append(traj.s_field(-1))
        radii[i] = max(f.lp_norm(2) for f in finals)
        diameters[i] = max(
            ((fa - fb).h_norm() for fa in finals for fb in finals),
            default=0.0,
        )
        endpoints = np.stack([f.coeffs for f in finals])

    strong = certify(nl, Hypothesis.STRONG_MONOTONE)
    eta = strong.constants.get("eta") if strong.passed else None
    bound = None
    if eta is not None and nl.p > 1.0:
        bound = _strong_bound(eta, domain.poincare_lambda1(), nl.p, None, T_list)
    return PullbackReport(
        seed=seed,
        horizons=T_list,
        radii=radii,
        diameters=diameters,
        bound_curve=bound,
        eta=eta,
        endpoint_coeffs=endpoints,
        metadata={
            "n_ics": len(x_fields),
            "noise": Q.to_dict() if Q is not None else None,
            "path": path.metadata() if path is not None else None,
        },
    )


# ---------------------------------------------------------------------------
# contraction


@dataclass
class ContractionCurve:
    """Squared dual-norm distance along two runs vs. the explicit bound."""

    times: np.ndarray             # absolute times r in [s2, t]
    dist2: np.ndarray
    bound_data: np.ndarray        # bound seeded with the distance at s2
    bound_free: np.ndarray        # data-free bound
    eta: float
    violations: int               # dist2 > bound * (1 + slack) counts
    slack: float
    slope: float                  # log-log decay rate of dist2 vs (r - s2)

    def to_dict(self) -> dict:
        return {
            "eta": self.eta,
            "violations": self.violations,
            "slack": self.slack,
            "slope": self.slope,
            "times": self.times.tolist(),
            "dist2": self.dist2.tolist(),
            "bound_data": [float(b) for b in self.bound_data],
            "bound_free": [float(b) for b in self.bound_free],
        }


def _loglog_slope(tau: np.ndarray, d2: np.ndarray) -> float:
    """Decay rate fitted over the trailing decades, above the noise floor."""
    mask = (tau > 0) & (d2 > SLOPE_FLOOR)
    if mask.sum() >= 8:
        t_hi = tau[mask].max()
        mask &= tau >= t_hi / 100.0
    if mask.sum() < 2:
        return float("nan")
    coef = np.polyfit(np.log(tau[mask]), np.log(d2[mask]), 1)
    return float(coef[0])


def contraction_check(
    x,
    y,
    s1: float,
    s2: float,
    t: float,
    seed: int,
    cfg: SolverConfig,
    nl: Nonlinearity,
    Q: Optional[NoiseOperator],
    domain: Domain,
    slack: float = 0.05,
    noise_dt: Optional[float] = None,
) -> ContractionCurve:
    """Distance of two runs started at (s1, x) and (s2, y) vs. the bound.

    Requires the strong monotonicity certificate; the certified grid eta
    is the one entering both bound curves.
    """
    if not s1 <= s2 < t:
        raise ValueError(f"need s1 <= s2 < t, got {s1}, {s2}, {t}")
    if nl.p <= 1.0:
        raise CertificationError(
            f"contraction bound needs growth exponent p > 1, got p = {nl.p}"
        )
    strong = require(nl, Hypothesis.STRONG_MONOTONE)
    eta = strong.constants["eta"]

    path = None
    if Q is not None:
        path = _make_path(seed, Q, noise_dt or cfg.dt, s1, t)
    traj_x = solve(x, s1, t, cfg, nl, path, Q, domain=domain, store_fields=True)
    traj_y = solve(y, s2, t, cfg, nl, path, Q, domain=domain, store_fields=True)

    off = int(round((s2 - s1) / cfg.dt))
    times = traj_y.times
    diff = traj_x.fields[off:] - traj_y.fields
    lam = domain.eigenvalues
    dist2 = np.sum(diff * diff / lam, axis=1)

    lam1 = domain.poincare_lambda1()
    d0 = float(np.sqrt(dist2[0]))
    tau = times - s2
    bound_data = _strong_bound(eta, lam1, nl.p, d0, tau)
    bound_free = _strong_bound(eta, lam1, nl.p, None, tau)
    finite = np.isfinite(bound_free)
    violations = int(np.sum(dist2[finite] > bound_free[finite] * (1.0 + slack)))
    violations += int(np.sum(dist2 > bound_data * (1.0 + slack)))
    return ContractionCurve(
        times=times,
        dist2=dist2,
        bound_data=bound_data,
        bound_free=bound_free,
        eta=eta,
        violations=violations,
        slack=slack,
        slope=_loglog_slope(tau, dist2),
    )


# ---------------------------------------------------------------------------
# single-point attractor


@dataclass
class Eta0Result:
    """Pullback fixed-point estimate with its horizon-doubling history."""

    coeffs: np.ndarray            # estimate at the evaluation time
    per_ic_coeffs: np.ndarray     # (n_ics, n_modes) endpoints, final horizon
    table: list                   # rows {T, max_delta, diameter}
    converged: bool
    tol: float
    t_eval: float
    seed: int

    def field(self, domain: Domain) -> SpectralField:
        return SpectralField(domain, self.coeffs)

    @property
    def diameter(self) -> float:
        return self.table[-1]["diameter"] if self.table else 0.0

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "t_eval": self.t_eval,
            "tol": self.tol,
            "converged": self.converged,
            "table": self.table,
            "coeffs": self.coeffs.tolist(),
        }


def _default_ensemble(domain: Domain):
    return [domain.zero_field(), domain.basis(1), domain.basis(1, -1.0)]


def estimate_eta0(
    seed: int,
    cfg: SolverConfig,
    nl: Nonlinearity,
    Q: Optional[NoiseOperator],
    domain: Domain,
    tol: float = 1e-3,
    x_list=None,
    t_eval: float = 0.0,
    initial_horizon: float = 1.0,
    max_horizon: float = 4096.0,
    noise_dt: Optional[float] = None,
) -> Eta0Result:
    """Estimate the pullback limit at ``t_eval`` by horizon doubling.

    Doubles T until the endpoint moves less than ``tol`` in the dual norm
    for every ensemble initial condition; raises when the next horizon
    would exceed ``max_horizon`` (the generable noise window).
    """
    require(nl, Hypothesis.STRONG_MONOTONE)
    x_fields = (
        _default_ensemble(domain)
        if x_list is None
        else [x if isinstance(x, SpectralField) else domain.field(x) for x in x_list]
    )

    def endpoints(T: float) -> np.ndarray:
        path = None
        if Q is not None:
            path = _make_path(seed, Q, noise_dt or cfg.dt, t_eval - T, t_eval)
        out = np.empty((len(x_fields), domain.n_modes))
        for i, x in enumerate(x_fields):
            traj = solve(x, t_eval - T, t_eval, cfg, nl, path, Q, domain=domain)
            out[i] = traj.s_field(-1).coeffs
        return out

    lam = domain.eigenvalues
    T = float(initial_horizon)
    prev = endpoints(T)
    table = []
    converged = False
    while True:
        if 2.0 * T > max_horizon:
            raise RuntimeError(
                f"pullback horizon {2*T} exceeds the noise window {max_horizon} "
                f"before meeting tol {tol}"
            )
        T *= 2.0
        cur = endpoints(T)
        delta = np.sqrt(np.sum((cur - prev) ** 2 / lam, axis=1))
        diam = 0.0
        for i in range(len(cur)):
            for j in range(i + 1, len(cur)):
                diam = max(diam, float(np.sqrt(np.sum((cur[i] - cur[j]) ** 2 / lam))))
        table.append({"T": T, "max_delta": float(delta.max()), "diameter": diam})
        if delta.max() < tol:
            converged = True
            break
        prev = cur
    return Eta0Result(
        coeffs=cur[0].copy(),
        per_ic_coeffs=cur,
        table=table,
        converged=converged,
        tol=tol,
        t_eval=t_eval,
        seed=seed,
    )


def sample_invariant_measure(
    seeds,
    cfg: SolverConfig,
    nl: Nonlinearity,
    Q: Optional[NoiseOperator],
    domain: Domain,
    tol: float = 1e-3,
    functionals=("l2_norm", "h_norm", "coeff_1"),
    **eta0_kwargs,
) -> dict:
    """Monte-Carlo sample of the random fixed point across seeds.

    Each seed contributes one pullback estimate; per-seed convergence
    failures are reported, excluded and counted.  Returns a stats table
    with per-functional means and variances plus the per-seed values.
    """
    require(nl, Hypothesis.STRONG_MONOTONE)

    def evaluate(name: str, f: SpectralField) -> float:
        if name == "l2_norm":
            return f.lp_norm(2)
        if name == "h_norm":
            return f.h_norm()
        if name.startswith("coeff_"):
            k = int(name.split("_", 1)[1])
            return float(f.coeffs[k - 1])
        raise ValueError(f"unknown functional {name!r}")

    rows = []
    failures = []
    for seed in seeds:
        try:
            est = estimate_eta0(int(seed), cfg, nl, Q, domain, tol=tol, **eta0_kwargs)
        except RuntimeError as exc:
            failures.append({"seed": int(seed), "error": str(exc)})
            continue
        f = est.field(domain)
        rows.append({"seed": int(seed),
                     **{name: evaluate(name, f) for name in functionals}})
    stats = {}
    for name in functionals:
        vals = np.array([r[name] for r in rows]) if rows else np.array([])
        stats[name] = {
            "mean": float(vals.mean()) if len(vals) else float("nan"),
            "variance": float(vals.var()) if len(vals) else float("nan"),
            "n": len(vals),
        }
    return {
        "functionals": list(functionals),
        "stats": stats,
        "samples": rows,
        "failures": failures,
        "n_excluded": len(failures),
        "tol": tol,
    }


# ---------------------------------------------------------------------------
# absorption


def absorption_radius(
    rho_list,
    horizons,
    seeds,
    cfg: SolverConfig,
    nl: Nonlinearity,
    Q: Optional[NoiseOperator],
    domain: Domain,
    band: float = 0.1,
    noise_dt: Optional[float] = None,
) -> dict:
    """Entry horizons into a stabilized L2 ball, per (radius, seed).

    For each seed one low-mode direction is drawn and scaled to every
    requested dual-norm radius rho, so initial data are nested and entry
    horizons are comparable across rho.  The stabilized radius kappa is
    the endpoint norm at the largest horizon (the converged pullback
    value); the entry horizon is the first T from which the endpoint norm
    stays within (1 + band) * kappa.
    """
    horizons = sorted(float(T) for T in horizons)
    if not horizons or horizons[0] <= 0:
        raise ValueError("need positive, increasing horizons")
    rows = []
    curves = []
    for seed in seeds:
        rng = np.random.default_rng(int(seed))
        direction = random_low_mode_field(domain, rng, n_low=4, h_radius=1.0)
        path = None
        if Q is not None:
            path = _make_path(int(seed), Q, noise_dt or cfg.dt, -horizons[-1], 0.0)
        for rho in rho_list:
            x = direction * float(rho)
            radii = []
            for T in horizons:
                traj = solve(x, -T, 0.0, cfg, nl, path, Q, domain=domain)
                radii.append(traj.s_field(-1).lp_norm(2))
            radii = np.asarray(radii)
            kappa = float(radii[-1])
            inside = radii <= (1.0 + band) * kappa
            stays = np.logical_and.accumulate(inside[::-1])[::-1]
            entry_idx = int(np.argmax(stays)) if stays.any() else len(horizons) - 1
            rows.append({
                "rho": float(rho),
                "seed": int(seed),
                "entry_horizon": horizons[entry_idx],
                "kappa": kappa,
            })
            curves.append({
                "rho": float(rho),
                "seed": int(seed),
                "horizons": list(horizons),
                "radii": radii.tolist(),
            })
    return {"band": band, "rows": rows, "curves": curves}
