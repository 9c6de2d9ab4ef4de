"""Pathwise energy-inequality harness.

Checks three families of integral inequalities along computed
trajectories, with all constants derived up front from the certified
nonlinearity data (never fitted to the trajectory):

* ``check_h_energy``       -- dissipation of the dual norm:
      ||Z(t2)||_H^2 <= ||Z(t1)||_H^2 - beta int ||Z||_2^2 + int p1(r) dr,
* ``check_l2_energy``      -- dissipation of the L2 norm (two routes:
      Laplacian forcing for twice-differentiable noise profiles, a
      gradient-forcing chain otherwise),
* ``check_gradient_energy`` -- the gradient-flux budget:
      ||Z(t2)||_2^2 + c int ||grad Phi(S)||_q^q <= ||Z(t1)||_2^2
          + C int (||grad QW||_(p+1)^(p+1) + 1) dr,  q = (p+1)/p.

Before any inequality, the harness validates the exact dissipation
identity d/dr ||Z||_H^2 = -2 <Z, Phi(S)> to O(dt); its measured per-unit-
time defect feeds the discretization allowance of every check, which
isolates discretization error from constant-derivation error.

Time integrals use the solver grid with the left-endpoint rule; the pass
condition for a pair t1 <= t2 is

    LHS <= RHS + slack * |RHS| + 2 * defect_rate * (t2 - t1).

Constant conventions (w is the forcing field QW_r, |D| the interval
length, lam1 the Poincare constant, all Young constants from
x y <= eps x^q' + C_eps(q) y^q with C_eps = (eps q')^(-q/q') / q):

* polynomial split  |Phi(s)|^((p+1)/p) <= C1s |s|^(p+1) + C2s with
  C1s = 2^(1/p) c1^((p+1)/p), C2s = 2^(1/p) c2^((p+1)/p);
* the Young split keeps half of the coercivity term alive
  (eps = a / (2 C1s) rather than a / C1s, so a surviving
  -a ||S||_(p+1)^(p+1) feeds the quadratic lower bound);
* quadratic lower bound: for p > 1 and any rate b > 0,
  coef |y|^(p+1) >= 2 b |y|^2 - C_b with the calculus minimizer
  C_b = 2 b y*^2 - coef y*^(p+1), y* = (4b / (coef (p+1)))^(1/(p-1));
  for p = 1 it requires 2 b <= coef and C_b = 0;
* decay comparison (``check_decay_bound``): the L2->dual embedding
  constant is lam1^(-1/2), giving the rate beta * lam1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .domain import Domain, SpectralField
from .nonlinearity import (
    CertificationError,
    Hypothesis,
    Nonlinearity,
    PowerLaw,
    certify,
)
from .integrator import Trajectory
from .noise import NoiseOperator, WienerPath, laplacian_growth_guard, qw

__all__ = [
    "EstimateConfig",
    "CheckReport",
    "derive_constants",
    "h_forcing",
    "l2_forcing",
    "gradient_forcing",
    "check_h_energy",
    "check_l2_energy",
    "check_gradient_energy",
    "check_decay_bound",
]

#: pair-check grids larger than this are subsampled (integrals stay exact)
_MAX_CHECK_POINTS = 801


def _young_constant(eps: float, q: float) -> float:
    """C with x y <= eps x^(q') + C y^q, 1/q + 1/q' = 1."""
    qp = q / (q - 1.0)
    return (eps * qp) ** (-q / qp) / q


def _quadratic_lower_constant(coef: float, rate: float, p: float) -> float:
    """C with coef |y|^(p+1) >= 2 rate |y|^2 - C for all y."""
    if rate <= 0:
        return 0.0
    if p == 1.0:
        if 2.0 * rate > coef * (1.0 + 1e-12):
            raise ValueError(
                f"rate {rate} too large for p = 1 (needs 2*rate <= {coef})"
            )
        return 0.0
    y_star = (4.0 * rate / (coef * (p + 1.0))) ** (1.0 / (p - 1.0))
    return max(0.0, 2.0 * rate * y_star**2 - coef * y_star ** (p + 1.0))


@dataclass(frozen=True)
class EstimateConfig:
    """Derived constants for one (nonlinearity, domain, beta, alpha) triple.

    beta is the dual-norm dissipation rate (beta <= a/2 required when
    p = 1), alpha the L2 dissipation rate, slack the relative tolerance of
    every inequality check.
    """

    nl: Nonlinearity
    domain: Domain
    beta: float
    alpha: float
    slack: float
    # coercivity / growth data for Phi
    a: float
    c: float
    c1: float
    c2: float
    # gauge data: zeta-coercivity and the derivative growth constant
    zeta_a: float
    zeta_c: float
    c_tilde1: Optional[float]
    constants: dict = field(default_factory=dict)

    @property
    def p(self) -> float:
        return self.nl.p

    @property
    def volume(self) -> float:
        return self.domain.length

    @property
    def lam1(self) -> float:
        return self.domain.poincare_lambda1()


def derive_constants(
    nl: Nonlinearity,
    domain: Domain,
    beta: float = 0.25,
    alpha: float = 0.25,
    slack: float = 0.05,
    search_box: float = 10.0,
    grid_step: float = 1e-3,
) -> EstimateConfig:
    """Assemble every constant the three checks need.

    The power law ships closed-form constants (a = 1, c = 0, c1 = 1,
    c2 = 0, zeta_a = 4p/(p+1)^2, c_tilde1 = p); other catalog entries pull
    theirs from grid certificates, so the result is a reproducible
    function of (nl, domain, rates) alone.
    """
    if beta <= 0 or alpha <= 0:
        raise ValueError("rates beta, alpha must be positive")
    if isinstance(nl, PowerLaw):
        p = nl.p
        a, c, c1, c2 = 1.0, 0.0, 1.0, 0.0
        zeta_a, zeta_c = 4.0 * p / (p + 1.0) ** 2, 0.0
        c_tilde1 = p
    else:
        basic = certify(nl, Hypothesis.BASIC_MONOTONE, search_box, grid_step)
        if not basic.passed:
            raise CertificationError(
                f"{nl.name} fails basic monotonicity/coercivity certification"
            )
        a, c = basic.constants["a"], basic.constants["c"]
        c1, c2 = basic.constants["c1"], basic.constants["c2"]
        smooth = certify(nl, Hypothesis.SMOOTH_POSITIVE_DERIV, search_box, grid_step)
        if smooth.passed:
            zeta_a, zeta_c = smooth.constants["a"], smooth.constants["c"]
            c_tilde1 = smooth.constants["c_tilde1"]
        else:
            gauge = certify(nl, Hypothesis.ZETA_MONOTONE, search_box, grid_step)
            if not gauge.passed:
                raise CertificationError(
                    f"{nl.name} fails both gauge certifications; the L2 and "
                    "gradient checks have no derivable constants"
                )
            zeta_a, zeta_c = gauge.constants["a"], gauge.constants["c"]
            c_tilde1 = None
    p = nl.p
    if p == 1.0 and beta > a / 2.0 + 1e-12:
        raise ValueError(f"beta = {beta} violates beta <= a/2 = {a / 2} for p = 1")

    c1s = 2.0 ** (1.0 / p) * c1 ** ((p + 1.0) / p)
    c2s = 2.0 ** (1.0 / p) * c2 ** ((p + 1.0) / p)
    eps_h = a / (2.0 * c1s)
    record = {
        "C1s": c1s,
        "C2s": c2s,
        "eps_h": eps_h,
        "C_eps_h": _young_constant(eps_h, p + 1.0),
        "C3": eps_h * c2s,
        "C_beta": _quadratic_lower_constant(a, beta, p),
    }
    # strong-norm route, Laplacian forcing
    eps_2 = zeta_a * domain.poincare_lambda1() / (2.0 * c1s)
    record["eps_2"] = eps_2
    record["C_eps_2"] = _young_constant(eps_2, p + 1.0)
    record["C_alpha_smooth"] = _quadratic_lower_constant(
        zeta_a * domain.poincare_lambda1(), alpha, p
    )
    # gradient chain (needs the derivative growth constant)
    if c_tilde1 is not None:
        lam1 = domain.poincare_lambda1()
        if p > 1.0:
            gamma = (p + 1.0) / (p - 1.0)
            cz = c_tilde1**gamma * 2.0 ** (gamma - 1.0)
            cl1 = 1.0 + (cz / zeta_a) / lam1
            cl2 = cz * (zeta_c / zeta_a + 1.0) * domain.length
        else:
            cl1 = 2.0 * c_tilde1
            cl2 = 0.0
        eps_g = 1.0 / (2.0 * cl1)
        record["CL1"] = cl1
        record["CL2"] = cl2
        record["eps_g"] = eps_g
        record["C_eps_g"] = _young_constant(eps_g, p + 1.0)
        record["C_alpha_grad"] = _quadratic_lower_constant(lam1 * zeta_a, alpha, p)
        record["c_flux"] = 1.0 / cl1
        record["C_flux"] = max(2.0 * record["C_eps_g"], 2.0 * cl2 / cl1)
    return EstimateConfig(
        nl=nl,
        domain=domain,
        beta=beta,
        alpha=alpha,
        slack=slack,
        a=a,
        c=c,
        c1=c1,
        c2=c2,
        zeta_a=zeta_a,
        zeta_c=zeta_c,
        c_tilde1=c_tilde1,
        constants=record,
    )


# ---------------------------------------------------------------------------
# forcing functions


def _noise_tables(cfg: EstimateConfig, path, Q, times, need=("l2", "lp1")):
    """Per-time forcing norms; zeros when the run is noise-free."""
    n = len(times)
    out = {k: np.zeros(n) for k in need}
    if path is None or Q is None:
        return out
    p1 = cfg.p + 1.0
    for i, t in enumerate(times):
        f = qw(path, Q, float(t))
        if "l2" in need:
            out["l2"][i] = f.lp_norm(2) ** 2
        if "lp1" in need:
            out["lp1"][i] = f.lp_norm(p1) ** p1
        if "lap_lp1" in need:
            out["lap_lp1"][i] = f.laplacian().lp_norm(p1) ** p1
        if "grad_lp1" in need:
            out["grad_lp1"][i] = f.grad_lp_norm(p1) ** p1
    return out


def h_forcing(cfg: EstimateConfig, path, Q, r) -> float:
    """Forcing p1(r) of the dual-norm inequality at time r."""
    t = _noise_tables(cfg, path, Q, np.atleast_1d(np.asarray(r, dtype=float)))
    vals = (
        2.0 * cfg.beta * t["l2"]
        + cfg.volume * cfg.constants["C_beta"]
        + 2.0 * cfg.constants["C_eps_h"] * t["lp1"]
        + 2.0 * cfg.volume * (cfg.c + cfg.constants["C3"])
    )
    return float(vals[0]) if np.isscalar(r) or np.ndim(r) == 0 else vals


def l2_forcing(cfg: EstimateConfig, path, Q, r, route: str = "smooth"):
    """Forcing p2(r) of the L2 inequality; route 'smooth' or 'gradient'."""
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    if route == "smooth":
        t = _noise_tables(cfg, path, Q, r_arr, need=("l2", "lap_lp1"))
        vals = (
            2.0 * cfg.alpha * t["l2"]
            + cfg.volume * cfg.constants["C_alpha_smooth"]
            + 2.0 * cfg.lam1 * cfg.zeta_c * cfg.volume
            + 2.0 * cfg.constants["eps_2"] * cfg.constants["C2s"] * cfg.volume
            + 2.0 * cfg.constants["C_eps_2"] * t["lap_lp1"]
        )
    elif route == "gradient":
        if cfg.c_tilde1 is None:
            raise CertificationError(
                "gradient route needs the derivative growth certificate"
            )
        t = _noise_tables(cfg, path, Q, r_arr, need=("l2", "grad_lp1"))
        vals = (
            2.0 * cfg.alpha * t["l2"]
            + cfg.volume * cfg.constants["C_alpha_grad"]
            + cfg.lam1 * cfg.zeta_c * cfg.volume
            + cfg.constants["CL2"] / cfg.constants["CL1"]
            + 2.0 * cfg.constants["C_eps_g"] * t["grad_lp1"]
        )
    else:
        raise ValueError(f"unknown route {route!r}")
    return float(vals[0]) if np.isscalar(r) or np.ndim(r) == 0 else vals


def gradient_forcing(cfg: EstimateConfig, path, Q, r):
    """Forcing C (||grad QW_r||_(p+1)^(p+1) + 1) of the flux inequality."""
    if "C_flux" not in cfg.constants:
        raise CertificationError("flux check needs the derivative growth certificate")
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    t = _noise_tables(cfg, path, Q, r_arr, need=("grad_lp1",))
    vals = cfg.constants["C_flux"] * (t["grad_lp1"] + 1.0)
    return float(vals[0]) if np.isscalar(r) or np.ndim(r) == 0 else vals


# ---------------------------------------------------------------------------
# inequality checks


@dataclass
class CheckReport:
    """Outcome of one inequality check over all grid time pairs."""

    name: str
    passed: bool
    worst_margin: float
    violation_count: int
    n_pairs: int
    slack: float
    defect_rate: float
    constants: dict
    params: dict

    def to_dict(self) -> dict:
        return {
            "inequality": self.name,
            "passed": self.passed,
            "worst_margin": self.worst_margin,
            "violation_count": self.violation_count,
            "n_pairs": self.n_pairs,
            "slack": self.slack,
            "defect_rate": self.defect_rate,
            "constants": {k: v for k, v in sorted(self.constants.items())},
            "params": self.params,
        }


def _check_indices(n: int) -> np.ndarray:
    if n <= _MAX_CHECK_POINTS:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, _MAX_CHECK_POINTS).round().astype(int))


def _pair_scan(times, lhs, base, decay_prefix, force_prefix, slack, allow_rate, idx):
    """Worst margin of lhs[j] <= rhs(i,j) + slack|rhs| + allow*(tj-ti) over i<=j.

    rhs(i,j) = base[i] - (decay_prefix[j]-decay_prefix[i])
               + (force_prefix[j]-force_prefix[i]);
    prefix sums are exact over the full grid, only the pairs are
    subsampled for long trajectories.
    """
    ti = times[idx]
    li = lhs[idx]
    bi = base[idx]
    di = decay_prefix[idx]
    fi = force_prefix[idx]
    rhs = bi[:, None] - (di[None, :] - di[:, None]) + (fi[None, :] - fi[:, None])
    margin = li[None, :] - rhs - slack * np.abs(rhs) \
        - allow_rate * (ti[None, :] - ti[:, None])
    upper = ti[None, :] >= ti[:, None] - 1e-15
    margin = np.where(upper, margin, -np.inf)
    worst = float(np.max(margin))
    violations = int(np.sum(margin > 0.0))
    return worst, violations, int(upper.sum())


def _left_prefix(values: np.ndarray, dt: float) -> np.ndarray:
    """Left-endpoint cumulative integral aligned with the time grid."""
    out = np.zeros(len(values))
    out[1:] = np.cumsum(values[:-1]) * dt
    return out


def check_h_energy(traj: Trajectory, cfg: EstimateConfig) -> CheckReport:
    """Dual-norm dissipation inequality over all stored time pairs."""
    times = traj.times
    dt = traj.dt
    a2 = traj.diagnostics["h_norm"] ** 2
    z2 = traj.diagnostics["l2_norm"] ** 2
    p1 = h_forcing(cfg, traj.path, traj.Q, times)
    defect = traj.residual_rate()
    idx = _check_indices(len(times))
    worst, bad, n_pairs = _pair_scan(
        times, a2, a2, _left_prefix(cfg.beta * z2, dt), _left_prefix(p1, dt),
        cfg.slack, 2.0 * defect, idx,
    )
    return CheckReport(
        name="h_energy",
        passed=bad == 0,
        worst_margin=worst,
        violation_count=bad,
        n_pairs=n_pairs,
        slack=cfg.slack,
        defect_rate=defect,
        constants=dict(cfg.constants),
        params={"beta": cfg.beta, "dt": dt, "n_modes": traj.domain.n_modes},
    )


def check_l2_energy(traj: Trajectory, cfg: EstimateConfig,
                    route: Optional[str] = None) -> CheckReport:
    """L2 dissipation inequality; route picked from the noise class."""
    if route is None:
        if traj.Q is None or traj.Q.smoothness_class == "C2_0":
            route = "smooth"
        else:
            route = "gradient"
    if route == "smooth" and traj.Q is not None:
        laplacian_growth_guard(traj.Q)
    times = traj.times
    dt = traj.dt
    z2 = traj.diagnostics["l2_norm"] ** 2
    p2 = l2_forcing(cfg, traj.path, traj.Q, times, route=route)
    defect = traj.residual_rate()
    idx = _check_indices(len(times))
    worst, bad, n_pairs = _pair_scan(
        times, z2, z2, _left_prefix(cfg.alpha * z2, dt), _left_prefix(p2, dt),
        cfg.slack, 2.0 * defect, idx,
    )
    return CheckReport(
        name=f"l2_energy_{route}",
        passed=bad == 0,
        worst_margin=worst,
        violation_count=bad,
        n_pairs=n_pairs,
        slack=cfg.slack,
        defect_rate=defect,
        constants=dict(cfg.constants),
        params={"alpha": cfg.alpha, "dt": dt, "n_modes": traj.domain.n_modes},
    )


def _grad_phi_flux(traj: Trajectory, cfg: EstimateConfig) -> np.ndarray:
    """||grad Phi(S_r)||_q^q, q = (p+1)/p, at every stored grid time."""
    if traj.fields is None:
        raise ValueError("gradient check needs a trajectory with stored fields")
    q = (cfg.p + 1.0) / cfg.p
    domain = traj.domain
    out = np.empty(len(traj.times))
    for i, t in enumerate(traj.times):
        s = traj.s_field(i)
        phi_vals = cfg.nl.phi(s.to_collocation())
        phi_field = domain.from_collocation(phi_vals)
        out[i] = phi_field.grad_lp_norm(q) ** q
    return out


def check_gradient_energy(traj: Trajectory, cfg: EstimateConfig) -> CheckReport:
    """Gradient-flux budget over all stored time pairs."""
    if cfg.c_tilde1 is None:
        raise CertificationError(
            "gradient check needs the derivative growth certificate"
        )
    times = traj.times
    dt = traj.dt
    z2 = traj.diagnostics["l2_norm"] ** 2
    flux = _grad_phi_flux(traj, cfg)
    force = gradient_forcing(cfg, traj.path, traj.Q, times)
    defect = traj.residual_rate()
    idx = _check_indices(len(times))
    # lhs(j) - lhs-flux(i): fold the flux integral into the decay prefix
    c_flux = cfg.constants["c_flux"]
    worst, bad, n_pairs = _pair_scan(
        times, z2, z2, _left_prefix(c_flux * flux, dt), _left_prefix(force, dt),
        cfg.slack, 2.0 * defect, idx,
    )
    return CheckReport(
        name="gradient_energy",
        passed=bad == 0,
        worst_margin=worst,
        violation_count=bad,
        n_pairs=n_pairs,
        slack=cfg.slack,
        defect_rate=defect,
        constants=dict(cfg.constants),
        params={"dt": dt, "n_modes": traj.domain.n_modes},
    )


def check_decay_bound(traj: Trajectory, cfg: EstimateConfig) -> CheckReport:
    """Exponential comparison ||Z_t||_H^2 <= e^(-beta lam1 (t-s)) ||Z_s||_H^2
    + int_s^t e^(-beta lam1 (t-r)) p1(r) dr, checked against the start time.
    """
    times = traj.times
    dt = traj.dt
    rate = cfg.beta * cfg.lam1
    a2 = traj.diagnostics["h_norm"] ** 2
    p1 = h_forcing(cfg, traj.path, traj.Q, times)
    defect = traj.residual_rate()
    # integrating factor, left-endpoint rule
    tau = times - times[0]
    weights = np.exp(rate * tau)
    conv = np.zeros(len(times))
    conv[1:] = np.cumsum(p1[:-1] * weights[:-1]) * dt
    rhs = np.exp(-rate * tau) * (a2[0] + conv)
    margin = a2 - rhs - cfg.slack * np.abs(rhs) - 2.0 * defect * tau
    worst = float(np.max(margin))
    bad = int(np.sum(margin > 0.0))
    return CheckReport(
        name="decay_bound",
        passed=bad == 0,
        worst_margin=worst,
        violation_count=bad,
        n_pairs=len(times),
        slack=cfg.slack,
        defect_rate=defect,
        constants=dict(cfg.constants),
        params={"beta": cfg.beta, "rate": rate, "dt": dt},
    )
