"""Catalog of diffusion nonlinearities and numerical hypothesis certifiers.

Every catalog entry is an odd-symmetric-ish continuous function Phi with
Phi(0) = 0 together with growth metadata (the exponent p).  The certifiers
scan a finite box [-R, R] (pairs or single points, step h) and report
whether a structural hypothesis holds *on the scanned grid*, together with
the best constants the grid supports:

* ``BASIC_MONOTONE``        -- monotonicity (Phi(t)-Phi(s))(t-s) >= 0,
                               coercivity Phi(s)s >= a|s|^(p+1) - c and
                               polynomial bound |Phi(s)| <= c1|s|^p + c2;
* ``ZETA_MONOTONE``         -- (Phi(t)-Phi(s))(t-s) >= (zeta(t)-zeta(s))^2
                               for the gauge zeta(s) = int_0^s sqrt(Phi'),
                               plus coercivity of zeta^2;
* ``SMOOTH_POSITIVE_DERIV`` -- Phi in C1 with Phi' > 0 off a numerically
                               null set, derivative growth
                               Phi'(s) <= c_tilde1 (|s|^(p-1) + 1), and
                               coercivity of the gauge;
* ``STRONG_MONOTONE``       -- (s-t)(Phi(s)-Phi(t)) >= eta |s-t|^(p+1)
                               with eta > 0 (requires p > 1);
* ``STRONG_MONOTONE_DERIV`` -- ((p+1)^2/4) eta |s|^(p-1) <= Phi'(s)
                               <= kappa (1 + |s|^(p-1)).

Certification is grid-sound, not proof-sound: the reported constants are
guaranteed only at scanned points, with CERT_TOL slack on each inequality.
A failed scan is a valid Certificate carrying a witness point or pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad
from scipy.special import expi

__all__ = [
    "Nonlinearity",
    "PowerLaw",
    "DeadZoneCubic",
    "MollifiedExp",
    "Custom",
    "Hypothesis",
    "Certificate",
    "CertificationError",
    "certify",
]

#: Slack allowed on every certified inequality (absolute).
CERT_TOL = 1e-9

#: Absolute tolerance for the adaptive quadrature behind the gauge zeta.
ZETA_QUAD_TOL = 1e-10

#: A run of grid points with Phi' = 0 is treated as a genuine flat piece
#: (not an isolated zero) once its measure exceeds this value.
NULL_SET_MEASURE = 1e-2

DEFAULT_SEARCH_BOX = 10.0
DEFAULT_GRID_STEP = 1e-3

_ROW_BLOCK = 64  # row chunk for the pairwise scans


class CertificationError(RuntimeError):
    """Raised when an operation requires a certificate that failed."""


class Hypothesis(Enum):
    BASIC_MONOTONE = "basic_monotone"
    ZETA_MONOTONE = "zeta_monotone"
    SMOOTH_POSITIVE_DERIV = "smooth_positive_deriv"
    STRONG_MONOTONE = "strong_monotone"
    STRONG_MONOTONE_DERIV = "strong_monotone_deriv"


# ---------------------------------------------------------------------------
# catalog


@dataclass(frozen=True)
class Nonlinearity:
    """Base class; concrete entries implement phi / phi_prime pointwise."""

    @property
    def p(self) -> float:
        raise NotImplementedError

    @property
    def name(self) -> str:
        return type(self).__name__

    @property
    def is_c1(self) -> bool:
        """Whether Phi is continuously differentiable on all of R."""
        return False

    @property
    def kinks(self) -> tuple:
        """Breakpoints where sqrt(Phi') loses smoothness."""
        return ()

    def phi(self, s):
        raise NotImplementedError

    def phi_prime(self, s):
        """A.e. derivative.

        At isolated non-differentiable points the value is the one-sided
        (right) limit; this is the a.e. convention used throughout.
        """
        raise NotImplementedError

    def zeta(self, s: float) -> float:
        """Gauge zeta(s) = int_0^s sqrt(Phi'(r)) dr, by adaptive quadrature."""
        if s == 0.0:
            return 0.0
        pts = [k for k in self.kinks if min(0.0, s) < k < max(0.0, s)]
        val, _ = quad(
            lambda r: math.sqrt(max(self.phi_prime(r), 0.0)),
            0.0,
            s,
            points=pts or None,
            epsabs=ZETA_QUAD_TOL,
            limit=200,
        )
        return val

    def zeta_grid(self, grid: np.ndarray) -> np.ndarray:
        """zeta on a sorted grid via cumulative Gauss-Legendre panels.

        Panels are split at kink locations so each panel integrand is
        smooth; an 8-point rule per panel then reaches quadrature noise
        well below CERT_TOL for the catalog entries.
        """
        grid = np.asarray(grid, dtype=float)
        if np.any(np.diff(grid) <= 0):
            raise ValueError("zeta_grid expects a strictly increasing grid")
        knots = np.unique(
            np.concatenate(
                [
                    grid,
                    [0.0],
                    [k for k in self.kinks if grid[0] < k < grid[-1]],
                ]
            )
        )
        xg, wg = leggauss(8)
        a, b = knots[:-1], knots[1:]
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        nodes = mid[:, None] + half[:, None] * xg[None, :]
        vals = np.sqrt(np.maximum(self._phi_prime_array(nodes), 0.0))
        panel = half * (vals @ wg)
        cum = np.concatenate([[0.0], np.cumsum(panel)])  # antiderivative at knots
        anchor = np.interp(0.0, knots, cum)
        return np.interp(grid, knots, cum) - anchor

    def _phi_array(self, s: np.ndarray) -> np.ndarray:
        return self.phi(s)

    def _phi_prime_array(self, s: np.ndarray) -> np.ndarray:
        return self.phi_prime(s)

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class PowerLaw(Nonlinearity):
    """Phi(s) = s |s|^(p-1), the classical porous-medium nonlinearity."""

    exponent: float = 3.0

    def __post_init__(self):
        if self.exponent < 1:
            raise ValueError(f"power-law exponent must be >= 1, got {self.exponent}")

    @property
    def p(self) -> float:
        return self.exponent

    @property
    def is_c1(self) -> bool:
        # s|s|^(p-1) has continuous derivative p|s|^(p-1) for p > 1; for
        # p = 1 it is the identity.
        return True

    def phi(self, s):
        return s * np.abs(s) ** (self.exponent - 1.0)

    def phi_prime(self, s):
        return self.exponent * np.abs(s) ** (self.exponent - 1.0)

    def zeta(self, s: float) -> float:
        # closed form: (2 sqrt(p) / (p+1)) s |s|^((p-1)/2)
        p = self.exponent
        return 2.0 * math.sqrt(p) / (p + 1.0) * s * abs(s) ** ((p - 1.0) / 2.0)

    def zeta_grid(self, grid: np.ndarray) -> np.ndarray:
        p = self.exponent
        g = np.asarray(grid, dtype=float)
        return 2.0 * np.sqrt(p) / (p + 1.0) * g * np.abs(g) ** ((p - 1.0) / 2.0)

    def to_dict(self) -> dict:
        return {"kind": "power_law", "p": self.exponent}


@dataclass(frozen=True)
class DeadZoneCubic(Nonlinearity):
    """Piecewise cubic with a flat dead zone (-delta, delta).

    Phi(r) = (r + delta)^3 for r <= -delta, 0 for |r| < delta,
    (r - delta)^3 for r >= delta.  C1 with Phi' = 0 on an interval, so it
    is zeta-monotone (p = 3) but neither strictly nor strongly monotone.
    """

    delta: float = 1.0

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError(f"delta must be positive, got {self.delta}")

    @property
    def p(self) -> float:
        return 3.0

    @property
    def is_c1(self) -> bool:
        return True

    @property
    def kinks(self) -> tuple:
        return (-self.delta, self.delta)

    def phi(self, s):
        s = np.asarray(s, dtype=float)
        shifted = np.sign(s) * np.maximum(np.abs(s) - self.delta, 0.0)
        out = shifted**3
        return out if out.ndim else float(out)

    def phi_prime(self, s):
        s = np.asarray(s, dtype=float)
        shifted = np.maximum(np.abs(s) - self.delta, 0.0)
        out = 3.0 * shifted**2
        return out if out.ndim else float(out)

    def to_dict(self) -> dict:
        return {"kind": "dead_zone_cubic", "delta": self.delta}


@dataclass(frozen=True)
class MollifiedExp(Nonlinearity):
    """Phi(r) = int_0^r exp(-1/|s|) ds.

    Smooth, strictly increasing off the origin with 0 < Phi' <= 1, linear
    growth (p = 1), and arbitrarily flat near 0, so strong monotonicity
    fails at every exponent.  Evaluated through the exponential-integral
    antiderivative int_0^r exp(-1/s) ds = r exp(-1/r) + Ei(-1/r), r > 0,
    extended oddly.
    """

    @property
    def p(self) -> float:
        return 1.0

    @property
    def is_c1(self) -> bool:
        return True

    @staticmethod
    def _primitive(r: np.ndarray) -> np.ndarray:
        # int_0^r exp(-1/s) ds for r >= 0; the Ei term underflows to 0
        # together with exp(-1/r) as r -> 0+.
        out = np.zeros_like(r)
        pos = r > 0
        rp = r[pos]
        with np.errstate(divide="ignore", over="ignore"):
            inv = 1.0 / rp
            out[pos] = rp * np.exp(-inv) + expi(-inv)
        return out

    def phi(self, s):
        s = np.asarray(s, dtype=float)
        out = np.sign(s) * self._primitive(np.abs(s))
        return out if out.ndim else float(out)

    def phi_prime(self, s):
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore"):
            out = np.where(s == 0.0, 0.0, np.exp(-1.0 / np.where(s == 0.0, 1.0, np.abs(s))))
        return out if out.ndim else float(out)

    def zeta(self, s: float) -> float:
        # sqrt(Phi') = exp(-1/(2|r|)); substituting r -> r/2 reduces the
        # integral to the primitive above.
        return 0.5 * math.copysign(1.0, s) * float(self._primitive(np.asarray(2.0 * abs(s))).ravel()[0]) if s else 0.0

    def zeta_grid(self, grid: np.ndarray) -> np.ndarray:
        g = np.asarray(grid, dtype=float)
        return 0.5 * np.sign(g) * self._primitive(2.0 * np.abs(g))

    def to_dict(self) -> dict:
        return {"kind": "mollified_exp"}


@dataclass(frozen=True)
class Custom(Nonlinearity):
    """User-supplied nonlinearity; derivative data optional."""

    phi_fn: Callable = field(compare=False)
    growth_p: float = 1.0
    phi_prime_fn: Optional[Callable] = field(default=None, compare=False)
    kink_points: tuple = ()
    label: str = "custom"

    @property
    def p(self) -> float:
        return self.growth_p

    @property
    def name(self) -> str:
        return self.label

    @property
    def is_c1(self) -> bool:
        return self.phi_prime_fn is not None

    @property
    def kinks(self) -> tuple:
        return self.kink_points

    def phi(self, s):
        return self.phi_fn(np.asarray(s, dtype=float))

    def phi_prime(self, s):
        if self.phi_prime_fn is None:
            raise ValueError(f"nonlinearity {self.label!r} carries no derivative data")
        return self.phi_prime_fn(np.asarray(s, dtype=float))

    def to_dict(self) -> dict:
        return {"kind": "custom", "p": self.growth_p, "label": self.label}


def from_spec(spec: dict) -> Nonlinearity:
    """Build a catalog entry from a configuration mapping."""
    kind = spec.get("kind")
    if kind == "power_law":
        return PowerLaw(float(spec.get("p", 3.0)))
    if kind == "dead_zone_cubic":
        return DeadZoneCubic(float(spec.get("delta", 1.0)))
    if kind == "mollified_exp":
        return MollifiedExp()
    raise ValueError(f"unknown nonlinearity kind {kind!r}")


# ---------------------------------------------------------------------------
# certification


@dataclass(frozen=True)
class Certificate:
    """Outcome of a grid scan for one hypothesis.

    ``constants`` holds the best grid constants (a, c, c1, c2, eta, ...)
    and ``witness`` the scanned point/pair where the defining inequality
    is tightest, or the violating point/pair when ``passed`` is False.
    """

    hypothesis: Hypothesis
    passed: bool
    constants: dict
    witness: Optional[tuple]
    search_box: float
    grid_step: float
    nonlinearity: dict

    def to_dict(self) -> dict:
        return {
            "hypothesis": self.hypothesis.value,
            "passed": self.passed,
            "constants": dict(self.constants),
            "witness": list(self.witness) if self.witness is not None else None,
            "search_box": self.search_box,
            "grid_step": self.grid_step,
            "nonlinearity": dict(self.nonlinearity),
        }


def _scan_grid(R: float, h: float) -> np.ndarray:
    if R <= 0 or h <= 0:
        raise ValueError("search box and grid step must be positive")
    half = max(1, round(R / h))
    return np.linspace(-R, R, 2 * half + 1)


def _pairwise_min(x: np.ndarray, fx: np.ndarray, gx: Optional[np.ndarray], power: float):
    """Minimize q(s,t) over grid pairs s < t, row-chunked.

    With gx = None:  q = (f(t)-f(s))(t-s)  - plain monotonicity products.
    With gx given:   q = (f(t)-f(s))(t-s) - (g(t)-g(s))^2.
    With power > 0:  q = (f(t)-f(s))(t-s) / |t-s|^power  - ratio scans.

    Returns (min value, witness pair), reduced in row-major order so the
    reported witness is the lexicographically smallest minimizer.
    """
    n = len(x)
    best = np.inf
    witness = (x[0], x[-1])
    for i0 in range(0, n - 1, _ROW_BLOCK):
        i1 = min(i0 + _ROW_BLOCK, n - 1)
        xs = x[i0:i1, None]
        fs = fx[i0:i1, None]
        dt_ = x[None, i0 + 1 :] - xs
        q = (fx[None, i0 + 1 :] - fs) * dt_
        if gx is not None:
            q = q - (gx[None, i0 + 1 :] - gx[i0:i1, None]) ** 2
        if power > 0:
            with np.errstate(divide="ignore", invalid="ignore"):
                q = q / np.abs(dt_) ** power
        mask = x[None, i0 + 1 :] > xs  # keep strict upper triangle
        q = np.where(mask, q, np.inf)
        k = int(np.argmin(q))
        val = float(q.flat[k])
        if val < best:
            best = val
            r, cidx = divmod(k, q.shape[1])
            witness = (float(x[i0 + r]), float(x[i0 + 1 + cidx]))
    return best, witness


def _coercivity_constants(x: np.ndarray, lower: np.ndarray, power: float):
    """Best grid (a, c) with lower(s) >= a |s|^power - c.

    The slope a is anchored at the box edge (where the growth rate is
    cleanest) and c patches the worst interior violation, so the pair is
    valid at every scanned point by construction.
    """
    absx = np.abs(x)
    edge = absx == absx.max()
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(absx > 0, lower / absx**power, np.inf)
    a = max(float(ratio[edge].min()), 0.0)
    gap = a * absx**power - lower
    k = int(np.argmax(gap))
    c = max(0.0, float(gap[k]))
    return a, c, (float(x[k]),)


def _bound_constants(x: np.ndarray, upper: np.ndarray, power: float):
    """Best grid (c1, c2) with upper(s) <= c1 |s|^power + c2 (same recipe)."""
    absx = np.abs(x)
    edge = absx == absx.max()
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(absx > 0, upper / absx**power, 0.0)
    c1 = max(float(ratio[edge].max()), 0.0)
    gap = upper - c1 * absx**power
    c2 = max(0.0, float(gap.max()))
    return c1, c2


def _certify_basic(nl, x, phi_x):
    worst, pair = _pairwise_min(x, phi_x, None, 0.0)
    a, c, patch = _coercivity_constants(x, phi_x * x, nl.p + 1.0)
    c1, c2 = _bound_constants(x, np.abs(phi_x), nl.p)
    passed = worst >= -CERT_TOL and a > CERT_TOL
    witness = pair if worst < -CERT_TOL else patch
    return passed, {"p": nl.p, "a": a, "c": c, "c1": c1, "c2": c2,
                    "monotonicity_min": worst}, witness


def _certify_zeta(nl, x, phi_x):
    zeta_x = nl.zeta_grid(x)
    worst, pair = _pairwise_min(x, phi_x, zeta_x, 0.0)
    a, c, patch = _coercivity_constants(x, zeta_x**2, nl.p + 1.0)
    passed = worst >= -CERT_TOL and a > CERT_TOL
    witness = pair if worst < -CERT_TOL else patch
    return passed, {"p": nl.p, "a": a, "c": c, "pair_min": worst}, witness


def _certify_smooth_positive(nl, x, h):
    if not nl.is_c1:
        return False, {"p": nl.p, "reason": "not C1"}, None
    d = nl._phi_prime_array(x)
    if float(d.min()) < -CERT_TOL:
        k = int(np.argmin(d))
        return False, {"p": nl.p, "min_phi_prime": float(d.min())}, (float(x[k]),)
    # flat pieces: longest run of exact grid zeros, measured in length
    # (underflowed-but-positive derivatives still witness positivity)
    zero = d <= 0.0
    run, longest, start, run_start = 0, 0, 0, 0
    for i, z in enumerate(zero):
        run = run + 1 if z else 0
        if z and run == 1:
            run_start = i
        if run > longest:
            longest, start = run, run_start
    zero_measure = longest * h
    c_tilde1 = float(np.max(d / (np.abs(x) ** (nl.p - 1.0) + 1.0)))
    zeta_x = nl.zeta_grid(x)
    a, c, patch = _coercivity_constants(x, zeta_x**2, nl.p + 1.0)
    passed = zero_measure <= NULL_SET_MEASURE and a > CERT_TOL
    witness = (float(x[start + longest // 2]),) if zero_measure > NULL_SET_MEASURE else patch
    return passed, {"p": nl.p, "c_tilde1": c_tilde1, "a": a, "c": c,
                    "zero_set_measure": zero_measure}, witness


def _certify_strong(nl, x, phi_x):
    eta, pair = _pairwise_min(x, phi_x, None, nl.p + 1.0)
    eta = max(eta, 0.0)
    passed = eta > CERT_TOL and nl.p > 1.0
    return passed, {"p": nl.p, "eta": eta}, pair


def _certify_strong_deriv(nl, x):
    if not nl.is_c1:
        return False, {"p": nl.p, "reason": "not C1"}, None
    d = nl._phi_prime_array(x)
    absx = np.abs(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(absx > 0, 4.0 * d / ((nl.p + 1.0) ** 2 * absx ** (nl.p - 1.0)), np.inf)
    k = int(np.argmin(ratio))
    eta = max(float(ratio[k]), 0.0)
    kappa = float(np.max(d / (1.0 + absx ** (nl.p - 1.0))))
    passed = eta > CERT_TOL and nl.p > 1.0
    return passed, {"p": nl.p, "eta": eta, "kappa": kappa}, (float(x[k]),)


@lru_cache(maxsize=64)
def certify(
    nl: Nonlinearity,
    hypothesis: Hypothesis,
    search_box: float = DEFAULT_SEARCH_BOX,
    grid_step: float = DEFAULT_GRID_STEP,
) -> Certificate:
    """Scan [-search_box, search_box] and certify one hypothesis.

    Failure is a valid outcome: the returned Certificate then carries a
    witness violating the defining inequality by more than CERT_TOL.
    Results are cached per (nonlinearity, hypothesis, box, step).
    """
    x = _scan_grid(search_box, grid_step)
    h = float(x[1] - x[0])
    phi_x = nl._phi_array(x)
    if hypothesis is Hypothesis.BASIC_MONOTONE:
        passed, constants, witness = _certify_basic(nl, x, phi_x)
    elif hypothesis is Hypothesis.ZETA_MONOTONE:
        passed, constants, witness = _certify_zeta(nl, x, phi_x)
    elif hypothesis is Hypothesis.SMOOTH_POSITIVE_DERIV:
        passed, constants, witness = _certify_smooth_positive(nl, x, h)
    elif hypothesis is Hypothesis.STRONG_MONOTONE:
        passed, constants, witness = _certify_strong(nl, x, phi_x)
    elif hypothesis is Hypothesis.STRONG_MONOTONE_DERIV:
        passed, constants, witness = _certify_strong_deriv(nl, x)
    else:  # pragma: no cover
        raise ValueError(f"unknown hypothesis {hypothesis}")
    return Certificate(
        hypothesis=hypothesis,
        passed=passed,
        constants=constants,
        witness=witness,
        search_box=search_box,
        grid_step=h,
        nonlinearity=nl.to_dict(),
    )


def require(nl: Nonlinearity, hypothesis: Hypothesis, **kwargs) -> Certificate:
    """certify() that raises CertificationError on failure."""
    cert = certify(nl, hypothesis, **kwargs)
    if not cert.passed:
        raise CertificationError(
            f"{nl.name} fails {hypothesis.value} certification "
            f"(witness {cert.witness}, constants {cert.constants})"
        )
    return cert
