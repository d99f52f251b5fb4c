"""Executable verification of the energy lower bounds.

The convex-combination identity behind the half-weight coupling bound is
checked in exact rational arithmetic (coefficient-by-coefficient, all
denominators small), while the linear-growth bounds for the coupling and
boundary energies are checked numerically on random samples and a coarse
structured grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ladderlab.environment import CycleSpin, RungSpin, T_TO_INT
from ladderlab.ladder import LadderError
from ladderlab.rng import RngSpec

STATES = "ABCD"
PAIRS = [(t, t2) for t in STATES for t2 in STATES if (t, t2) != ("A", "B")]

__all__ = [
    "MinorantCertificate",
    "BoundReport",
    "minorant_certificate",
    "verify_linear_minorant",
    "check_middle_bound",
    "check_boundary_bound",
    "gamma_derivatives",
    "middle_growth_rate",
    "boundary_growth_rate",
]


def middle_growth_rate(a: float) -> float:
    """Linear growth rate of the coupling energy: min(a - 1/2, 1) / 16."""
    if not a > 0.5:
        raise LadderError(f"coupling bound needs a > 1/2, got {a}")
    return min(a - 0.5, 1.0) / 16.0


def boundary_growth_rate(a: float) -> float:
    """Linear growth rate of the boundary energies: min(a - 3/4, 1/6) / 2."""
    if not a > 0.75:
        raise LadderError(f"boundary bound needs a > 3/4, got {a}")
    return 0.5 * min(a - 0.75, 1.0 / 6.0)


@dataclass(frozen=True)
class MinorantCertificate:
    """Exact convex-combination and dual weights for one tree-state pair."""

    t: str
    t2: str
    alpha_lo: Fraction
    beta_lo: Fraction
    gamma_lo: Fraction
    alpha_hi: Fraction
    beta_hi: Fraction
    gamma_hi: Fraction
    kappa_lo: Fraction
    kappa_hi: Fraction
    kappa_lo2: Fraction
    kappa_hi2: Fraction

    def all_ten(self) -> tuple[Fraction, ...]:
        return (
            self.alpha_lo, self.beta_lo, self.gamma_lo,
            self.alpha_hi, self.beta_hi, self.gamma_hi,
            self.kappa_lo, self.kappa_hi, self.kappa_lo2, self.kappa_hi2,
        )


def minorant_certificate(t: str, t2: str) -> MinorantCertificate:
    """Closed-form solution of the dual linear program, in exact rationals."""
    if (t, t2) == ("A", "B"):
        raise LadderError("the pair (A, B) carries infinite energy; nothing to certify")
    if t not in STATES or t2 not in STATES:
        raise LadderError(f"unknown tree states ({t!r}, {t2!r})")

    def ind(cond: bool) -> Fraction:
        return Fraction(1 if cond else 0)

    alpha_lo = Fraction(1, 10) * (
        ind(t2 == "A") - ind(t2 == "B") + ind(t2 == "C")
        - ind(t == "A" and t2 == "D") + ind(t == "B" and t2 == "D") + ind(t == "C" and t2 == "D")
    ) + Fraction(1, 5) * (
        3 + ind(t == "A") - ind(t == "B") - 2 * ind(t == "C") + ind(t == "C" and t2 == "B")
    )
    beta_lo = Fraction(1, 10) * (
        ind(t2 == "B") - ind(t2 == "A") - 3 * ind(t2 == "C") + ind(t == "A" and t2 == "D")
    ) + Fraction(1, 5) * (
        2 - ind(t == "A") + ind(t == "B") - ind(t == "B" and t2 == "A") + ind(t == "C" and t2 == "B")
        + ind(t == "A" and t2 == "C") - ind(t == "B" and t2 == "C") - ind(t == "B" and t2 == "D")
    )
    gamma_lo = 1 - alpha_lo - beta_lo
    alpha_hi = Fraction(4, 5) + Fraction(4, 5) * ind(t == "A") - alpha_lo
    beta_hi = Fraction(2, 5) + Fraction(4, 5) * ind(t2 == "B") - beta_lo
    gamma_hi = 1 - alpha_hi - beta_hi
    kappa_lo = Fraction(1, 4) * (
        1 + ind(t == "C" and t2 == "B") - ind(t2 == "B")
        - ind(t == "A" and t2 == "D") - Fraction(1, 2) * ind(t == "D" and t2 == "D")
    )
    kappa_hi = Fraction(1, 4) - kappa_lo
    kappa_lo2 = Fraction(1, 4) * (
        1 - ind(t2 == "B") - ind(t == "A") + ind(t == "B" and t2 == "B")
        + ind(t == "C" and t2 == "B") + ind(t == "A" and t2 == "C")
    ) + Fraction(1, 8) * (ind(t == "A" and t2 == "D") - ind(t2 == "D"))
    kappa_hi2 = Fraction(1, 4) - kappa_lo2

    coeff = MinorantCertificate(
        t=t, t2=t2,
        alpha_lo=alpha_lo, beta_lo=beta_lo, gamma_lo=gamma_lo,
        alpha_hi=alpha_hi, beta_hi=beta_hi, gamma_hi=gamma_hi,
        kappa_lo=kappa_lo, kappa_hi=kappa_hi, kappa_lo2=kappa_lo2, kappa_hi2=kappa_hi2,
    )
    if any(v < 0 for v in coeff.all_ten()):
        raise LadderError(f"negative certificate coefficient for pair ({t}, {t2})")
    if alpha_lo + beta_lo + gamma_lo != 1 or alpha_hi + beta_hi + gamma_hi != 1:
        raise LadderError(f"convex weights for ({t}, {t2}) do not sum to 1")
    if kappa_lo + kappa_hi != Fraction(1, 4) or kappa_lo2 + kappa_hi2 != Fraction(1, 4):
        raise LadderError(f"dual weights for ({t}, {t2}) do not sum to 1/4")
    return coeff


# variables of the linear identity, in a fixed order
_VARS = ("xlo", "xhi", "xlo2", "xhi2", "z", "gamma")


def _linear_identity_residuals(c: MinorantCertificate) -> dict[str, Fraction]:
    """Coefficients of LHS - RHS of the dual identity, one per variable.

    LHS is the convex minorant of the log-sum terms plus linear and tree
    pieces minus a quarter separation, at half initial weight; RHS is the
    kappa-weighted combination of the four cell fields.  The rung variable
    w is eliminated via w = gamma + u' - u.
    """
    half = Fraction(1, 2)
    quarter = Fraction(1, 4)

    def form(**kw) -> dict[str, Fraction]:
        out = {v: Fraction(0) for v in _VARS}
        out.update({k: Fraction(v) for k, v in kw.items()})
        return out

    def add(f, g, scale=Fraction(1)):
        return {v: f[v] + scale * g[v] for v in _VARS}

    u = form(xlo=half, xhi=half)
    u2 = form(xlo2=half, xhi2=half)
    w = add(add(form(gamma=1), u2), u, Fraction(-1))

    # K: (5/4) [ alpha (xlo + w/2) + beta (xlo2 - w/2) + gamma z + bars ]
    lhs = form()
    lhs = add(lhs, add(form(xlo=1), w, half), Fraction(5, 4) * c.alpha_lo)
    lhs = add(lhs, add(form(xlo2=1), w, -half), Fraction(5, 4) * c.beta_lo)
    lhs = add(lhs, form(z=1), Fraction(5, 4) * c.gamma_lo)
    lhs = add(lhs, add(form(xhi=1), w, half), Fraction(5, 4) * c.alpha_hi)
    lhs = add(lhs, add(form(xhi2=1), w, -half), Fraction(5, 4) * c.beta_hi)
    lhs = add(lhs, form(z=1), Fraction(5, 4) * c.gamma_hi)
    # linear piece at a = 1/2: -(u + u' + z)
    lhs = add(lhs, add(add(u, u2), form(z=1)), Fraction(-1))
    # tree piece
    t, t2 = c.t, c.t2
    if t == "C":
        lhs = add(lhs, form(xlo=half))
    elif t == "D":
        lhs = add(lhs, form(xhi=half))
    if t2 == "C":
        lhs = add(lhs, form(xlo2=half))
    elif t2 == "D":
        lhs = add(lhs, form(xhi2=half))
    if t == "A":
        lhs = add(lhs, add(add(form(z=1), w, -half), u, -half))
    elif t == "B":
        lhs = add(lhs, u, half)
    if t2 == "A":
        lhs = add(lhs, u2, half)
    elif t2 == "B":
        lhs = add(lhs, add(add(form(z=1), w, half), u2, -half))
    # minus a quarter separation
    lhs = add(lhs, form(gamma=1), -quarter)
    # RHS
    rhs = form(xlo=c.kappa_lo, xhi=c.kappa_hi, xlo2=c.kappa_lo2, xhi2=c.kappa_hi2)
    return {v: lhs[v] - rhs[v] for v in _VARS}


@dataclass
class BoundReport:
    """Outcome of one sampled bound check."""

    name: str
    samples: int
    min_margin: float
    worst_point: dict = field(default_factory=dict)
    passed: bool = True
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "samples": self.samples,
            "min_margin": self.min_margin,
            "worst_point": self.worst_point,
            "passed": self.passed,
            "details": self.details,
        }


def verify_linear_minorant() -> BoundReport:
    """Check the dual identity for all 15 admissible pairs, exactly.

    Any nonzero residual raises; the report records per-pair residuals.
    """
    residuals = {}
    for t, t2 in PAIRS:
        c = minorant_certificate(t, t2)
        res = _linear_identity_residuals(c)
        residuals[t + t2] = {v: str(r) for v, r in res.items()}
        for v, r in res.items():
            if r != 0:
                raise LadderError(f"identity residual {r} on variable {v} for pair ({t}, {t2})")
    return BoundReport(
        name="minorant",
        samples=len(PAIRS) * len(_VARS),
        min_margin=0.0,
        passed=True,
        details={"residuals": residuals},
    )


def perturbed_minorant_residual(t: str, t2: str, variable: str, delta: Fraction) -> Fraction:
    """Negative control: shift kappa_lo by ``delta`` and report the residual
    it induces on the given variable."""
    c = minorant_certificate(t, t2)
    bumped = MinorantCertificate(
        t=c.t, t2=c.t2,
        alpha_lo=c.alpha_lo, beta_lo=c.beta_lo, gamma_lo=c.gamma_lo,
        alpha_hi=c.alpha_hi, beta_hi=c.beta_hi, gamma_hi=c.gamma_hi,
        kappa_lo=c.kappa_lo + delta, kappa_hi=c.kappa_hi,
        kappa_lo2=c.kappa_lo2, kappa_hi2=c.kappa_hi2,
    )
    return _linear_identity_residuals(bumped)[variable]


# ---------------------------------------------------------------------------
# vectorized energy pieces (arrays of sample points, one tree pair at a time)


def _tree_piece_vec(points, t: str, t2: str):
    xlo, xhi, z, gamma, xlo2, xhi2 = points
    u = 0.5 * (xlo + xhi)
    u2 = 0.5 * (xlo2 + xhi2)
    w = gamma + u2 - u
    h_tree = np.zeros_like(z)
    if t == "C":
        h_tree = h_tree + 0.5 * xlo
    elif t == "D":
        h_tree = h_tree + 0.5 * xhi
    if t2 == "C":
        h_tree = h_tree + 0.5 * xlo2
    elif t2 == "D":
        h_tree = h_tree + 0.5 * xhi2
    if t == "A":
        h_tree = h_tree + z - 0.5 * w - 0.5 * u
    elif t == "B":
        h_tree = h_tree + 0.5 * u
    if t2 == "A":
        h_tree = h_tree + 0.5 * u2
    elif t2 == "B":
        h_tree = h_tree + z + 0.5 * w - 0.5 * u2
    return h_tree


def _middle_base_vec(points, a: float, eta: float, rate: float):
    """Tree-independent part of margin: everything except the tree piece."""
    xlo, xhi, z, gamma, xlo2, xhi2 = points
    u = 0.5 * (xlo + xhi)
    u2 = 0.5 * (xlo2 + xhi2)
    w = gamma + u2 - u
    h_ln = 0.5 * (3.0 * a + 1.0) * (
        np.logaddexp(np.logaddexp(xlo + 0.5 * w, xlo2 - 0.5 * w), z)
        + np.logaddexp(np.logaddexp(xhi + 0.5 * w, xhi2 - 0.5 * w), z)
    )
    h_linear = -(a + 0.5) * (u + u2 + z)
    with np.errstate(over="ignore"):
        h_exp1 = 0.25 * (np.exp(-xlo) + np.exp(-xhi) + np.exp(-xlo2) + np.exp(-xhi2))
    rhs = rate * (np.abs(xlo) + np.abs(xhi) + np.abs(z) + np.abs(gamma) + np.abs(xlo2) + np.abs(xhi2))
    return h_ln + h_linear + h_exp1 - eta * gamma - rhs


def middle_no_exp2_vec(xlo, xhi, z, gamma, xlo2, xhi2, t: str, t2: str, a: float, eta: float):
    """Vectorized coupling energy without the sign term (one tree pair)."""
    points = (xlo, xhi, z, gamma, xlo2, xhi2)
    return _middle_base_vec(points, a, eta, 0.0) + _tree_piece_vec(points, t, t2)


def _grid_points(radius: float, step: float, dims: int):
    axis = np.arange(-radius, radius + 0.5 * step, step)
    grids = np.meshgrid(*([axis] * dims), indexing="ij", copy=False)
    return [g.reshape(-1) for g in grids]


def check_middle_bound(
    samples: int,
    a: float,
    eta: float,
    rng: RngSpec | None = None,
    radius: float = 50.0,
    grid_radius: float = 30.0,
    grid_step: float = 5.0,
    extra_points: np.ndarray | None = None,
) -> BoundReport:
    """Sampled verification that the coupling energy (sign term removed)
    grows at least linearly with the closed-form rate.

    Violations below -1e-6 raise; the report records the minimum margin,
    which must stay above -1e-9 (floating-point slack).
    """
    if not -0.25 <= eta <= 0.25:
        raise LadderError(f"eta={eta} outside [-1/4, 1/4]")
    rate = middle_growth_rate(a)
    gen = (rng or RngSpec(0)).generator()
    min_margin = math.inf
    worst = {}
    total = 0

    chunk = 1 << 20

    def scan(points, origin):
        nonlocal min_margin, worst, total
        npts = points[0].size
        for lo in range(0, npts, chunk):
            part = tuple(p[lo:lo + chunk] for p in points)
            base = _middle_base_vec(part, a, eta, rate)
            for t, t2 in PAIRS:
                margins = base + _tree_piece_vec(part, t, t2)
                total += part[0].size
                k = int(np.argmin(margins))
                if margins[k] < min_margin:
                    min_margin = float(margins[k])
                    worst = {
                        "pair": t + t2,
                        "point": [float(p[k]) for p in part],
                        "origin": origin,
                    }

    uniform = [gen.uniform(-radius, radius, size=samples) for _ in range(6)]
    scan(uniform, "uniform")
    if grid_step > 0:
        scan(_grid_points(grid_radius, grid_step, 6), "grid")
    if extra_points is not None:
        scan([np.asarray(p, dtype=float) for p in extra_points], "extra")

    passed = min_margin >= -1e-9
    report = BoundReport(
        name=f"middle-bound a={a} eta={eta}",
        samples=total,
        min_margin=min_margin,
        worst_point=worst,
        passed=passed,
        details={"rate": rate},
    )
    if min_margin < -1e-6:
        raise LadderError(f"coupling bound violated: margin {min_margin} at {worst}")
    return report


def _boundary_core_vec(xlo, xhi, z, t: str, a: float, side: str):
    """Boundary energy without its exponential part (log-sum, tree, slopes)."""
    u = 0.5 * (xlo + xhi)
    if side == "left":
        h_ln = a * np.logaddexp(xhi, z) + (a + 0.5) * (np.logaddexp(xlo, z) - u - z)
        sign_u = 0.25
        tree_a = 0.5 * u
        tree_b = z - 0.5 * u
    else:
        h_ln = (a + 0.5) * (np.logaddexp(xlo, z) + np.logaddexp(xhi, z) - u - z)
        sign_u = -0.25
        tree_a = z - 0.5 * u
        tree_b = 0.5 * u
    h_tree = np.zeros_like(h_ln)
    if t == "A":
        h_tree = h_tree + tree_a
    elif t == "B":
        h_tree = h_tree + tree_b
    elif t == "C":
        h_tree = h_tree + 0.5 * xlo
    else:
        h_tree = h_tree + 0.5 * xhi
    return h_ln + h_tree + sign_u * u


def check_boundary_bound(
    samples: int,
    a: float,
    side: str,
    rng: RngSpec | None = None,
    radius: float = 50.0,
    grid_radius: float = 30.0,
    grid_step: float = 5.0,
) -> BoundReport:
    """Sampled verification of the boundary energy lower bounds.

    At ``a = 3/4`` the quarter-slope bound (energy minus its exponential
    part at least z/4) is checked; for larger ``a`` the linear-growth bound
    with the closed-form rate.
    """
    if side not in ("left", "right"):
        raise LadderError(f"side must be left or right, got {side!r}")
    if a < 0.75:
        raise LadderError(f"boundary bounds need a >= 3/4, got {a}")
    at_critical = a == 0.75
    rate = None if at_critical else boundary_growth_rate(a)
    gen = (rng or RngSpec(0)).generator()
    min_margin = math.inf
    worst = {}
    total = 0

    def scan(points, origin):
        nonlocal min_margin, worst, total
        xlo, xhi, z = points
        for t in STATES:
            core = _boundary_core_vec(xlo, xhi, z, t, a, side)
            if at_critical:
                # the exponential part cancels exactly; no overflow possible
                margins = core - 0.25 * z
            else:
                with np.errstate(over="ignore"):
                    h_exp = 0.25 * (np.exp(-xlo) + np.exp(-xhi)) + 0.5 * np.exp(-z)
                margins = core + h_exp - rate * (np.abs(xlo) + np.abs(xhi) + np.abs(z))
            total += xlo.size
            k = int(np.argmin(margins))
            if margins[k] < min_margin:
                min_margin = float(margins[k])
                worst = {"state": t, "point": [float(p[k]) for p in points], "origin": origin}

    uniform = [gen.uniform(-radius, radius, size=samples) for _ in range(3)]
    scan(uniform, "uniform")
    if grid_step > 0:
        scan(_grid_points(grid_radius, grid_step, 3), "grid")

    passed = min_margin >= -1e-9
    report = BoundReport(
        name=f"boundary-bound a={a} side={side}",
        samples=total,
        min_margin=min_margin,
        worst_point=worst,
        passed=passed,
        details={"rate": rate if rate is not None else "z/4 at a=3/4"},
    )
    if min_margin < -1e-6:
        raise LadderError(f"boundary bound violated: margin {min_margin} at {worst}")
    return report


# ---------------------------------------------------------------------------
# derivatives of the coupling energy along the sign-mismatch shift


def gamma_derivatives(
    cyc: CycleSpin, rung: RungSpin, cyc2: CycleSpin, a: float, gamma_shift: float
) -> tuple[float, float]:
    """First and second derivative of the zero-coupling energy along the
    shift that moves the separation only when the signs disagree."""
    if not -1.0 <= gamma_shift <= 1.0:
        raise LadderError(f"shift {gamma_shift} outside [-1, 1]")
    if cyc.sigma == cyc2.sigma:
        return 0.0, 0.0
    t, t2 = T_TO_INT[cyc.t], T_TO_INT[cyc2.t]
    if t == 0 and t2 == 1:
        return 0.0, 0.0  # infinite plateau: constant in the shift
    g = rung.gamma + gamma_shift
    u = 0.5 * (cyc.xlo + cyc.xhi)
    u2 = 0.5 * (cyc2.xlo + cyc2.xhi)
    w = g + u2 - u
    z = rung.z
    coef = 0.5 * (3.0 * a + 1.0)
    d1 = 0.0
    d2 = 0.0
    for lo, lo2 in ((cyc.xlo, cyc2.xlo), (cyc.xhi, cyc2.xhi)):
        arr = np.array([lo + 0.5 * w, lo2 - 0.5 * w, z])
        m = arr.max()
        p = np.exp(arr - m)
        p /= p.sum()
        slope = 0.5 * (p[0] - p[1])
        d1 += coef * slope
        d2 += coef * (0.25 * (p[0] + p[1]) - slope * slope)
    # tree term: linear in w
    if t == 0:
        d1 += -0.5
    if t2 == 1:
        d1 += 0.5
    # sign-interaction term (signs disagree here, so the product is -1)
    if 0.5 * abs(w) - z < 690.0:
        d1 += 0.25 * (math.exp(0.5 * w - z) - math.exp(-0.5 * w - z))
        d2 += 0.125 * (math.exp(0.5 * w - z) + math.exp(-0.5 * w - z))
    else:
        d1 += math.copysign(math.inf, w)
        d2 += math.inf
    return d1, d2
