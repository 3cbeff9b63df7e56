"""Hypothesis checks and the averaged decay threshold for entire-solution stability.

The criterion machinery evaluates, for a coefficient triple and model
parameters, the two envelope functions

    L1(t) = 2*eta * (a1_inf(t) + vol * pos(a2_inf(t)))
    L2(t) = a0_sup(t) + vol*M2*(pos(a2_sup(t)) + 2*neg(a2_inf(t)))
            + mu^2/(2*lam*tau) + |chi|/2 * C3 - vol*eta*neg(a2_sup(t))

their clamped difference h(t) = max(-lam/(2*tau), L2(t) - L1(t)), and the
windowed trapezoid average theta of h.  A negative theta (beyond quadrature
error) is the uniqueness-and-exponential-stability criterion; the constants
eta (persistence floor), M2 (eventual amplitude bound), and C3 (eventual
second-derivative bound on the chemical) enter with recorded provenance
because measured surrogates weaken the claim.

Envelope quantities over a time window are sampled at the window's
quadrature nodes; spatial envelopes are nodal and therefore inner
approximations of the continuum values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .coefficients import CoefficientSet
from .errors import HypothesisFailure
from .model import ModelParams

__all__ = [
    "KnownConstants",
    "HypothesisVerdict",
    "ConvexBound",
    "StabilityReport",
    "compute_M2_convex",
    "check_H1",
    "check_H2",
    "check_H3",
    "compute_L1",
    "compute_L2",
    "decay_integrand",
    "estimate_theta",
    "report_to_csv",
]

HOLDS = "holds"
FAILS = "fails"
INCONCLUSIVE = "inconclusive"

CRITERION_HOLDS = "criterion_holds"
CRITERION_FAILS = "criterion_fails"


def pos(x: float) -> float:
    """Positive part max(0, x)."""
    return x if x > 0.0 else 0.0


def neg(x: float) -> float:
    """Negative part max(0, -x); x == pos(x) - neg(x)."""
    return -x if x < 0.0 else 0.0


@dataclass(frozen=True)
class KnownConstants:
    """Constants the criterion depends on, with per-entry provenance.

    Provenance values: ``config`` (user supplied), ``convex-formula``
    (closed form valid on convex domains), ``measured`` (estimated from
    simulations; conservative only in the failing direction for eta).
    ``cq1_pairs`` lists (q, C_{q+1}) pairs for the growth-vs-drift check;
    the constant is not computable here and is accepted as opaque input.
    """

    M1: float | None = None
    M2: float | None = None
    eta: float | None = None
    C3_tilde: float | None = None
    cq1_pairs: tuple[tuple[float, float], ...] = ()
    provenance: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("M1", "M2", "eta", "C3_tilde"):
            val = getattr(self, name)
            if val is not None and not val > 0.0:
                raise ValueError(f"{name} must be positive when present, got {val}")
        if self.M2 is not None and self.eta is not None and self.M2 < self.eta:
            raise ValueError(f"need M2 >= eta, got M2={self.M2}, eta={self.eta}")
        object.__setattr__(self, "cq1_pairs", tuple((float(q), float(c)) for q, c in self.cq1_pairs))
        object.__setattr__(self, "provenance", dict(self.provenance))

    def missing(self, *names: str) -> list[str]:
        return [n for n in names if getattr(self, n) is None]

    def with_values(self, source: str, **values: float) -> "KnownConstants":
        prov = dict(self.provenance)
        for name in values:
            prov[name] = source
        return replace(self, provenance=prov, **values)


@dataclass(frozen=True)
class HypothesisVerdict:
    """Outcome of one hypothesis check with its inequality margins."""

    name: str
    status: str
    margins: Mapping[str, float] = field(default_factory=dict)
    notes: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return self.status == HOLDS

    def describe(self) -> str:
        margin_txt = " ".join(f"{k}={v:.6g}" for k, v in self.margins.items())
        note_txt = ("; " + "; ".join(self.notes)) if self.notes else ""
        return f"{self.name}: {self.status} {margin_txt}{note_txt}"


@dataclass(frozen=True)
class ConvexBound:
    """Amplitude bound from the convex-domain closed form, with intermediates."""

    M2: float
    M0: float
    M0_ai: float


def _window_samples(window: tuple[float, float], n_samples: int) -> np.ndarray:
    t0, t1 = float(window[0]), float(window[1])
    if not t1 > t0:
        raise ValueError(f"window must have positive length, got [{t0}, {t1}]")
    n = max(int(n_samples), 2)
    if n % 2 == 0:
        n += 1  # odd count so the half-resolution quadrature reuses nodes
    return np.linspace(t0, t1, n)


def compute_M2_convex(
    coeffs: CoefficientSet,
    params: ModelParams,
    n: int,
    window: tuple[float, float],
    n_samples: int = 257,
) -> ConvexBound:
    """Eventual amplitude bound on convex domains (tau = 1, chi > 0 regime).

    Formula chain:
        M0    = 1.5 * vol * a0_sup / inf_t(a1_inf(t) - vol*neg(a2_inf(t)))
        M0_ai = a0_sup + 2*lam + sup_t(neg(a2_inf(t))) * M0
        M2    = M0_ai^2 / (4 * (a1_inf - n*mu*chi/4))

    Preconditions: a1_inf > n*mu*chi/4 and the M0 denominator positive;
    violations raise :class:`HypothesisFailure` naming the inequality.
    """
    ts = _window_samples(window, n_samples)
    vol = coeffs.volume
    a0_sup = max(coeffs.a0.envelope(float(t))[1] for t in ts)
    a1_inf = min(coeffs.a1.envelope(float(t))[0] for t in ts)
    m0_denom = math.inf
    neg_a2_inf_sup = 0.0
    for t in ts:
        a1_inf_t = coeffs.a1.envelope(float(t))[0]
        a2_inf_t = coeffs.a2.envelope(float(t))[0]
        m0_denom = min(m0_denom, a1_inf_t - vol * neg(a2_inf_t))
        neg_a2_inf_sup = max(neg_a2_inf_sup, neg(a2_inf_t))
    if not m0_denom > 0.0:
        raise HypothesisFailure(
            f"inf_t(a1_inf(t) - vol*neg(a2_inf(t))) = {m0_denom} is not positive",
            "nonlocal-competition-balance",
        )
    amp_denom = a1_inf - n * params.mu * params.chi / 4.0
    if not amp_denom > 0.0:
        raise HypothesisFailure(
            f"a1_inf - n*mu*chi/4 = {amp_denom} is not positive",
            "competition-vs-drift",
        )
    m0 = 1.5 * vol * a0_sup / m0_denom
    m0_ai = a0_sup + 2.0 * params.lam + neg_a2_inf_sup * m0
    m2 = m0_ai * m0_ai / (4.0 * amp_denom)
    return ConvexBound(M2=m2, M0=m0, M0_ai=m0_ai)


def check_H1(
    coeffs: CoefficientSet,
    params: ModelParams,
    constants: KnownConstants,
    window: tuple[float, float],
    n_samples: int = 257,
) -> HypothesisVerdict:
    """Growth-vs-drift and nonlocal-balance inequalities.

    The first inequality compares a1_inf against
    min over supplied (q, C) pairs of ((q-1)/q) * C^(1/(q+1)) * mu^(1/(q+1)) * |chi|,
    a finite upper bound of the true infimum: clearing it is sound, failing
    it is only inconclusive (except chi = 0, where the threshold is exactly
    zero).  The second inequality is exact up to window sampling.
    """
    ts = _window_samples(window, n_samples)
    vol = coeffs.volume
    a1_inf = min(coeffs.a1.envelope(float(t))[0] for t in ts)
    balance = min(
        coeffs.a1.envelope(float(t))[0] - vol * neg(coeffs.a2.envelope(float(t))[0])
        for t in ts
    )
    margins: dict[str, float] = {"nonlocal_balance": balance}
    notes: list[str] = []

    if params.chi == 0.0:
        threshold = 0.0
        margins["drift_threshold"] = threshold
        margins["drift_margin"] = a1_inf
        first_status = HOLDS if a1_inf > 0.0 else FAILS
    elif not constants.cq1_pairs:
        first_status = INCONCLUSIVE
        notes.append("no (q, C_{q+1}) pairs supplied")
    else:
        q_floor = max(1.0, 0.5 * coeffs.grid.dim)
        usable = [(q, c) for q, c in constants.cq1_pairs if q > q_floor]
        if not usable:
            raise ValueError(f"all supplied q values violate q > max(1, n/2) = {q_floor}")
        threshold = min(
            ((q - 1.0) / q) * c ** (1.0 / (q + 1.0)) * params.mu ** (1.0 / (q + 1.0))
            for q, c in usable
        ) * abs(params.chi)
        margins["drift_threshold"] = threshold
        margins["drift_margin"] = a1_inf - threshold
        if a1_inf > threshold:
            first_status = HOLDS
            notes.append("q-infimum taken over the supplied finite list (upper bound)")
        else:
            first_status = INCONCLUSIVE
            notes.append("finite q-list bound not cleared; true infimum may be smaller")

    second_status = HOLDS if balance > 0.0 else FAILS
    if second_status == FAILS or first_status == FAILS:
        status = FAILS
    elif first_status == HOLDS and second_status == HOLDS:
        status = HOLDS
    else:
        status = INCONCLUSIVE
    return HypothesisVerdict("H1", status, margins, tuple(notes))


def check_H2(
    coeffs: CoefficientSet,
    params: ModelParams,
    n: int,
    domain_is_rectangle: bool = True,
    window: tuple[float, float] = (0.0, 1.0),
    n_samples: int = 257,
) -> HypothesisVerdict:
    """Convex-domain hypothesis: convexity, tau = 1, chi > 0, competition
    strength, and the nonlocal balance inequality."""
    ts = _window_samples(window, n_samples)
    vol = coeffs.volume
    a1_inf = min(coeffs.a1.envelope(float(t))[0] for t in ts)
    balance = min(
        coeffs.a1.envelope(float(t))[0] - vol * neg(coeffs.a2.envelope(float(t))[0])
        for t in ts
    )
    margins = {
        "tau_gap": abs(params.tau - 1.0),
        "chi": params.chi,
        "competition_margin": a1_inf - n * params.mu * params.chi / 4.0,
        "nonlocal_balance": balance,
    }
    clauses = [
        bool(domain_is_rectangle),  # rectangles are convex
        params.tau == 1.0,
        params.chi > 0.0,
        margins["competition_margin"] > 0.0,
        balance > 0.0,
    ]
    status = HOLDS if all(clauses) else FAILS
    notes = () if domain_is_rectangle else ("domain not known to be convex",)
    return HypothesisVerdict("H2", status, margins, notes)


def check_H3(params: ModelParams, constants: KnownConstants) -> HypothesisVerdict:
    """Drift-strength cap chi*M2 <= 1 together with tau in (0, 1]."""
    if constants.M2 is None:
        return HypothesisVerdict("H3", INCONCLUSIVE, {}, ("M2 unavailable",))
    margins = {
        "chi_M2_margin": 1.0 - params.chi * constants.M2,
        "tau": params.tau,
    }
    ok = margins["chi_M2_margin"] >= 0.0 and 0.0 < params.tau <= 1.0
    return HypothesisVerdict("H3", HOLDS if ok else FAILS, margins)


def compute_L1(t: float, coeffs: CoefficientSet, constants: KnownConstants) -> float:
    """Contraction gain from persistence and competition at time t."""
    if constants.eta is None:
        raise ValueError("eta is required for L1")
    a1_inf_t = coeffs.a1.envelope(t)[0]
    a2_inf_t = coeffs.a2.envelope(t)[0]
    return 2.0 * constants.eta * (a1_inf_t + coeffs.volume * pos(a2_inf_t))


def compute_L2(
    t: float, coeffs: CoefficientSet, params: ModelParams, constants: KnownConstants
) -> float:
    """Expansion bound from growth, drift, and the nonlocal term at time t."""
    missing = constants.missing("M2", "eta", "C3_tilde")
    if missing:
        raise ValueError(f"constants missing for L2: {', '.join(missing)}")
    vol = coeffs.volume
    a0_sup_t = coeffs.a0.envelope(t)[1]
    a2_inf_t = coeffs.a2.envelope(t)[0]
    a2_sup_t = coeffs.a2.envelope(t)[1]
    return (
        a0_sup_t
        + vol * constants.M2 * (pos(a2_sup_t) + 2.0 * neg(a2_inf_t))
        + params.mu**2 / (2.0 * params.lam * params.tau)
        + 0.5 * abs(params.chi) * constants.C3_tilde
        - vol * constants.eta * neg(a2_sup_t)
    )


def decay_integrand(
    t: float, coeffs: CoefficientSet, params: ModelParams, constants: KnownConstants
) -> float:
    """h(t) = max(-lam/(2*tau), L2(t) - L1(t)); bounded below by the clamp."""
    clamp = -params.lam / (2.0 * params.tau)
    return max(clamp, compute_L2(t, coeffs, params, constants) - compute_L1(t, coeffs, constants))


def band_perturbation_gain(
    t: float, coeffs: CoefficientSet, eps: float
) -> float:
    """K(t, eps): growth of the contraction estimate from an eps-wide band.

        K = eps*(2*a1_inf(t) + vol*pos(a2_inf(t)) + vol*neg(a2_inf(t)))
          + eps*vol*(pos(a2_sup(t)) + neg(a2_sup(t)) + pos(a2_inf(t)) + neg(a2_inf(t)))
    """
    vol = coeffs.volume
    a1_inf_t = coeffs.a1.envelope(t)[0]
    a2_inf_t = coeffs.a2.envelope(t)[0]
    a2_sup_t = coeffs.a2.envelope(t)[1]
    return eps * (
        2.0 * a1_inf_t + vol * pos(a2_inf_t) + vol * neg(a2_inf_t)
    ) + eps * vol * (
        pos(a2_sup_t) + neg(a2_sup_t) + pos(a2_inf_t) + neg(a2_inf_t)
    )


@dataclass(frozen=True)
class StabilityReport:
    """Everything the criterion evaluation produced, immutable.

    ``theta`` is the trapezoid average of ``h_series`` over the window;
    ``conclusion`` holds exactly when theta clears zero by more than the
    quadrature error estimate.
    """

    window: tuple[float, float]
    ts: np.ndarray
    L1_series: np.ndarray
    L2_series: np.ndarray
    h_series: np.ndarray
    theta: float
    quad_error: float
    constants: KnownConstants
    h1_ok: HypothesisVerdict
    h2_ok: HypothesisVerdict
    h3_ok: HypothesisVerdict
    conclusion: str
    eps_suggested: float | None
    coeffs: CoefficientSet
    params: ModelParams
    notes: tuple[str, ...] = ()


def estimate_theta(
    coeffs: CoefficientSet,
    params: ModelParams,
    constants: KnownConstants,
    window: tuple[float, float],
    n_samples: int = 2001,
) -> StabilityReport:
    """Sample L1, L2, h over the window and average h into theta.

    For constant coefficients the average is exact and window independent;
    for the periodic family a window of one period is exact.  Missing
    constants yield an inconclusive report with empty series.
    """
    n = coeffs.grid.dim
    h1 = check_H1(coeffs, params, constants, window, n_samples=min(n_samples, 513))
    h2 = check_H2(coeffs, params, n, True, window, n_samples=min(n_samples, 513))
    h3 = check_H3(params, constants)
    notes = list(coeffs.regularity_notes())
    if constants.provenance.get("eta") == "measured":
        notes.append(
            "eta is a measured lower bound: a larger valid floor only strengthens the "
            "contraction, so failing verdicts are conservative but passing ones are not"
        )

    missing = constants.missing("M2", "eta", "C3_tilde")
    if missing:
        notes.append(f"constants missing: {', '.join(missing)}; criterion not evaluable")
        empty = np.array([])
        return StabilityReport(
            window=(float(window[0]), float(window[1])),
            ts=empty, L1_series=empty, L2_series=empty, h_series=empty,
            theta=math.nan, quad_error=math.nan, constants=constants,
            h1_ok=h1, h2_ok=h2, h3_ok=h3, conclusion=INCONCLUSIVE,
            eps_suggested=None, coeffs=coeffs, params=params, notes=tuple(notes),
        )

    ts = _window_samples(window, n_samples)
    l1 = np.array([compute_L1(float(t), coeffs, constants) for t in ts])
    l2 = np.array([compute_L2(float(t), coeffs, params, constants) for t in ts])
    clamp = -params.lam / (2.0 * params.tau)
    h = np.maximum(clamp, l2 - l1)
    span = float(ts[-1] - ts[0])
    theta = float(np.trapezoid(h, ts)) / span
    theta_coarse = float(np.trapezoid(h[::2], ts[::2])) / span
    quad_error = abs(theta - theta_coarse)

    if theta < -quad_error:
        conclusion = CRITERION_HOLDS
    elif theta > quad_error:
        conclusion = CRITERION_FAILS
    else:
        conclusion = INCONCLUSIVE
        notes.append("theta within quadrature error of zero")

    eps_suggested = None
    if theta < 0.0 and constants.eta is not None:
        eps_suggested = min(-theta, constants.eta) / 10.0

    return StabilityReport(
        window=(float(ts[0]), float(ts[-1])),
        ts=ts, L1_series=l1, L2_series=l2, h_series=h,
        theta=theta, quad_error=quad_error, constants=constants,
        h1_ok=h1, h2_ok=h2, h3_ok=h3, conclusion=conclusion,
        eps_suggested=eps_suggested, coeffs=coeffs, params=params,
        notes=tuple(notes),
    )


def report_to_csv(report: StabilityReport) -> str:
    """Flat serialization: '#' header block, then one row per sampled time."""
    lines = ["# stability report"]
    lines.append(f"# window: {report.window[0]!r} {report.window[1]!r}")
    lines.append(f"# theta: {report.theta!r}")
    lines.append(f"# quad_error: {report.quad_error!r}")
    lines.append(f"# conclusion: {report.conclusion}")
    if report.eps_suggested is not None:
        lines.append(f"# eps_suggested: {report.eps_suggested!r}")
    c = report.constants
    for name in ("M1", "M2", "eta", "C3_tilde"):
        val = getattr(c, name)
        if val is not None:
            lines.append(f"# {name}: {val!r} ({c.provenance.get(name, 'config')})")
    if c.cq1_pairs:
        pairs = " ".join(f"({q!r},{cc!r})" for q, cc in c.cq1_pairs)
        lines.append(f"# cq1_pairs: {pairs}")
    for verdict in (report.h1_ok, report.h2_ok, report.h3_ok):
        lines.append(f"# {verdict.describe()}")
    for note in report.notes:
        lines.append(f"# note: {note}")
    lines.append("t,L1,L2,h")
    for t, l1, l2, h in zip(report.ts, report.L1_series, report.L2_series, report.h_series):
        lines.append(f"{float(t)!r},{float(l1)!r},{float(l2)!r},{float(h)!r}")
    return "\n".join(lines) + "\n"
