"""Explicit suboptimality constants and the endowment-level guarantees.

Acting on estimated drift parameters costs expected objective value.  The
loss admits closed-form bounds built from a ledger of explicit constants:
for known appreciation rate

    delta(x, T0) = Gamma * hbar1**gamma * x**gamma
                   * ((2*iota0)**gamma + wc_m) * eps(T0)**gamma,

and with the appreciation rate estimated as well

    delta2(x, T0) = x**gamma * (wGamma1 * eps1(T0)**gamma
                                + wGamma2 * eps(T0)**gamma),

where eps/eps1 are the estimator error bounds.  Every constant is evaluated
by its defining formula; sup-type quantities are taken as the maximum of
the solved-grid supremum and an analytic fallback so that domain truncation
can never make a constant too small (an undersized constant would void the
guarantee, an oversized one only loosens it).

The deviation of the resolved h under estimated drifts is measured in the
weighted metric

    rho_tilde(f, g) = sup exp(-kappa*(T-t)) |f-g| / (iota0 + |y|),

with kappa = Q_sup + zeta0 + 2*gamma + 1, and is bounded by
hbar2*|mu_err| + hbar1*|alpha_err|.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .estimate import epsilon1_bound, epsilon_bound
from .hjb import HjbSolution, r_star_bound
from .model import ModelParams, QBounds, params_to_mapping, parse_params

__all__ = [
    "ConstantsLedger",
    "h1_star",
    "ledger",
    "delta_known_mu",
    "delta_unknown_mu",
    "max_endowment",
    "rho_tilde_distance",
    "deviation_bound_h",
    "save_ledger",
    "load_ledger",
]


def h1_star(params: ModelParams, qb: QBounds) -> float:
    """Uniform bound on |dh/dy| for the fixed-point solution.

    (T*Q1 + Q1*T^2/q*) e^{Q_sup T}
        + (3/q*) sqrt(2|alpha_lo| / (beta^2 (1 - e^{2 alpha_lo}))) e^{Q_sup T} T,

    with T the trading-window length; the square root is evaluated at the
    steep end of the drift interval, where it is largest.
    """
    t = params.t_tail
    q1, q_sup = qb.q_deriv_sup, qb.q_star_sup
    q_star = params.q_star
    a_lo = params.alpha_bounds[0]
    grow = math.exp(q_sup * t)
    smooth = (t * q1 + q1 * t * t / q_star) * grow
    kernel = (3.0 / q_star) * math.sqrt(
        2.0 * abs(a_lo) / (params.beta**2 * (1.0 - math.exp(2.0 * a_lo)))
    )
    return smooth + kernel * grow * t


@dataclass(frozen=True)
class ConstantsLedger:
    """Every explicit constant of the suboptimality bounds, with provenance.

    ``branches`` records, for each sup-backed entry, whether the grid
    supremum or the analytic fallback supplied the value.
    """

    params: ModelParams
    zeta0: float
    m: int
    iota0: float
    r_star: float
    kappa: float
    q_star_sup: float
    q_deriv_sup: float
    h1_star: float
    a_plus: float
    b_plus: float
    c0: float
    wd: float
    wc: float
    hbar1: float
    hbar2: float
    gamma_const: float
    k1: float
    k2: float
    kp1: float
    kp2: float
    k3: float
    k4: float
    k5: float
    k6: float
    k7: float
    gamma1: float
    gamma2: float
    wcm: float
    w_gamma1: float
    w_gamma2: float
    gamma_vs_k1k2_gap: float
    branches: dict

    def m_tilde(self, y) -> NDArray | float:
        """Mean-level envelope iota0 + |y| of the factor from level y."""
        return self.iota0 + np.abs(y)

    def nu(self, s: float, t: float, alpha: float | None = None) -> float:
        """Transition standard deviation of the factor over [t, s]."""
        a = self.params.alpha if alpha is None else alpha
        return self.params.beta * math.sqrt(
            (1.0 - math.exp(2.0 * a * (s - t))) / (2.0 * abs(a))
        )

    def entries(self) -> list[dict]:
        """Serializable per-constant records {name, value, formula_ref, branch}."""
        rows = []
        for name, formula in _FORMULAS.items():
            rows.append(
                {
                    "name": name,
                    "value": getattr(self, name),
                    "formula_ref": formula,
                    "branch": self.branches.get(name, "formula"),
                }
            )
        return rows


_FORMULAS = {
    "iota0": "beta / sqrt(2*|alpha_hi|)",
    "r_star": "(T+1) * exp(Qsup*T)",
    "kappa": "Qsup + zeta0 + 2*gamma + 1",
    "q_star_sup": "gamma*(r + (mu-r)^2 / (2*(1-gamma)*sigma_min^2))",
    "q_deriv_sup": "sup |dQ/dy| (dense scan, +5%)",
    "h1_star": "(T*Q1 + Q1*T^2/q*)e^{Qsup T} + (3/q*)sqrt(2|a_lo|/(beta^2(1-e^{2 a_lo})))e^{Qsup T}T",
    "a_plus": "sup drift coefficient of estimated wealth",
    "b_plus": "sup |volatility coefficient| of estimated wealth",
    "c0": "2*sup(a^2 + b^2)",
    "wd": "wd^2 = 4*exp(2T*(a_plus + b_plus^2))",
    "wc": "4*T*exp(c0*T)*wd^2",
    "hbar1": "((1+2g+z0)/(1+z0)) * (T/|alpha_hi|) * (2*Q1*T + g*h1_star)",
    "hbar2": "g*(mu_hi+r)/((1-g)*sigma_min^2) * 2*T^2/iota0",
    "gamma_const": "(q*T*wd^g + (T+1)*sqrt(wc*q*)^g) * exp(g*kappa*T)/kappa^g",
    "k1": "sqrt(wc*q*)^g * exp(g*kappa*T)/kappa^g",
    "k2": "(T*sqrt(wc*q*)^g + wd^g*q*T) * exp(g*kappa*T)/kappa^g",
    "kp1": "2*sqrt(wc*T) * (2*mu_hi + r + sigma_min)/(sigma_min^2*(1-g))",
    "kp2": "exp(kappa*T)/kappa",
    "k3": "kp1^g + (sqrt(2*wc*q*)*kp2*hbar2)^g",
    "k4": "(sqrt(2*wc*q*)*kp2*hbar1)^g",
    "k5": "T*kp1^g + k7*(kp2*hbar2)^g",
    "k6": "k7*(kp2*hbar1)^g",
    "k7": "sqrt(2*wc*q*) + q*wd^g",
    "gamma1": "k3 + k5",
    "gamma2": "k4 + k6",
    "wcm": "((2m-1)!! * beta^(2m) / (2|alpha_hi|)^m)^(g/(2m))",
    "w_gamma1": "gamma1 * (3*iota0^g + |y0|^g)",
    "w_gamma2": "gamma2 * ((2*iota0)^g + wcm)",
    "gamma_vs_k1k2_gap": "gamma_const - (k1 + k2)",
}


def ledger(
    params: ModelParams,
    solution: HjbSolution,
    zeta0: float = 1.0,
    m: int = 3,
) -> ConstantsLedger:
    """Evaluate every bound constant for ``params`` and its solved h.

    ``solution`` must have been solved under ``params``; the grid suprema of
    the wealth coefficients are taken from it, each compared against its
    analytic fallback with the larger value retained (branch recorded).
    ``zeta0`` is the free metric parameter, ``m`` the moment order of the
    factor-level envelope.
    """
    if solution.params_key != params.key():
        raise ValueError("solution was not solved under these parameters")
    if zeta0 <= 0.0:
        raise ValueError(f"zeta0 must be positive, got {zeta0}")
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")

    g = params.gamma
    q_star = params.q_star
    t = params.t_tail
    r = params.r
    sig1 = params.vol.sigma_min
    mu_hi = params.mu_bounds[1]
    a_hi = params.alpha_bounds[1]
    beta = params.beta

    qb = solution.q_bounds
    q_sup, q1 = qb.q_star_sup, qb.q_deriv_sup
    iota0 = beta / math.sqrt(2.0 * abs(a_hi))
    kappa = q_sup + zeta0 + 2.0 * g + 1.0
    h1 = h1_star(params, qb)

    # Wealth-coefficient suprema: grid values vs analytic fallbacks.
    theta_grid = (solution.mu - r) / np.asarray(params.vol.evaluate(solution.y_nodes))
    b_grid = theta_grid / (1.0 - g)
    a_grid = theta_grid * b_grid + r - np.power(solution.h_grid, -q_star)
    branches: dict[str, str] = {}

    a_plus_grid = float(np.max(a_grid))
    a_plus_fallback = (mu_hi - r) ** 2 / ((1.0 - g) * sig1**2) + r
    a_plus = max(a_plus_grid, a_plus_fallback)
    branches["a_plus"] = "grid" if a_plus_grid >= a_plus_fallback else "analytic"

    b_plus_grid = float(np.max(np.abs(b_grid)))
    b_plus_fallback = (mu_hi - r) / ((1.0 - g) * sig1)
    b_plus = max(b_plus_grid, b_plus_fallback)
    branches["b_plus"] = "grid" if b_plus_grid >= b_plus_fallback else "analytic"

    c0_grid = 2.0 * float(np.max(a_grid**2 + (b_grid**2)[None, :]))
    a_abs_fallback = (mu_hi - r) ** 2 / ((1.0 - g) * sig1**2) + r + 1.0
    c0_fallback = 2.0 * (a_abs_fallback**2 + b_plus_fallback**2)
    c0 = max(c0_grid, c0_fallback)
    branches["c0"] = "grid" if c0_grid >= c0_fallback else "analytic"

    wd = 2.0 * math.exp(t * (a_plus + b_plus**2))
    wc = 4.0 * t * math.exp(c0 * t) * wd**2

    hbar1 = ((1.0 + 2.0 * g + zeta0) / (1.0 + zeta0)) * (t / abs(a_hi)) * (
        2.0 * q1 * t + g * h1
    )
    hbar2 = g * (mu_hi + r) / ((1.0 - g) * sig1**2) * 2.0 * t * t / iota0

    grow = math.exp(g * kappa * t) / kappa**g
    root_wcq = math.sqrt(wc * q_star)
    gamma_const = (q_star * t * wd**g + (t + 1.0) * root_wcq**g) * grow
    k1 = root_wcq**g * grow
    k2 = (t * root_wcq**g + wd**g * q_star * t) * grow

    kp1 = 2.0 * math.sqrt(wc * t) * (2.0 * mu_hi + r + sig1) / (sig1**2 * (1.0 - g))
    kp2 = math.exp(kappa * t) / kappa
    root_2wcq = math.sqrt(2.0 * wc * q_star)
    k7 = root_2wcq + q_star * wd**g
    k3 = kp1**g + (root_2wcq * kp2 * hbar2) ** g
    k4 = (root_2wcq * kp2 * hbar1) ** g
    k5 = t * kp1**g + k7 * (kp2 * hbar2) ** g
    k6 = k7 * (kp2 * hbar1) ** g
    gamma1 = k3 + k5
    gamma2 = k4 + k6

    double_fact = float(np.prod(np.arange(2 * m - 1, 0, -2)))
    wcm = (double_fact * beta ** (2 * m) / (2.0 * abs(a_hi)) ** m) ** (g / (2.0 * m))
    w_gamma1 = gamma1 * (3.0 * iota0**g + abs(params.y0) ** g)
    w_gamma2 = gamma2 * ((2.0 * iota0) ** g + wcm)

    return ConstantsLedger(
        params=params,
        zeta0=zeta0,
        m=m,
        iota0=iota0,
        r_star=r_star_bound(q_sup, t),
        kappa=kappa,
        q_star_sup=q_sup,
        q_deriv_sup=q1,
        h1_star=h1,
        a_plus=a_plus,
        b_plus=b_plus,
        c0=c0,
        wd=wd,
        wc=wc,
        hbar1=hbar1,
        hbar2=hbar2,
        gamma_const=gamma_const,
        k1=k1,
        k2=k2,
        kp1=kp1,
        kp2=kp2,
        k3=k3,
        k4=k4,
        k5=k5,
        k6=k6,
        k7=k7,
        gamma1=gamma1,
        gamma2=gamma2,
        wcm=wcm,
        w_gamma1=w_gamma1,
        w_gamma2=w_gamma2,
        gamma_vs_k1k2_gap=gamma_const - (k1 + k2),
        branches=branches,
    )


def delta_known_mu(led: ConstantsLedger, x: float, t0: float | None = None) -> float:
    """Suboptimality bound with the appreciation rate known.

    Increasing in x (power gamma) and decreasing in the observation window
    through the estimator bound.  The window length of the bound constants
    is the ledger's own.
    """
    if x <= 0.0:
        raise ValueError(f"x must be positive, got {x}")
    g = led.params.gamma
    eps = epsilon_bound(led.params, t0=t0)
    return (
        led.gamma_const
        * led.hbar1**g
        * x**g
        * ((2.0 * led.iota0) ** g + led.wcm)
        * eps**g
    )


def delta_unknown_mu(led: ConstantsLedger, x: float, t0: float | None = None) -> float:
    """Suboptimality bound with both drift parameters estimated."""
    if x <= 0.0:
        raise ValueError(f"x must be positive, got {x}")
    g = led.params.gamma
    eps = epsilon_bound(led.params, t0=t0)
    eps1 = epsilon1_bound(led.params, t0=t0)
    return x**g * (led.w_gamma1 * eps1**g + led.w_gamma2 * eps**g)


def max_endowment(
    led: ConstantsLedger,
    delta_target: float,
    t0: float | None = None,
    mode: str = "known",
) -> float:
    """Largest initial endowment whose suboptimality bound is ``delta_target``.

    Inverts the x**gamma homogeneity of the selected bound; exact round
    trip by construction.
    """
    if delta_target <= 0.0:
        raise ValueError(f"delta_target must be positive, got {delta_target}")
    if mode == "known":
        unit = delta_known_mu(led, 1.0, t0=t0)
    elif mode == "unknown":
        unit = delta_unknown_mu(led, 1.0, t0=t0)
    else:
        raise ValueError(f"mode must be 'known' or 'unknown', got {mode!r}")
    return (delta_target / unit) ** (1.0 / led.params.gamma)


def rho_tilde_distance(
    f_grid: NDArray,
    g_grid: NDArray,
    led: ConstantsLedger,
    t_nodes: NDArray,
    y_nodes: NDArray,
) -> float:
    """Level-weighted sup distance sup e^{-kappa(T-t)} |f-g|/(iota0+|y|)."""
    f_grid = np.asarray(f_grid, dtype=float)
    g_grid = np.asarray(g_grid, dtype=float)
    if f_grid.shape != g_grid.shape:
        raise ValueError(f"grid shapes differ: {f_grid.shape} vs {g_grid.shape}")
    t_nodes = np.asarray(t_nodes, dtype=float)
    y_nodes = np.asarray(y_nodes, dtype=float)
    if f_grid.shape != (t_nodes.size, y_nodes.size):
        raise ValueError("grids do not match the supplied axes")
    tw = np.exp(-led.kappa * (t_nodes[-1] - t_nodes))
    yw = led.iota0 + np.abs(y_nodes)
    return float(np.max(tw[:, None] * np.abs(f_grid - g_grid) / yw[None, :]))


def deviation_bound_h(led: ConstantsLedger, alpha_err: float, mu_err: float = 0.0) -> float:
    """Bound on the rho_tilde distance between resolved and true h."""
    if alpha_err < 0.0 or mu_err < 0.0:
        raise ValueError("errors must be nonnegative")
    return led.hbar2 * mu_err + led.hbar1 * alpha_err


def save_ledger(led: ConstantsLedger, path) -> None:
    """JSON dump: per-entry records plus the generating parameters."""
    payload = {
        "format": 1,
        "zeta0": led.zeta0,
        "m": led.m,
        "params": params_to_mapping(led.params),
        "entries": led.entries(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_ledger(path) -> dict:
    """Load a ledger dump; returns the raw payload (values round-trip exactly)."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    payload["params_obj"] = parse_params(payload["params"])
    return payload
