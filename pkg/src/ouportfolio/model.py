"""Market, factor, and utility parameters with derived scalar functions.

The market has one riskless account at rate ``r`` and one stock whose
volatility is a bounded function sigma(y) of an Ornstein-Uhlenbeck factor
``dY = alpha*Y dt + beta dU`` with ``alpha < 0``.  The agent maximizes power
utility ``x**gamma`` of consumption plus terminal wealth on ``[t0, horizon]``.

Derived quantities used throughout:

    theta(y) = (mu - r) / sigma(y)                      risk premium
    Q(y)     = gamma * (r + theta(y)**2 / (2*(1-gamma)))
    q_star   = 1 / (1 - gamma)

All containers are frozen dataclasses validated eagerly at construction and
safe to share across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from numpy.typing import NDArray

__all__ = [
    "ConfigError",
    "VolatilitySpec",
    "ModelParams",
    "QBounds",
    "risk_premium",
    "q_function",
    "q_bounds",
    "load_params",
    "parse_params",
    "params_to_mapping",
    "PARAM_KEYS",
]


class ConfigError(ValueError):
    """Invalid parameter value or malformed config input."""


_FD_SAMPLE = np.linspace(-10.0, 10.0, 81)
_FD_EPS = 1e-6
_FD_TOL = 1e-5


@dataclass(frozen=True)
class VolatilitySpec:
    """Stock volatility as a function of the factor level.

    ``evaluate`` and ``derivative`` must accept scalars or arrays and be
    vectorized.  ``sigma_min``/``sigma_max`` are the global bounds
    ``0 < sigma_min <= sigma(y) <= sigma_max``; user-defined specs must
    supply them explicitly, they are not inferred.
    """

    evaluate: Callable[[NDArray | float], NDArray | float]
    derivative: Callable[[NDArray | float], NDArray | float]
    sigma_min: float
    sigma_max: float
    name: str = "custom"
    params: tuple[float, ...] = ()

    def __post_init__(self):
        if not (0.0 < self.sigma_min <= self.sigma_max):
            raise ConfigError(
                f"volatility bounds must satisfy 0 < sigma_min <= sigma_max, "
                f"got ({self.sigma_min}, {self.sigma_max})"
            )
        vals = np.asarray(self.evaluate(_FD_SAMPLE), dtype=float)
        if vals.shape != _FD_SAMPLE.shape:
            raise ConfigError("volatility evaluate() must be vectorized")
        if np.any(vals < self.sigma_min - 1e-12) or np.any(vals > self.sigma_max + 1e-12):
            raise ConfigError(
                f"sigma(y) leaves [{self.sigma_min}, {self.sigma_max}] on sample grid"
            )
        fd = (
            np.asarray(self.evaluate(_FD_SAMPLE + _FD_EPS))
            - np.asarray(self.evaluate(_FD_SAMPLE - _FD_EPS))
        ) / (2.0 * _FD_EPS)
        an = np.asarray(self.derivative(_FD_SAMPLE), dtype=float)
        err = float(np.max(np.abs(fd - an)))
        if err > _FD_TOL:
            raise ConfigError(
                f"volatility derivative inconsistent with finite differences "
                f"(max error {err:.3e} > {_FD_TOL:g})"
            )

    @staticmethod
    def constant(level: float) -> "VolatilitySpec":
        lev = float(level)
        return VolatilitySpec(
            evaluate=lambda y: np.full_like(np.asarray(y, dtype=float), lev),
            derivative=lambda y: np.zeros_like(np.asarray(y, dtype=float)),
            sigma_min=lev,
            sigma_max=lev,
            name="constant",
            params=(lev,),
        )

    @staticmethod
    def sin_squared(base: float = 0.5, amplitude: float = 1.0) -> "VolatilitySpec":
        """sigma(y) = base + amplitude * sin(y)**2."""
        b, a = float(base), float(amplitude)
        return VolatilitySpec(
            evaluate=lambda y: b + a * np.sin(np.asarray(y, dtype=float)) ** 2,
            derivative=lambda y: a * np.sin(2.0 * np.asarray(y, dtype=float)),
            sigma_min=b,
            sigma_max=b + a,
            name="sin_squared",
            params=(b, a),
        )

    @staticmethod
    def logistic(lo: float, hi: float, slope: float = 1.0) -> "VolatilitySpec":
        """Monotone volatility rising from ``lo`` to ``hi`` with the factor."""
        lo_, hi_, k = float(lo), float(hi), float(slope)

        def _eval(y):
            z = np.asarray(y, dtype=float)
            return lo_ + (hi_ - lo_) / (1.0 + np.exp(-k * z))

        def _deriv(y):
            z = np.asarray(y, dtype=float)
            e = np.exp(-k * z)
            return (hi_ - lo_) * k * e / (1.0 + e) ** 2

        return VolatilitySpec(
            evaluate=_eval,
            derivative=_deriv,
            sigma_min=lo_,
            sigma_max=hi_,
            name="logistic",
            params=(lo_, hi_, k),
        )


_VOL_FACTORIES = {
    "constant": VolatilitySpec.constant,
    "sin_squared": VolatilitySpec.sin_squared,
    "logistic": VolatilitySpec.logistic,
}


@dataclass(frozen=True)
class ModelParams:
    """Full parameter set of the market, the factor, and the objective.

    ``alpha_bounds = (alpha_lo, alpha_hi)`` is the prior interval
    ``[alpha_lo, alpha_hi]`` with ``alpha_lo <= alpha <= alpha_hi < 0``;
    ``mu_bounds = (mu_lo, mu_hi)`` likewise with ``0 < mu_lo``.  ``t0`` is
    the end of the observation window, ``horizon`` the terminal time.
    """

    r: float
    mu: float
    mu_bounds: tuple[float, float]
    alpha: float
    alpha_bounds: tuple[float, float]
    beta: float
    y0: float
    gamma: float
    t0: float
    horizon: float
    vol: VolatilitySpec = field(default_factory=lambda: VolatilitySpec.constant(0.5))

    def __post_init__(self):
        a_lo, a_hi = self.alpha_bounds
        if not (a_lo <= self.alpha <= a_hi < 0.0):
            raise ConfigError(
                f"alpha must satisfy alpha_lo <= alpha <= alpha_hi < 0, got "
                f"alpha={self.alpha}, bounds=({a_lo}, {a_hi})"
            )
        m_lo, m_hi = self.mu_bounds
        if not (0.0 < m_lo <= self.mu <= m_hi):
            raise ConfigError(
                f"mu must satisfy 0 < mu_lo <= mu <= mu_hi, got "
                f"mu={self.mu}, bounds=({m_lo}, {m_hi})"
            )
        if self.r < 0.0:
            raise ConfigError(f"r must be nonnegative, got {self.r}")
        if self.beta <= 0.0:
            raise ConfigError(f"beta must be positive, got {self.beta}")
        if not (0.0 < self.gamma < 1.0):
            raise ConfigError(f"gamma must lie in the open interval (0, 1), got {self.gamma}")
        if not (0.0 < self.t0 < self.horizon):
            raise ConfigError(
                f"times must satisfy 0 < t0 < horizon, got t0={self.t0}, "
                f"horizon={self.horizon}"
            )

    @property
    def q_star(self) -> float:
        """Conjugate utility exponent 1/(1-gamma), always > 1."""
        return 1.0 / (1.0 - self.gamma)

    @property
    def t_tail(self) -> float:
        """Length of the trading window, horizon - t0."""
        return self.horizon - self.t0

    def with_estimates(self, alpha: float | None = None, mu: float | None = None) -> "ModelParams":
        """Copy with the drift and/or appreciation rate replaced.

        Estimated values bypass the prior-interval checks: the appreciation
        rate estimator is unprojected and may leave ``mu_bounds``.
        """
        new = replace(self)
        if alpha is not None:
            if alpha >= 0.0:
                raise ConfigError(f"estimated alpha must be negative, got {alpha}")
            object.__setattr__(new, "alpha", float(alpha))
        if mu is not None:
            object.__setattr__(new, "mu", float(mu))
        return new

    def key(self) -> tuple:
        """Hashable identity used to match solutions to parameter sets."""
        return (
            self.r, self.mu, self.mu_bounds, self.alpha, self.alpha_bounds,
            self.beta, self.y0, self.gamma, self.t0, self.horizon,
            self.vol.name, self.vol.params,
        )


@dataclass(frozen=True)
class QBounds:
    """Upper bounds for Q(y) and |dQ/dy| over the working domain."""

    q_star_sup: float
    q_deriv_sup: float


def risk_premium(params: ModelParams, y: NDArray | float) -> NDArray | float:
    """Excess return per unit volatility, (mu - r)/sigma(y)."""
    return (params.mu - params.r) / params.vol.evaluate(y)


def q_function(params: ModelParams, y: NDArray | float) -> NDArray | float:
    """gamma * (r + theta(y)**2 / (2*(1-gamma)))."""
    th = risk_premium(params, y)
    return params.gamma * (params.r + th * th / (2.0 * (1.0 - params.gamma)))


def q_sup_analytic(params: ModelParams, mu: float | None = None) -> float:
    """Exact supremum of Q: theta**2 is maximized where sigma = sigma_min."""
    mu_eff = params.mu if mu is None else mu
    th2 = (mu_eff - params.r) ** 2 / params.vol.sigma_min**2
    return params.gamma * (params.r + th2 / (2.0 * (1.0 - params.gamma)))


def q_bounds(params: ModelParams, grid: NDArray, inflation: float = 1.05) -> QBounds:
    """Bounds for Q and its derivative on (a dense refinement of) ``grid``.

    The supremum of Q is analytic: Q decreases in sigma, so it is attained
    at sigma_min.  The derivative bound is numerical -- dense central
    differences inflated by ``inflation`` as a safety factor -- because no
    closed form is available for general sigma.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ConfigError("q_bounds requires a nonempty grid")
    q_sup = q_sup_analytic(params)
    if grid.size == 1:
        return QBounds(q_star_sup=q_sup, q_deriv_sup=0.0)
    dense = np.linspace(grid.min(), grid.max(), max(4001, 4 * grid.size))
    step = dense[1] - dense[0]
    qv = np.asarray(q_function(params, dense))
    deriv = np.abs(qv[2:] - qv[:-2]) / (2.0 * step)
    return QBounds(q_star_sup=float(q_sup), q_deriv_sup=float(inflation * deriv.max()))


# ---------------------------------------------------------------------------
# Flat key=value config files
# ---------------------------------------------------------------------------

PARAM_KEYS = (
    "r", "mu", "mu_lo", "mu_hi", "alpha", "alpha_lo", "alpha_hi",
    "beta", "y0", "gamma", "t0", "horizon", "vol.kind", "vol.params",
)

_FLOAT_KEYS = PARAM_KEYS[:12]


def parse_params(mapping: dict[str, str]) -> ModelParams:
    """Build ``ModelParams`` from a flat string mapping.

    Unknown keys are rejected by name; numbers use decimal notation with a
    dot separator regardless of locale.
    """
    for key in mapping:
        if key not in PARAM_KEYS:
            raise ConfigError(f"unknown config key: {key!r}")
    missing = [k for k in _FLOAT_KEYS if k not in mapping]
    if missing:
        raise ConfigError(f"missing config keys: {', '.join(missing)}")

    values: dict[str, float] = {}
    for key in _FLOAT_KEYS:
        raw = mapping[key]
        try:
            values[key] = float(raw)
        except ValueError:
            raise ConfigError(f"config key {key!r} is not a number: {raw!r}") from None

    kind = mapping.get("vol.kind", "constant").strip()
    factory = _VOL_FACTORIES.get(kind)
    if factory is None:
        raise ConfigError(
            f"unknown vol.kind {kind!r}; expected one of {sorted(_VOL_FACTORIES)}"
        )
    raw_vp = mapping.get("vol.params", "").strip()
    try:
        vol_args = tuple(float(tok) for tok in raw_vp.split(",") if tok.strip()) if raw_vp else ()
        vol = factory(*vol_args)
    except TypeError:
        raise ConfigError(
            f"vol.params {raw_vp!r} does not match the {kind!r} signature"
        ) from None

    return ModelParams(
        r=values["r"],
        mu=values["mu"],
        mu_bounds=(values["mu_lo"], values["mu_hi"]),
        alpha=values["alpha"],
        alpha_bounds=(values["alpha_lo"], values["alpha_hi"]),
        beta=values["beta"],
        y0=values["y0"],
        gamma=values["gamma"],
        t0=values["t0"],
        horizon=values["horizon"],
        vol=vol,
    )


def load_params(path, overrides: dict[str, str] | None = None) -> ModelParams:
    """Read a flat ``key = value`` config file, then apply overrides."""
    mapping: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {text!r}")
            key, _, val = text.partition("=")
            mapping[key.strip()] = val.strip()
    if overrides:
        mapping.update(overrides)
    return parse_params(mapping)


def params_to_mapping(params: ModelParams) -> dict[str, str]:
    """Inverse of ``parse_params`` (used by manifests)."""
    return {
        "r": repr(params.r),
        "mu": repr(params.mu),
        "mu_lo": repr(params.mu_bounds[0]),
        "mu_hi": repr(params.mu_bounds[1]),
        "alpha": repr(params.alpha),
        "alpha_lo": repr(params.alpha_bounds[0]),
        "alpha_hi": repr(params.alpha_bounds[1]),
        "beta": repr(params.beta),
        "y0": repr(params.y0),
        "gamma": repr(params.gamma),
        "t0": repr(params.t0),
        "horizon": repr(params.horizon),
        "vol.kind": params.vol.name,
        "vol.params": ",".join(repr(p) for p in params.vol.params),
    }
