"""One-step integrators for split-drift SDEs, with and without taming.

Five explicit schemes over a uniform grid of step ``h``, all driven by
pre-generated Brownian increments (step functions are pure and never draw
randomness):

``em``
    Euler-Maruyama, ``x + f(x) h + g(x) dW`` with the composed drift
    ``f = phi + varphi``. Diverges on superlinear drifts.
``tamed-euler``
    Euler with the whole drift tamed: ``x + tame(f(x), h) h + g(x) dW``.
``semi-tamed-euler``
    Euler with only the one-sided part tamed:
    ``x + phi(x) h + tame(varphi(x), h) h + g(x) dW``.
``tamed-milstein``
    Tamed Euler plus the commutative Milstein correction.
``semi-tamed-milstein``
    Semi-tamed Euler plus the commutative Milstein correction; first
    strong order on commutative noise while keeping the regular drift
    part untamed.

``tame(v, h) = v / (1 + h ||v||)`` caps the magnitude of a tamed drift
contribution ``tame(v, h) * h`` strictly below one regardless of ``v``.

The Milstein correction uses the symmetric product form

    1/2 sum_{j1, j2} (L^j1 g_j2)(x) (dW_j1 dW_j2 - delta_{j1 j2} h),

grouped over unordered pairs, which is valid only when the noise
commutes; ``integrate`` refuses Milstein variants on multi-noise problems
that fail the commutativity check unless explicitly overridden.

All step functions broadcast: ``x`` may be ``(d,)`` or ``(batch, d)``
with ``dW`` shaped ``(m,)`` or ``(batch, m)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .model import (
    SdeProblem,
    check_commutativity,
    levy_product_coefficient,
)
from .paths import PathBundle

__all__ = [
    "SchemeKind",
    "Trajectory",
    "tame",
    "milstein_correction",
    "step_euler_maruyama",
    "step_tamed_euler",
    "step_semi_tamed_euler",
    "step_tamed_milstein",
    "step_semi_tamed_milstein",
    "step_function",
    "require_supported",
    "integrate",
]


class SchemeKind(enum.Enum):
    """The five supported schemes; values are the stable CLI names."""

    EULER_MARUYAMA = "em"
    TAMED_EULER = "tamed-euler"
    SEMI_TAMED_EULER = "semi-tamed-euler"
    TAMED_MILSTEIN = "tamed-milstein"
    SEMI_TAMED_MILSTEIN = "semi-tamed-milstein"

    @classmethod
    def from_name(cls, name: "str | SchemeKind") -> "SchemeKind":
        if isinstance(name, cls):
            return name
        try:
            return cls(name)
        except ValueError:
            valid = ", ".join(kind.value for kind in cls)
            raise ValueError(f"unknown scheme {name!r}; valid names: {valid}") from None

    @property
    def is_milstein(self) -> bool:
        return self in (SchemeKind.TAMED_MILSTEIN, SchemeKind.SEMI_TAMED_MILSTEIN)


def tame(v: np.ndarray, h: float) -> np.ndarray:
    """Damp a drift vector: ``v / (1 + h ||v||)`` (Euclidean norm).

    Monotone in ``||v||`` and bounded: ``||tame(v, h)|| <= min(||v||, 1/h)``
    with strict inequality for ``v != 0, h > 0``, so the per-step tamed
    contribution ``tame(v, h) * h`` always has norm below one.
    """
    if h < 0:
        raise ValueError(f"h must be nonnegative, got {h}")
    v = np.asarray(v, dtype=np.float64)
    if v.ndim == 0:
        return v / (1.0 + h * np.abs(v))
    norm = np.sqrt(np.sum(v * v, axis=-1, keepdims=True))
    return v / (1.0 + h * norm)


def _diffusion_term(problem: SdeProblem, x: np.ndarray, dW: np.ndarray) -> np.ndarray:
    term = problem.diffusion_column(x, 0) * dW[..., 0:1]
    for j in range(1, problem.dim_noise):
        term = term + problem.diffusion_column(x, j) * dW[..., j : j + 1]
    return term


def milstein_correction(
    problem: SdeProblem, x: np.ndarray, dW: np.ndarray, h: float
) -> np.ndarray:
    """Commutative Milstein correction term at state ``x``.

    Computes ``1/2 sum_j (L^j g_j)(x) (dW_j^2 - h)`` plus one term per
    unordered pair ``j1 < j2`` of ``(L^j1 g_j2)(x) dW_j1 dW_j2`` (the
    ordered pair sum collapsed under commutativity).
    """
    x = np.asarray(x, dtype=np.float64)
    dW = np.asarray(dW, dtype=np.float64)
    corr = np.zeros_like(x)
    for j in range(problem.dim_noise):
        dw_j = dW[..., j : j + 1]
        coeff = levy_product_coefficient(problem, x, j, j)
        corr = corr + 0.5 * coeff * (dw_j * dw_j - h)
    for j1 in range(problem.dim_noise):
        for j2 in range(j1 + 1, problem.dim_noise):
            coeff = levy_product_coefficient(problem, x, j1, j2)
            corr = corr + coeff * (dW[..., j1 : j1 + 1] * dW[..., j2 : j2 + 1])
    return corr


def step_euler_maruyama(problem, x, dW, h):
    """x + f(x) h + g(x) dW with the composed drift f = phi + varphi."""
    x = np.asarray(x, dtype=np.float64)
    dW = np.asarray(dW, dtype=np.float64)
    drift = problem.phi(x) + problem.varphi(x)
    return x + drift * h + _diffusion_term(problem, x, dW)


def step_tamed_euler(problem, x, dW, h):
    """Euler step with the whole drift tamed."""
    x = np.asarray(x, dtype=np.float64)
    dW = np.asarray(dW, dtype=np.float64)
    drift = problem.phi(x) + problem.varphi(x)
    return x + tame(drift, h) * h + _diffusion_term(problem, x, dW)


def step_semi_tamed_euler(problem, x, dW, h):
    """Euler step taming only the one-sided drift part."""
    x = np.asarray(x, dtype=np.float64)
    dW = np.asarray(dW, dtype=np.float64)
    return (
        x
        + problem.phi(x) * h
        + tame(problem.varphi(x), h) * h
        + _diffusion_term(problem, x, dW)
    )


def step_tamed_milstein(problem, x, dW, h):
    """Tamed Euler step plus the commutative Milstein correction."""
    x = np.asarray(x, dtype=np.float64)
    dW = np.asarray(dW, dtype=np.float64)
    drift = problem.phi(x) + problem.varphi(x)
    return (
        x
        + tame(drift, h) * h
        + _diffusion_term(problem, x, dW)
        + milstein_correction(problem, x, dW, h)
    )


def step_semi_tamed_milstein(problem, x, dW, h):
    """Semi-tamed Euler step plus the commutative Milstein correction."""
    x = np.asarray(x, dtype=np.float64)
    dW = np.asarray(dW, dtype=np.float64)
    return (
        x
        + problem.phi(x) * h
        + tame(problem.varphi(x), h) * h
        + _diffusion_term(problem, x, dW)
        + milstein_correction(problem, x, dW, h)
    )


_STEP_FUNCTIONS = {
    SchemeKind.EULER_MARUYAMA: step_euler_maruyama,
    SchemeKind.TAMED_EULER: step_tamed_euler,
    SchemeKind.SEMI_TAMED_EULER: step_semi_tamed_euler,
    SchemeKind.TAMED_MILSTEIN: step_tamed_milstein,
    SchemeKind.SEMI_TAMED_MILSTEIN: step_semi_tamed_milstein,
}


def step_function(scheme: "str | SchemeKind"):
    """The pure one-step map for a scheme (problem, x, dW, h) -> x_next."""
    return _STEP_FUNCTIONS[SchemeKind.from_name(scheme)]


def _default_check_points(problem: SdeProblem, count: int = 16) -> np.ndarray:
    # Deterministic cloud around the initial state, scaled to its size.
    rng = np.random.default_rng(12345)
    scale = 1.0 + float(np.sqrt(np.sum(problem.initial_value**2)))
    offsets = rng.standard_normal((count, problem.dim_state))
    return problem.initial_value[None, :] + scale * offsets


def require_supported(
    problem: SdeProblem,
    scheme: "str | SchemeKind",
    allow_noncommutative: bool = False,
) -> SchemeKind:
    """Validate that ``scheme`` may be applied to ``problem``.

    Milstein variants demand commutative noise: multi-noise problems must
    either declare ``commutative=True``, pass the sampled numerical check,
    or be forced through with ``allow_noncommutative=True``.
    """
    scheme = SchemeKind.from_name(scheme)
    if not scheme.is_milstein or allow_noncommutative:
        return scheme
    if problem.commutative is True:
        return scheme
    if problem.commutative is False:
        raise ValueError(
            f"problem {problem.label!r} declares non-commutative noise; "
            f"{scheme.value} requires commutative noise "
            "(pass allow_noncommutative=True to override)"
        )
    report = check_commutativity(problem, _default_check_points(problem))
    if not report.passed:
        raise ValueError(
            f"problem {problem.label!r} fails the commutativity check "
            f"(max violation {report.max_violation:.3e} > tolerance "
            f"{report.tolerance:.3e}); {scheme.value} requires commutative "
            "noise (pass allow_noncommutative=True to override)"
        )
    return scheme


@dataclass(frozen=True)
class Trajectory:
    """One integrated path on a uniform grid.

    ``states[k]`` is the state at ``times[k]``. After a blow-up (first
    non-finite state) every remaining row holds the NaN sentinel and
    ``blew_up`` is set. With ``record_full=False`` only the first and
    last gridpoints are kept.
    """

    times: np.ndarray
    states: np.ndarray
    blew_up: bool
    step: float

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]


def integrate(
    problem: SdeProblem,
    scheme: "str | SchemeKind",
    bundle: PathBundle,
    record_full: bool = True,
    allow_noncommutative: bool = False,
) -> Trajectory:
    """Apply a scheme along one increment bundle.

    Steps ``N = bundle.steps_fine`` times with ``h = bundle.horizon / N``.
    Blow-up is flagged, not raised: the first non-finite state marks the
    trajectory and the remaining grid rows are left as NaN sentinels.

    Raises
    ------
    ValueError
        If the bundle's noise dimension does not match the problem's, or
        a Milstein variant is requested for noise that is not known to
        commute (see :func:`require_supported`).
    """
    scheme = require_supported(problem, scheme, allow_noncommutative)
    if bundle.dim_noise != problem.dim_noise:
        raise ValueError(
            f"bundle has dim_noise={bundle.dim_noise} but problem "
            f"{problem.label!r} has dim_noise={problem.dim_noise}"
        )
    n_steps = bundle.steps_fine
    h = bundle.horizon / n_steps
    step_fn = _STEP_FUNCTIONS[scheme]

    x = problem.initial_value.copy()
    if record_full:
        states = np.full((n_steps + 1, problem.dim_state), np.nan)
        times = np.arange(n_steps + 1) * h
    else:
        states = np.full((2, problem.dim_state), np.nan)
        times = np.array([0.0, n_steps * h])
    states[0] = x

    blew_up = False
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(n_steps):
            x = step_fn(problem, x, bundle.increments[n], h)
            if not np.all(np.isfinite(x)):
                blew_up = True
                break
            if record_full:
                states[n + 1] = x
    if not blew_up and not record_full:
        states[1] = x
    return Trajectory(times=times, states=states, blew_up=blew_up, step=h)
