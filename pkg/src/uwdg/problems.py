"""Built-in test functions and evolution problems.

Projection studies use stationary test functions; evolution studies use
problems with a known exact solution (or a reference profile for the soliton
collision, whose superposed-wave form is exact only up to exponentially small
interaction terms away from the collision).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError
from .operator import NonlinearTerm
from .projection import SmoothFunction

__all__ = ["BuiltinProblem", "get_problem", "get_test_function", "PROBLEMS", "TEST_FUNCTIONS"]


def _plane(amplitude: float, c: float, omega: float):
    def u(x, t):
        return amplitude * np.exp(1j * (c * x - omega * t))

    def ux(x, t):
        return 1j * c * u(x, t)

    return u, ux


@dataclass(frozen=True)
class BuiltinProblem:
    """An evolution problem i u_t + u_xx + f(|u|^2) u = 0 with reference data.

    ``exact``/``exact_x`` take (x, t).  For the soliton collision they give
    the superposed two-wave profile, exact at t=0 and asymptotically for
    well-separated waves.
    """

    id: str
    domain: tuple[float, float]
    nonlinearity: NonlinearTerm
    exact: Callable
    exact_x: Callable
    exact_is_solution: bool = True
    notes: str = ""

    def at_time(self, t: float) -> SmoothFunction:
        return SmoothFunction(
            lambda x, t=t: self.exact(x, t), lambda x, t=t: self.exact_x(x, t)
        )

    def initial_condition(self) -> SmoothFunction:
        return self.at_time(0.0)

    def pde_residual(self, n: int = 24, t: float = 0.37, seed: int = 5) -> float:
        """Max pointwise residual of i u_t + u_xx + f(|u|^2) u at random
        points, by central differences on the exact solution."""
        rng = np.random.default_rng(seed)
        a, b = self.domain
        x = rng.uniform(a + 0.1 * (b - a), b - 0.1 * (b - a), n)
        eps = 1e-5
        ut = (self.exact(x, t + eps) - self.exact(x, t - eps)) / (2 * eps)
        uxx = (self.exact_x(x + eps, t) - self.exact_x(x - eps, t)) / (2 * eps)
        u = self.exact(x, t)
        res = 1j * ut + uxx + self.nonlinearity.f(np.abs(u) ** 2) * u
        return float(np.abs(res).max())


def _linear_plane_wave() -> BuiltinProblem:
    u, ux = _plane(1.0, 1.0, 1.0)
    return BuiltinProblem(
        id="plane_linear",
        domain=(0.0, 2 * np.pi),
        nonlinearity=NonlinearTerm(lambda s: np.zeros_like(np.asarray(s)), "0"),
        exact=u,
        exact_x=ux,
        notes="free equation, u = exp(i(x - t))",
    )


def _cubic_quintic_plane_wave() -> BuiltinProblem:
    # omega = c^2 - |A|^2 - |A|^4 with c = A = 1
    u, ux = _plane(1.0, 1.0, -1.0)
    return BuiltinProblem(
        id="plane_cubic_quintic",
        domain=(0.0, 2 * np.pi),
        nonlinearity=NonlinearTerm(lambda s: s + s**2, "s + s^2"),
        exact=u,
        exact_x=ux,
        notes="progressive wave of the cubic-quintic equation",
    )


def _soliton_collision() -> BuiltinProblem:
    def sech(z):
        return 1.0 / np.cosh(z)

    def u(x, t):
        left = sech(x + 10 - 4 * t) * np.exp(1j * (2 * (x + 10) - 3 * t))
        right = sech(x - 10 + 4 * t) * np.exp(1j * (-2 * (x - 10) - 3 * t))
        return left + right

    def ux(x, t):
        z1 = x + 10 - 4 * t
        z2 = x - 10 + 4 * t
        e1 = np.exp(1j * (2 * (x + 10) - 3 * t))
        e2 = np.exp(1j * (-2 * (x - 10) - 3 * t))
        d1 = (-np.tanh(z1) + 2j) * sech(z1) * e1
        d2 = (-np.tanh(z2) - 2j) * sech(z2) * e2
        return d1 + d2

    return BuiltinProblem(
        id="soliton",
        domain=(-25.0, 25.0),
        nonlinearity=NonlinearTerm(lambda s: 2.0 * s, "2 s"),
        exact=u,
        exact_x=ux,
        exact_is_solution=False,
        notes="two counter-propagating unit solitons colliding at t = 2.5",
    )


PROBLEMS: dict[str, Callable[[], BuiltinProblem]] = {
    "plane_linear": _linear_plane_wave,
    "plane_cubic_quintic": _cubic_quintic_plane_wave,
    "soliton": _soliton_collision,
}

TEST_FUNCTIONS: dict[str, Callable[[], SmoothFunction]] = {
    "cos": lambda: SmoothFunction(np.cos, lambda x: -np.sin(x)),
    "expcos": lambda: SmoothFunction(
        lambda x: np.exp(np.cos(x)), lambda x: -np.sin(x) * np.exp(np.cos(x))
    ),
}


def get_problem(name: str) -> BuiltinProblem:
    try:
        return PROBLEMS[name]()
    except KeyError:
        raise ConfigError(f"unknown problem {name!r}; choices: {sorted(PROBLEMS)}") from None


def get_test_function(name: str) -> SmoothFunction:
    try:
        return TEST_FUNCTIONS[name]()
    except KeyError:
        raise ConfigError(
            f"unknown test function {name!r}; choices: {sorted(TEST_FUNCTIONS)}"
        ) from None
