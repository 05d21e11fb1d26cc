"""Sub-species Lotka-Volterra competition dynamics and their analytic oracles.

Every network with bandwidth requirement ``R`` competes as ``R`` identical
sub-species for ``capacity = N - n`` contested channels.  The per-sub-species
growth rate is

    delta = r * s * (1 - (s + alpha * siblings + alpha * foreign) / capacity)

where ``siblings`` is the summed share of the other sub-species of the same
network and ``foreign`` is the sanitized sum of every other network's share.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

__all__ = [
    "InsufficientChannelsError",
    "StabilityWarning",
    "CompetitionParams",
    "NetworkAllocState",
    "EquilibriumReport",
    "growth_delta",
    "step_network",
    "closed_form_equilibrium",
    "interior_fixed_point",
    "stability_eigenvalues",
    "predicted_convergence_time",
    "fairness_index",
]


class InsufficientChannelsError(ValueError):
    """Raised when fewer channels than networks are available (N < n)."""


class StabilityWarning(UserWarning):
    """Parameters lie outside the region where the iteration is known to settle."""


@dataclass(frozen=True)
class CompetitionParams:
    """Shared constants of the competition iteration.

    ``alpha`` and ``r`` outside ``(0, 1)`` and ``(0, 2)`` are accepted with a
    :class:`StabilityWarning` so that sweeps can probe unstable regions;
    non-positive values are rejected.
    """

    alpha: float = 0.9
    r: float = 1.95
    capacity: float = 0.0
    step: float = 1.0
    tolerance: float = 1e-6
    max_rounds: int = 10000

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.r > 0:
            raise ValueError(f"r must be positive, got {self.r}")
        if not self.capacity >= 0:
            raise ValueError(f"capacity must be non-negative, got {self.capacity}")
        if not self.step > 0:
            raise ValueError(f"step must be positive, got {self.step}")
        if not self.tolerance > 0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")
        if int(self.max_rounds) != self.max_rounds or self.max_rounds < 1:
            raise ValueError(f"max_rounds must be an integer >= 1, got {self.max_rounds}")
        if self.alpha >= 1:
            warnings.warn(
                f"alpha={self.alpha} >= 1: no stable interior equilibrium is guaranteed",
                StabilityWarning,
                stacklevel=3,
            )
        if self.r * self.step >= 2:
            warnings.warn(
                f"r*step={self.r * self.step} >= 2: the discrete map is not expected to converge",
                StabilityWarning,
                stacklevel=3,
            )

    @classmethod
    def for_channels(cls, n_channels: int, n_networks: int, **kwargs) -> "CompetitionParams":
        """Build parameters with ``capacity = n_channels - n_networks``."""
        if n_channels < n_networks:
            raise InsufficientChannelsError(
                f"insufficient channels: N={n_channels} < n={n_networks}"
            )
        return cls(capacity=float(n_channels - n_networks), **kwargs)


@dataclass(frozen=True)
class NetworkAllocState:
    """One network's requirement and the shares held by its sub-species."""

    network_id: str
    requirement: int
    sub_shares: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if int(self.requirement) != self.requirement or self.requirement < 1:
            raise ValueError(f"requirement must be a positive integer, got {self.requirement}")
        object.__setattr__(self, "sub_shares", tuple(float(s) for s in self.sub_shares))
        if len(self.sub_shares) != self.requirement:
            raise ValueError(
                f"network {self.network_id!r}: {len(self.sub_shares)} sub-shares "
                f"for requirement {self.requirement}"
            )
        if any(not s >= 0 for s in self.sub_shares):
            raise ValueError(f"network {self.network_id!r}: negative sub-share")

    @classmethod
    def seeded(cls, network_id: str, requirement: int, s0: float = 0.1) -> "NetworkAllocState":
        return cls(network_id, requirement, (s0,) * requirement)

    @property
    def total(self) -> float:
        return math.fsum(self.sub_shares)


@dataclass(frozen=True)
class EquilibriumReport:
    converged: bool
    rounds: int
    final_states: tuple[NetworkAllocState, ...]
    raw_totals: tuple[float, ...]
    normalized_totals: tuple[float, ...]

    def totals(self, share_mode: str = "normalized") -> tuple[float, ...]:
        if share_mode == "normalized":
            return self.normalized_totals
        if share_mode == "raw":
            return self.raw_totals
        raise ValueError(f"unknown share_mode {share_mode!r}")


def growth_delta(share: float, own_siblings_sum: float, foreign_sum: float,
                 params: CompetitionParams) -> float:
    """Rate of change of one sub-species' share."""
    if params.capacity <= 0:
        raise ValueError("growth_delta needs capacity > 0; handle N == n before iterating")
    crowding = share + params.alpha * own_siblings_sum + params.alpha * foreign_sum
    return params.r * share * (1.0 - crowding / params.capacity)


def step_network(state: NetworkAllocState, beta: float,
                 params: CompetitionParams) -> tuple[NetworkAllocState, float]:
    """Advance every sub-species of one network by a single synchronous step.

    Sibling sums are taken from the shares at the start of the step.  Updated
    shares are clamped at zero.  Returns the new state and the largest
    ``|delta|`` seen.
    """
    if not beta >= 0:
        raise ValueError(f"beta must be non-negative, got {beta}")
    shares = state.sub_shares
    own_total = math.fsum(shares)
    new_shares = []
    max_abs = 0.0
    for s in shares:
        d = growth_delta(s, own_total - s, beta, params)
        max_abs = max(max_abs, abs(d))
        new_shares.append(max(0.0, s + params.step * d))
    return NetworkAllocState(state.network_id, state.requirement, tuple(new_shares)), max_abs


def _check_requirements(requirements: Sequence[int], n_channels: int) -> None:
    if not requirements:
        raise ValueError("at least one network is required")
    if any(int(r) != r or r < 1 for r in requirements):
        raise ValueError("every requirement must be an integer >= 1")
    if n_channels < len(requirements):
        raise InsufficientChannelsError(
            f"insufficient channels: N={n_channels} < n={len(requirements)}"
        )


def closed_form_equilibrium(requirements: Sequence[int], n_channels: int) -> list[float]:
    """Weighted-fair split ``R_i * (N - n) / sum(R)``."""
    _check_requirements(requirements, n_channels)
    capacity = n_channels - len(requirements)
    total = sum(requirements)
    return [r * capacity / total for r in requirements]


def interior_fixed_point(requirements: Sequence[int], n_channels: int,
                         alpha: float) -> list[float]:
    """Exact rest point of the sub-species dynamics.

    Each of the ``l = sum(R)`` sub-species settles at
    ``s* = C / (1 + alpha * (l - 1))``, so network totals are ``R_i * s*``.
    This differs from :func:`closed_form_equilibrium` unless ``alpha == 1``,
    but the two are proportional.
    """
    _check_requirements(requirements, n_channels)
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    capacity = n_channels - len(requirements)
    l = sum(requirements)
    s_star = capacity / (1.0 + alpha * (l - 1))
    return [r * s_star for r in requirements]


def stability_eigenvalues(l: int, params: CompetitionParams) -> tuple[float, float]:
    """The two distinct eigenvalues of the linearised ``l``-sub-species system.

    Returns ``(lambda_major, lambda_minor)``; ``lambda_minor`` has
    multiplicity ``l - 1``.
    """
    if l < 1:
        raise ValueError(f"l must be >= 1, got {l}")
    r, alpha = params.r, params.alpha
    lambda_major = -r / l - (l - 1) * r * alpha / l
    lambda_minor = r * (alpha - 1) / l
    return lambda_major, lambda_minor


def predicted_convergence_time(s0: float, s_target: float, params: CompetitionParams,
                               l: int) -> float:
    """Logistic time for one sub-species to grow from ``s0`` to ``s_target``.

    Competitors are frozen at ``A = (l - 1) * s0``, which makes the growth a
    plain logistic curve with asymptote ``C - alpha * A``.
    """
    if l < 1:
        raise ValueError(f"l must be >= 1, got {l}")
    C = params.capacity
    A = (l - 1) * s0
    asymptote = C - params.alpha * A
    if not s0 > 0:
        raise ValueError(f"s0 must be positive, got {s0}")
    if s_target >= asymptote:
        raise ValueError(
            f"target beyond logistic asymptote: s_target={s_target} >= {asymptote}"
        )
    if s_target < s0:
        raise ValueError(f"s_target={s_target} is below s0={s0}")
    ratio = s_target * (asymptote - s0) / (s0 * (asymptote - s_target))
    return C / (params.r * asymptote) * math.log(ratio)


def fairness_index(shares: Sequence[float], requirements: Sequence[float]) -> float:
    """Weighted fairness ``(sum S)^2 / (sum R * sum R (S/R)^2)``, in ``(0, 1]``."""
    if len(shares) != len(requirements) or not shares:
        raise ValueError("shares and requirements must be non-empty and equally long")
    if any(not r > 0 for r in requirements):
        raise ValueError("requirements must be positive")
    num = math.fsum(shares) ** 2
    den = math.fsum(requirements) * math.fsum(s * s / r for s, r in zip(shares, requirements))
    if den == 0:
        raise ValueError("fairness undefined: all shares are zero")
    return num / den
