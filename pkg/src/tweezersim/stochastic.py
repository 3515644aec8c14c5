"""Random processes of the loading pipeline.

Covers one-body survival in the traps, transport success, collisional-blockade
extraction of single atoms from the reservoir, and reservoir depletion. All
draws go through an explicit :class:`RngStream` so ensembles are reproducible
replica by replica.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "RngStream",
    "LossModel",
    "TransportModel",
    "ExtractionModel",
    "ReservoirState",
    "survival_probability",
    "sample_survival",
    "sample_transport",
    "sample_extraction",
    "reservoir_decay",
]


class RngStream:
    """Deterministic pseudo-random stream keyed by (master seed, replica).

    Two streams built from the same pair produce bit-identical sequences;
    adding replicas never perturbs existing ones.
    """

    def __init__(self, master_seed: int, replica: int = 0):
        self.master_seed = int(master_seed)
        self.replica = int(replica)
        seq = np.random.SeedSequence((self.master_seed, self.replica))
        self._gen = np.random.Generator(np.random.PCG64(seq))

    def __repr__(self) -> str:
        return f"RngStream(master_seed={self.master_seed}, replica={self.replica})"

    def random(self) -> float:
        return float(self._gen.random())

    def bernoulli(self, p: float) -> bool:
        return self._gen.random() < p

    def poisson(self, mean: float) -> int:
        return int(self._gen.poisson(mean))

    def binomial(self, n: int, p: float) -> int:
        return int(self._gen.binomial(n, p))


def _check_probability(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must be within [0, 1], got {value}")


@dataclass
class LossModel:
    """One-body trap lifetimes in seconds; ``math.inf`` disables a channel."""

    lifetime_array: float = 10.0
    lifetime_reservoir: float = 5.0

    def __post_init__(self):
        if self.lifetime_array <= 0 or self.lifetime_reservoir <= 0:
            raise ValueError("lifetimes must be positive")


@dataclass
class TransportModel:
    """Single-atom transport: success probability and move timings."""

    p_success: float = 0.753
    t_ramp: float = 130e-6  # s, one intensity ramp; two per move
    t_move: float = 310e-6  # s, tweezer translation

    def __post_init__(self):
        _check_probability("p_success", self.p_success)
        if self.t_ramp < 0 or self.t_move < 0:
            raise ValueError("move durations must be nonnegative")

    @property
    def move_duration(self) -> float:
        """Full duration of one move: ramp up, translate, ramp down."""
        return 2.0 * self.t_ramp + self.t_move


@dataclass
class ExtractionModel:
    """Single-atom extraction from the reservoir via collisional blockade.

    An extraction pulls a small ensemble whose size is Poisson with mean
    ``mean_ensemble_at_full`` scaled by the reservoir fill fraction
    ``n / n_reference`` (capped at 1). Any nonempty ensemble yields one
    trapped atom with probability ``p_blockade``, so the delivery probability
    at full reservoir plateaus at ``p_blockade * (1 - exp(-mean))``.
    """

    p_blockade: float
    mean_ensemble_at_full: float
    n_reference: int

    def __post_init__(self):
        _check_probability("p_blockade", self.p_blockade)
        if self.mean_ensemble_at_full <= 0:
            raise ValueError("mean_ensemble_at_full must be positive")
        if self.n_reference <= 0:
            raise ValueError("n_reference must be positive")

    @classmethod
    def from_plateau(
        cls,
        plateau: float,
        mean_ensemble_at_full: float,
        n_reference: int,
        observation_survival: float = 1.0,
    ) -> "ExtractionModel":
        """Build a model whose saturated fill, as observed at the next image,
        equals ``plateau``.

        The plateau is a measured fill fraction, so it already folds in the
        decay between a refill and the image that reads it out. Pass that
        window's survival probability as ``observation_survival`` to invert
        it out; the default 1.0 treats the plateau as the bare delivery
        probability at full reservoir.
        """
        _check_probability("plateau", plateau)
        if not 0.0 < observation_survival <= 1.0:
            raise ValueError(
                f"observation_survival must be within (0, 1], got {observation_survival}"
            )
        saturation = 1.0 - math.exp(-mean_ensemble_at_full)
        p_blockade = plateau / (saturation * observation_survival)
        if p_blockade > 1.0:
            raise ValueError(
                f"plateau {plateau} unreachable with ensemble mean "
                f"{mean_ensemble_at_full} (requires p_blockade {p_blockade:.4g} > 1)"
            )
        return cls(p_blockade, mean_ensemble_at_full, n_reference)

    def delivery_probability(self, n_atoms: int) -> float:
        """Expected single-atom delivery probability at a given reservoir
        population (exact for the untruncated ensemble law)."""
        lam = self.mean_ensemble_at_full * min(1.0, n_atoms / self.n_reference)
        return self.p_blockade * (1.0 - math.exp(-lam))


@dataclass
class ReservoirState:
    """Current reservoir population and the optional refill hook.

    ``refill_rate`` (atoms/s) models continuous external reloading and
    defaults to off.
    """

    n_atoms: int
    refill_rate: float = 0.0

    def __post_init__(self):
        if self.n_atoms < 0:
            raise ValueError("reservoir population cannot be negative")
        if self.refill_rate < 0:
            raise ValueError("refill_rate must be nonnegative")


def survival_probability(dt: float, lifetime: float) -> float:
    """Probability that a trapped atom survives ``dt`` seconds,
    ``exp(-dt / lifetime)``."""
    if dt < 0:
        raise ValueError(f"dt must be nonnegative, got {dt}")
    if lifetime <= 0:
        raise ValueError(f"lifetime must be positive, got {lifetime}")
    return math.exp(-dt / lifetime)


def sample_survival(rng: RngStream, dt: float, lifetime: float) -> bool:
    """One Bernoulli survival draw over ``dt`` seconds."""
    return rng.bernoulli(survival_probability(dt, lifetime))


def sample_transport(rng: RngStream, model: TransportModel) -> bool:
    """Whether a single transport move delivers its atom."""
    return rng.bernoulli(model.p_success)


def sample_extraction(
    rng: RngStream, reservoir: ReservoirState, model: ExtractionModel
) -> tuple[int, bool]:
    """One extraction attempt into a single trap site.

    Draws the ensemble size, removes it from the reservoir, and reports
    ``(atoms_removed, single_atom_delivered)``. An empty reservoir yields
    ``(0, False)``.
    """
    if reservoir.n_atoms == 0:
        return 0, False
    lam = model.mean_ensemble_at_full * min(
        1.0, reservoir.n_atoms / model.n_reference
    )
    k = min(rng.poisson(lam), reservoir.n_atoms)
    reservoir.n_atoms -= k
    delivered = k >= 1 and rng.bernoulli(model.p_blockade)
    return k, delivered


def reservoir_decay(
    rng: RngStream, reservoir: ReservoirState, dt: float, loss: LossModel
) -> tuple[int, int]:
    """Binomial thinning of the reservoir over ``dt`` seconds, plus the
    stochastically rounded refill when a refill rate is configured.

    Mutates ``reservoir`` in place and returns ``(atoms_lost, atoms_added)``
    so callers can keep exact loss ledgers.
    """
    p = survival_probability(dt, loss.lifetime_reservoir)
    lost = 0
    if reservoir.n_atoms > 0 and p < 1.0:
        survivors = rng.binomial(reservoir.n_atoms, p)
        lost = reservoir.n_atoms - survivors
        reservoir.n_atoms = survivors
    added = 0
    if reservoir.refill_rate > 0.0 and dt > 0.0:
        mean = reservoir.refill_rate * dt
        whole = int(mean)
        frac = mean - whole
        added = whole + (1 if rng.bernoulli(frac) else 0)
        reservoir.n_atoms += added
    return lost, added
