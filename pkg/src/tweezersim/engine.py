"""Cycle engine: the loading pipeline as a state machine over stochastic draws.

A realization starts from an atom reservoir and an empty array, then repeats
image -> fill targets from buffers -> refill buffers from the reservoir.
Ground-truth occupancy and the controller's belief are tracked separately:
belief is reset to truth at each imaging step, assumes success for planned
transports in between, and treats freshly refilled buffers as empty until the
next image confirms them. Every atom is accounted for in integer counters so
conservation can be checked exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .geometry import ArrayLayout
from .planner import MovePlan, Occupancy, plan_buffer_refill, plan_target_fill
from .stochastic import (
    ExtractionModel,
    LossModel,
    ReservoirState,
    RngStream,
    TransportModel,
    sample_extraction,
    sample_survival,
    sample_transport,
    reservoir_decay,
)

__all__ = [
    "TimingModel",
    "SimulationModels",
    "Counters",
    "SystemState",
    "CycleRecord",
    "EventLog",
    "EngineError",
    "PlanConflictError",
    "init_sequence",
    "step_image",
    "step_fill_targets",
    "step_refill_buffers",
    "run_cycle",
    "run_realization",
    "check_conservation",
]


class EngineError(RuntimeError):
    """An engine invariant was violated."""


class PlanConflictError(EngineError):
    """A plan contradicts the belief it was supposedly built from."""


@dataclass
class TimingModel:
    """Wall-clock durations of the sequence, in seconds.

    ``t_image_loss`` optionally narrows the decay window during imaging to
    the bare exposure when readout overhead should not count as trap time;
    ``None`` uses the full ``t_image`` for both clock and losses.
    """

    t_mot: float = 1.8
    t_molasses: float = 0.040
    t_reservoir_transfer: float = 0.020
    t_image: float = 0.130
    t_analysis_fill: float = 0.065
    t_buffer_refill: float = 0.035
    t_ramp: float = 130e-6
    t_move: float = 310e-6
    t_image_loss: float | None = None

    def __post_init__(self):
        for name in (
            "t_mot", "t_molasses", "t_reservoir_transfer", "t_image",
            "t_analysis_fill", "t_buffer_refill", "t_ramp", "t_move",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"timing.{name} must be nonnegative")
        if self.t_image_loss is not None and self.t_image_loss < 0:
            raise ValueError("timing.t_image_loss must be nonnegative")

    @property
    def cycle_duration(self) -> float:
        """One image + fill + refill round."""
        return self.t_image + self.t_analysis_fill + self.t_buffer_refill

    @property
    def init_duration(self) -> float:
        """Reservoir preparation before the first cycle."""
        return self.t_mot + self.t_molasses + self.t_reservoir_transfer

    @property
    def image_loss_window(self) -> float:
        return self.t_image if self.t_image_loss is None else self.t_image_loss


@dataclass
class SimulationModels:
    """Everything a realization needs besides its RNG stream."""

    layout: ArrayLayout
    loss: LossModel
    transport: TransportModel
    extraction: ExtractionModel
    timing: TimingModel
    reservoir_mean: float = 80.0
    refill_rate: float = 0.0
    # Failed moves: "lose" drops the atom, "stay" leaves it in the source
    # trap, "mixed" draws between the two with the retention probability.
    transport_failure: str = "mixed"
    p_stay_on_failure: float = 2 / 3
    fill_strategy: str = "global"  # or "per-vacancy"
    speed_um_per_s: float | None = None  # distance-proportional moves when set

    def __post_init__(self):
        if self.reservoir_mean < 0:
            raise ValueError("stochastic.reservoir_mean must be nonnegative")
        if self.refill_rate < 0:
            raise ValueError("stochastic.refill_rate must be nonnegative")
        if self.transport_failure not in ("lose", "stay", "mixed"):
            raise ValueError(
                f"engine.transport_failure must be 'lose', 'stay' or 'mixed', "
                f"got {self.transport_failure!r}"
            )
        if not 0.0 <= self.p_stay_on_failure <= 1.0:
            raise ValueError(
                "stochastic.p_stay_on_failure must be within [0, 1], "
                f"got {self.p_stay_on_failure}"
            )
        if self.fill_strategy not in ("global", "per-vacancy"):
            raise ValueError(
                f"engine.fill_strategy must be 'global' or 'per-vacancy', "
                f"got {self.fill_strategy!r}"
            )
        if self.speed_um_per_s is not None and self.speed_um_per_s <= 0:
            raise ValueError("engine.speed_um_per_s must be positive")


@dataclass
class Counters:
    """Cumulative atom bookkeeping over one realization (exact integers)."""

    extracted: int = 0  # atoms removed from the reservoir by extraction
    delivered: int = 0  # extractions that left one atom in a buffer trap
    blockade_loss: int = 0  # extracted atoms lost to pairwise collisions
    transport_loss: int = 0  # atoms lost in failed moves
    array_decay_loss: int = 0  # one-body loss out of array traps
    reservoir_decay_loss: int = 0  # one-body loss out of the reservoir
    refilled: int = 0  # atoms added to the reservoir by the refill hook


@dataclass
class SystemState:
    """Mutable state of one realization."""

    truth: Occupancy
    belief: Occupancy
    reservoir: ReservoirState
    clock: float
    cycle_index: int = 0
    n_initial_reservoir: int = 0
    counters: Counters = field(default_factory=Counters)

    @property
    def n_trapped(self) -> int:
        return sum(self.truth.values())


@dataclass(frozen=True)
class CycleRecord:
    """Per-cycle observables, snapshotted at this cycle's imaging step.

    The cumulative counters therefore cover everything up to but not
    including this cycle's fill and refill.
    """

    cycle_index: int
    target_complete: bool
    n_buffer_filled: int
    n_target_filled: int
    n_reservoir: int
    clock_at_image: float
    extracted_cum: int
    delivered_cum: int
    reservoir_decay_cum: int


class EventLog:
    """Append-only step/move log for one or more realizations.

    Each row is (replica, cycle, step, clock_s, n_reservoir, truth_mask,
    belief_mask, src, dst, dist_um, duration_s, outcome). Steps without
    moves contribute one row with the move fields blank; fill and refill
    contribute one row per move. Masks are occupancy bitmasks over sites in
    id order (bit i = i-th smallest site id).
    """

    COLUMNS = (
        "replica", "cycle", "step", "clock_s", "n_reservoir",
        "truth_mask", "belief_mask", "src", "dst", "dist_um",
        "duration_s", "outcome",
    )

    def __init__(self):
        self.rows: list[tuple] = []

    def __len__(self) -> int:
        return len(self.rows)

    def add(
        self,
        replica: int,
        cycle: int,
        step: str,
        state: SystemState,
        layout: ArrayLayout,
        src="",
        dst="",
        dist_um="",
        duration_s="",
        outcome="",
    ) -> None:
        self.rows.append((
            replica, cycle, step, state.clock, state.reservoir.n_atoms,
            occupancy_mask(state.truth, layout),
            occupancy_mask(state.belief, layout),
            src, dst, dist_um, duration_s, outcome,
        ))


def occupancy_mask(occ: Occupancy, layout: ArrayLayout) -> int:
    mask = 0
    for sid, filled in occ.items():
        if filled:
            mask |= 1 << layout.index_of(sid)
    return mask


def _models_of(config) -> SimulationModels:
    # accept either a prebuilt bundle or a config object that makes one
    if isinstance(config, SimulationModels):
        return config
    return config.build_models()


def _decay_step(
    state: SystemState, dt: float, models: SimulationModels, rng: RngStream
) -> None:
    """One-body losses over ``dt`` for array atoms and the reservoir.

    Truth-only: the controller never sees decay until the next image.
    """
    if dt > 0.0:
        counters = state.counters
        lifetime = models.loss.lifetime_array
        for sid, filled in state.truth.items():
            if filled and not sample_survival(rng, dt, lifetime):
                state.truth[sid] = False
                counters.array_decay_loss += 1
        lost, added = reservoir_decay(rng, state.reservoir, dt, models.loss)
        counters.reservoir_decay_loss += lost
        counters.refilled += added


def init_sequence(config, rng: RngStream) -> SystemState:
    """Prepare a realization: cooled cloud transferred into the reservoir,
    all array sites empty, clock at the end of the preparation stages.

    ``config`` may be a :class:`SimulationModels` bundle or any object with
    a ``build_models()`` method. The reservoir population is Poisson with
    the configured mean.
    """
    models = _models_of(config)
    n0 = rng.poisson(models.reservoir_mean) if models.reservoir_mean > 0 else 0
    empty = {sid: False for sid in models.layout.site_ids}
    return SystemState(
        truth=dict(empty),
        belief=dict(empty),
        reservoir=ReservoirState(n0, models.refill_rate),
        clock=models.timing.init_duration,
        cycle_index=0,
        n_initial_reservoir=n0,
    )


def step_image(
    state: SystemState,
    models: SimulationModels,
    rng: RngStream,
    log: EventLog | None = None,
    replica: int = 0,
) -> tuple[SystemState, Occupancy]:
    """Fluorescence image: decay over the imaging window, then belief is
    reset to truth (perfect detection). Returns the observed occupancy."""
    timing = models.timing
    _decay_step(state, timing.image_loss_window, models, rng)
    state.clock += timing.t_image
    state.belief = dict(state.truth)
    observation = dict(state.truth)
    if log is not None:
        log.add(replica, state.cycle_index, "image", state, models.layout)
    return state, observation


def step_fill_targets(
    state: SystemState,
    plan: MovePlan,
    models: SimulationModels,
    rng: RngStream,
    log: EventLog | None = None,
    replica: int = 0,
) -> SystemState:
    """Execute the fill plan move by move, then advance the analysis window.

    Belief assumes every move succeeds (source empty, destination occupied);
    truth records the sampled outcome. A believed-occupied but truly empty
    source executes as a null transport. A failed transport loses the atom
    (``lose``), returns it to the source (``stay``), or draws between the
    two with probability ``p_stay_on_failure`` of retention (``mixed``).
    """
    counters = state.counters
    layout = models.layout
    for move in plan:
        if not state.belief.get(move.src, False):
            raise PlanConflictError(
                f"fill plan sources site {move.src} which belief marks empty"
            )
        if state.belief.get(move.dst, False):
            raise PlanConflictError(
                f"fill plan targets site {move.dst} which belief marks occupied"
            )
        if state.truth[move.src]:
            state.truth[move.src] = False
            if sample_transport(rng, models.transport):
                if state.truth[move.dst]:
                    raise EngineError(
                        f"transport into occupied site {move.dst}"
                    )
                state.truth[move.dst] = True
                outcome = "ok"
            else:
                retained = models.transport_failure == "stay" or (
                    models.transport_failure == "mixed"
                    and rng.bernoulli(models.p_stay_on_failure)
                )
                if retained:
                    state.truth[move.src] = True
                    outcome = "stay"
                else:
                    counters.transport_loss += 1
                    outcome = "lost"
        else:
            outcome = "null"
        state.belief[move.src] = False
        state.belief[move.dst] = True
        if log is not None:
            log.add(
                replica, state.cycle_index, "fill", state, layout,
                src=move.src, dst=move.dst, dist_um=move.dist,
                duration_s=move.duration, outcome=outcome,
            )
    if log is not None and not plan.moves:
        log.add(replica, state.cycle_index, "fill", state, layout)
    _decay_step(state, models.timing.t_analysis_fill, models, rng)
    state.clock += models.timing.t_analysis_fill
    return state


def step_refill_buffers(
    state: SystemState,
    refill_list: list[int],
    models: SimulationModels,
    rng: RngStream,
    log: EventLog | None = None,
    replica: int = 0,
) -> SystemState:
    """One extraction attempt per listed buffer site, then the refill window.

    Delivered atoms enter truth immediately but stay believed-empty until
    the next image, so the planner never sources an unverified refill. A
    listed site already holding an atom (possible under ``stay`` transport
    failures) is skipped without touching the reservoir.
    """
    counters = state.counters
    layout = models.layout
    for sid in refill_list:
        if state.belief[sid]:
            raise PlanConflictError(
                f"refill list contains site {sid} which belief marks occupied"
            )
        if state.truth[sid]:
            outcome = "skip"
        else:
            removed, delivered = sample_extraction(
                rng, state.reservoir, models.extraction
            )
            counters.extracted += removed
            if delivered:
                state.truth[sid] = True
                counters.delivered += 1
                counters.blockade_loss += removed - 1
                outcome = "delivered"
            else:
                counters.blockade_loss += removed
                outcome = "empty" if removed == 0 else "blocked"
        if log is not None:
            log.add(
                replica, state.cycle_index, "refill", state, layout,
                src="R", dst=sid, dist_um=layout.reservoir_distance(sid),
                outcome=outcome,
            )
    if log is not None and not refill_list:
        log.add(replica, state.cycle_index, "refill", state, layout)
    _decay_step(state, models.timing.t_buffer_refill, models, rng)
    state.clock += models.timing.t_buffer_refill
    return state


def check_conservation(state: SystemState) -> None:
    """Exact integer atom balance; raises EngineError on any leak."""
    c = state.counters
    supplied = state.n_initial_reservoir + c.refilled
    accounted = (
        state.reservoir.n_atoms
        + state.n_trapped
        + c.blockade_loss
        + c.transport_loss
        + c.array_decay_loss
        + c.reservoir_decay_loss
    )
    if supplied != accounted:
        raise EngineError(
            f"atom conservation violated: supplied {supplied} != "
            f"accounted {accounted} ({c})"
        )
    if c.delivered > c.extracted:
        raise EngineError("delivered exceeds extracted")


def run_cycle(
    state: SystemState,
    models: SimulationModels,
    rng: RngStream,
    log: EventLog | None = None,
    replica: int = 0,
) -> tuple[SystemState, CycleRecord]:
    """One full cycle: image, fill targets, refill buffers.

    The returned record is the imaging observation at the START of the
    cycle; this cycle's fill and refill are only visible in the next one.
    """
    state.cycle_index += 1
    layout = models.layout
    state, observation = step_image(state, models, rng, log, replica)
    c = state.counters
    record = CycleRecord(
        cycle_index=state.cycle_index,
        target_complete=all(observation[t] for t in layout.target_ids),
        n_buffer_filled=sum(observation[b] for b in layout.buffer_ids),
        n_target_filled=sum(observation[t] for t in layout.target_ids),
        n_reservoir=state.reservoir.n_atoms,
        clock_at_image=state.clock,
        extracted_cum=c.extracted,
        delivered_cum=c.delivered,
        reservoir_decay_cum=c.reservoir_decay_loss,
    )
    plan = plan_target_fill(
        state.belief,
        layout,
        transport=models.transport,
        speed_um_per_s=models.speed_um_per_s,
        strategy=models.fill_strategy,
    )
    state = step_fill_targets(state, plan, models, rng, log, replica)
    refill_list = plan_buffer_refill(state.belief, layout)
    state = step_refill_buffers(state, refill_list, models, rng, log, replica)
    check_conservation(state)
    return state, record


def run_realization(
    config,
    seed: int,
    n_cycles: int,
    replica: int = 0,
    log: EventLog | None = None,
) -> list[CycleRecord]:
    """Run one realization: preparation plus ``n_cycles`` cycles.

    Deterministic given (config, seed, replica); the records of two runs
    with identical arguments are identical.
    """
    if n_cycles < 1:
        raise ValueError("run.n_cycles must be at least 1")
    models = _models_of(config)
    rng = RngStream(seed, replica)
    state = init_sequence(models, rng)
    if log is not None:
        log.add(replica, 0, "init", state, models.layout)
    records = []
    for _ in range(n_cycles):
        state, record = run_cycle(state, models, rng, log, replica)
        records.append(record)
    return records
