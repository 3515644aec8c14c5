"""Experiment configuration: defaults, INI-file parsing, validation, and
construction of the model bundle a run needs.

The file format is INI (configparser dialect, ``#``/``;`` inline comments)
with sections [run], [layout], [stochastic], [timing], [engine]; every key
is optional and falls back to the measured reference values baked in here.
Validation errors always name the offending ``section.key``.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field

from .engine import SimulationModels, TimingModel
from .geometry import (
    ArrayLayout,
    layout_from_preset,
    layout_from_site_rows,
    reference_layout,
)
from .stochastic import ExtractionModel, LossModel, TransportModel

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "DEFAULT_ENSEMBLE_MEAN",
    "DEFAULT_STAY_ON_FAILURE",
]


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


# Ensemble size drawn per extraction at a full reservoir, recorded from the
# calibration routine at the reference defaults so a realization delivers
# ~10 atoms on average.
DEFAULT_ENSEMBLE_MEAN = 13.56

# Probability that a failed move left the atom in its source trap (failed
# pickup) rather than dropping it in flight. Fixed together with the
# ensemble mean so the cumulative success curve lands on the measured
# values; pure loss undershoots them and pure retention overshoots.
DEFAULT_STAY_ON_FAILURE = 2 / 3

_SUCCESS_DEFINITIONS = {
    "first": "first-achievement",
    "first-achievement": "first-achievement",
    "maintained": "maintained",
}


@dataclass
class ExperimentConfig:
    """Fully resolved run parameters; defaults match the reference setup."""

    # [run]
    n_replicas: int = 2500
    n_cycles: int = 15
    master_seed: int = 42
    success_definition: str = "first-achievement"
    ci_method: str = "normal"
    # [layout]
    layout: ArrayLayout = field(default_factory=reference_layout)
    layout_preset: str | None = "paper-hex-6"
    # [stochastic]
    lifetime_array_s: float = 10.0
    lifetime_reservoir_s: float = 5.0
    p_transport: float = 0.753
    p_stay_on_failure: float = DEFAULT_STAY_ON_FAILURE
    p_blockade_plateau: float = 0.596
    mean_ensemble_at_full: float = DEFAULT_ENSEMBLE_MEAN
    n_reference: int = 80
    reservoir_mean: float = 80.0
    refill_rate: float = 0.0
    # [timing]
    t_mot: float = 1.8
    t_molasses: float = 0.040
    t_reservoir_transfer: float = 0.020
    t_image: float = 0.130
    t_analysis_fill: float = 0.065
    t_buffer_refill: float = 0.035
    t_ramp: float = 130e-6
    t_move: float = 310e-6
    t_image_loss: float | None = None
    # [engine]
    transport_failure: str = "mixed"
    fill_strategy: str = "global"
    speed_um_per_s: float | None = None

    def __post_init__(self):
        if self.n_replicas < 1:
            raise ConfigError("run.n_replicas must be at least 1")
        if self.n_cycles < 1:
            raise ConfigError("run.n_cycles must be at least 1")
        try:
            self.success_definition = _SUCCESS_DEFINITIONS[self.success_definition]
        except KeyError:
            raise ConfigError(
                f"run.success_definition must be 'first-achievement' or "
                f"'maintained', got {self.success_definition!r}"
            ) from None
        if self.ci_method not in ("normal", "wilson"):
            raise ConfigError(
                f"run.ci_method must be 'normal' or 'wilson', got {self.ci_method!r}"
            )
        for key in ("p_transport", "p_stay_on_failure", "p_blockade_plateau"):
            value = getattr(self, key)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"stochastic.{key} must be within [0, 1], got {value}")
        for key in ("lifetime_array_s", "lifetime_reservoir_s", "mean_ensemble_at_full"):
            if getattr(self, key) <= 0:
                raise ConfigError(f"stochastic.{key} must be positive")
        if self.n_reference < 1:
            raise ConfigError("stochastic.n_reference must be at least 1")
        if self.reservoir_mean < 0:
            raise ConfigError("stochastic.reservoir_mean must be nonnegative")
        if self.refill_rate < 0:
            raise ConfigError("stochastic.refill_rate must be nonnegative")
        for key in (
            "t_mot", "t_molasses", "t_reservoir_transfer", "t_image",
            "t_analysis_fill", "t_buffer_refill", "t_ramp", "t_move",
        ):
            if getattr(self, key) < 0:
                raise ConfigError(f"timing.{key} must be nonnegative")
        if self.t_image_loss is not None and self.t_image_loss < 0:
            raise ConfigError("timing.t_image_loss must be nonnegative")
        if self.transport_failure not in ("lose", "stay", "mixed"):
            raise ConfigError(
                f"engine.transport_failure must be 'lose', 'stay' or 'mixed', "
                f"got {self.transport_failure!r}"
            )
        if self.fill_strategy not in ("global", "per-vacancy"):
            raise ConfigError(
                f"engine.fill_strategy must be 'global' or 'per-vacancy', "
                f"got {self.fill_strategy!r}"
            )
        if self.speed_um_per_s is not None and self.speed_um_per_s <= 0:
            raise ConfigError("engine.speed_um_per_s must be positive")

    def build_models(self) -> SimulationModels:
        """Assemble the validated model bundle for the engine."""
        # The plateau is the fill fraction read out one image after a refill,
        # so invert the decay accumulated over that window out of it.
        window = self.t_buffer_refill + (
            self.t_image if self.t_image_loss is None else self.t_image_loss
        )
        try:
            extraction = ExtractionModel.from_plateau(
                self.p_blockade_plateau,
                self.mean_ensemble_at_full,
                self.n_reference,
                observation_survival=math.exp(-window / self.lifetime_array_s),
            )
        except ValueError as exc:
            raise ConfigError(f"stochastic.p_blockade_plateau: {exc}") from None
        return SimulationModels(
            layout=self.layout,
            loss=LossModel(self.lifetime_array_s, self.lifetime_reservoir_s),
            transport=TransportModel(self.p_transport, self.t_ramp, self.t_move),
            extraction=extraction,
            timing=TimingModel(
                t_mot=self.t_mot,
                t_molasses=self.t_molasses,
                t_reservoir_transfer=self.t_reservoir_transfer,
                t_image=self.t_image,
                t_analysis_fill=self.t_analysis_fill,
                t_buffer_refill=self.t_buffer_refill,
                t_ramp=self.t_ramp,
                t_move=self.t_move,
                t_image_loss=self.t_image_loss,
            ),
            reservoir_mean=self.reservoir_mean,
            refill_rate=self.refill_rate,
            transport_failure=self.transport_failure,
            p_stay_on_failure=self.p_stay_on_failure,
            fill_strategy=self.fill_strategy,
            speed_um_per_s=self.speed_um_per_s,
        )

    def resolved(self) -> dict:
        """Plain nested dict of every effective parameter, for run metadata.

        The layout is always expanded to explicit site rows so the record
        is self-contained even when a preset was used.
        """
        layout = self.layout
        return {
            "run": {
                "n_replicas": self.n_replicas,
                "n_cycles": self.n_cycles,
                "master_seed": self.master_seed,
                "success_definition": self.success_definition,
                "ci_method": self.ci_method,
            },
            "layout": {
                "preset": self.layout_preset,
                "sites": [
                    [s.id, s.pos.x, s.pos.y, s.role.value]
                    for s in sorted(layout.sites, key=lambda s: s.id)
                ],
                "reservoir": [layout.reservoir_pos.x, layout.reservoir_pos.y],
                "scan_range": layout.scan_range,
                "base_pitch": layout.base_pitch,
                "effective_pitch": layout.effective_pitch,
                "metadata": dict(layout.metadata),
            },
            "stochastic": {
                "lifetime_array_s": self.lifetime_array_s,
                "lifetime_reservoir_s": self.lifetime_reservoir_s,
                "p_transport": self.p_transport,
                "p_stay_on_failure": self.p_stay_on_failure,
                "p_blockade_plateau": self.p_blockade_plateau,
                "mean_ensemble_at_full": self.mean_ensemble_at_full,
                "n_reference": self.n_reference,
                "reservoir_mean": self.reservoir_mean,
                "refill_rate": self.refill_rate,
            },
            "timing": {
                "t_mot": self.t_mot,
                "t_molasses": self.t_molasses,
                "t_reservoir_transfer": self.t_reservoir_transfer,
                "t_image": self.t_image,
                "t_analysis_fill": self.t_analysis_fill,
                "t_buffer_refill": self.t_buffer_refill,
                "t_ramp": self.t_ramp,
                "t_move": self.t_move,
                "t_image_loss": self.t_image_loss,
            },
            "engine": {
                "transport_failure": self.transport_failure,
                "fill_strategy": self.fill_strategy,
                "speed_um_per_s": self.speed_um_per_s,
            },
        }


_INT_KEYS = {"n_replicas", "n_cycles", "master_seed", "n_reference"}
_STR_KEYS = {"success_definition", "ci_method", "transport_failure", "fill_strategy"}

_SECTION_KEYS = {
    "run": {"n_replicas", "n_cycles", "master_seed", "success_definition", "ci_method"},
    "layout": {"preset", "sites", "reservoir", "scan_range", "base_pitch", "effective_pitch"},
    "stochastic": {
        "lifetime_array_s", "lifetime_reservoir_s", "p_transport",
        "p_stay_on_failure", "p_blockade_plateau", "mean_ensemble_at_full",
        "n_reference", "reservoir_mean", "refill_rate",
    },
    "timing": {
        "t_mot", "t_molasses", "t_reservoir_transfer", "t_image",
        "t_analysis_fill", "t_buffer_refill", "t_ramp", "t_move", "t_image_loss",
    },
    "engine": {"transport_failure", "fill_strategy", "speed_um_per_s"},
}


def _convert(section: str, key: str, raw: str):
    raw = raw.strip()
    if key in _STR_KEYS:
        return raw
    try:
        if key in _INT_KEYS:
            return int(raw)
        return float(raw)
    except ValueError:
        kind = "an integer" if key in _INT_KEYS else "a number"
        raise ConfigError(f"{section}.{key} must be {kind}, got {raw!r}") from None


def _parse_layout_section(section: configparser.SectionProxy) -> tuple[ArrayLayout, str | None]:
    preset = section.get("preset", "").strip()
    inline_keys = [k for k in ("sites", "reservoir", "scan_range") if k in section]
    if preset and inline_keys:
        raise ConfigError(
            f"layout.preset excludes inline keys ({', '.join(inline_keys)})"
        )
    if preset:
        try:
            return layout_from_preset(preset), preset
        except ValueError as exc:
            raise ConfigError(f"layout.preset: {exc}") from None
    if not inline_keys:
        return reference_layout(), "paper-hex-6"
    for key in ("sites", "reservoir", "scan_range", "base_pitch", "effective_pitch"):
        if key not in section:
            raise ConfigError(f"layout.{key} is required for an inline layout")
    rows = []
    for lineno, line in enumerate(section["sites"].strip().splitlines(), start=1):
        parts = line.split()
        if len(parts) != 4:
            raise ConfigError(
                f"layout.sites line {lineno} must be 'id x y role', got {line.strip()!r}"
            )
        try:
            rows.append((int(parts[0]), float(parts[1]), float(parts[2]), parts[3]))
        except ValueError:
            raise ConfigError(
                f"layout.sites line {lineno}: could not parse {line.strip()!r}"
            ) from None
    reservoir_parts = section["reservoir"].split()
    if len(reservoir_parts) != 2:
        raise ConfigError("layout.reservoir must be 'x y'")
    try:
        layout = layout_from_site_rows(
            rows,
            (float(reservoir_parts[0]), float(reservoir_parts[1])),
            _convert("layout", "scan_range", section["scan_range"]),
            _convert("layout", "base_pitch", section["base_pitch"]),
            _convert("layout", "effective_pitch", section["effective_pitch"]),
        )
    except ValueError as exc:
        raise ConfigError(f"layout: {exc}") from None
    return layout, None


def load_config(path: str) -> ExperimentConfig:
    """Read an INI config file; unknown sections or keys are rejected."""
    parser = configparser.ConfigParser(
        inline_comment_prefixes=("#", ";"), interpolation=None
    )
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from None
    kwargs = {}
    for section in parser.sections():
        if section not in _SECTION_KEYS:
            raise ConfigError(
                f"unknown config section [{section}]; expected one of "
                f"{sorted(_SECTION_KEYS)}"
            )
        for key in parser[section]:
            if key not in _SECTION_KEYS[section]:
                raise ConfigError(
                    f"unknown key {section}.{key}; expected one of "
                    f"{sorted(_SECTION_KEYS[section])}"
                )
            if section == "layout":
                continue
            kwargs[key] = _convert(section, key, parser[section][key])
    if parser.has_section("layout"):
        kwargs["layout"], kwargs["layout_preset"] = _parse_layout_section(
            parser["layout"]
        )
    return ExperimentConfig(**kwargs)
