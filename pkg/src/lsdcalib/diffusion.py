"""Forward interpolation, reverse samplers, and the refinement loops.

The refinement state is a six-component twist x relative to the initial
extrinsic T0: the current estimate is exp_map(x) @ T0. The forward process
shrinks the true correction twist toward zero along the noise schedule; the
reverse process starts from x = 0 and walks a timestep subsequence back to
t = 0, at every step asking a denoiser for its correction and blending back
toward the clean twist. Since the denoiser works on transforms, the twist
estimate is rebuilt each step as log_map(exp_map(delta_xi) @ exp_map(x_t)).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import se3
from .denoisers import (
    Condition,
    DenoiserBackend,
    DenoiserError,
    DenoiserSession,
    ReopeningSession,
    open_session,
)
from .schedule import NoiseSchedule, timestep_subsequence

SAMPLER_MODES = ("deterministic", "ancestral_stochastic")

# Anything with a one-argument denoise(T_noisy) method works as a session.
SessionLike = Union[DenoiserSession, ReopeningSession]


@dataclass(frozen=True)
class DiffusionConfig:
    """Reverse-process settings: schedule, step budget, sampler variant."""

    schedule: NoiseSchedule
    nfe: int = 10
    sampler_mode: str = "deterministic"
    rng_seed: int = 0

    def __post_init__(self):
        if not isinstance(self.nfe, int) or self.nfe < 1:
            raise ValueError(f"nfe must be a positive integer, got {self.nfe!r}")
        if self.nfe > self.schedule.total_steps:
            raise ValueError(
                f"nfe {self.nfe} exceeds the schedule's {self.schedule.total_steps} steps"
            )
        if self.sampler_mode not in SAMPLER_MODES:
            raise ValueError(
                f"sampler_mode must be one of {SAMPLER_MODES}, got {self.sampler_mode!r}"
            )


@dataclass(frozen=True)
class TraceStep:
    """One reverse step: timestep denoised, state at entry, estimate, result."""

    t: int
    x_t: np.ndarray
    x0_hat: np.ndarray
    extrinsic: np.ndarray


@dataclass
class RefinementTrace:
    """Per-step records of one reverse pass, first record at t = T."""

    steps: list[TraceStep] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.steps)


def forward_sample(x0, t: int, schedule: NoiseSchedule, epsilon=None) -> np.ndarray:
    """Interpolate a clean twist toward zero (or toward epsilon) at step t."""
    x0 = se3.check_twist(x0)
    if not 0 <= t <= schedule.total_steps:
        raise ValueError(f"t must lie in [0, {schedule.total_steps}], got {t}")
    ab = schedule.alpha_bar[t]
    out = np.sqrt(ab) * x0
    if epsilon is not None:
        out = out + np.sqrt(1.0 - ab) * se3.check_twist(epsilon)
    return out


def make_training_pair(T_gt, T0, t: int, schedule: NoiseSchedule) -> tuple[np.ndarray, np.ndarray]:
    """Clean correction twist for (T_gt, T0) and its step-t interpolation."""
    x0 = se3.log_map(se3.compose(se3.check_transform(T_gt),
                                 se3.invert(T0)))
    return forward_sample(x0, t, schedule), x0


def l1_loss(x0, x0_hat) -> float:
    """Sum of absolute componentwise differences between two twists."""
    return float(np.sum(np.abs(se3.check_twist(x0) - se3.check_twist(x0_hat))))


def _resolve_session(denoiser, condition: Optional[Condition], t0,
                     sample_id: str) -> tuple[SessionLike, bool]:
    """Accept either a backend (open a session here) or a live session."""
    if isinstance(denoiser, DenoiserBackend):
        if condition is None:
            raise ValueError("a Condition is required when passing a raw backend")
        return open_session(denoiser, condition, t0, sample_id), True
    if hasattr(denoiser, "denoise"):
        return denoiser, False
    raise TypeError(f"not a denoiser backend or session: {denoiser!r}")


def surrogate_x0(denoiser, condition: Optional[Condition], T0, x_t) -> np.ndarray:
    """One denoiser query rewritten as a clean-twist estimate.

    Builds the noisy extrinsic exp_map(x_t) @ T0, asks the denoiser for its
    correction delta_xi, and folds the correction back into twist space as
    log_map(exp_map(delta_xi) @ exp_map(x_t)).
    """
    x_t = se3.check_twist(x_t)
    T0 = se3.check_transform(T0)
    session, owned = _resolve_session(denoiser, condition, T0, "")
    try:
        return _surrogate(session, T0, x_t)
    finally:
        if owned:
            session.close()


def _surrogate(session: SessionLike, T0, x_t) -> np.ndarray:
    step = se3.exp_map(x_t)
    delta_xi = session.denoise(se3.compose(step, T0))
    return se3.log_map(se3.compose(se3.exp_map(delta_xi), step))


def ancestral_step(x_t, x0_hat, t_hi: int, t_lo: int, schedule: NoiseSchedule,
                   mode: str = "deterministic",
                   rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Blend the state at t_hi toward the clean estimate, landing at t_lo.

    Uses the posterior mean for the effective one-step process with
    alpha = alpha_bar[t_hi] / alpha_bar[t_lo]; in ancestral_stochastic mode
    the posterior standard deviation times a standard normal draw is added.
    At t_lo = 0 both modes return x0_hat unchanged.
    """
    x_t = se3.check_twist(x_t)
    x0_hat = se3.check_twist(x0_hat)
    if mode not in SAMPLER_MODES:
        raise ValueError(f"unknown sampler mode {mode!r}")
    if not (0 <= t_lo < t_hi <= schedule.total_steps):
        raise ValueError(
            f"need total_steps >= t_hi > t_lo >= 0, got t_hi={t_hi}, t_lo={t_lo}"
        )
    if t_lo == 0:
        return x0_hat.copy()
    ab_hi = schedule.alpha_bar[t_hi]
    ab_lo = schedule.alpha_bar[t_lo]
    alpha = ab_hi / ab_lo
    mean = (
        np.sqrt(alpha) * (1.0 - ab_lo) * x_t
        + np.sqrt(ab_lo) * (1.0 - alpha) * x0_hat
    ) / (1.0 - ab_hi)
    if mode == "deterministic":
        return mean
    if rng is None:
        raise ValueError("ancestral_stochastic mode needs a random generator")
    variance = (1.0 - alpha) * (1.0 - ab_lo) / (1.0 - ab_hi)
    return mean + np.sqrt(variance) * rng.standard_normal(6)


def _wrap_step_error(exc: DenoiserError, label: str) -> DenoiserError:
    wrapped = type(exc)(f"{label}: {exc}")
    wrapped.__cause__ = exc
    return wrapped


def lsd_reverse(denoiser, condition: Optional[Condition], T0,
                config: DiffusionConfig,
                sample_id: str = "") -> tuple[np.ndarray, RefinementTrace]:
    """Full reverse pass: nfe denoiser queries from x = 0 down to t = 0.

    Accepts a backend (a session is opened once, before the loop) or an
    already-open session. Returns the refined extrinsic exp_map(x_0) @ T0
    and the step-by-step trace.
    """
    T0 = se3.check_transform(T0)
    session, owned = _resolve_session(denoiser, condition, T0, sample_id)
    rng = (np.random.default_rng(config.rng_seed)
           if config.sampler_mode == "ancestral_stochastic" else None)
    timesteps = timestep_subsequence(config.schedule.total_steps, config.nfe)
    x = np.zeros(6)
    trace = RefinementTrace()
    try:
        for i in range(config.nfe):
            t_hi, t_lo = timesteps[i], timesteps[i + 1]
            try:
                x0_hat = _surrogate(session, T0, x)
            except DenoiserError as exc:
                raise _wrap_step_error(
                    exc, f"reverse step {i + 1}/{config.nfe} (t={t_hi})"
                ) from exc
            x_next = ancestral_step(x, x0_hat, t_hi, t_lo, config.schedule,
                                    config.sampler_mode, rng)
            trace.steps.append(TraceStep(
                t=t_hi,
                x_t=x,
                x0_hat=x0_hat,
                extrinsic=se3.compose(se3.exp_map(x_next), T0),
            ))
            x = x_next
    finally:
        if owned:
            session.close()
    return se3.compose(se3.exp_map(x), T0), trace


def naive_iterate(denoiser, condition: Optional[Condition], T0, n: int,
                  sample_id: str = "") -> np.ndarray:
    """Apply the denoiser's correction n times in a row, no schedule."""
    if n < 1:
        raise ValueError(f"iteration count must be at least 1, got {n}")
    T = se3.check_transform(T0)
    session, owned = _resolve_session(denoiser, condition, T, sample_id)
    try:
        for i in range(n):
            try:
                delta_xi = session.denoise(T)
            except DenoiserError as exc:
                raise _wrap_step_error(exc, f"iteration {i + 1}/{n}") from exc
            T = se3.compose(se3.exp_map(delta_xi), T)
    finally:
        if owned:
            session.close()
    return T


@dataclass(frozen=True)
class StageRecord:
    """One multi-range stage: its label, correction, and resulting extrinsic."""

    label: str
    delta_xi: np.ndarray
    transform: np.ndarray
    condition_fingerprint: int


def multi_range_run(stages: Sequence[tuple[DenoiserBackend, str]],
                    condition: Condition, T0,
                    sample_id: str = "") -> tuple[np.ndarray, list[StageRecord]]:
    """Chain single-shot corrections from coarse to fine denoisers.

    Every stage applies its denoiser once to the previous stage's output;
    the same condition threads through all stages. Returns the final
    extrinsic plus per-stage records for residual reporting.
    """
    if not stages:
        raise ValueError("multi-range run needs at least one stage")
    T = se3.check_transform(T0)
    records: list[StageRecord] = []
    for backend, label in stages:
        try:
            with open_session(backend, condition, T, sample_id) as session:
                delta_xi = session.denoise(T)
        except DenoiserError as exc:
            raise _wrap_step_error(exc, f"stage {label!r}") from exc
        T = se3.compose(se3.exp_map(delta_xi), T)
        records.append(StageRecord(
            label=label,
            delta_xi=delta_xi,
            transform=T,
            condition_fingerprint=condition.fingerprint,
        ))
    return T, records
