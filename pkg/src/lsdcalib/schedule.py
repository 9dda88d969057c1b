"""Cosine noise schedule and reduced-step timestep selection.

The decay table follows the squared-cosine profile

    alpha_bar(t) = f(t) / f(0),   f(t) = cos((t/T + s) / (1 + s) * pi/2)^2

evaluated here as sin((pi/2) * (1 - t/T) / (1 + s))^2, which is the same
function but hits the boundaries exactly in floating point: alpha_bar(0) = 1
and alpha_bar(T) = 0 with no rounding residue. Per-step beta values are
clipped at 0.999 so the final step stays non-degenerate despite
alpha_bar(T) = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

BETA_CLIP = 0.999

# Fallback when the caller does not fix the total step count.
DEFAULT_TOTAL_STEPS = 1000
DEFAULT_OFFSET = 0.008


@dataclass(frozen=True)
class NoiseSchedule:
    """Tabulated decay schedule.

    ``alpha_bar`` has ``total_steps + 1`` entries indexed by t = 0..T and is
    the raw (pre-clip) table. ``alpha`` and ``beta`` are meaningful for
    t = 1..T; index 0 is padding (alpha[0] = 1, beta[0] = 0) so arrays index
    directly by timestep.
    """

    total_steps: int
    s: float
    alpha_bar: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    beta: np.ndarray = field(repr=False)


def build_cosine_schedule(total_steps: int = DEFAULT_TOTAL_STEPS,
                          s: float = DEFAULT_OFFSET) -> NoiseSchedule:
    """Build the squared-cosine schedule for ``total_steps`` steps and offset ``s``."""
    if not isinstance(total_steps, (int, np.integer)) or total_steps < 1:
        raise ValueError(f"total_steps must be a positive integer, got {total_steps!r}")
    if not (0.0 < s < 1.0):
        raise ValueError(f"offset s must lie in (0, 1), got {s!r}")

    t = np.arange(total_steps + 1, dtype=float)
    # sin form of the squared-cosine profile: exact 1 at t=0, exact 0 at t=T.
    x = (0.5 * math.pi) * (1.0 - t / total_steps) / (1.0 + s)
    f = np.sin(x) ** 2
    alpha_bar = f / f[0]

    beta = np.zeros(total_steps + 1)
    beta[1:] = 1.0 - alpha_bar[1:] / alpha_bar[:-1]
    np.minimum(beta, BETA_CLIP, out=beta)
    alpha = 1.0 - beta

    alpha_bar.flags.writeable = False
    alpha.flags.writeable = False
    beta.flags.writeable = False
    return NoiseSchedule(int(total_steps), float(s), alpha_bar, alpha, beta)


def timestep_subsequence(total_steps: int, nfe: int) -> list[int]:
    """Strictly decreasing timesteps [T, ..., 0] visiting ``nfe`` denoiser calls.

    Entry i (counted from the tail) is round(i * T / nfe) with ties rounded
    up, so the endpoints are always exactly T and 0.
    """
    if not isinstance(nfe, (int, np.integer)) or nfe < 1:
        raise ValueError(f"nfe must be a positive integer, got {nfe!r}")
    if nfe > total_steps:
        raise ValueError(f"nfe ({nfe}) must not exceed total_steps ({total_steps})")
    taus = [int(math.floor(i * total_steps / nfe + 0.5)) for i in range(nfe + 1)]
    taus.reverse()
    return taus


def schedule_csv(schedule: NoiseSchedule) -> str:
    """Render the schedule as CSV with columns t, alpha_bar, alpha, beta.

    ``alpha_bar`` is the pre-clip column. The t = 0 row has no alpha/beta
    (those cells are left empty).
    """
    lines = ["t,alpha_bar,alpha,beta"]
    lines.append(f"0,{float(schedule.alpha_bar[0])!r},,")
    for t in range(1, schedule.total_steps + 1):
        lines.append(
            f"{t},{float(schedule.alpha_bar[t])!r},"
            f"{float(schedule.alpha[t])!r},{float(schedule.beta[t])!r}"
        )
    return "\n".join(lines) + "\n"
