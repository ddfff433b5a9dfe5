"""Pseudo-random realistic instances.

Job parameters follow the FloripaSat-I derived sampling ranges. Solar input is
a synthetic orbit: a hard-zero eclipse block and a half-sine sunlit arc.
"""
from __future__ import annotations

import math

import numpy as np

from .model import BatteryParams, Instance, JobParams

DEFAULT_SUNLIT_FRACTION = 0.6
# Generated instances start half charged; see random_instance.
GENERATED_SOC_INITIAL = 0.5


def power_curve(T: int, orbit_fraction_sunlit: float, peak_power: float, seed: int) -> np.ndarray:
    if T < 1:
        raise ValueError("T must be positive")
    if not 0 < orbit_fraction_sunlit < 1:
        raise ValueError("orbit_fraction_sunlit must lie in (0, 1)")
    if peak_power < 0:
        raise ValueError("peak_power must be non-negative")
    rng = np.random.default_rng(seed)
    n_dark = min(math.floor((1 - orbit_fraction_sunlit) * T + 1e-9), T - 1)
    start = int(rng.integers(0, T))
    n_sun = T - n_dark
    r = np.zeros(T)
    # sunlit arc begins right after the eclipse block and wraps around
    s = np.arange(n_sun)
    idx = (start + n_dark + s) % T
    r[idx] = peak_power * np.maximum(0.0, np.sin(np.pi * (s + 0.5) / n_sun))
    return r


def _uniform_int(rng: np.random.Generator, lo: int, hi: int) -> int:
    return int(rng.integers(lo, hi + 1))


def random_job(rng: np.random.Generator, J: int, T: int) -> JobParams:
    c45, c15, c10, c4, c5 = (math.ceil(T / k) for k in (45, 15, 10, 4, 5))
    y_min = _uniform_int(rng, 1, c45)
    y_max = _uniform_int(rng, y_min, c15)
    t_min = _uniform_int(rng, 1, c10)
    t_max = _uniform_int(rng, t_min, c4)
    p_min = _uniform_int(rng, t_min, c4)
    p_max = _uniform_int(rng, p_min, T)
    w_min = _uniform_int(rng, 0, min(c5, T - 1))
    w_max = _uniform_int(rng, max(T - c5, w_min + 1), T)
    return JobParams(
        u=float(rng.uniform(1, J)),
        q=float(rng.uniform(0.3, 2.5)),
        y_min=y_min, y_max=y_max,
        t_min=t_min, t_max=t_max,
        p_min=p_min, p_max=p_max,
        w_min=w_min, w_max=w_max,
    )


def random_instance(
    J: int,
    T: int,
    seed: int,
    *,
    sunlit_fraction: float = DEFAULT_SUNLIT_FRACTION,
    battery: BatteryParams | None = None,
) -> Instance:
    """Draw an instance; the same (J, T, seed) always gives the same instance.

    The peak solar power is scaled so that the mean availability equals half
    the power needed to run every job at once.
    """
    if J < 1 or T < 1:
        raise ValueError("J and T must be positive")
    rng = np.random.default_rng(seed)
    jobs = tuple(random_job(rng, J, T) for _ in range(J))
    curve_seed = int(rng.integers(0, 2**31 - 1))
    unit = power_curve(T, sunlit_fraction, 1.0, curve_seed)
    target = J * float(np.mean([job.q for job in jobs])) / 2
    r = unit * (target / unit.mean())
    if battery is None:
        battery = BatteryParams(e=0.9, Q=5.0, gamma=5.0, V_b=3.6, rho=0.0,
                                soc_initial=GENERATED_SOC_INITIAL)
    return Instance(J=J, T=T, jobs=jobs, r=tuple(r), battery=battery)
