"""Analog front-end models and synthetic stimulus generators.

The sensing chain mirrors the wearable's electronics: a force-sensing
resistor (FSR) forming the lower leg of a voltage divider, sampled by a
12-bit ADC, plus a battery whose terminal voltage reaches the same ADC
through a resistive sense divider.  Everything in this module is pure and
deterministic (RNG state is always an explicit seed) so the firmware
emulator layered on top stays byte-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

FULL_SCALE_MG = 2000  # accelerometer clamp, milli-g per axis


class ParameterError(ValueError):
    """A model parameter or generator argument is outside its valid range."""


class SenseRangeError(ValueError):
    """A sense divider output would exceed the ADC reference voltage.

    This is a configuration error, not a runtime clamp: the divider ratio
    must be chosen so the highest battery voltage stays inside the ADC
    full-scale range.
    """


def _round_half_up(x: float) -> int:
    """Round with ties going up, matching the ADC's quantizer."""
    return int(math.floor(x + 0.5))


# ---------------------------------------------------------------------------
# sample containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ForceSample:
    t_ms: int
    force_n: float


@dataclass(frozen=True)
class AccelSample:
    t_ms: int
    x_mg: int
    y_mg: int
    z_mg: int

    def magnitude_mg(self) -> float:
        return math.sqrt(self.x_mg ** 2 + self.y_mg ** 2 + self.z_mg ** 2)


# ---------------------------------------------------------------------------
# FSR + divider + ADC
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FsrModel:
    """Inverse-law force-to-resistance model with physical clamps.

    ``k_ohm_n`` is the device constant in ohm-newtons: resistance is
    ``k / force`` between the clamp rails.  Below ``f_break_n`` the sensor
    does not conduct and resistance pins at ``r_max_ohm``.
    """

    k_ohm_n: float = 100_000.0
    r_min_ohm: float = 1_000.0
    r_max_ohm: float = 10_000_000.0
    f_break_n: float = 0.01

    def __post_init__(self) -> None:
        if not (self.k_ohm_n > 0):
            raise ParameterError(f"k_ohm_n must be positive, got {self.k_ohm_n}")
        if not (0 < self.r_min_ohm < self.r_max_ohm):
            raise ParameterError(
                f"need 0 < r_min_ohm < r_max_ohm, got {self.r_min_ohm}, {self.r_max_ohm}"
            )
        if not (self.f_break_n >= 0):
            raise ParameterError(f"f_break_n must be >= 0, got {self.f_break_n}")


@dataclass(frozen=True)
class DividerConfig:
    """Fixed-resistor voltage divider feeding the ADC input."""

    r_fixed_ohm: float = 499_000.0
    v_dd: float = 1.8

    def __post_init__(self) -> None:
        if not (self.r_fixed_ohm > 0):
            raise ParameterError(f"r_fixed_ohm must be positive, got {self.r_fixed_ohm}")
        if not (self.v_dd > 0):
            raise ParameterError(f"v_dd must be positive, got {self.v_dd}")


@dataclass(frozen=True)
class AdcConfig:
    bits: int = 12
    v_ref: float = 1.8

    def __post_init__(self) -> None:
        if not (1 <= self.bits <= 16):
            raise ParameterError(f"bits must be in 1..16, got {self.bits}")
        if not (self.v_ref > 0):
            raise ParameterError(f"v_ref must be positive, got {self.v_ref}")

    @property
    def full_scale(self) -> int:
        """Highest representable code (2**bits - 1)."""
        return (1 << self.bits) - 1

    @property
    def lsb_volts(self) -> float:
        return self.v_ref / self.full_scale


def fsr_resistance(force_n: float, model: FsrModel = FsrModel()) -> float:
    """Map an applied force in newtons to FSR resistance in ohms.

    Zero or sub-breakpoint force reads as the open-circuit rail
    ``r_max_ohm``; very large forces clamp at ``r_min_ohm``.
    """
    if not (force_n >= 0) or math.isnan(force_n):
        raise ParameterError(f"force_n must be >= 0, got {force_n}")
    if force_n <= model.f_break_n:
        return model.r_max_ohm
    r = model.k_ohm_n / force_n
    return min(max(r, model.r_min_ohm), model.r_max_ohm)


def divider_voltage(r_fsr_ohm: float, cfg: DividerConfig = DividerConfig()) -> float:
    """Divider output voltage for a given FSR resistance.

    The fixed resistor is the output leg, so a shorted sensor (0 ohm)
    reads full rail and increasing resistance pulls the output down.
    The evaluation order ``v_dd * r_fixed / (r_fixed + r)`` is deliberate:
    it keeps the algebraic identity ``v_out * (r_fixed + r) == v_dd * r_fixed``
    true to within 1 ulp, which the divider tests rely on.
    """
    if not (r_fsr_ohm >= 0) or math.isnan(r_fsr_ohm):
        raise ParameterError(f"r_fsr_ohm must be >= 0, got {r_fsr_ohm}")
    return cfg.v_dd * cfg.r_fixed_ohm / (cfg.r_fixed_ohm + r_fsr_ohm)


def adc_quantize(v: float, cfg: AdcConfig = AdcConfig()) -> int:
    """Quantize a voltage to an ADC code, round-half-up, clamped to range."""
    if math.isnan(v):
        raise ParameterError("cannot quantize NaN")
    v = min(max(v, 0.0), cfg.v_ref)
    code = _round_half_up(v / cfg.v_ref * cfg.full_scale)
    return min(max(code, 0), cfg.full_scale)


def adc_to_voltage(code: int, cfg: AdcConfig = AdcConfig()) -> float:
    """Nominal input voltage for an ADC code (code centers)."""
    if not (0 <= code <= cfg.full_scale):
        raise ParameterError(f"code {code} outside 0..{cfg.full_scale}")
    return code / cfg.full_scale * cfg.v_ref


# ---------------------------------------------------------------------------
# battery
# ---------------------------------------------------------------------------

@dataclass
class BatteryState:
    capacity_mah: float = 450.0
    soc: float = 1.0
    v_terminal: float = 4.2
    charging: bool = False
    depleted: bool = False

    def __post_init__(self) -> None:
        if not (self.capacity_mah > 0):
            raise ParameterError(f"capacity_mah must be positive, got {self.capacity_mah}")
        if not (0.0 <= self.soc <= 1.0):
            raise ParameterError(f"soc must be in [0, 1], got {self.soc}")


@dataclass(frozen=True)
class OcvCurve:
    """Piecewise-linear open-circuit voltage curve over state of charge.

    Points are (soc, volts), must start at soc 0.0, end at soc 1.0 and be
    strictly increasing in both coordinates so the curve is invertible.
    The default is the linear 3.3 V .. 4.2 V map.
    """

    points: tuple[tuple[float, float], ...] = ((0.0, 3.3), (1.0, 4.2))

    def __post_init__(self) -> None:
        pts = tuple((float(s), float(v)) for s, v in self.points)
        object.__setattr__(self, "points", pts)
        if len(pts) < 2:
            raise ParameterError("OcvCurve needs at least two points")
        socs = [s for s, _ in pts]
        volts = [v for _, v in pts]
        if socs[0] != 0.0 or socs[-1] != 1.0:
            raise ParameterError("OcvCurve must span soc 0.0 .. 1.0")
        if any(b <= a for a, b in zip(socs, socs[1:])):
            raise ParameterError("OcvCurve soc values must be strictly increasing")
        if any(b <= a for a, b in zip(volts, volts[1:])):
            raise ParameterError("OcvCurve voltages must be strictly increasing")

    @property
    def v_min(self) -> float:
        return self.points[0][1]

    @property
    def v_max(self) -> float:
        return self.points[-1][1]

    def voltage(self, soc: float) -> float:
        if not (0.0 <= soc <= 1.0):
            raise ParameterError(f"soc must be in [0, 1], got {soc}")
        socs = [s for s, _ in self.points]
        volts = [v for _, v in self.points]
        return float(np.interp(soc, socs, volts))

    def soc_for_voltage(self, v: float) -> float:
        """Inverse lookup; voltages outside the curve clamp to its ends."""
        socs = [s for s, _ in self.points]
        volts = [v_ for _, v_ in self.points]
        return float(np.interp(v, volts, socs))


LINEAR_OCV = OcvCurve()


def battery_voltage(soc: float, curve: OcvCurve = LINEAR_OCV) -> float:
    """Terminal voltage for a state of charge under the given OCV curve."""
    return curve.voltage(soc)


def battery_sense_voltage(v_batt: float, ratio: float = 0.4, v_ref: float = 1.8) -> float:
    """Scale the battery terminal voltage through the sense divider.

    The 4.2 V full-charge rail times the default 0.4 ratio lands at
    1.68 V, safely inside the 1.8 V ADC range.  A ratio that would push
    any requested voltage past ``v_ref`` raises :class:`SenseRangeError`.
    """
    if not (0.0 < ratio < 1.0):
        raise ParameterError(f"sense ratio must be in (0, 1), got {ratio}")
    if not (v_batt >= 0) or math.isnan(v_batt):
        raise ParameterError(f"v_batt must be >= 0, got {v_batt}")
    out = v_batt * ratio
    if out > v_ref:
        raise SenseRangeError(
            f"sense output {out:.4f} V exceeds ADC reference {v_ref} V "
            f"(v_batt={v_batt}, ratio={ratio})"
        )
    return out


# ---------------------------------------------------------------------------
# synthetic stimulus generators
# ---------------------------------------------------------------------------

def _sample_grid(duration_s: float, sample_rate_hz: int) -> tuple[int, int]:
    """Return (sample count, period in ms) for an even millisecond grid."""
    if sample_rate_hz <= 0 or 1000 % sample_rate_hz != 0:
        raise ParameterError(
            f"sample_rate_hz must divide 1000 evenly, got {sample_rate_hz}"
        )
    if not (duration_s >= 0) or math.isnan(duration_s):
        raise ParameterError(f"duration_s must be >= 0, got {duration_s}")
    n_exact = duration_s * sample_rate_hz
    n = int(round(n_exact))
    if abs(n_exact - n) > 1e-9:
        raise ParameterError(
            f"duration_s={duration_s} is not a whole number of samples at {sample_rate_hz} Hz"
        )
    return n, 1000 // sample_rate_hz


def generate_breathing(
    rate_bpm: float,
    amplitude_n: float = 2.0,
    noise_sd_n: float = 0.0,
    duration_s: float = 60.0,
    seed: int = 0,
    *,
    baseline_n: float = 4.0,
    sample_rate_hz: int = 25,
) -> list[ForceSample]:
    """Synthesize chest-strap force samples for steady breathing.

    The waveform is ``baseline + amplitude * sin(2*pi*f*t)`` with
    ``f = rate_bpm / 60``, plus optional Gaussian noise, clamped at zero
    (the strap cannot pull).  Sampling starts at t=0 ms on an exact
    millisecond grid so emulator sampling instants line up one-to-one.
    """
    if not (0 < rate_bpm <= 60):
        raise ParameterError(f"rate_bpm must be in (0, 60], got {rate_bpm}")
    if not (0 <= amplitude_n <= baseline_n):
        raise ParameterError(
            f"need 0 <= amplitude_n <= baseline_n, got {amplitude_n}, {baseline_n}"
        )
    if noise_sd_n < 0:
        raise ParameterError(f"noise_sd_n must be >= 0, got {noise_sd_n}")
    n, period_ms = _sample_grid(duration_s, sample_rate_hz)

    t_ms = np.arange(n, dtype=np.int64) * period_ms
    t_s = t_ms.astype(np.float64) / 1000.0
    force = baseline_n + amplitude_n * np.sin(2.0 * np.pi * (rate_bpm / 60.0) * t_s)
    if noise_sd_n > 0:
        rng = np.random.default_rng(seed)
        force = force + rng.normal(0.0, noise_sd_n, n)
    force = np.maximum(force, 0.0)
    return [ForceSample(int(t), float(f)) for t, f in zip(t_ms, force)]


POSTURES = ("still", "walking", "shift")

_WALK_STEP_HZ = 2.0      # cadence of the walking modulation
_WALK_DEPTH_MG = 300     # square-wave depth; holds |magnitude - 1g| at 300 mg
_SHIFT_VECTOR = (600, 0, 800)  # reoriented gravity after a posture shift, |.| = 1000


def _posture_base_mg(posture: str, t_ms: np.ndarray, shift_at_ms: float) -> np.ndarray:
    """Noise-free accelerometer vectors (n, 3) for a posture over a time grid."""
    n = t_ms.size
    base = np.zeros((n, 3), dtype=np.float64)
    if posture == "still":
        base[:, 2] = 1000.0
    elif posture == "walking":
        # Square wave keyed on absolute time; the phase test never lands on a
        # transition sample, so the deviation from 1 g is a constant 300 mg
        # for the whole span (a sine would only exceed the artifact threshold
        # in sub-500 ms bursts and read as clean).
        phase = (t_ms.astype(np.float64) / 1000.0 * _WALK_STEP_HZ) % 1.0
        base[:, 2] = np.where(phase < 0.5, 1000.0 + _WALK_DEPTH_MG, 1000.0 - _WALK_DEPTH_MG)
    elif posture == "shift":
        before = t_ms < shift_at_ms
        base[before, 2] = 1000.0
        base[~before, 0] = _SHIFT_VECTOR[0]
        base[~before, 1] = _SHIFT_VECTOR[1]
        base[~before, 2] = _SHIFT_VECTOR[2]
    else:
        raise ParameterError(f"unknown posture {posture!r}, expected one of {POSTURES}")
    return base


def generate_accel(
    posture: str,
    duration_s: float = 60.0,
    seed: int = 0,
    *,
    noise_sd_mg: float = 10.0,
    sample_rate_hz: int = 50,
) -> list[AccelSample]:
    """Synthesize accelerometer samples in milli-g for a posture scenario.

    ``still`` rests gravity on +z; ``walking`` superimposes a square-wave
    step modulation; ``shift`` swaps to a tilted gravity vector halfway
    through (same 1000 mg magnitude, so a shift alone is not an artifact).
    """
    if noise_sd_mg < 0:
        raise ParameterError(f"noise_sd_mg must be >= 0, got {noise_sd_mg}")
    n, period_ms = _sample_grid(duration_s, sample_rate_hz)
    t_ms = np.arange(n, dtype=np.int64) * period_ms
    base = _posture_base_mg(posture, t_ms, shift_at_ms=duration_s * 1000.0 / 2.0)
    if noise_sd_mg > 0:
        rng = np.random.default_rng(seed)
        base = base + rng.normal(0.0, noise_sd_mg, (n, 3))
    mg = np.floor(base + 0.5).astype(np.int64)
    mg = np.clip(mg, -FULL_SCALE_MG, FULL_SCALE_MG)
    return [
        AccelSample(int(t), int(x), int(y), int(z))
        for t, (x, y, z) in zip(t_ms, mg)
    ]
