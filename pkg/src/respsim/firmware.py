"""Firmware emulator: millisecond tick scheduler, batching, and framing.

The schedule mirrors the device firmware: FSR sampling at 25 Hz, the
accelerometer at 50 Hz, and a battery measurement every 2 s, all phased so
every channel takes its first sample at t=0.  Samples accumulate into
fixed-size batches (5 FSR codes, 10 accel triples per frame) and each
completed batch is framed immediately; partially filled batches are flushed
with the final-flush flag when a run ends.

Energy is accounted per tick from a power profile: a tick is ``radio``
while frame transmission airtime is pending, ``active`` when any channel
sampled, and ``idle`` otherwise.  The battery drains continuously, so a
long enough run walks the reported percent all the way down.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

from . import protocol
from .power import ActivityInterval, PowerProfile, PRESETS, UW_MS_PER_MWH
from .sensor import (
    AdcConfig,
    BatteryState,
    DividerConfig,
    FsrModel,
    LINEAR_OCV,
    OcvCurve,
    ParameterError,
    _round_half_up,
    adc_quantize,
    battery_sense_voltage,
    battery_voltage,
    divider_voltage,
    fsr_resistance,
)


class InvalidConfigError(ValueError):
    """The firmware configuration cannot run on the modeled hardware."""


class NotBootedError(RuntimeError):
    """tick()/state access before boot()."""


class StimulusError(LookupError):
    """The stimulus source has no sample for a scheduled instant."""


@dataclass(frozen=True)
class FirmwareConfig:
    fsr_rate_hz: int = 25
    accel_rate_hz: int = 50
    battery_period_ms: int = 2000
    fsr_batch: int = 5
    accel_batch: int = 10
    tick_ms: int = 1

    def __post_init__(self) -> None:
        for name in ("fsr_rate_hz", "accel_rate_hz", "battery_period_ms",
                     "fsr_batch", "accel_batch", "tick_ms"):
            if getattr(self, name) <= 0:
                raise InvalidConfigError(f"{name} must be positive")

    @property
    def fsr_period_ms(self) -> int:
        return 1000 // self.fsr_rate_hz

    @property
    def accel_period_ms(self) -> int:
        return 1000 // self.accel_rate_hz

    def validate(self) -> None:
        """Reject schedules and batch sizes the hardware cannot honor."""
        for name, rate in (("fsr_rate_hz", self.fsr_rate_hz),
                           ("accel_rate_hz", self.accel_rate_hz)):
            if 1000 % rate != 0:
                raise InvalidConfigError(
                    f"{name}={rate} does not divide the 1000 ms tick grid evenly"
                )
        for name, period in (("fsr", self.fsr_period_ms),
                             ("accel", self.accel_period_ms),
                             ("battery", self.battery_period_ms)):
            if period % self.tick_ms != 0:
                raise InvalidConfigError(
                    f"{name} period {period} ms is not a multiple of tick_ms={self.tick_ms}"
                )
        fsr_payload = 5 + 2 * self.fsr_batch
        if fsr_payload > protocol.MAX_PAYLOAD:
            raise InvalidConfigError(
                f"fsr_batch={self.fsr_batch} needs a {fsr_payload}-byte payload, "
                f"MTU budget allows {protocol.MAX_PAYLOAD}"
            )
        accel_payload = 5 + 6 * self.accel_batch
        if accel_payload > protocol.MAX_PAYLOAD:
            raise InvalidConfigError(
                f"accel_batch={self.accel_batch} needs a {accel_payload}-byte payload, "
                f"MTU budget allows {protocol.MAX_PAYLOAD}"
            )


@dataclass(frozen=True)
class DeviceModel:
    """Electrical chain parameters shared by firmware and host inversion."""

    fsr: FsrModel = FsrModel()
    divider: DividerConfig = DividerConfig()
    adc: AdcConfig = AdcConfig()
    ocv: OcvCurve = LINEAR_OCV
    sense_ratio: float = 0.4
    capacity_mah: float = 450.0
    nominal_v: float = 3.7

    def __post_init__(self) -> None:
        if not (0.0 < self.sense_ratio < 1.0):
            raise ParameterError(f"sense_ratio must be in (0, 1), got {self.sense_ratio}")
        if self.capacity_mah <= 0 or self.nominal_v <= 0:
            raise ParameterError("capacity_mah and nominal_v must be positive")

    def device_percent(self, v_batt: float) -> int:
        """Firmware's charge percent from terminal voltage, round-half-up."""
        span = self.ocv.v_max - self.ocv.v_min
        pct = 100.0 * (v_batt - self.ocv.v_min) / span
        return _round_half_up(min(max(pct, 0.0), 100.0))


@dataclass
class DeviceState:
    clock_ms: int
    seq: int
    battery: BatteryState
    accel_configured: bool


@dataclass(frozen=True)
class BatteryMeasurement:
    """Ground-truth record of one battery sampling instant."""

    t_ms: int
    soc: float
    v_terminal: float
    sense_v: float
    adc_code: int
    percent: int


class StimulusSource(Protocol):
    def force_n(self, t_ms: int) -> float: ...
    def accel_mg(self, t_ms: int) -> tuple[int, int, int]: ...


class ConstantStimulus:
    """Fixed force and posture; handy for cadence and battery tests."""

    def __init__(self, force: float = 4.0, accel: tuple[int, int, int] = (0, 0, 1000)):
        self._force = force
        self._accel = accel

    def force_n(self, t_ms: int) -> float:
        return self._force

    def accel_mg(self, t_ms: int) -> tuple[int, int, int]:
        return self._accel


class ArrayStimulus:
    """Stimulus backed by pre-generated sample lists keyed by timestamp."""

    def __init__(self, force_samples, accel_samples):
        self._force = {s.t_ms: s.force_n for s in force_samples}
        self._accel = {s.t_ms: (s.x_mg, s.y_mg, s.z_mg) for s in accel_samples}

    def force_n(self, t_ms: int) -> float:
        try:
            return self._force[t_ms]
        except KeyError:
            raise StimulusError(f"no force sample at t={t_ms} ms") from None

    def accel_mg(self, t_ms: int) -> tuple[int, int, int]:
        try:
            return self._accel[t_ms]
        except KeyError:
            raise StimulusError(f"no accel sample at t={t_ms} ms") from None


class FirmwareEmulator:
    """Deterministic software twin of the sensor firmware.

    Drive it either tick by tick (supplying samples for any channel due at
    the current clock) or with :meth:`run` and a stimulus source.  All
    state lives in plain Python scalars; identical configuration and
    stimulus reproduce identical frame bytes.
    """

    def __init__(
        self,
        config: FirmwareConfig = FirmwareConfig(),
        model: DeviceModel = DeviceModel(),
        power_profile: PowerProfile | None = None,
        initial_soc: float = 1.0,
        charging: bool = False,
    ) -> None:
        if not (0.0 <= initial_soc <= 1.0):
            raise InvalidConfigError(f"initial_soc must be in [0, 1], got {initial_soc}")
        self.config = config
        self.model = model
        self.power_profile = power_profile or PRESETS["abstract-claim"]
        self.initial_soc = initial_soc
        self.charging = charging
        self._booted = False

    # -- lifecycle ----------------------------------------------------------

    def boot(self) -> DeviceState:
        """Validate configuration and reset all runtime state."""
        self.config.validate()
        # confirm the full-charge rail fits the ADC front end
        battery_sense_voltage(
            self.model.ocv.v_max, self.model.sense_ratio, self.model.adc.v_ref
        )
        self._clock_ms = 0
        self._seq = 0
        self._energy_mwh = 0.0
        self._tx_remaining_ms = 0
        self._fsr_buf: list[tuple[int, int]] = []
        self._accel_buf: list[tuple[int, tuple[int, int, int]]] = []
        self._timeline: list[list] = []  # [state, start_ms, end_ms], merged
        self.battery_log: list[BatteryMeasurement] = []
        self._booted = True
        return self.state

    def _require_boot(self) -> None:
        if not self._booted:
            raise NotBootedError("boot() must complete before ticking")

    # -- views --------------------------------------------------------------

    @property
    def soc(self) -> float:
        """Charge remaining; derived from accumulated energy in one step so
        sub-picojoule per-tick draws don't get lost to float cancellation."""
        self._require_boot()
        used = self._energy_mwh / (self.model.capacity_mah * self.model.nominal_v)
        return max(self.initial_soc - used, 0.0)

    @property
    def energy_mwh(self) -> float:
        self._require_boot()
        return self._energy_mwh

    @property
    def state(self) -> DeviceState:
        self._require_boot()
        soc = self.soc
        battery = BatteryState(
            capacity_mah=self.model.capacity_mah,
            soc=soc,
            v_terminal=battery_voltage(soc, self.model.ocv),
            charging=self.charging,
            depleted=(soc <= 0.0),
        )
        return DeviceState(
            clock_ms=self._clock_ms,
            seq=self._seq,
            battery=battery,
            accel_configured=True,
        )

    @property
    def activity_timeline(self) -> list[ActivityInterval]:
        self._require_boot()
        return [ActivityInterval(s, a, b) for s, a, b in self._timeline]

    # -- internals ----------------------------------------------------------

    def _flags(self, final_flush: bool = False) -> int:
        flags = protocol.FLAG_CHARGING if self.charging else 0
        if final_flush:
            flags |= protocol.FLAG_FINAL_FLUSH
        return flags

    def _next_seq(self) -> int:
        seq = self._seq
        self._seq = (self._seq + 1) & 0xFFFF
        return seq

    def _make_fsr_frame(self, final_flush: bool = False) -> protocol.TelemetryFrame:
        t0 = self._fsr_buf[0][0]
        codes = tuple(code for _, code in self._fsr_buf)
        self._fsr_buf.clear()
        return protocol.TelemetryFrame(
            protocol.FrameKind.FSR_BATCH,
            self._next_seq(),
            self._flags(final_flush),
            protocol.FsrBatchPayload(t0, codes),
        )

    def _make_accel_frame(self, final_flush: bool = False) -> protocol.TelemetryFrame:
        t0 = self._accel_buf[0][0]
        samples = tuple(s for _, s in self._accel_buf)
        self._accel_buf.clear()
        return protocol.TelemetryFrame(
            protocol.FrameKind.ACCEL_BATCH,
            self._next_seq(),
            self._flags(final_flush),
            protocol.AccelBatchPayload(t0, samples),
        )

    def _measure_battery(self, t_ms: int) -> protocol.BatteryStatusPayload:
        soc = self.soc
        v = battery_voltage(soc, self.model.ocv)
        sense = battery_sense_voltage(v, self.model.sense_ratio, self.model.adc.v_ref)
        code = adc_quantize(sense, self.model.adc)
        percent = self.model.device_percent(v)
        self.battery_log.append(BatteryMeasurement(t_ms, soc, v, sense, code, percent))
        return protocol.BatteryStatusPayload(t_ms, code, percent)

    def _record_activity(self, state: str, t_ms: int) -> None:
        end = t_ms + self.config.tick_ms
        if self._timeline and self._timeline[-1][0] == state and self._timeline[-1][2] == t_ms:
            self._timeline[-1][2] = end
        else:
            self._timeline.append([state, t_ms, end])

    # -- stepping -----------------------------------------------------------

    def tick(
        self,
        force_n: float | None = None,
        accel_mg: tuple[int, int, int] | None = None,
    ) -> list[protocol.TelemetryFrame]:
        """Advance one tick, sampling whatever the schedule makes due.

        Samples must be supplied for channels due this tick and are ignored
        otherwise.  Returns frames completed by this tick in the fixed
        order FSR batch, accel batch, battery status.
        """
        self._require_boot()
        cfg = self.config
        t = self._clock_ms
        frames: list[protocol.TelemetryFrame] = []
        sampled = False

        if t % cfg.fsr_period_ms == 0:
            if force_n is None:
                raise StimulusError(f"FSR sample due at t={t} ms but no force supplied")
            code = adc_quantize(
                divider_voltage(fsr_resistance(force_n, self.model.fsr), self.model.divider),
                self.model.adc,
            )
            self._fsr_buf.append((t, code))
            sampled = True
            if len(self._fsr_buf) == cfg.fsr_batch:
                frames.append(self._make_fsr_frame())

        if t % cfg.accel_period_ms == 0:
            if accel_mg is None:
                raise StimulusError(f"accel sample due at t={t} ms but none supplied")
            self._accel_buf.append((t, (int(accel_mg[0]), int(accel_mg[1]), int(accel_mg[2]))))
            sampled = True
            if len(self._accel_buf) == cfg.accel_batch:
                frames.append(self._make_accel_frame())

        if t % cfg.battery_period_ms == 0:
            payload = self._measure_battery(t)
            frames.append(
                protocol.TelemetryFrame(
                    protocol.FrameKind.BATTERY_STATUS, self._next_seq(), self._flags(), payload
                )
            )
            sampled = True

        # energy accounting: pending radio airtime outranks sampling work
        if self._tx_remaining_ms > 0:
            activity = "radio"
            self._tx_remaining_ms -= cfg.tick_ms
        elif sampled:
            activity = "active"
        else:
            activity = "idle"
        self._record_activity(activity, t)
        p_uw = self.power_profile.power_uw(activity)
        self._energy_mwh += p_uw * cfg.tick_ms / UW_MS_PER_MWH
        if frames:
            self._tx_remaining_ms += self.power_profile.tx_ms_per_frame * len(frames)

        self._clock_ms = t + cfg.tick_ms
        return frames

    def flush(self) -> list[protocol.TelemetryFrame]:
        """Emit any partially filled batches with the final-flush flag set."""
        self._require_boot()
        frames: list[protocol.TelemetryFrame] = []
        if self._fsr_buf:
            frames.append(self._make_fsr_frame(final_flush=True))
        if self._accel_buf:
            frames.append(self._make_accel_frame(final_flush=True))
        return frames

    def run(self, stimulus: StimulusSource, duration_s: float) -> list[protocol.TelemetryFrame]:
        """Boot fresh, run the schedule for a duration, and flush.

        ``duration_s`` must be a whole number of ticks.  The returned list
        is every frame the device would have sent, in transmit order.
        """
        total_ms_exact = duration_s * 1000.0
        total_ms = int(round(total_ms_exact))
        if abs(total_ms_exact - total_ms) > 1e-6 or total_ms < 0:
            raise InvalidConfigError(
                f"duration_s={duration_s} is not a whole number of milliseconds"
            )
        if total_ms % self.config.tick_ms != 0:
            raise InvalidConfigError(
                f"duration {total_ms} ms is not a multiple of tick_ms={self.config.tick_ms}"
            )
        self.boot()
        cfg = self.config
        frames: list[protocol.TelemetryFrame] = []
        for t in range(0, total_ms, cfg.tick_ms):
            force = stimulus.force_n(t) if t % cfg.fsr_period_ms == 0 else None
            accel = stimulus.accel_mg(t) if t % cfg.accel_period_ms == 0 else None
            frames.extend(self.tick(force, accel))
        frames.extend(self.flush())
        return frames


def encode_session(frames: list[protocol.TelemetryFrame]) -> bytes:
    """Concatenate the wire bytes for a frame sequence."""
    return b"".join(protocol.encode(f) for f in frames)
