"""Behavioral models of the peripheral circuits.

8-bit R-2R DAC, regulated voltage source (opamp + pass transistor with dropout
clamp and current compliance), regulated current source (voltage-to-current
converter), PWM pulse generator, and the current-mode SAR ADC read path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .config import Config, parse_kv_file
from .errors import (CodeOutOfRange, ConfigError, NegativeCurrent, RefAboveSupply,
                     RefOutOfOpampRange, TargetOutOfRange)


@dataclass(frozen=True)
class DacSpec:
    bits: int = 8
    lsb: float = 6.25e-3     # volts per step
    v_max: float = 1.6       # full-scale output, volts

    @property
    def v_min(self) -> float:
        return self.lsb

    def __post_init__(self):
        if self.bits < 1:
            raise ConfigError("dac.bits must be >= 1")
        if self.lsb <= 0:
            raise ConfigError("dac.lsb must be > 0")
        if abs((2 ** self.bits) * self.lsb - self.v_max) > 1e-12:
            raise ConfigError("dac: (2^bits)*lsb must equal v_max")


@dataclass(frozen=True)
class RegulatorSpec:
    v_in_min: float = 0.2        # opamp input range, volts
    v_in_max: float = 1.6
    v_dropout_max: float = 1.2   # highest voltage the pass transistor can regulate
    i_compliance: float = 500e-6  # pass-transistor current clamp, amperes

    def __post_init__(self):
        if not (self.v_in_min < self.v_dropout_max < self.v_in_max):
            raise ConfigError("regulator: require v_in_min < v_dropout_max < v_in_max")
        if self.i_compliance <= 0:
            raise ConfigError("regulator.i_compliance must be > 0")


@dataclass(frozen=True)
class CurrentSourceSpec:
    v_dd: float = 1.8        # supply, volts
    r_conv: float = 75e3     # conversion resistor, ohms

    def __post_init__(self):
        if self.v_dd <= 0 or self.r_conv <= 0:
            raise ConfigError("isource: v_dd and r_conv must be > 0")


@dataclass(frozen=True)
class PulseSpec:
    amplitude_code: int
    width: float             # seconds
    period: float            # seconds
    polarity_terminal: str = "OE"   # "AE" or "OE"

    def __post_init__(self):
        if not (0 < self.width <= self.period):
            raise ConfigError("pulse: require 0 < width <= period")
        if self.polarity_terminal not in ("AE", "OE"):
            raise ConfigError("pulse.polarity_terminal must be AE or OE")


@dataclass(frozen=True)
class AdcSpec:
    bits: int = 8
    i_full_scale: float = 256e-6  # amperes
    v_read_reg: float = 0.25      # regulated read voltage, <= 0.7 V
    v_read_default: float = 0.25

    def __post_init__(self):
        if self.bits < 1:
            raise ConfigError("adc.bits must be >= 1")
        if self.i_full_scale <= 0:
            raise ConfigError("adc.i_full_scale must be > 0")
        if self.v_read_reg > 0.7:
            raise ConfigError("adc.v_read_reg must be <= 0.7 V")


@dataclass(frozen=True)
class FrontEnd:
    dac: DacSpec
    regulator: RegulatorSpec
    isource: CurrentSourceSpec
    adc: AdcSpec


def default_front_end() -> FrontEnd:
    return FrontEnd(DacSpec(), RegulatorSpec(), CurrentSourceSpec(), AdcSpec())


def load_front_end(path) -> FrontEnd:
    """Read `dac.* / regulator.* / isource.* / adc.*` keys from a key-value file."""
    cfg = Config(parse_kv_file(path))
    fe = front_end_from_config(cfg)
    cfg.reject_unclaimed()
    return fe


def front_end_from_config(cfg: Config) -> FrontEnd:
    dac = DacSpec(
        bits=cfg.get_int("dac.bits", 8),
        lsb=cfg.get_float("dac.lsb", 6.25e-3),
        v_max=cfg.get_float("dac.v_max", 1.6),
    )
    reg = RegulatorSpec(
        v_in_min=cfg.get_float("regulator.v_in_min", 0.2),
        v_in_max=cfg.get_float("regulator.v_in_max", 1.6),
        v_dropout_max=cfg.get_float("regulator.v_dropout_max", 1.2),
        i_compliance=cfg.get_float("regulator.i_compliance", 500e-6),
    )
    src = CurrentSourceSpec(
        v_dd=cfg.get_float("isource.v_dd", 1.8),
        r_conv=cfg.get_float("isource.r_conv", 75e3),
    )
    adc = AdcSpec(
        bits=cfg.get_int("adc.bits", 8),
        i_full_scale=cfg.get_float("adc.i_full_scale", 256e-6),
        v_read_reg=cfg.get_float("adc.v_read_reg", 0.25),
        v_read_default=cfg.get_float("adc.v_read_default", 0.25),
    )
    return FrontEnd(dac, reg, src, adc)


def dac_voltage(code: int, spec: DacSpec) -> float:
    """Output voltage for a code: (code + 1) * lsb, so code 0 is one lsb above zero."""
    import operator
    try:
        code = operator.index(code)
    except TypeError:
        raise CodeOutOfRange(f"code {code!r} is not an integer") from None
    top = 2 ** spec.bits - 1
    if not (0 <= code <= top):
        raise CodeOutOfRange(f"code {code} outside 0..{top}")
    return (code + 1) * spec.lsb


def quantize_to_dac(v_target: float, spec: DacSpec) -> tuple[int, float]:
    """Nearest representable (code, volts); ties break toward the lower code."""
    if not (spec.v_min <= v_target <= spec.v_max):
        raise TargetOutOfRange(f"{v_target} V outside [{spec.v_min}, {spec.v_max}]")
    top = 2 ** spec.bits - 1
    code = int(min(max(round(v_target / spec.lsb - 1.0), 0), top))
    best = code
    for cand in (code - 1, code + 1):
        if 0 <= cand <= top:
            d_best = abs(dac_voltage(best, spec) - v_target)
            d_cand = abs(dac_voltage(cand, spec) - v_target)
            if d_cand < d_best - 1e-15 or (abs(d_cand - d_best) <= 1e-15 and cand < best):
                best = cand
    return best, dac_voltage(best, spec)


def regulate_voltage(v_ref: float, spec: RegulatorSpec) -> float:
    """Regulated output: the reference, clamped at the dropout limit."""
    if not (spec.v_in_min <= v_ref <= spec.v_in_max):
        raise RefOutOfOpampRange(
            f"v_ref={v_ref} V outside [{spec.v_in_min}, {spec.v_in_max}]")
    return min(v_ref, spec.v_dropout_max)


def regulated_current(v_ref: float, spec: CurrentSourceSpec) -> float:
    """Converter output current (v_dd - v_ref)/r_conv."""
    if v_ref > spec.v_dd:
        raise RefAboveSupply(f"v_ref={v_ref} V above supply {spec.v_dd} V")
    if v_ref <= 0:
        raise ConfigError("current source v_ref must be > 0")
    return (spec.v_dd - v_ref) / spec.r_conv


def pwm_waveform(pulse: PulseSpec, n_periods: int, dac: DacSpec):
    """Piecewise-constant waveform [(t, volts), ...] with exact breakpoints.

    Each period: dac_voltage(amplitude_code) for `width`, then 0 V for the rest.
    The final entry closes the waveform at t = n_periods * period.
    """
    if n_periods < 1:
        raise ConfigError("pwm: n_periods must be >= 1")
    amp = dac_voltage(pulse.amplitude_code, dac)
    points = []
    for k in range(n_periods):
        t0 = k * pulse.period
        points.append((t0, amp))
        if pulse.width < pulse.period:
            points.append((t0 + pulse.width, 0.0))
    points.append((n_periods * pulse.period, 0.0))
    return points


def adc_read(i_column: float, spec: AdcSpec) -> tuple[int, float]:
    """Quantize a column current: code = floor(i/i_fs * 2^bits), clamped."""
    if i_column < 0.0:
        raise NegativeCurrent(f"column current {i_column} A is negative")
    levels = 2 ** spec.bits
    code = min(int(math.floor(i_column / spec.i_full_scale * levels)), levels - 1)
    return code, code * spec.i_full_scale / levels
