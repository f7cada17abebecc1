"""Compact model of one VCM memristor.

Static current through the electrode barrier / oxide stack and dynamics of the
disc oxygen-vacancy concentration (the single state variable), with instantaneous
Joule self-heating. Concentrations are expressed in units of 1e26 m^-3.

Electrical stack, active electrode to ohmic electrode: Schottky-type barrier at
the active electrode, ohmic disc and plug regions whose conductivity scales with
vacancy concentration, then fixed TiOx, series and line resistances. Positive
device voltage (active electrode high) drives RESET toward HRS; negative drives
SET toward LRS.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from functools import lru_cache

from .config import parse_kv_file
from .errors import ConfigError, NonConvergence, ReadVoltageOutOfRange, StepTooLarge

Q_E = 1.602176634e-19
EPS0 = 8.8541878128e-12
HBAR = 1.054571817e-34
M_E = 9.1093837015e-31
CONC_UNIT = 1e26


@dataclass(frozen=True)
class DeviceParams:
    """Deterministic compact-model parameters.

    Geometry/electrical values default to the reference deterministic set; the
    closure constants below them (disc mobility through thermal ceiling) complete
    the model and are exposed for calibration. All SI except concentrations
    (1e26 m^-3) and barrier energies (eV).
    """

    a_det: float = 6.36e-15        # disc cross-section area, m^2
    n_disc_min: float = 0.008      # HRS boundary concentration
    l_cell: float = 3e-9           # oxide cell length, m
    l_plug: float = 2.6e-9         # plug length, m
    l_det: float = 0.4e-9          # disc length, m
    r_series: float = 1370.0       # fixed series resistance, ohm
    r_line: float = 719.0          # device line resistance, ohm
    r_tiox: float = 650.0          # TiOx layer resistance, ohm
    gamma0: float = 2e13           # ion hop attempt frequency, Hz
    rth0_set: float = 15.72e6      # thermal resistance during SET, K/W
    e_phi_bn0: float = 0.18        # zero-bias barrier height, eV
    rth_line: float = 90471.47     # line thermal resistance, K/W
    alpha_line: float = 3.92e-3    # line temperature coefficient, 1/K
    a_star: float = 6.01e5         # effective Richardson constant, A/(m^2 K^2)
    kb: float = 1.38e-23           # Boltzmann constant, J/K
    rd: float = 45e-9              # filament radius, m
    a_hop: float = 0.25e-9         # ion hopping distance, m
    t0: float = 293.0              # ambient temperature, K
    n_disc_max: float = 20.0       # LRS boundary concentration
    delta_e_a: float = 0.9         # ion-hopping activation energy, eV
    # closure constants
    mu_n: float = 4e-6             # electron mobility in disc/plug, m^2/(V s)
    n_plug: float = 20.0           # plug vacancy concentration (fixed)
    eps_r: float = 17.0            # static relative permittivity of the oxide
    eps_phib: float = 5.5          # permittivity used for barrier lowering
    phi_n: float = 0.1             # conduction-band offset below Fermi level, eV
    z_vo: float = 2.0              # vacancy charge number
    m_eff_rel: float = 0.86        # tunnelling effective mass, relative to m_e
    psi_floor: float = 1e-4        # floor on band bending in barrier lowering, eV
    rate_ceiling: float = 1e5      # cap on the specific state rate, 1/s
    rth_reset_coeff: float = 0.55  # thermal resistance scaling during RESET
    t_ceiling: float = 3000.0      # thermal solution cap (runaway clamp), K

    def __post_init__(self):
        positive = ("a_det", "n_disc_min", "l_cell", "l_plug", "l_det", "r_series",
                    "r_line", "r_tiox", "gamma0", "rth0_set", "e_phi_bn0", "rth_line",
                    "alpha_line", "a_star", "kb", "rd", "a_hop", "t0", "n_disc_max",
                    "delta_e_a", "mu_n", "n_plug", "eps_r", "eps_phib", "z_vo",
                    "m_eff_rel", "psi_floor", "rate_ceiling", "rth_reset_coeff",
                    "t_ceiling")
        for name in positive:
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"device parameter {name} must be > 0")
        if self.phi_n < 0.0:
            raise ConfigError("device parameter phi_n must be >= 0")
        if self.l_plug >= self.l_cell:
            raise ConfigError("l_plug must be smaller than l_cell")
        if self.l_det > self.l_cell - self.l_plug + 1e-12:
            raise ConfigError("l_det must not exceed l_cell - l_plug")
        if self.n_disc_min >= self.n_disc_max:
            raise ConfigError("n_disc_min must be below n_disc_max")
        disc_area = math.pi * self.rd * self.rd
        if abs(disc_area - self.a_det) > 0.02 * self.a_det:
            raise ConfigError("a_det inconsistent with pi*rd^2 beyond 2%")
        if self.t_ceiling <= self.t0:
            raise ConfigError("t_ceiling must exceed t0")


@dataclass(frozen=True)
class DeviceState:
    """Disc vacancy concentration, 1e26 m^-3."""

    n_disc: float


def hrs_state(p: DeviceParams) -> DeviceState:
    return DeviceState(p.n_disc_min)


def lrs_state(p: DeviceParams) -> DeviceState:
    return DeviceState(p.n_disc_max)


def load_device_params(path, overrides=None) -> DeviceParams:
    """Read a flat `name = value` parameter file; keys must be DeviceParams fields."""
    entries = parse_kv_file(path)
    known = {f.name for f in fields(DeviceParams)}
    values = {}
    for key, e in entries.items():
        if key not in known:
            raise ConfigError(f"unknown device parameter {key!r}", path=e.path, line=e.line)
        try:
            values[key] = float(e.value)
        except ValueError:
            raise ConfigError(f"device parameter {key!r}: {e.value!r} is not a number",
                              path=e.path, line=e.line) from None
    if overrides:
        values.update(overrides)
    return DeviceParams(**values)


def _expc(x: float) -> float:
    # exp with argument clamped to avoid overflow; tails are saturated anyway
    return math.exp(x) if -200.0 < x < 200.0 else math.exp(200.0 if x >= 200.0 else -200.0)


class DeviceSolver:
    """Numerical core for one parameter set: stack division, heating, kinetics.

    Results are deterministic. Warm-start guesses accelerate repeated solves;
    they never change which solution is found, only how fast.
    """

    def __init__(self, p: DeviceParams):
        self.p = p
        # ohmic conductance scale of disc/plug: sigma = q * z * n * mu
        self.g_ohm = Q_E * p.z_vo * CONC_UNIT * p.mu_n * p.a_det
        self.r_plug = p.l_plug / (self.g_ohm * p.n_plug)
        self.r_fix = p.r_series + p.r_tiox
        # image-force barrier lowering: dphi = (q^3 z n psi / (8 pi^2 eps_phib^2 eps_r eps0^3))^(1/4)
        self.dphi_k = (Q_E ** 3 * p.z_vo * CONC_UNIT
                       / (8 * math.pi ** 2 * p.eps_phib ** 2 * p.eps_r * EPS0 ** 3)) ** 0.25
        # tunnelling energy scale e00 = (q hbar / 2) sqrt(n z / (m* eps))
        self.e00_k = (Q_E * HBAR / 2.0) * math.sqrt(
            p.z_vo * CONC_UNIT / (p.m_eff_rel * M_E * p.eps_r * EPS0))
        self.kin_k = (p.a_hop / p.l_det) * p.gamma0

    def disc_resistance(self, n: float) -> float:
        return self.p.l_det / (self.g_ohm * n)

    def barrier_current(self, vsc: float, n: float, temp: float) -> float:
        """Current through the active-electrode barrier at bias vsc (volts).

        Forward (vsc >= 0): thermionic emission over the lowered barrier.
        Reverse: field-assisted tunnelling through the barrier with the same
        image-force lowering, blocked smoothly near zero bias.
        """
        p = self.p
        psi = p.e_phi_bn0 - p.phi_n - vsc
        if psi < p.psi_floor:
            psi = p.psi_floor
        phib = p.e_phi_bn0 - self.dphi_k * (n * psi) ** 0.25
        if phib < 0.0:
            phib = 0.0
        vt = p.kb * temp / Q_E
        if vsc >= 0.0:
            i_s = p.a_det * p.a_star * temp * temp * _expc(-phib / vt)
            return i_s * (_expc(vsc / vt) - 1.0)
        vr = -vsc
        e00 = self.e00_k * math.sqrt(n)
        x = e00 / (p.kb * temp)
        tx = math.tanh(x)
        e0 = e00 / tx
        denom = x - tx
        eps_t = e00 / denom if denom > 1e-12 else 1e12 * e00
        pref = p.a_det * (p.a_star * temp / p.kb) * math.sqrt(math.pi * e00 * Q_E)
        arg = vr + phib / math.cosh(x) ** 2
        i = pref * math.sqrt(arg if arg > 0 else 0.0) * _expc(-Q_E * phib / e0) * _expc(Q_E * vr / eps_t)
        return -i * (1.0 - _expc(-vr / vt))

    def _rth(self, v: float) -> float:
        return self.p.rth0_set * (1.0 if v < 0 else self.p.rth_reset_coeff)

    def temperature_fixpoint(self, vsc: float, n: float, rth: float, hint=None) -> float:
        """Lowest solution of T = t0 + rth * P(T), found by accelerated ascent from t0.

        A hint from a nearby solve may only tighten the UPPER bracket: g(T) <= T
        proves T is at or above the lowest fixpoint, while g(T) > T proves
        nothing (it also holds between the unstable and runaway branches).
        Returns t_ceiling when no fixpoint exists below it (thermal runaway).
        """
        p = self.p
        t0c, tc = p.t0, p.t_ceiling
        rdp = self.disc_resistance(n) + self.r_plug

        def g(temp):
            i = self.barrier_current(vsc, n, temp)
            return t0c + rth * abs(i * (vsc + i * rdp))

        temp = t0c
        gt = g(temp)
        if gt - temp <= 1e-9 * temp:
            return gt
        lo = temp
        hi = None
        tp, gp = temp, gt
        temp = min(gt, tc)
        if hint is not None and t0c < hint < tc:
            probe = min(1.05 * hint + 1.0, tc)
            if g(probe) <= probe:
                hi = probe
                temp = min(temp, 0.5 * (lo + hi))
        for _ in range(200):
            gt = g(temp)
            err = gt - temp
            if abs(err) <= 1e-9 * temp:
                return min(gt, tc)
            if err > 0.0:
                lo = temp
            else:
                hi = temp
            slope = (gt - gp) / (temp - tp) if temp != tp else 2.0
            tp, gp = temp, gt
            if hi is not None:
                if hi - lo <= 1e-8 * max(lo, 1.0):
                    return min(0.5 * (lo + hi), tc)
                cand = temp + err / (1.0 - slope) if slope < 1.0 else 0.5 * (lo + hi)
                temp = cand if lo < cand < hi else 0.5 * (lo + hi)
            else:
                # ascent from below: secant-accelerated, capped at 10x the plain step
                step = err / (1.0 - slope) if slope < 1.0 else 10.0 * err
                cand = temp + min(max(step, err), 10.0 * err)
                if cand >= tc:
                    if g(tc) >= tc:
                        return tc
                    hi = tc
                    temp = 0.5 * (lo + tc)
                else:
                    temp = cand
        return min(temp, tc)

    def _stack_residuals(self, vsc, temp, n, rdp, rth, v):
        p = self.p
        i = self.barrier_current(vsc, n, temp)
        r_ln = p.r_line * (1.0 + p.alpha_line * p.rth_line * i * i * p.r_line)
        f_v = vsc + i * (rdp + self.r_fix + r_ln) - v
        f_t = p.t0 + rth * abs(i * (vsc + i * rdp)) - temp
        return f_v, f_t, i

    def _solve_warm(self, v, n, guess):
        """Damped 2-variable Newton on (vsc, T), warm-started. None on any doubt."""
        p = self.p
        t0c, tc = p.t0, p.t_ceiling
        rth = self._rth(v)
        rdp = self.disc_resistance(n) + self.r_plug
        blo, bhi = (0.0, v) if v > 0 else (v, 0.0)
        vsc = min(max(guess[0], blo), bhi)
        temp = min(max(guess[1], t0c), tc)
        t_start = temp
        tol_v = 1e-10 * max(abs(v), 1e-3)
        f_v, f_t, i = self._stack_residuals(vsc, temp, n, rdp, rth, v)
        for _ in range(30):
            if abs(f_v) <= tol_v and abs(f_t) <= 1e-6 * temp:
                if not (blo - 1e-9 <= vsc <= bhi + 1e-9):
                    return None
                if temp >= tc - 1e-6 or temp < t0c - 1e-9:
                    return None
                # refuse suspicious thermal jumps: could be the runaway branch
                if abs(temp - t_start) > 0.3 * t_start + 30.0:
                    return None
                return i, vsc, temp, i * self.disc_resistance(n)
            hv = 1e-6 * (abs(vsc) + 1e-4)
            ht = max(1e-6 * temp, 1e-3)
            fv_v, ft_v, _ = self._stack_residuals(vsc + hv, temp, n, rdp, rth, v)
            fv_t, ft_t, _ = self._stack_residuals(vsc, temp + ht, n, rdp, rth, v)
            a11 = (fv_v - f_v) / hv
            a12 = (fv_t - f_v) / ht
            a21 = (ft_v - f_t) / hv
            a22 = (ft_t - f_t) / ht
            det = a11 * a22 - a12 * a21
            if det == 0.0 or not math.isfinite(det):
                return None
            dv = -(f_v * a22 - f_t * a12) / det
            dt = -(a11 * f_t - a21 * f_v) / det
            lam = 1.0
            cap_v = 0.25 * max(abs(v), 0.02)
            cap_t = 0.3 * temp + 20.0
            if abs(dv) > cap_v:
                lam = min(lam, cap_v / abs(dv))
            if abs(dt) > cap_t:
                lam = min(lam, cap_t / abs(dt))
            vsc = min(max(vsc + lam * dv, blo), bhi)
            temp += lam * dt
            if temp < t0c - 1.0 or temp > 1.5 * tc:
                return None
            temp = min(max(temp, t0c), tc)
            f_v, f_t, i = self._stack_residuals(vsc, temp, n, rdp, rth, v)
        return None

    def solve_stack(self, v: float, n: float, guess=None):
        """Divide device voltage v across the stack. Returns (i, vsc, T, vdisc).

        Warm-started calls take a fast coupled-Newton path; anything doubtful
        falls back to the bracketed solve with the lowest thermal fixpoint.
        """
        p = self.p
        if v == 0.0:
            return 0.0, 0.0, p.t0, 0.0
        if guess is not None:
            res = self._solve_warm(v, n, guess)
            if res is not None:
                return res
        rth = self._rth(v)
        rdp = self.disc_resistance(n) + self.r_plug
        hint = guess[1] if guess else None

        def f(vsc):
            nonlocal hint
            temp = self.temperature_fixpoint(vsc, n, rth, hint)
            hint = temp
            i = self.barrier_current(vsc, n, temp)
            r_ln = p.r_line * (1.0 + p.alpha_line * p.rth_line * i * i * p.r_line)
            return vsc + i * (rdp + self.r_fix + r_ln) - v, i, temp

        lo, hi = (0.0, v) if v > 0 else (v, 0.0)
        x = 0.5 * (lo + hi)
        if guess and lo < guess[0] < hi:
            x = guess[0]
        fx, ix, tx = f(x)
        tol = 1e-10 * max(abs(v), 1e-3)
        for _ in range(100):
            if abs(fx) <= tol:
                break
            if fx > 0:
                hi = x
            else:
                lo = x
            if hi - lo < tol:
                break
            h = 1e-5 * (abs(x) + 1e-4)
            xp = x + h if x + h < hi else x - h
            i2 = self.barrier_current(xp, n, tx)
            r_ln2 = p.r_line * (1.0 + p.alpha_line * p.rth_line * i2 * i2 * p.r_line)
            f2 = xp + i2 * (rdp + self.r_fix + r_ln2) - v
            slope = (f2 - fx) / (xp - x)
            xn = x - fx / slope if slope > 0 else 0.5 * (lo + hi)
            if not (lo < xn < hi):
                xn = 0.5 * (lo + hi)
            x = xn
            fx, ix, tx = f(x)
        else:
            raise NonConvergence(
                f"stack voltage division stalled at v={v:.6g} V, n={n:.6g}")
        return ix, x, tx, ix * self.disc_resistance(n)

    def specific_rate(self, vdisc: float, temp: float) -> float:
        """Hop-rate magnitude per unit concentration, 1/s.

        Barrier-modulated hopping over activation energy delta_e_a; the local
        field across the disc tilts the barrier. Capped smoothly at rate_ceiling.
        Reduces to gamma0-scaled sinh drift at low field.
        """
        p = self.p
        if vdisc == 0.0:
            return 0.0
        kt = p.kb * temp / Q_E
        dwa = p.delta_e_a
        gfac = p.z_vo * p.a_hop * abs(vdisc) / (p.l_det * math.pi * dwa)
        if gfac < 1.0:
            sq = math.sqrt(1.0 - gfac * gfac)
            asn = math.asin(gfac)
            fmin = sq - gfac * (math.pi / 2.0) + gfac * asn
            fmax = sq + gfac * (math.pi / 2.0) + gfac * asn
        else:
            fmin = 0.0
            fmax = gfac * math.pi
        raw = self.kin_k * (_expc(-dwa * fmin / kt) - _expc(-dwa * fmax / kt))
        rc = p.rate_ceiling
        return rc * math.tanh(raw / rc)

    def state_rate(self, v: float, n: float, solved=None) -> float:
        """d(n_disc)/dt with boundary clamps; positive under SET polarity (v < 0)."""
        p = self.p
        if v == 0.0:
            return 0.0
        if v < 0 and n >= p.n_disc_max:
            return 0.0
        if v > 0 and n <= p.n_disc_min:
            return 0.0
        _, _, temp, vdisc = solved if solved is not None else self.solve_stack(v, n)
        s = self.specific_rate(vdisc, temp)
        return n * s if v < 0 else -n * s

    def advance(self, n: float, v: float, dt: float, tol: float = 1e-3, guess=None):
        """March n over dt at fixed v by adaptive explicit midpoint.

        Per-sub-step change is held within tol relative to the state; sub-steps
        halve on violation down to dt/2^20 (StepTooLarge below). Returns
        (n_end, last (vsc, T)) so engines can chain warm starts.
        """
        p = self.p
        nmin, nmax = p.n_disc_min, p.n_disc_max
        t = 0.0
        h = dt
        floor = dt / 2 ** 20
        gk = guess
        while t < dt * (1.0 - 1e-15):
            if v == 0.0 or (v < 0 and n >= nmax) or (v > 0 and n <= nmin):
                break
            # within one error budget of the boundary being driven toward: snap
            budget = tol * max(n, nmin)
            if v > 0 and n - nmin <= budget:
                n = nmin
                break
            if v < 0 and nmax - n <= budget:
                n = nmax
                break
            s1 = self.solve_stack(v, n, gk)
            k1 = (n if v < 0 else -n) * self.specific_rate(s1[3], s1[2])
            if k1 == 0.0:
                break
            h = min(h, dt - t)
            while True:
                nm = min(max(n + 0.5 * h * k1, nmin), nmax)
                if (v < 0 and nm >= nmax) or (v > 0 and nm <= nmin):
                    k2 = 0.0
                    s2 = s1
                else:
                    s2 = self.solve_stack(v, nm, (s1[1], s1[2]))
                    k2 = (nm if v < 0 else -nm) * self.specific_rate(s2[3], s2[2])
                err = max(abs(h * k1), abs(h * k2))
                if err <= budget:
                    dn = h * k2
                    gk = (s2[1], s2[2])
                    break
                if h <= floor:
                    raise StepTooLarge(
                        f"local error control unsatisfiable at t={t:.3e} s within "
                        f"dt={dt:.3e} s (n={n:.5g}, v={v:.4g} V)")
                h *= 0.5
            n = min(max(n + dn, nmin), nmax)
            t += h
            if err > 0.0:
                h *= min(2.0, max(1.0, 0.9 * budget / err))
            else:
                h *= 2.0
        return n, gk


@lru_cache(maxsize=16)
def solver_for(p: DeviceParams) -> DeviceSolver:
    return DeviceSolver(p)


def _clamped(n: float, p: DeviceParams) -> float:
    return min(max(n, p.n_disc_min), p.n_disc_max)


def device_current(v_device: float, state: DeviceState, p: DeviceParams) -> float:
    """Total current through the series stack at v_device (volts, AE minus OE).

    Zero at zero bias, continuous and strictly increasing in v_device within the
    model validity window (|v| <= 2 V), non-decreasing in |I| with n_disc.
    """
    if v_device == 0.0:
        return 0.0
    core = solver_for(p)
    i, _, _, _ = core.solve_stack(v_device, _clamped(state.n_disc, p))
    return i


def state_derivative(v_device: float, state: DeviceState, p: DeviceParams) -> float:
    """d(n_disc)/dt in 1e26 m^-3 / s; >= 0 under SET polarity, <= 0 under RESET,
    zero at the boundary being driven toward."""
    core = solver_for(p)
    return core.state_rate(v_device, _clamped(state.n_disc, p))


def integrate_step(state: DeviceState, v_device: float, dt: float, p: DeviceParams,
                   tol: float = 1e-3) -> DeviceState:
    """Advance the state over dt at fixed device voltage.

    Adaptive sub-stepping keeps each sub-step's relative state change within tol
    (default 1e-3); raises StepTooLarge if dt/2^20 cannot satisfy it. Result is
    clamped to [n_disc_min, n_disc_max] and bit-deterministic in its inputs.
    """
    if dt <= 0.0:
        raise ConfigError("integrate_step requires dt > 0")
    core = solver_for(p)
    n, _ = core.advance(_clamped(state.n_disc, p), v_device, dt, tol)
    return DeviceState(n)


def quasi_static_sweep(v_start: float, v_peaks, rate: float, p: DeviceParams,
                       initial: DeviceState, dv_sample: float = 0.005,
                       tol: float = 1e-3):
    """Triangular voltage sweep: staircase at dv_sample resolution, rate volts/s.

    Returns a list of (v, i, DeviceState) samples, starting from the initial
    point. Dwell on each tread is integrated in chunks short enough that the
    sub-step floor never binds even at the kinetic rate ceiling.
    """
    if rate <= 0.0:
        raise ConfigError("sweep rate must be > 0")
    if dv_sample <= 0.0:
        raise ConfigError("dv_sample must be > 0")
    core = solver_for(p)
    n = _clamped(initial.n_disc, p)
    out = [(v_start, device_current(v_start, DeviceState(n), p), DeviceState(n))]
    v_from = v_start
    gk = None
    for v_peak in v_peaks:
        span = v_peak - v_from
        if span == 0.0:
            continue
        steps = max(1, round(abs(span) / dv_sample))
        for k in range(1, steps + 1):
            v = v_from + span * k / steps
            dwell = abs(span / steps) / rate
            chunks = max(1, math.ceil(dwell / 1e-3))
            for _ in range(chunks):
                n, gk = core.advance(n, v, dwell / chunks, tol, gk)
            if v == 0.0:
                i = 0.0
            else:
                i, vsc, temp, _ = core.solve_stack(v, n, gk)
                gk = (vsc, temp)
            out.append((v, i, DeviceState(n)))
        v_from = v_peak
    return out


def conductance_readout(state: DeviceState, p: DeviceParams, v_read: float = 0.25) -> float:
    """Secant conductance device_current(v_read)/v_read, siemens. Read-safe window only."""
    if not (0.0 < v_read <= 0.25):
        raise ReadVoltageOutOfRange(f"v_read={v_read} V outside (0, 0.25]")
    return device_current(v_read, state, p) / v_read
