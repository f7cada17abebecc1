"""Nonlinear resistive network of an n x m 2T1R crossbar.

Each cell contributes an AE node, an OE node, the memristor branch between
them, and two selection-switch branches whose routing depends on the cell
mode. Wire segments chain the per-cell row/column junctions; regulated drives
enter through boundary segments. The DC operating point is found by Newton
iteration on nodal equations with the memristor linearized by central finite
differences; ideal (zero-ohm) switches and wires are handled by node merging.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .config import Config, parse_kv_file
from .device import DeviceParams, DeviceState, solver_for
from .errors import (ConfigError, InconsistentDrive, NonConvergence,
                     ReadVoltageOutOfRange, SingularMatrix)
from .frontend import FrontEnd, default_front_end, regulate_voltage, regulated_current

V_DEVICE_LIMIT = 2.0  # compact-model validity window, volts
FD_STEP = 1e-3        # central-difference step for device linearization, volts


@dataclass(frozen=True)
class ArrayConfig:
    n_rows: int
    n_cols: int
    r_seg_row: float = 0.5      # ohms per row-wire segment
    r_seg_col: float = 0.5      # ohms per column-wire segment
    r_switch_on: float = 100.0  # closed analog switch; 0 = ideal
    r_switch_off: float = 100e6
    half_select: bool = False   # emulate 1T1R: unselected cells couple to wires via off switches

    def __post_init__(self):
        if self.n_rows < 1 or self.n_cols < 1:
            raise ConfigError("array dimensions must be >= 1")
        if self.r_seg_row < 0 or self.r_seg_col < 0:
            raise ConfigError("wire segment resistances must be >= 0")
        if self.r_switch_on < 0 or self.r_switch_off <= 0:
            raise ConfigError("switch resistances must be >= 0 (off strictly > 0)")
        if self.r_switch_on >= self.r_switch_off:
            raise ConfigError("r_switch_on must be well below r_switch_off")


def load_array_config(path) -> ArrayConfig:
    cfg = Config(parse_kv_file(path))
    ac = array_config_from_config(cfg)
    cfg.reject_unclaimed()
    return ac


def array_config_from_config(cfg: Config) -> ArrayConfig:
    return ArrayConfig(
        n_rows=cfg.get_int("array.n_rows", 2),
        n_cols=cfg.get_int("array.n_cols", 2),
        r_seg_row=cfg.get_float("array.r_seg_row", 0.5),
        r_seg_col=cfg.get_float("array.r_seg_col", 0.5),
        r_switch_on=cfg.get_float("array.r_switch_on", 100.0),
        r_switch_off=cfg.get_float("array.r_switch_off", 100e6),
        half_select=cfg.get_bool("array.half_select", False),
    )


class CellMode(Enum):
    GROUNDED_BOTH = "grounded_both"
    VOLTAGE_WRITE_AE = "voltage_write_ae"   # row drive on AE, OE grounded (RESET)
    VOLTAGE_WRITE_OE = "voltage_write_oe"   # row drive on OE, AE grounded (SET)
    CURRENT_WRITE = "current_write"         # current into OE, AE grounded (SET)
    READ = "read"                           # AE to row wire, OE to column wire


@dataclass(frozen=True)
class RowDrive:
    kind: str              # "volts" | "amps"
    value: float           # reference voltage for the regulator / converter
    regulated: bool = True  # volts only: route through the write regulator

    def __post_init__(self):
        if self.kind not in ("volts", "amps"):
            raise ConfigError("row drive kind must be volts or amps")


@dataclass(frozen=True)
class ColumnTermination:
    kind: str              # "ground" | "adc" | "vdd"
    volts: float = 0.0

    def __post_init__(self):
        if self.kind not in ("ground", "adc", "vdd"):
            raise ConfigError("column termination must be ground, adc or vdd")


GROUND_COL = ColumnTermination("ground", 0.0)


@dataclass(frozen=True)
class DriveSet:
    rows: tuple            # per-row RowDrive or None
    cols: tuple            # per-column ColumnTermination


@dataclass(frozen=True)
class LinearBranch:
    name: str
    node_a: str
    node_b: str
    resistance: float      # 0 means an ideal short (merged before solving)


@dataclass(frozen=True)
class DeviceBranch:
    name: str
    node_a: str            # AE
    node_b: str            # OE
    row: int
    col: int


@dataclass(frozen=True)
class Injection:
    name: str
    node: str
    amps: float            # current pushed into node


@dataclass
class NetworkDescription:
    cfg: ArrayConfig
    nodes: list
    held: dict             # node -> imposed volts (ideal sources to ground)
    linear: list           # LinearBranch
    devices: list          # DeviceBranch
    injections: list       # Injection
    states: list           # matrix of DeviceState (row-major lists)
    select: list           # matrix of CellMode
    drive_nodes: dict      # row -> node name (for rows with a drive)
    term_nodes: dict       # col -> node name
    regulated_rows: set = field(default_factory=set)
    i_compliance: float = math.inf
    structural_hash: str = ""


@dataclass
class OperatingPoint:
    node_voltages: dict
    device_v: dict         # (row, col) -> volts across memristor
    device_i: dict         # (row, col) -> amperes (AE -> OE positive)
    linear_i: dict         # branch name -> amperes (node_a -> node_b positive)
    drive_i: dict          # row -> amperes delivered by the row drive
    column_i: dict         # col -> amperes flowing into the column termination
    compliance_active: set
    kcl_scaled: float
    stack_guesses: dict    # (row, col) -> (vsc, T) warm-start cache


def _mode_matrix(cfg: ArrayConfig, select) -> list:
    if len(select) != cfg.n_rows or any(len(r) != cfg.n_cols for r in select):
        raise ConfigError("select matrix shape does not match the array")
    return [[m for m in row] for row in select]


def uniform_select(cfg: ArrayConfig, mode: CellMode) -> list:
    return [[mode] * cfg.n_cols for _ in range(cfg.n_rows)]


def single_cell_select(cfg: ArrayConfig, row: int, col: int, mode: CellMode) -> list:
    sel = uniform_select(cfg, CellMode.GROUNDED_BOTH)
    sel[row][col] = mode
    return sel


def build_network(cfg: ArrayConfig, select, drives: DriveSet, states,
                  fe: FrontEnd | None = None, linear_cells=None) -> NetworkDescription:
    """Assemble the circuit graph. Deterministic: row-major canonical ordering.

    `linear_cells`, when given, replaces every memristor with the fixed linear
    conductance (siemens) at the same position (solver-equivalence testing).
    """
    fe = fe or default_front_end()
    sel = _mode_matrix(cfg, select)
    if len(drives.rows) != cfg.n_rows or len(drives.cols) != cfg.n_cols:
        raise InconsistentDrive("drive set shape does not match the array")
    if len(states) != cfg.n_rows or any(len(r) != cfg.n_cols for r in states):
        raise ConfigError("state matrix shape does not match the array")

    for r in range(cfg.n_rows):
        drive = drives.rows[r]
        for c in range(cfg.n_cols):
            mode = sel[r][c]
            if mode in (CellMode.VOLTAGE_WRITE_AE, CellMode.VOLTAGE_WRITE_OE):
                if drive is None or drive.kind != "volts":
                    raise InconsistentDrive(
                        f"cell ({r},{c}) needs a voltage drive on row {r}")
            elif mode is CellMode.CURRENT_WRITE:
                if drive is None or drive.kind != "amps":
                    raise InconsistentDrive(
                        f"cell ({r},{c}) needs a current drive on row {r}")
            elif mode is CellMode.READ:
                if drive is not None and drive.kind == "amps":
                    raise InconsistentDrive(
                        f"cell ({r},{c}) is in read mode on a current-driven row")

    nodes = ["g"]
    held = {"g": 0.0}
    linear: list = []
    devices: list = []
    injections: list = []
    drive_nodes: dict = {}
    term_nodes: dict = {}
    regulated_rows: set = set()

    for r in range(cfg.n_rows):
        drive = drives.rows[r]
        if drive is None:
            continue
        dn = f"dr{r}"
        nodes.append(dn)
        drive_nodes[r] = dn
        if drive.kind == "volts":
            v = drive.value
            if drive.regulated:
                v = regulate_voltage(v, fe.regulator)
                regulated_rows.add(r)
            held[dn] = v
        else:
            injections.append(Injection(f"isrc{r}", dn, regulated_current(drive.value, fe.isource)))

    for c in range(cfg.n_cols):
        tn = f"ct{c}"
        nodes.append(tn)
        term_nodes[c] = tn
        held[tn] = drives.cols[c].volts if drives.cols[c].kind != "ground" else 0.0

    for r in range(cfg.n_rows):
        for c in range(cfg.n_cols):
            nodes.extend((f"rw{r}_{c}", f"cw{r}_{c}", f"ae{r}_{c}", f"oe{r}_{c}"))

    # wire segments: boundary connects the driver/termination to the first junction
    for r in range(cfg.n_rows):
        if r in drive_nodes:
            linear.append(LinearBranch(f"segr{r}_in", drive_nodes[r], f"rw{r}_0", cfg.r_seg_row))
        for c in range(cfg.n_cols - 1):
            linear.append(LinearBranch(f"segr{r}_{c}", f"rw{r}_{c}", f"rw{r}_{c + 1}", cfg.r_seg_row))
    for c in range(cfg.n_cols):
        linear.append(LinearBranch(f"segc{c}_in", term_nodes[c], f"cw0_{c}", cfg.r_seg_col))
        for r in range(cfg.n_rows - 1):
            linear.append(LinearBranch(f"segc{r}_{c}", f"cw{r}_{c}", f"cw{r + 1}_{c}", cfg.r_seg_col))

    r_on, r_off = cfg.r_switch_on, cfg.r_switch_off
    for r in range(cfg.n_rows):
        for c in range(cfg.n_cols):
            ae, oe = f"ae{r}_{c}", f"oe{r}_{c}"
            rw, cw = f"rw{r}_{c}", f"cw{r}_{c}"
            mode = sel[r][c]
            if mode is CellMode.GROUNDED_BOTH:
                if cfg.half_select:
                    linear.append(LinearBranch(f"swa{r}_{c}", ae, rw, r_off))
                    linear.append(LinearBranch(f"swo{r}_{c}", oe, cw, r_off))
                else:
                    linear.append(LinearBranch(f"swa{r}_{c}", ae, "g", r_on))
                    linear.append(LinearBranch(f"swo{r}_{c}", oe, "g", r_on))
            elif mode is CellMode.VOLTAGE_WRITE_AE:
                linear.append(LinearBranch(f"swa{r}_{c}", ae, rw, r_on))
                linear.append(LinearBranch(f"swo{r}_{c}", oe, "g", r_on))
            elif mode in (CellMode.VOLTAGE_WRITE_OE, CellMode.CURRENT_WRITE):
                linear.append(LinearBranch(f"swa{r}_{c}", ae, "g", r_on))
                linear.append(LinearBranch(f"swo{r}_{c}", oe, rw, r_on))
            elif mode is CellMode.READ:
                linear.append(LinearBranch(f"swa{r}_{c}", ae, rw, r_on))
                linear.append(LinearBranch(f"swo{r}_{c}", oe, cw, r_on))
            else:
                raise ConfigError(f"unsupported cell mode {mode}")
            if linear_cells is not None:
                g = linear_cells[r][c]
                if g <= 0:
                    raise ConfigError("linear cell conductances must be > 0")
                linear.append(LinearBranch(f"dev{r}_{c}", ae, oe, 1.0 / g))
            else:
                devices.append(DeviceBranch(f"dev{r}_{c}", ae, oe, r, c))

    state_rows = [[s for s in row] for row in states]
    blob = repr((cfg, sorted(held.items()), linear, devices, injections,
                 [[s.n_disc for s in row] for row in state_rows],
                 [[m.value for m in row] for row in sel]))
    net = NetworkDescription(
        cfg=cfg, nodes=nodes, held=held, linear=linear, devices=devices,
        injections=injections, states=state_rows, select=sel,
        drive_nodes=drive_nodes, term_nodes=term_nodes,
        regulated_rows=regulated_rows, i_compliance=fe.regulator.i_compliance,
        structural_hash=hashlib.sha256(blob.encode()).hexdigest())
    return net


class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        p = self.parent
        while p[x] != x:
            p[x] = p[p[x]]
            x = p[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def _prepare(net: NetworkDescription):
    """Merge ideal shorts, then split into components; prune source-free floats.

    Returns (rep map, unknown rep list, pruned rep set). Raises SingularMatrix
    when an isolated component is fed by a current source, or when two held
    nodes of different voltage are ideally shorted.
    """
    uf = _UnionFind(net.nodes)
    for br in net.linear:
        if br.resistance == 0.0:
            uf.union(br.node_a, br.node_b)

    rep_held: dict = {}
    for node, v in net.held.items():
        rep = uf.find(node)
        if rep in rep_held and abs(rep_held[rep] - v) > 1e-15:
            raise SingularMatrix(
                f"ideal short ties node {node} to two different imposed voltages")
        rep_held[rep] = v

    # connectivity across everything that conducts
    cf = _UnionFind({uf.find(n) for n in net.nodes})
    for br in net.linear:
        if br.resistance > 0.0:
            cf.union(uf.find(br.node_a), uf.find(br.node_b))
    for dev in net.devices:
        cf.union(uf.find(dev.node_a), uf.find(dev.node_b))

    anchored = {cf.find(rep) for rep in rep_held}
    pruned: set = set()
    for n in net.nodes:
        rep = uf.find(n)
        if cf.find(rep) not in anchored:
            pruned.add(rep)
    for inj in net.injections:
        if uf.find(inj.node) in pruned:
            raise SingularMatrix(
                f"current source {inj.name} feeds a floating subnetwork")

    unknown = []
    seen = set()
    for n in net.nodes:
        rep = uf.find(n)
        if rep in seen or rep in rep_held or rep in pruned:
            continue
        seen.add(rep)
        unknown.append(rep)
    return uf, rep_held, unknown, pruned


def _device_voltage(dev, volts_of):
    return volts_of(dev.node_a) - volts_of(dev.node_b)


def solve_operating_point(net: NetworkDescription, p: DeviceParams, states=None,
                          guesses=None) -> OperatingPoint:
    """Newton-on-nodal-equations DC solve.

    Converged when the scaled KCL residual at every node is <= 1e-9 and the
    voltage update is <= 1 uV; falls back to stepping the sources from 10% to
    100% in 10 steps, then raises NonConvergence. Regulated voltage drives that
    exceed the pass-transistor compliance are re-solved as clamped current
    sources.
    """
    states = net.states if states is None else states
    uf, rep_held, unknown, pruned = _prepare(net)
    solver = solver_for(p)
    guesses = dict(guesses or {})

    index = {rep: k for k, rep in enumerate(unknown)}
    nu = len(unknown)

    def volts_fn(x, scale):
        def volts_of(node):
            rep = uf.find(node)
            if rep in rep_held:
                return rep_held[rep] * scale
            if rep in pruned:
                return 0.0
            return x[index[rep]]
        return volts_of

    def device_iv(r, c, v):
        # clamp the evaluation into the model validity window; Newton damping
        # keeps converged solutions inside it
        v = min(max(v, -V_DEVICE_LIMIT), V_DEVICE_LIMIT)
        n = states[r][c].n_disc
        key = (r, c)
        if v == 0.0:
            i0 = 0.0
        else:
            i0, vsc, temp, _ = solver.solve_stack(v, n, guesses.get(key))
            guesses[key] = (vsc, temp)
        vm, vp = v - FD_STEP, v + FD_STEP
        im = 0.0 if vm == 0.0 else solver.solve_stack(vm, n, guesses.get(key))[0]
        ip = 0.0 if vp == 0.0 else solver.solve_stack(vp, n, guesses.get(key))[0]
        g = (ip - im) / (2 * FD_STEP)
        if not (g > 0.0) or not math.isfinite(g):
            g = 1e-12
        return i0, g

    def newton(x, scale, max_iter):
        for _ in range(max_iter):
            volts_of = volts_fn(x, scale)
            a = np.zeros((nu, nu))
            b = np.zeros(nu)
            for inj in net.injections:
                rep = uf.find(inj.node)
                if rep in index:
                    b[index[rep]] += inj.amps * scale

            def stamp(na, nb, g, i_const=0.0):
                ra, rb = uf.find(na), uf.find(nb)
                ia = index.get(ra)
                ib = index.get(rb)
                va = rep_held.get(ra, 0.0) * scale if ra in rep_held else None
                vb = rep_held.get(rb, 0.0) * scale if rb in rep_held else None
                if ia is not None:
                    a[ia, ia] += g
                    b[ia] -= i_const
                    if ib is not None:
                        a[ia, ib] -= g
                    elif vb is not None:
                        b[ia] += g * vb
                if ib is not None:
                    a[ib, ib] += g
                    b[ib] += i_const
                    if ia is not None:
                        a[ib, ia] -= g
                    elif va is not None:
                        b[ib] += g * va

            for br in net.linear:
                if br.resistance <= 0.0:
                    continue
                ra, rb = uf.find(br.node_a), uf.find(br.node_b)
                if ra == rb or (ra in pruned):
                    continue
                stamp(br.node_a, br.node_b, 1.0 / br.resistance)
            for dev in net.devices:
                ra, rb = uf.find(dev.node_a), uf.find(dev.node_b)
                if ra == rb:
                    continue
                v = _device_voltage(dev, volts_of)
                i0, g = device_iv(dev.row, dev.col, v)
                stamp(dev.node_a, dev.node_b, g, i_const=i0 - g * v)

            if nu == 0:
                return x, 0.0
            try:
                x_new = np.linalg.solve(a, b)
            except np.linalg.LinAlgError as exc:
                raise SingularMatrix(str(exc)) from exc
            delta = x_new - x
            step = float(np.max(np.abs(delta))) if nu else 0.0
            if step > 0.5:
                delta *= 0.5 / step
            x = x + delta
            if step <= 1e-6:
                return x, step
        return None, None

    x = np.zeros(nu)
    budget_direct = 50
    result = newton(x.copy(), 1.0, budget_direct)
    if result[0] is None:
        # homotopy: ramp every source from 10% to 100%
        x_stage = np.zeros(nu)
        ok = True
        for k in range(1, 11):
            res = newton(x_stage, k / 10.0, 15)
            if res[0] is None:
                ok = False
                break
            x_stage = res[0]
        if not ok:
            raise NonConvergence("operating point: Newton and source stepping failed")
        result = (x_stage, 0.0)
    x = result[0]

    volts_of = volts_fn(x, 1.0)

    # final consistency: every node's scaled KCL residual
    inflow: dict = {}
    largest: dict = {}

    def account(node, amps):
        rep = uf.find(node)
        inflow[rep] = inflow.get(rep, 0.0) + amps
        largest[rep] = max(largest.get(rep, 0.0), abs(amps))

    device_v: dict = {}
    device_i: dict = {}
    linear_i: dict = {}
    for br in net.linear:
        ra, rb = uf.find(br.node_a), uf.find(br.node_b)
        if br.resistance <= 0.0 or ra == rb or ra in pruned:
            linear_i[br.name] = 0.0
            continue
        i = (volts_of(br.node_a) - volts_of(br.node_b)) / br.resistance
        linear_i[br.name] = i
        account(br.node_a, -i)
        account(br.node_b, i)
    for dev in net.devices:
        ra, rb = uf.find(dev.node_a), uf.find(dev.node_b)
        v = _device_voltage(dev, volts_of) if ra != rb else 0.0
        i, _ = device_iv(dev.row, dev.col, v) if v != 0.0 else (0.0, 0.0)
        device_v[(dev.row, dev.col)] = v
        device_i[(dev.row, dev.col)] = i
        account(dev.node_a, -i)
        account(dev.node_b, i)
    for inj in net.injections:
        account(inj.node, inj.amps)

    kcl_scaled = 0.0
    for rep, net_in in inflow.items():
        if rep in rep_held or rep in pruned:
            continue
        big = largest.get(rep, 0.0)
        if abs(net_in) > 1e-12:
            kcl_scaled = max(kcl_scaled, abs(net_in) / max(big, 1e-30))
    if kcl_scaled > 1e-9:
        raise NonConvergence(f"operating point KCL residual {kcl_scaled:.2e} above 1e-9")

    drive_i: dict = {}
    for r, dn in net.drive_nodes.items():
        rep = uf.find(dn)
        if rep in rep_held:
            drive_i[r] = -inflow.get(rep, 0.0)
        else:
            src = [inj.amps for inj in net.injections if uf.find(inj.node) == rep]
            drive_i[r] = src[0] if src else 0.0
    column_i = {}
    for c, tn in net.term_nodes.items():
        column_i[c] = inflow.get(uf.find(tn), 0.0)

    # pass-transistor compliance on regulated drives: clamp and re-solve
    violators = {r for r in net.regulated_rows
                 if r in drive_i and abs(drive_i[r]) > net.i_compliance}
    if violators:
        clamped = NetworkDescription(
            cfg=net.cfg, nodes=net.nodes,
            held={n: v for n, v in net.held.items()
                  if not any(net.drive_nodes.get(r) == n for r in violators)},
            linear=net.linear, devices=net.devices,
            injections=net.injections + [
                Injection(f"icomp{r}", net.drive_nodes[r],
                          math.copysign(net.i_compliance, drive_i[r]))
                for r in sorted(violators)],
            states=states, select=net.select, drive_nodes=net.drive_nodes,
            term_nodes=net.term_nodes,
            regulated_rows=net.regulated_rows - violators,
            i_compliance=net.i_compliance, structural_hash=net.structural_hash)
        op = solve_operating_point(clamped, p, states=states, guesses=guesses)
        op.compliance_active.update(violators)
        return op

    node_voltages = {n: volts_of(n) for n in net.nodes}
    return OperatingPoint(
        node_voltages=node_voltages, device_v=device_v, device_i=device_i,
        linear_i=linear_i, drive_i=drive_i, column_i=column_i,
        compliance_active=set(), kcl_scaled=kcl_scaled, stack_guesses=guesses)


def vmm(v, states, cfg: ArrayConfig, p: DeviceParams, fe: FrontEnd | None = None):
    """Vector-matrix multiply: rows read-driven at v, columns sunk at virtual ground.

    Returns (column currents, ADC codes). With ideal wires the currents equal
    v . G for the per-device secant conductances at the actual read bias.
    """
    fe = fe or default_front_end()
    if len(v) != cfg.n_rows:
        raise ConfigError("input vector length does not match n_rows")
    v_limit = fe.adc.v_read_default
    for vi in v:
        if not (0.0 <= vi <= v_limit + 1e-12):
            raise ReadVoltageOutOfRange(f"row voltage {vi} V outside [0, {v_limit}]")
    drives = DriveSet(
        rows=tuple(RowDrive("volts", float(vi), regulated=False) for vi in v),
        cols=tuple(GROUND_COL for _ in range(cfg.n_cols)))
    net = build_network(cfg, uniform_select(cfg, CellMode.READ), drives, states, fe)
    op = solve_operating_point(net, p)
    from .frontend import adc_read
    currents = [op.column_i[c] for c in range(cfg.n_cols)]
    codes = [adc_read(max(i, 0.0), fe.adc)[0] for i in currents]
    return currents, codes


def sneak_current_report(op: OperatingPoint, select, threshold: float = 1e-9):
    """|I| through every unselected (grounded-both) memristor, with flags."""
    rows = []
    for (r, c), i in sorted(op.device_i.items()):
        if select[r][c] is CellMode.GROUNDED_BOTH:
            rows.append({"row": r, "col": c, "abs_current": abs(i),
                         "flagged": abs(i) > threshold})
    return rows
