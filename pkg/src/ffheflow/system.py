"""Assembled solve structure shared by the direct and series solvers.

One set of residual equations describes the network with its series devices;
the Newton solver iterates on their Jacobian, and the series solver reuses the
same Jacobian evaluated at the reference state as its constant coefficient
matrix.  Unknown layout: bus b occupies real columns ``2b, 2b+1`` (re, im),
device-branch current c occupies ``2*n_bus + 2c, ... + 1``.  Row layout: two
rows per bus, then per device one power-exchange row followed by its control
rows.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .devices import COMPANION_MODES, DeviceConfigError, Mode
from .network import (BusKind, Network, TopologyError,
                      build_admittance_matrix, insert_series_device)


@dataclass(frozen=True)
class BranchEntry:
    """One converter branch of a spliced device, in internal indices."""

    i_idx: int          # sending bus
    m_idx: int          # auxiliary bus behind the series source
    cur_idx: int        # device-current number (column pair 2N + 2c)
    j_ext: int          # external id of the receiving bus, for reporting


@dataclass(frozen=True)
class ResolvedTarget:
    mode: Mode
    setpoint: float
    branch: int         # index into the device's BranchEntry list
    bus_idx: int        # internal bus index, V_BUS only


@dataclass(frozen=True)
class DeviceEntry:
    device_id: str
    branches: tuple     # BranchEntry per converter branch
    targets: tuple      # ResolvedTarget, one per control row
    row_start: int      # first residual row (the power-exchange row)
    current_guesses: tuple
    v_se_limits: tuple


@dataclass(frozen=True)
class System:
    net: Network        # spliced network, device sending buses converted to PQ
    ybus: np.ndarray
    s_inj: np.ndarray   # complex scheduled injection per bus (PV: real part)
    devices: tuple      # DeviceEntry
    bus_currents: tuple  # per bus: tuple of (cur_idx, sign)

    @property
    def n_bus(self) -> int:
        return self.net.n_bus

    @property
    def n_currents(self) -> int:
        return sum(len(d.branches) for d in self.devices)

    @property
    def size(self) -> int:
        return 2 * (self.n_bus + self.n_currents)


def build_system(base_net: Network, devices=(), *, admittance_sum: bool = False,
                 frozen_q: dict | None = None,
                 demote_sending: bool = True) -> System:
    """Splice ``devices`` into ``base_net`` and assemble the solve structure.

    With ``demote_sending`` (the default) a PV sending bus loses its voltage
    regulation to the device and becomes a fixed-injection bus; its reactive
    output is taken from ``frozen_q`` (ext id -> p.u.) when given, else from
    the gen table.  A slack sending bus is an error.
    """
    frozen_q = frozen_q or {}
    net = base_net
    topos = []
    for dev in devices:
        net, topo = insert_series_device(
            net, dev.device_id, dev.branches, dev.z_se_list,
            admittance_sum=admittance_sum)
        topos.append(topo)

    buses = list(net.buses)
    for topo in topos:
        si = net.index_of[topo.sending_bus]
        b = buses[si]
        if b.kind is BusKind.SLACK:
            raise TopologyError(
                f"device {topo.device_id}: sending bus {b.ext_id} is the slack")
        if b.kind is BusKind.PV and demote_sending:
            buses[si] = replace(
                b, kind=BusKind.PQ,
                q_gen=frozen_q.get(b.ext_id, b.q_gen))
    net = Network(buses=tuple(buses), branches=net.branches,
                  base_mva=net.base_mva, name=net.name)

    ybus = build_admittance_matrix(net)
    idx = net.index_of
    s_inj = np.array([complex(b.p_gen - b.p_load, b.q_gen - b.q_load)
                      for b in net.buses])

    bus_currents: list = [[] for _ in range(net.n_bus)]
    entries = []
    row = 2 * net.n_bus
    cur = 0
    for dev, topo in zip(devices, topos):
        bentries = []
        for (i, j), m in zip(topo.original_branches, topo.aux_buses):
            be = BranchEntry(i_idx=idx[i], m_idx=idx[m], cur_idx=cur, j_ext=j)
            bus_currents[be.i_idx].append((cur, +1.0))
            bus_currents[be.m_idx].append((cur, -1.0))
            bentries.append(be)
            cur += 1
        rtargets = []
        for t in dev.targets:
            if t.mode is Mode.V_BUS:
                bus_ext = t.bus if t.bus is not None else topo.sending_bus
                if bus_ext not in idx:
                    raise DeviceConfigError(
                        f"{dev.device_id}: unknown target bus {bus_ext}")
                bus_idx = idx[bus_ext]
                if net.buses[bus_idx].kind in (BusKind.PV, BusKind.SLACK):
                    raise DeviceConfigError(
                        f"{dev.device_id}: bus {bus_ext} magnitude is already "
                        "regulated")
            else:
                bus_idx = -1
            rtargets.append(ResolvedTarget(
                mode=t.mode, setpoint=t.setpoint, branch=t.branch,
                bus_idx=bus_idx))
        entries.append(DeviceEntry(
            device_id=dev.device_id,
            branches=tuple(bentries),
            targets=tuple(rtargets),
            row_start=row,
            current_guesses=tuple(dev.current_guesses),
            v_se_limits=tuple(dev.v_se_limits)))
        row += 1 + len(rtargets)

    return System(net=net, ybus=ybus, s_inj=s_inj, devices=tuple(entries),
                  bus_currents=tuple(tuple(c) for c in bus_currents))


def pack_state(V: np.ndarray, I: np.ndarray) -> np.ndarray:
    x = np.empty(2 * (V.size + I.size))
    x[0:2 * V.size:2] = V.real
    x[1:2 * V.size:2] = V.imag
    x[2 * V.size::2] = I.real
    x[2 * V.size + 1::2] = I.imag
    return x


def unpack_state(x: np.ndarray, n_bus: int):
    V = x[0:2 * n_bus:2] + 1j * x[1:2 * n_bus:2]
    I = x[2 * n_bus::2] + 1j * x[2 * n_bus + 1::2]
    return V, I


def _device_current_sum(sys: System, I: np.ndarray, b: int) -> complex:
    return sum(s * I[c] for c, s in sys.bus_currents[b])


def residual(sys: System, V: np.ndarray, I: np.ndarray) -> np.ndarray:
    """Real residual vector of the original (unembedded) equations."""
    net = sys.net
    n = net.n_bus
    r = np.zeros(sys.size)
    yv = sys.ybus @ V
    for b, bus in enumerate(net.buses):
        if bus.kind is BusKind.SLACK:
            r[2 * b] = V[b].real - bus.v_setpoint * np.cos(bus.angle_setpoint)
            r[2 * b + 1] = V[b].imag - bus.v_setpoint * np.sin(bus.angle_setpoint)
            continue
        f = np.conj(V[b]) * yv[b] + np.conj(V[b]) * _device_current_sum(sys, I, b)
        if bus.kind is BusKind.PV:
            r[2 * b] = f.real - sys.s_inj[b].real
            r[2 * b + 1] = 0.5 * (abs(V[b]) ** 2 - bus.v_setpoint ** 2)
        else:
            f -= np.conj(sys.s_inj[b])
            r[2 * b] = f.real
            r[2 * b + 1] = f.imag

    for dev in sys.devices:
        row = dev.row_start
        dv = {k: V[be.m_idx] - V[be.i_idx] for k, be in enumerate(dev.branches)}
        r[row] = sum((dv[k] * np.conj(I[be.cur_idx])).real
                     for k, be in enumerate(dev.branches))
        for t in dev.targets:
            row += 1
            be = dev.branches[t.branch]
            cur = I[be.cur_idx]
            if t.mode is Mode.P_FLOW:
                r[row] = (V[be.i_idx] * np.conj(cur)).real - t.setpoint
            elif t.mode is Mode.Q_FLOW:
                r[row] = (V[be.i_idx] * np.conj(cur)).imag - t.setpoint
            elif t.mode is Mode.Q_INJ:
                r[row] = (dv[t.branch] * np.conj(cur)).imag - t.setpoint
            elif t.mode is Mode.V_BUS:
                r[row] = 0.5 * (abs(V[t.bus_idx]) ** 2 - t.setpoint ** 2)
            elif t.mode is Mode.V_SE:
                q = (dv[t.branch] * np.conj(cur)).imag
                r[row] = q / abs(cur) - t.setpoint
            else:  # X_EQ
                q = (dv[t.branch] * np.conj(cur)).imag
                r[row] = q / abs(cur) ** 2 - t.setpoint
    return r


class _Assembler:
    """Accumulates d f = a * du + b * d(conj u) terms into a real matrix."""

    def __init__(self, size: int):
        self.J = np.zeros((size, size))

    def add_complex(self, row: int, col: int, a: complex, b: complex = 0j):
        """Both components of a complex residual at row pair (row, row+1)."""
        J = self.J
        J[row, col] += a.real + b.real
        J[row, col + 1] += -a.imag + b.imag
        J[row + 1, col] += a.imag + b.imag
        J[row + 1, col + 1] += a.real - b.real

    def add_re(self, row: int, col: int, a: complex, b: complex = 0j):
        self.J[row, col] += a.real + b.real
        self.J[row, col + 1] += -a.imag + b.imag

    def add_im(self, row: int, col: int, a: complex, b: complex = 0j):
        self.J[row, col] += a.imag + b.imag
        self.J[row, col + 1] += a.real - b.real


def jacobian(sys: System, V: np.ndarray, I: np.ndarray) -> np.ndarray:
    """Analytic Jacobian of :func:`residual` at (V, I)."""
    net = sys.net
    n = net.n_bus
    asm = _Assembler(sys.size)
    yv = sys.ybus @ V
    ccol = lambda c: 2 * n + 2 * c

    for b, bus in enumerate(net.buses):
        row = 2 * b
        if bus.kind is BusKind.SLACK:
            asm.J[row, row] = 1.0
            asm.J[row + 1, row + 1] = 1.0
            continue
        cb = np.conj(V[b])
        diag_b = yv[b] + _device_current_sum(sys, I, b)
        cols = np.nonzero(sys.ybus[b])[0]
        if bus.kind is BusKind.PV:
            for k in cols:
                asm.add_re(row, 2 * k, cb * sys.ybus[b, k])
            asm.add_re(row, 2 * b, 0j, diag_b)
            for c, s in sys.bus_currents[b]:
                asm.add_re(row, ccol(c), s * cb)
            asm.add_re(row + 1, 2 * b, 0.5 * cb, 0.5 * V[b])
        else:
            for k in cols:
                asm.add_complex(row, 2 * k, cb * sys.ybus[b, k])
            asm.add_complex(row, 2 * b, 0j, diag_b)
            for c, s in sys.bus_currents[b]:
                asm.add_complex(row, ccol(c), s * cb)

    for dev in sys.devices:
        row = dev.row_start
        for be in dev.branches:
            cI = np.conj(I[be.cur_idx])
            dv = V[be.m_idx] - V[be.i_idx]
            asm.add_re(row, 2 * be.m_idx, cI)
            asm.add_re(row, 2 * be.i_idx, -cI)
            asm.add_re(row, ccol(be.cur_idx), 0j, dv)
        for t in dev.targets:
            row += 1
            be = dev.branches[t.branch]
            cur = I[be.cur_idx]
            cI = np.conj(cur)
            dv = V[be.m_idx] - V[be.i_idx]
            if t.mode is Mode.P_FLOW:
                asm.add_re(row, 2 * be.i_idx, cI)
                asm.add_re(row, ccol(be.cur_idx), 0j, V[be.i_idx])
            elif t.mode is Mode.Q_FLOW:
                asm.add_im(row, 2 * be.i_idx, cI)
                asm.add_im(row, ccol(be.cur_idx), 0j, V[be.i_idx])
            elif t.mode is Mode.Q_INJ:
                asm.add_im(row, 2 * be.m_idx, cI)
                asm.add_im(row, 2 * be.i_idx, -cI)
                asm.add_im(row, ccol(be.cur_idx), 0j, dv)
            elif t.mode is Mode.V_BUS:
                vb = V[t.bus_idx]
                asm.add_re(row, 2 * t.bus_idx, 0.5 * np.conj(vb), 0.5 * vb)
            elif t.mode is Mode.V_SE:
                mag = abs(cur)
                q = (dv * cI).imag
                asm.add_im(row, 2 * be.m_idx, cI / mag)
                asm.add_im(row, 2 * be.i_idx, -cI / mag)
                asm.add_im(row, ccol(be.cur_idx), 0j, dv / mag)
                asm.add_re(row, ccol(be.cur_idx),
                           -q * cI / (2 * mag ** 3),
                           -q * cur / (2 * mag ** 3))
            else:  # X_EQ
                mag2 = abs(cur) ** 2
                q = (dv * cI).imag
                asm.add_im(row, 2 * be.m_idx, cI / mag2)
                asm.add_im(row, 2 * be.i_idx, -cI / mag2)
                asm.add_im(row, ccol(be.cur_idx), 0j, dv / mag2)
                asm.add_re(row, ccol(be.cur_idx),
                           -q * cI / mag2 ** 2,
                           -q * cur / mag2 ** 2)
    return asm.J
