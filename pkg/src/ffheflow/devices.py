"""Series FACTS device descriptions, outputs and limit handling.

An SSSC occupies one branch and controls one quantity; an IPFC spans two or
more branches sharing the sending bus and controls ``2*n_branches - 1``
quantities, the remaining degree of freedom being fixed by the zero net
real-power exchange across its converters.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, replace

from .series import EPS_ZERO

#: current magnitude below which the equivalent reactance is reported infinite
I_REPORT_ZERO = 1e-6


class DeviceConfigError(ValueError):
    """Inconsistent device description."""


class Mode(str, enum.Enum):
    P_FLOW = "p_flow"    # active power entering the branch at the sending bus
    Q_FLOW = "q_flow"    # reactive power entering the branch
    Q_INJ = "q_inj"      # reactive power injected by the series source
    V_BUS = "v_bus"      # voltage magnitude of a (local or remote) bus
    V_SE = "v_se"        # magnitude of the injected series voltage
    X_EQ = "x_eq"        # equivalent series reactance presented by the device


#: modes whose embedded form needs the reciprocal (and magnitude) companion
#: series of the device current
COMPANION_MODES = frozenset({Mode.V_SE, Mode.X_EQ})


@dataclass(frozen=True)
class ControlTarget:
    mode: Mode
    setpoint: float
    branch: int = 0            # device-branch index the target refers to
    bus: int | None = None     # external bus id, V_BUS only (default: sending)


@dataclass(frozen=True)
class SsscDevice:
    device_id: str
    branch: tuple              # (i, j) external ids, device at the i end
    target: ControlTarget
    z_se: complex = 0.01 + 0.01j
    v_se_max: float | None = None
    current_guess: complex = 0.1 + 0.0j

    def __post_init__(self):
        if self.target.branch != 0:
            raise DeviceConfigError("SSSC has a single branch")
        if self.target.mode in COMPANION_MODES and \
                abs(self.current_guess) <= EPS_ZERO:
            raise DeviceConfigError(
                f"{self.device_id}: mode {self.target.mode.value} needs a "
                "nonzero current guess")

    @property
    def branches(self):
        return (self.branch,)

    @property
    def targets(self):
        return (self.target,)

    @property
    def z_se_list(self):
        return (self.z_se,)

    @property
    def current_guesses(self):
        return (self.current_guess,)

    @property
    def v_se_limits(self):
        return (self.v_se_max,)


@dataclass(frozen=True)
class IpfcDevice:
    device_id: str
    branches: tuple            # ((i, j1), (i, j2), ...), shared sending bus
    targets: tuple             # exactly 2*n_branches - 1 control targets
    z_se: tuple = ()
    v_se_max: tuple = ()
    current_guess: tuple = ()

    def __post_init__(self):
        n = len(self.branches)
        if n < 2:
            raise DeviceConfigError("an IPFC needs at least two branches")
        if len({b[0] for b in self.branches}) != 1:
            raise DeviceConfigError("IPFC branches must share the sending bus")
        if len(self.targets) != 2 * n - 1:
            raise DeviceConfigError(
                f"IPFC with {n} branches must control {2 * n - 1} quantities")
        if not self.z_se:
            object.__setattr__(self, "z_se", (0.01 + 0.01j,) * n)
        if not self.v_se_max:
            object.__setattr__(self, "v_se_max", (None,) * n)
        if not self.current_guess:
            object.__setattr__(self, "current_guess", (0.1 + 0.0j,) * n)
        seen = set()
        per_branch: dict = {}
        for t in self.targets:
            if not 0 <= t.branch < n:
                raise DeviceConfigError(f"target branch {t.branch} out of range")
            key = (t.mode, t.branch, t.bus)
            if key in seen:
                raise DeviceConfigError(f"duplicate control target {key}")
            seen.add(key)
            per_branch[t.branch] = per_branch.get(t.branch, 0) + 1
        if max(per_branch.values()) > 2:
            raise DeviceConfigError(
                "more than two targets on one IPFC branch is ill posed")
        for t in self.targets:
            if t.mode in COMPANION_MODES and \
                    abs(self.current_guess[t.branch]) <= EPS_ZERO:
                raise DeviceConfigError(
                    f"{self.device_id}: mode {t.mode.value} needs a nonzero "
                    "current guess")

    @property
    def z_se_list(self):
        return self.z_se

    @property
    def current_guesses(self):
        return self.current_guess

    @property
    def v_se_limits(self):
        return self.v_se_max


@dataclass(frozen=True)
class BranchOutputs:
    """Converged electrical quantities of one device branch."""

    v_se: complex              # injected series voltage V_m - V_i
    i_se: complex              # current through the branch
    s_se: complex              # power injected by the source, V_se * conj(I)
    s_line: complex            # sending-end line flow, V_i * conj(I)
    x_eq: float                # Im[V_se / I]; inf when the current is ~zero

    def as_dict(self):
        return {
            "v_se_mag": abs(self.v_se),
            "v_se_deg": math.degrees(math.atan2(self.v_se.imag, self.v_se.real)),
            "i_se_mag": abs(self.i_se),
            "i_se_deg": math.degrees(math.atan2(self.i_se.imag, self.i_se.real)),
            "s_se": [self.s_se.real, self.s_se.imag],
            "s_line": [self.s_line.real, self.s_line.imag],
            "x_eq": self.x_eq,
        }


def branch_outputs(v_i: complex, v_m: complex, i_se: complex) -> BranchOutputs:
    """Electrical outputs of one device branch from converged phasors."""
    v_se = v_m - v_i
    if abs(i_se) < I_REPORT_ZERO:
        x_eq = math.inf
    else:
        x_eq = (v_se / i_se).imag
    return BranchOutputs(
        v_se=v_se,
        i_se=i_se,
        s_se=v_se * i_se.conjugate(),
        s_line=v_i * i_se.conjugate(),
        x_eq=x_eq,
    )


def relax_violations(devices, solution_outputs, tol: float = 1e-9):
    """One pass of limit relaxation.

    ``solution_outputs`` maps device_id -> list of BranchOutputs.  Every
    branch whose injected-voltage magnitude exceeds its limit has its control
    target replaced by an injected-voltage-magnitude target pinned at the
    limit.  Returns ``(new_devices, relaxed)`` where ``relaxed`` lists
    ``(device_id, branch_index)`` pairs changed in this pass.
    """
    new_devices = []
    relaxed = []
    for dev in devices:
        outs = solution_outputs[dev.device_id]
        dev_new = dev
        for b, (out, vmax) in enumerate(zip(outs, dev.v_se_limits)):
            if vmax is None or abs(out.v_se) <= vmax + tol:
                continue
            pinned = ControlTarget(Mode.V_SE, float(vmax), branch=b)
            if isinstance(dev_new, SsscDevice):
                if dev_new.target.mode is Mode.V_SE:
                    continue
                dev_new = replace(dev_new, target=pinned)
            else:
                targets = list(dev_new.targets)
                for k, t in enumerate(targets):
                    if t.branch == b and t.mode is not Mode.V_SE:
                        targets[k] = pinned
                        break
                else:
                    continue
                dev_new = replace(dev_new, targets=tuple(targets))
            relaxed.append((dev.device_id, b))
        new_devices.append(dev_new)
    return new_devices, relaxed


def _target_from_record(rec, idx, branch_key="branch") -> ControlTarget:
    try:
        mode = Mode(rec["mode"])
    except (KeyError, ValueError):
        raise DeviceConfigError(f"device {idx}: bad or missing mode") from None
    if "setpoint" not in rec:
        raise DeviceConfigError(f"device {idx}: missing setpoint")
    branch = int(rec.get(branch_key, 0)) if branch_key else 0
    return ControlTarget(mode=mode, setpoint=float(rec["setpoint"]),
                         branch=branch, bus=rec.get("bus"))


def _as_complex(val, default):
    if val is None:
        return default
    if isinstance(val, (list, tuple)):
        return complex(val[0], val[1])
    return complex(val)


def load_devices(text: str):
    """Parse the JSON device-config format.

    The file holds a list of records, e.g.::

        [{"type": "sssc", "branch": [49, 50],
          "mode": "p_flow", "setpoint": 0.75,
          "z_se": [0.01, 0.01], "v_se_max": 0.3},
         {"type": "ipfc", "branches": [[49, 50], [49, 51]],
          "targets": [{"branch": 0, "mode": "p_flow", "setpoint": 0.75},
                      {"branch": 1, "mode": "p_flow", "setpoint": 0.75},
                      {"branch": 1, "mode": "q_flow", "setpoint": 0.03}]}]
    """
    try:
        records = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DeviceConfigError(f"device config is not valid JSON: {exc}")
    if not isinstance(records, list):
        raise DeviceConfigError("device config must be a JSON list")
    devices = []
    for idx, rec in enumerate(records):
        kind = rec.get("type")
        dev_id = rec.get("id", f"{kind}{idx}")
        if kind == "sssc":
            devices.append(SsscDevice(
                device_id=dev_id,
                branch=tuple(int(b) for b in rec["branch"]),
                target=_target_from_record(rec, idx, branch_key=None),
                z_se=_as_complex(rec.get("z_se"), 0.01 + 0.01j),
                v_se_max=rec.get("v_se_max"),
                current_guess=_as_complex(rec.get("current_guess"), 0.1 + 0j),
            ))
        elif kind == "ipfc":
            branches = tuple(tuple(int(b) for b in br)
                             for br in rec["branches"])
            n = len(branches)
            z_list = _zse_list(rec.get("z_se"), n)
            devices.append(IpfcDevice(
                device_id=dev_id,
                branches=branches,
                targets=tuple(_target_from_record(t, idx)
                              for t in rec["targets"]),
                z_se=z_list,
                v_se_max=tuple(rec.get("v_se_max", [None] * n)),
                current_guess=tuple(
                    _as_complex(g, 0.1 + 0j)
                    for g in rec.get("current_guess", [None] * n)),
            ))
        else:
            raise DeviceConfigError(f"device {idx}: unknown type {kind!r}")
    return devices


def _zse_list(z, n):
    if z is None:
        return (0.01 + 0.01j,) * n
    if isinstance(z, list) and z and isinstance(z[0], list):
        return tuple(complex(zz[0], zz[1]) for zz in z)
    return (_as_complex(z, 0.01 + 0.01j),) * n
