"""Tour of the six single-converter (SSSC) control modes.

The same series voltage source, spliced into branch 49-50, is driven in each
of its six control modes.  Note how the zero-reactive-flow mode blocks the
line entirely (zero current, equivalent reactance reported infinite).

Run:  python3 demos/02_sssc_control_modes.py
"""

import numpy as np

from ffheflow import ControlTarget, Mode, SsscDevice, load_bundled_case
from ffheflow.report import StudyOptions, run_study

SCENARIOS = [
    (Mode.P_FLOW, 0.75, "hold branch active flow at 0.75"),
    (Mode.Q_FLOW, 0.00, "zero the branch reactive flow"),
    (Mode.Q_INJ, 0.30, "inject 0.30 p.u. reactive through the source"),
    (Mode.V_BUS, 1.00, "regulate the sending-bus magnitude to 1.00"),
    (Mode.V_SE, 0.20, "hold the injected-voltage magnitude at 0.20"),
    (Mode.X_EQ, -0.20, "emulate a -0.20 p.u. series reactance"),
]


def main():
    net = load_bundled_case()
    print(f"{'mode':>8} {'setpoint':>9} | {'|Vse|':>7} {'|I|':>7} "
          f"{'S sending-end':>18} {'X_eq':>8}")
    for mode, sp, blurb in SCENARIOS:
        dev = SsscDevice("sssc", (49, 50), ControlTarget(mode, sp))
        rep = run_study(net, (dev,), StudyOptions(method="nr-warm-ffhe"))
        (out,) = rep.device_outputs["sssc"]
        x_eq = f"{out.x_eq:8.4f}" if np.isfinite(out.x_eq) else "     inf"
        print(f"{mode.value:>8} {sp:>9.2f} | {abs(out.v_se):7.4f} "
              f"{abs(out.i_se):7.4f} "
              f"{out.s_line.real:+8.4f}{out.s_line.imag:+8.4f}j {x_eq}"
              f"   # {blurb}")
    print("\nthe sending bus hosts a regulating generator; with the device "
          "in place it no longer\nholds the bus magnitude and is re-solved "
          "at its device-free reactive output.")


if __name__ == "__main__":
    main()
