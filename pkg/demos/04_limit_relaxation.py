"""Injected-voltage ceiling: an unreachable flow target degrades gracefully.

A converter on branch 101-102 is told to push the active flow to 0.9 p.u.,
which would need an injected voltage beyond its 0.3 p.u. rating.  The study
detects the violation and re-solves with the converter pinned at its
ceiling: the flow target is given up, the rating is honoured exactly.

Run:  python3 demos/04_limit_relaxation.py
"""

from ffheflow import ControlTarget, Mode, SsscDevice, load_bundled_case
from ffheflow.report import StudyOptions, run_study


def main():
    net = load_bundled_case()

    unlimited = SsscDevice("s", (101, 102), ControlTarget(Mode.P_FLOW, 0.9))
    rep0 = run_study(net, (unlimited,), StudyOptions(method="nr-warm-ffhe"))
    (out0,) = rep0.device_outputs["s"]
    print("without a rating:")
    print(f"  flow held at {out0.s_line.real:+.4f} with "
          f"|Vse| = {abs(out0.v_se):.4f} (beyond a 0.3 p.u. rating)\n")

    limited = SsscDevice("s", (101, 102), ControlTarget(Mode.P_FLOW, 0.9),
                         v_se_max=0.3)
    rep1 = run_study(net, (limited,), StudyOptions(method="nr-warm-ffhe"))
    (out1,) = rep1.device_outputs["s"]
    print("with v_se_max = 0.3:")
    print(f"  relaxed control rows: {rep1.relaxed_branches}")
    print(f"  |Vse| = {abs(out1.v_se):.6f}  (pinned at the rating)")
    print(f"  achieved flow {out1.s_line.real:+.4f}"
          f"{out1.s_line.imag:+.4f}j  (target 0.9 given up)")


if __name__ == "__main__":
    main()
