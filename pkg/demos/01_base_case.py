"""Solve the bundled 118-bus case and print the base operating point.

Run:  python3 demos/01_base_case.py
"""

import numpy as np

from ffheflow import load_bundled_case
from ffheflow.report import StudyOptions, run_study


def polar(z):
    return f"{abs(z):.4f} p.u. at {np.degrees(np.angle(z)):7.2f} deg"


def main():
    net = load_bundled_case()
    rep = run_study(net, (), StudyOptions(method="nr-warm-ffhe"))

    print(f"{net.name}: {net.n_bus} buses, {len(net.branches)} branches")
    print(f"converged with mismatch {rep.mismatch:.2e} "
          f"in {rep.runtime_s:.3f} s\n")

    print("generators driven to a reactive limit and held there:")
    for ext, q in sorted(rep.clamped_generators.items()):
        print(f"  bus {ext:>3}: Q pinned at {q:+.3f} p.u.")

    print("\nselected bus voltages:")
    for ext in (49, 69, 100, 101):
        print(f"  bus {ext:>3}: {polar(rep.voltage(ext))}")

    print("\nselected sending-end branch flows:")
    for i, j in ((49, 50), (49, 51), (100, 104), (100, 106), (101, 102)):
        s = rep.branch_flow(i, j)
        print(f"  {i:>3} -> {j:<3}: P = {s.real:+.4f}, Q = {s.imag:+.4f}")


if __name__ == "__main__":
    main()
