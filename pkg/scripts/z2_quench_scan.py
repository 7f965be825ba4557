"""Half-zone Z2 and spin-Chern parity of a BHZ state under TRS-odd quenches.

The generator is f(t) diag(V(k), -V*(-k)) with V the two-band model at
each requested mass.  The index stays at its initial value in every case.

    python scripts/z2_quench_scan.py --masses=-3,-1,0.5,1,3
"""

import argparse

from topoquench.evolve import MomentumGrid, TimeGrid
from topoquench.invariants import z2_series
from topoquench.models import QuenchProtocol, build_bhz, build_trs_odd_quench, build_two_band_chern


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--m-initial", type=float, default=-1.0)
    p.add_argument("--masses", default="-3,-1,0.5,1,3")
    p.add_argument("--grid", type=int, default=40)
    p.add_argument("--t-max", type=float, default=5.0)
    args = p.parse_args()
    bhz = build_bhz(args.m_initial)
    tg = TimeGrid.from_step(0.0, args.t_max, 0.01)
    samples = [args.t_max * i / 10 for i in range(11)]
    for m in (float(x) for x in args.masses.split(",")):
        gen = build_trs_odd_quench(bhz, build_two_band_chern(m), QuenchProtocol("sudden", 0.0))
        s = z2_series(gen, MomentumGrid.torus(args.grid), tg, samples, initial=bhz)
        print(f"V mass {m:+5.2f}: Z2 {s.c2}  spin parity {s.spin_c2}  "
              f"C_up {sorted(set(s.c_up))}  max pairing residual {max(s.pairing_residual):.2g}")


if __name__ == "__main__":
    main()
