"""
Filling a lattice by an adiabatic sweep
=======================================

A weak uniform drive couples particle-number manifolds. Starting far above
all resonances, where the empty lattice is the highest dressed state, a slow
detuning sweep carries the system along that gapped branch into the fully
occupied Mott state.
"""

from sitecurrent.experiments import adiabatic_fill, fill_schedule, reference_lattice

spec = reference_lattice(4, J_nnn=0.0)

###############################################################################
# Without decoherence and from an empty lattice the transfer is nearly perfect.

closed = adiabatic_fill(spec.closed().replace(n_th=0.0), thermal=False, n_samples=7)
print("closed system")
for t, n, p in zip(closed.column("t_us"), closed.column("n_mean"), closed.column("P_full")):
    print(f"  t = {t:4.2f} us   filling {n:.3f}   P(1111) {p:.3f}")

###############################################################################
# With relaxation, dephasing and a thermal start, too fast a sweep is
# diabatic and too slow a one decoheres; the optimum lies in between.

print("\nsweep duration scan (thermal start, T1 = 25 us, Tphi = 10 us)")
for d in (0.25, 0.5, 0.75, 1.5, 3.0):
    r = adiabatic_fill(spec, fill_schedule(ramp_duration=d))
    print(f"  {d:4.2f} us   filling {r.column('n_mean')[-1]:.3f}   P(1111) {r.column('P_full')[-1]:.3f}")
