"""
Transport between a source and a drain
======================================

Engineered baths inject particles at one end of the chain and remove them at
the other. The steady current through the middle bond peaks whenever the
bath detuning matches a single-particle transition of the lattice. After the
baths are switched off the current keeps oscillating but averages to zero,
and each particle-number manifold contributes separately.
"""

import numpy as np

from sitecurrent.experiments import (
    bath_dynamics,
    bath_transport_point,
    beat_period,
    reference_lattice,
    transport_baths,
)
from sitecurrent.model import mhz, to_mhz
from sitecurrent.spectrum import transition_frequencies

spec = reference_lattice()
markers = transition_frequencies(spec)
print("single-particle markers (MHz):", np.round(to_mhz(markers["single"]), 2))

###############################################################################
# A coarse detuning scan. The test suite runs the full 61-point version.

print("\n delta_MHz   <j>/J     N")
for d in (-8.9, -6.5, -4.1, 0.0, 3.1, 6.5, 9.9):
    r = bath_transport_point(spec, transport_baths(spec, mhz(1.0), mhz(d)), t_read=2.0)
    print(f"{d:9.1f} {r['j_over_J']:8.4f} {r['N']:6.3f}")

###############################################################################
# Current dynamics at -4 MHz with the baths switched off at 2 us.

T = beat_period(spec)
table = bath_dynamics(spec, transport_baths(spec, mhz(1.0), mhz(-4.0)), 2.0 + T, dt=0.02)
t = table.column("t_us")
after = t >= 2.0
print(f"\nbeat period {T:.3f} us")
print("mean <j>/J after turn-off:", f"{np.mean(table.column('j_over_J')[after]):+.5f}")
for name in table.columns[3:]:
    print(f"  {name:<14} mean {np.mean(table.column(name)[after]):+.5f}")
