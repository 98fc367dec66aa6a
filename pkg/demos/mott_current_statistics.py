"""
Current statistics from superfluid to Mott insulator
====================================================

A filled 4-site chain carries no net current, yet its bond current is
anything but quiet: every bond sits in an equal superposition of the
current eigenvalues +2J and -2J. A single delocalised particle instead shows
a symmetric spread over +-J.
"""

import numpy as np

from sitecurrent.dynamics import QuantumState, fock_state
from sitecurrent.experiments import reference_lattice
from sitecurrent.fockspace import lattice_basis
from sitecurrent.measurement import J_LEVELS, beamsplitter_protocol
from sitecurrent.model import bose_hubbard_hamiltonian
from sitecurrent.spectrum import manifold_eigenstates

spec = reference_lattice().closed()
basis = lattice_basis(4)


def show(label, state):
    cs = beamsplitter_protocol(state, (1, 2), spec)
    probs = "  ".join(f"{cs.probs[m]:.3f}" for m in J_LEVELS)
    print(f"{label:<28} {probs}   <j>/J = {cs.mean_over_J():+.3f}")


print(f"{'state':<28} " + "  ".join(f"{m:+d}J".rjust(5) for m in J_LEVELS))
show("Mott |1111>", fock_state(basis, (1, 1, 1, 1)))

###############################################################################
# Eigenstates of the lattice are stationary, so their statistics are symmetric.

H = bose_hubbard_hamiltonian(spec, basis)
for N in (1, 2, 3):
    m = manifold_eigenstates(H, basis, N)
    show(f"N={N} top eigenstate", QuantumState(m.states[:, -1], basis))

###############################################################################
# A moving wavepacket is not stationary and carries net current.

psi = np.zeros(basis.total_dim, complex)
psi[basis.index((0, 1, 0, 0))] = 1
psi[basis.index((0, 0, 1, 0))] = -1j
show("(|0100> - i|0010>)/sqrt2", QuantumState(psi / np.sqrt(2), basis))
