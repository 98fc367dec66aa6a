"""
Pre-distorting flux pulses
==========================

A flux line that settles slowly (a 10 % exponential tail with 300 ns time
constant) turns a square target into a rounded pulse. Inverting the line's
frequency response gives a causal kernel; convolving the target with it
yields a line waveform that arrives square. Crosstalk between four lines is
undone the same way, one frequency at a time.
"""

import numpy as np

from sitecurrent.fluxcomp import (
    ExponentialSettle,
    ResponseModel,
    distort,
    kernel_matrix,
    net_zero,
    precompensate,
    square_pulse,
)

n = 8192
settle = ExponentialSettle(1.0, (0.1,), (300.0,))
crosstalk = np.array([
    [1.0, -0.028, 0.044, 0.031],
    [-0.082, 1.0, 0.028, 0.036],
    [-0.056, -0.084, 1.0, 0.057],
    [-0.031, -0.039, -0.083, 1.0],
])
model = ResponseModel([[settle if i == j else crosstalk[i, j] for j in range(4)] for i in range(4)])
target = square_pulse(n, 500, 3500)

###############################################################################
# Uncompensated: the pulse on line 0 reaches qubit 0 late and leaks into the rest.

raw = distort([target] + [square_pulse(n, 0, 0)] * 3, model)
print("uncompensated flux 50 ns after the rising edge:", np.round([w.samples[550] for w in raw], 4))

###############################################################################
# Compensated: kernels invert the full 4x4 transfer matrix.

km = kernel_matrix(model, n)
lines = precompensate(target, km, channel=0)
seen = distort(lines, model)
print("compensated flux 50 ns after the rising edge:  ", np.round([w.samples[550] for w in seen], 4))
print(f"largest transfer-matrix condition number: {km.info['max_condition']:.3f}")

###############################################################################
# A balancing segment makes each line waveform integrate to zero.

balanced = net_zero(lines[0], 3000.0)
print(f"line 0 area before {lines[0].area():.2f} ns, after {balanced.area():.2e} ns")
