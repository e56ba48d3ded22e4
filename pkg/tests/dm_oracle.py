"""Brute-force steady state of the three-level ladder for oracle tests.

Builds the full Liouvillian (coherent drive on both legs plus decay and
pure-dephasing collapse channels), solves for the stationary density matrix
with a finite probe drive, and normalizes the ground-intermediate coherence
so that the resonant two-level atom at rest gives i. No weak-probe
approximation is made anywhere; agreement with the production lineshape is
expected only for a weak probe.
"""

import numpy as np

# basis: 0 = ground, 1 = intermediate, 2 = upper


def _lindblad(op):
    d = op.shape[0]
    eye = np.eye(d)
    return (np.kron(op, op.conj())
            - 0.5 * np.kron(op.conj().T @ op, eye)
            - 0.5 * np.kron(eye, (op.conj().T @ op).T))


def steady_state_rho(delta_p, delta_c, v, sys, omega_p):
    """Stationary density matrix for one velocity class and probe drive."""
    dp = delta_p - sys.k_p * v
    if sys.counter_propagating:
        dc = delta_c + sys.k_c * v
    else:
        dc = delta_c - sys.k_c * v
    # rotating frame, H = -d.E convention
    h = np.zeros((3, 3), dtype=complex)
    h[1, 1] = -dp
    h[2, 2] = -(dp + dc)
    h[1, 0] = -omega_p / 2
    h[0, 1] = -omega_p / 2
    h[2, 1] = -sys.omega_c / 2
    h[1, 2] = -sys.omega_c / 2

    eye = np.eye(3)
    liou = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    # population decay: intermediate -> ground, upper -> intermediate
    c_eg = np.zeros((3, 3), complex)
    c_eg[0, 1] = np.sqrt(sys.rates.gamma_e)
    liou += _lindblad(c_eg)
    if sys.rates.gamma_r > 0:
        c_re = np.zeros((3, 3), complex)
        c_re[1, 2] = np.sqrt(sys.rates.gamma_r)
        liou += _lindblad(c_re)
    # pure dephasing of the intermediate state (probe phase noise)
    deph_e = np.pi * sys.probe.residual_linewidth
    if deph_e > 0:
        op = np.zeros((3, 3), complex)
        op[1, 1] = np.sqrt(2 * deph_e)
        liou += _lindblad(op)
    # pure dephasing of the upper state (transit plus relative laser noise)
    deph_r = sys.rates.gamma_transit + sys.rates.gamma_rel_laser
    if deph_r > 0:
        op = np.zeros((3, 3), complex)
        op[2, 2] = np.sqrt(2 * deph_r)
        liou += _lindblad(op)

    # replace one row by the trace constraint
    mat = liou.copy()
    mat[0, :] = 0.0
    mat[0, [0, 4, 8]] = 1.0
    rhs = np.zeros(9, dtype=complex)
    rhs[0] = 1.0
    rho = np.linalg.solve(mat, rhs).reshape(3, 3)
    return rho


def steady_state_chi(delta_p, delta_c, v, sys, omega_p=None):
    """Normalized lineshape extracted from the stationary coherence."""
    if omega_p is None:
        omega_p = 1e-2 * max(sys.omega_c, sys.gamma_ge)
    rho = steady_state_rho(delta_p, delta_c, v, sys, omega_p)
    return 2.0 * sys.gamma_ge / omega_p * rho[1, 0]
