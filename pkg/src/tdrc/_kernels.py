"""Inner integration loops for the delay-line dynamics.

numba-jitted when numba is importable, with a pure-numpy fallback of the
same operation order. All lanes (utterances) advance in lockstep; per-lane
arithmetic is identical to a single-lane run, so batched and one-at-a-time
integration agree bit for bit within one backend.
"""

from __future__ import annotations

import numpy as np

MODE_NONE = 0
MODE_ADDITIVE = 1
MODE_ROUND = 2

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


@njit(cache=True)
def _run_frame_numba(drive, x, hist, ptr, k_sub, h, tau, beta, phi0, rho,
                     mode, q_delay, q_nl, q_state, level, noise):
    # drive: (n_nodes, B) values held for one node separation each
    # x: (B,) current value, hist: (D, B) ring buffer with hist[ptr] = x(t - tau_d)
    # noise: (n_nodes*k_sub, 3, B) uniform offsets, read only when mode == 1
    n_nodes, n_lanes = drive.shape
    depth = hist.shape[0]
    states = np.empty((n_nodes, n_lanes))
    step = 0
    for i in range(n_nodes):
        for _ in range(k_sub):
            for b in range(n_lanes):
                xd = hist[ptr, b]
                if mode == MODE_ADDITIVE:
                    if q_delay:
                        xd += noise[step, 0, b]
                elif mode == MODE_ROUND and q_delay:
                    if xd > 0.0:
                        xd = np.floor(xd / level + 0.5) * level
                    elif xd < 0.0:
                        xd = -np.floor(-xd / level + 0.5) * level
                fv = beta * np.sin(xd + rho * drive[i, b] + phi0) ** 2
                if mode == MODE_ADDITIVE:
                    if q_nl:
                        fv += noise[step, 1, b]
                elif mode == MODE_ROUND and q_nl:
                    if fv > 0.0:
                        fv = np.floor(fv / level + 0.5) * level
                    elif fv < 0.0:
                        fv = -np.floor(-fv / level + 0.5) * level
                xb = x[b]
                g0 = (-xb + fv) / tau
                xp = xb + h * g0
                g1 = (-xp + fv) / tau
                xn = xb + 0.5 * h * (g0 + g1)
                if mode == MODE_ADDITIVE:
                    if q_state:
                        xn += noise[step, 2, b]
                elif mode == MODE_ROUND and q_state:
                    if xn > 0.0:
                        xn = np.floor(xn / level + 0.5) * level
                    elif xn < 0.0:
                        xn = -np.floor(-xn / level + 0.5) * level
                hist[ptr, b] = xb
                x[b] = xn
            ptr = (ptr + 1) % depth
            step += 1
        for b in range(n_lanes):
            states[i, b] = x[b]
    return states, ptr


def _round_vec(v, level):
    return np.sign(v) * np.floor(np.abs(v) / level + 0.5) * level


def _run_frame_numpy(drive, x, hist, ptr, k_sub, h, tau, beta, phi0, rho,
                     mode, q_delay, q_nl, q_state, level, noise):
    n_nodes = drive.shape[0]
    depth = hist.shape[0]
    states = np.empty((n_nodes, x.shape[0]))
    step = 0
    for i in range(n_nodes):
        u = drive[i]
        for _ in range(k_sub):
            xd = hist[ptr].copy()
            if mode == MODE_ADDITIVE and q_delay:
                xd += noise[step, 0]
            elif mode == MODE_ROUND and q_delay:
                xd = _round_vec(xd, level)
            fv = beta * np.sin(xd + rho * u + phi0) ** 2
            if mode == MODE_ADDITIVE and q_nl:
                fv += noise[step, 1]
            elif mode == MODE_ROUND and q_nl:
                fv = _round_vec(fv, level)
            g0 = (-x + fv) / tau
            xp = x + h * g0
            g1 = (-xp + fv) / tau
            xn = x + 0.5 * h * (g0 + g1)
            if mode == MODE_ADDITIVE and q_state:
                xn += noise[step, 2]
            elif mode == MODE_ROUND and q_state:
                xn = _round_vec(xn, level)
            hist[ptr] = x
            x[:] = xn
            ptr = (ptr + 1) % depth
            step += 1
        states[i] = x
    return states, ptr


run_frame = _run_frame_numba if HAVE_NUMBA else _run_frame_numpy
