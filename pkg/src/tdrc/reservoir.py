"""Delayed-feedback reservoir dynamics and fixed-point quantization emulation.

The dynamics follow the low-pass delay-differential equation

    tau * dx/dt = -x(t) + f(x(t - tau_d) + rho * u(t)),   f(z) = beta * sin^2(z + phi0)

driven by the sample-and-hold signal u(t): each column of a masked input is
split into n_nodes segments held for theta time units. Integration is the
explicit second-order predictor-corrector (Heun) scheme with the delayed
term read exactly off a ring buffer; node states are sampled at the end of
each hold interval.

Finite word length of a hardware datapath is emulated either as additive
uniform noise of a given level or as explicit rounding to the level grid,
injected at a configurable subset of points.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from ._kernels import MODE_ADDITIVE, MODE_NONE, MODE_ROUND, run_frame
from .linalg import as_matrix

INJECTION_POINTS = ("state", "delay", "nonlinearity", "mask", "readout")

# sub-stream tags for coefficient noise, disjoint from utterance indices
MASK_STREAM = 1 << 33
READOUT_STREAM = (1 << 33) + 1

STATE_DUMP_MAGIC = b"TDRC"
STATE_DUMP_VERSION = 1


@dataclass(frozen=True)
class ReservoirParams:
    """Dynamical parameters plus the virtual-network geometry.

    theta defaults to tau_d / n_nodes so the n_nodes hold intervals tile the
    delay line exactly; an explicit override is accepted but must keep the
    integration step commensurate with tau_d.
    """

    tau: float
    beta: float
    phi0: float
    rho: float
    n_nodes: int
    tau_d: float = 6.0
    theta: float | None = None

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.tau_d <= 0:
            raise ValueError(f"tau_d must be positive, got {self.tau_d}")
        if self.n_nodes < 1:
            raise ValueError(f"n_nodes must be >= 1, got {self.n_nodes}")
        if self.theta is None:
            object.__setattr__(self, "theta", self.tau_d / self.n_nodes)
        if self.theta <= 0:
            raise ValueError(f"theta must be positive, got {self.theta}")


@dataclass(frozen=True)
class QuantizationModel:
    """How finite word length is emulated and where it is injected."""

    mode: str = "none"  # none | additive_noise | round_to_step
    level: float = 2.0 ** -13
    seed: int = 0
    injection_points: frozenset = frozenset(INJECTION_POINTS)

    def __post_init__(self):
        if self.mode not in ("none", "additive_noise", "round_to_step"):
            raise ValueError(f"unknown quantization mode {self.mode!r}")
        if self.mode != "none" and self.level <= 0:
            raise ValueError(f"level must be positive, got {self.level}")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        points = frozenset(self.injection_points)
        unknown = points - set(INJECTION_POINTS)
        if unknown:
            raise ValueError(f"unknown injection points {sorted(unknown)}")
        object.__setattr__(self, "injection_points", points)

    def rng_for(self, index: int) -> np.random.Generator:
        """Noise sub-stream for one utterance (or coefficient-stream tag)."""
        return np.random.default_rng([self.seed, int(index)])

    @property
    def active(self) -> bool:
        return self.mode != "none"


QUANT_OFF = QuantizationModel(mode="none")


@dataclass
class ReservoirState:
    """Integrator carry-over: current value, delay-line ring buffer and time.

    history[ptr] holds x(t - tau_d); the buffer length equals tau_d / h.
    rng is the noise stream, carried so that back-to-back integrations match
    an uninterrupted one.
    """

    x: float
    history: np.ndarray
    ptr: int
    t: float
    rng: np.random.Generator | None = field(default=None, repr=False)


def integration_grid(params: ReservoirParams, refine: int = 1) -> tuple[float, int, int]:
    """Choose (h, substeps per node, delay buffer length).

    The substep count starts at ceil(max(1, 4*theta/tau)) -- keeping h well
    inside the explicit scheme's stability region even for tau << theta --
    scaled by `refine`, then grows until tau_d / h is an integer so the
    delayed term is read exactly from the ring buffer.
    """
    if refine < 1:
        raise ValueError("refine must be >= 1")
    theta = params.theta
    k_min = math.ceil(max(1.0, 4.0 * theta / params.tau)) * refine
    for k_sub in range(k_min, 4096 * refine + 1):
        depth = params.tau_d * k_sub / theta
        if abs(depth - round(depth)) <= 1e-9 * max(1.0, abs(depth)):
            return theta / k_sub, k_sub, int(round(depth))
    raise ValueError(
        f"no integration step <= theta/{k_min} divides tau_d={params.tau_d} "
        f"with theta={theta}; adjust theta"
    )


def initial_state(params: ReservoirParams, refine: int = 1) -> ReservoirState:
    """Zero history at time 0 (the start-of-utterance condition)."""
    _, _, depth = integration_grid(params, refine)
    return ReservoirState(x=0.0, history=np.zeros(depth), ptr=0, t=0.0)


def heun_step(x: float, x_delayed: float, u: float, params: ReservoirParams, h: float) -> float:
    """One predictor-corrector step; the delayed argument is held fixed
    across both stages."""
    fv = params.beta * math.sin(x_delayed + params.rho * u + params.phi0) ** 2
    g0 = (-x + fv) / params.tau
    xp = x + h * g0
    g1 = (-xp + fv) / params.tau
    return x + 0.5 * h * (g0 + g1)


def round_to_step(value, level: float):
    """Round to the nearest multiple of level, ties away from zero."""
    return np.sign(value) * np.floor(np.abs(value) / level + 0.5) * level


def apply_quantization(value, quant: QuantizationModel, point: str,
                       rng: np.random.Generator | None = None):
    """Quantize a scalar or array at one injection point.

    Identity when the model is off or the point is not enabled. In additive
    mode the offset is uniform on [-level/2, +level/2] drawn from `rng`
    (defaulting to a stream seeded by quant.seed; pass a persistent rng when
    calling repeatedly).
    """
    if point not in INJECTION_POINTS:
        raise ValueError(f"unknown injection point {point!r}")
    if not quant.active or point not in quant.injection_points:
        return value
    if quant.mode == "round_to_step":
        return round_to_step(value, quant.level)
    if rng is None:
        rng = np.random.default_rng(quant.seed)
    half = 0.5 * quant.level
    if np.isscalar(value):
        return value + rng.uniform(-half, half)
    return np.asarray(value) + rng.uniform(-half, half, size=np.shape(value))


def _kernel_mode(quant: QuantizationModel) -> int:
    if quant.mode == "additive_noise":
        return MODE_ADDITIVE
    if quant.mode == "round_to_step":
        return MODE_ROUND
    return MODE_NONE


def _frame_noise(rng, n_steps: int, level: float, n_lanes: int,
                 lane_rngs=None) -> np.ndarray:
    # one (delay, nonlinearity, state) triple per substep and lane
    half = 0.5 * level
    if lane_rngs is None:
        return rng.uniform(-half, half, size=(n_steps, 3)).reshape(n_steps, 3, 1)
    noise = np.empty((n_steps, 3, n_lanes))
    for b, lane_rng in enumerate(lane_rngs):
        noise[:, :, b] = lane_rng.uniform(-half, half, size=(n_steps, 3))
    return noise


_EMPTY_NOISE = np.zeros((0, 3, 0))


def integrate_sample(masked, params: ReservoirParams,
                     quant: QuantizationModel = QUANT_OFF,
                     initial: ReservoirState | None = None,
                     refine: int = 1,
                     rng: np.random.Generator | None = None):
    """Integrate one masked utterance (N x L drive) through the dynamics.

    Returns (states, final_state) where states[i, n] is x at the end of node
    i's hold interval in frame n. The initial state is not mutated; carry the
    returned state into the next call to continue a trajectory.
    """
    masked = as_matrix(masked, "masked")
    n_nodes = params.n_nodes
    if masked.shape[0] != n_nodes:
        raise ValueError(f"masked input has {masked.shape[0]} rows, expected {n_nodes}")
    h, k_sub, depth = integration_grid(params, refine)
    if initial is None:
        initial = ReservoirState(x=0.0, history=np.zeros(depth), ptr=0, t=0.0, rng=rng)
    if initial.history.shape[0] != depth:
        raise ValueError(
            f"initial state buffer has length {initial.history.shape[0]}, "
            f"integration grid requires {depth}"
        )
    mode = _kernel_mode(quant)
    noise_rng = None
    if mode == MODE_ADDITIVE:
        noise_rng = rng or initial.rng or quant.rng_for(0)

    x = np.array([initial.x])
    hist = initial.history.reshape(depth, 1).copy()
    ptr = initial.ptr
    q_delay = "delay" in quant.injection_points
    q_nl = "nonlinearity" in quant.injection_points
    q_state = "state" in quant.injection_points

    n_frames = masked.shape[1]
    states = np.empty((n_nodes, n_frames))
    steps_per_frame = n_nodes * k_sub
    for n in range(n_frames):
        if mode == MODE_ADDITIVE:
            noise = _frame_noise(noise_rng, steps_per_frame, quant.level, 1)
        else:
            noise = _EMPTY_NOISE
        frame_states, ptr = run_frame(
            np.ascontiguousarray(masked[:, n]).reshape(n_nodes, 1),
            x, hist, ptr, k_sub, h,
            params.tau, params.beta, params.phi0, params.rho,
            mode, q_delay, q_nl, q_state, quant.level, noise,
        )
        if not math.isfinite(x[0]):
            raise ValueError(f"reservoir dynamics diverged (non-finite state) with {params!r}")
        states[:, n] = frame_states[:, 0]
    final = ReservoirState(
        x=float(x[0]), history=hist[:, 0], ptr=ptr,
        t=initial.t + n_frames * steps_per_frame * h, rng=noise_rng,
    )
    return states, final


def integrate_batch(masked_list, params: ReservoirParams,
                    quant: QuantizationModel = QUANT_OFF,
                    refine: int = 1,
                    rng_indices=None) -> list[np.ndarray]:
    """Integrate many utterances in lockstep, each from the zero state.

    Lane b draws its noise from quant.rng_for(rng_indices[b]) (default: the
    list position), so results match integrate_sample called with the same
    stream. Utterances may differ in length; returns one N x L_b state
    matrix per input.
    """
    if not masked_list:
        return []
    n_nodes = params.n_nodes
    masked_list = [as_matrix(m, "masked") for m in masked_list]
    for m in masked_list:
        if m.shape[0] != n_nodes:
            raise ValueError(f"masked input has {m.shape[0]} rows, expected {n_nodes}")
    h, k_sub, depth = integration_grid(params, refine)
    n_lanes = len(masked_list)
    lengths = [m.shape[1] for m in masked_list]
    l_max = max(lengths)
    drive = np.zeros((l_max, n_nodes, n_lanes))
    for b, m in enumerate(masked_list):
        drive[: lengths[b], :, b] = m.T

    mode = _kernel_mode(quant)
    lane_rngs = None
    if mode == MODE_ADDITIVE:
        if rng_indices is None:
            rng_indices = range(n_lanes)
        lane_rngs = [quant.rng_for(i) for i in rng_indices]

    x = np.zeros(n_lanes)
    hist = np.zeros((depth, n_lanes))
    ptr = 0
    q_delay = "delay" in quant.injection_points
    q_nl = "nonlinearity" in quant.injection_points
    q_state = "state" in quant.injection_points
    steps_per_frame = n_nodes * k_sub

    out = np.empty((l_max, n_nodes, n_lanes))
    for n in range(l_max):
        if mode == MODE_ADDITIVE:
            noise = _frame_noise(None, steps_per_frame, quant.level, n_lanes, lane_rngs)
        else:
            noise = _EMPTY_NOISE
        frame_states, ptr = run_frame(
            drive[n], x, hist, ptr, k_sub, h,
            params.tau, params.beta, params.phi0, params.rho,
            mode, q_delay, q_nl, q_state, quant.level, noise,
        )
        out[n] = frame_states
    results = []
    for b, n_frames in enumerate(lengths):
        states = np.ascontiguousarray(out[:n_frames, :, b].T)
        if not np.isfinite(states).all():
            raise ValueError(f"reservoir dynamics diverged (non-finite state) with {params!r}")
        results.append(states)
    return results


def write_state_dump(path, states) -> None:
    """Binary dump of one utterance's state matrix (little-endian float64)."""
    states = as_matrix(states, "states")
    n, l = states.shape
    with open(path, "wb") as fh:
        fh.write(STATE_DUMP_MAGIC)
        fh.write(struct.pack("<III", STATE_DUMP_VERSION, n, l))
        fh.write(np.ascontiguousarray(states, dtype="<f8").tobytes())


def read_state_dump(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != STATE_DUMP_MAGIC:
            raise ValueError(f"not a state dump file (magic {magic!r})")
        version, n, l = struct.unpack("<III", fh.read(12))
        if version != STATE_DUMP_VERSION:
            raise ValueError(f"unsupported state dump version {version}")
        data = np.frombuffer(fh.read(8 * n * l), dtype="<f8")
    if data.size != n * l:
        raise ValueError("truncated state dump")
    return data.reshape(n, l).copy()
