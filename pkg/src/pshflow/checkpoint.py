"""Binary checkpoints of flow states.

Layout, little-endian: magic ``b"PSHF"``, version u32, n u32, N u32, t f64,
dt f64, then the ``N^(2n)`` values of ``u`` as f64 in row-major point order.
``step_count`` and ``rejected_count`` are not stored.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"PSHF"
VERSION = 1
_HEADER = struct.Struct("<4sIIIdd")


def write_checkpoint(path, n: int, N: int, t: float, dt: float, u: np.ndarray) -> None:
    u = np.asarray(u, dtype="<f8")
    if u.shape != (N,) * (2 * n):
        raise ValueError(f"u of shape {u.shape} does not match n={n}, N={N}")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, n, N, float(t), float(dt)))
        fh.write(np.ascontiguousarray(u).tobytes(order="C"))
    tmp.replace(path)


def read_checkpoint(path) -> dict:
    """Returns ``{"n", "N", "t", "dt", "u"}``; raises ``ValueError`` on a malformed file."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated checkpoint header")
    magic, version, n, N, t, dt = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    count = N ** (2 * n)
    body = data[_HEADER.size:]
    if len(body) != 8 * count:
        raise ValueError(f"{path}: expected {count} values, found {len(body) // 8}")
    u = np.frombuffer(body, dtype="<f8").astype(float).reshape((N,) * (2 * n))
    return {"n": n, "N": N, "t": t, "dt": dt, "u": u}


def save_state(path, problem, state) -> None:
    write_checkpoint(path, problem.n, problem.grid.N, state.t, state.dt, state.u)


def load_state(path, problem, ctrl=None):
    """Rebuild a :class:`~pshflow.flow.FlowState` from a checkpoint for ``problem``."""
    from .flow import StepControl, initial_state

    ck = read_checkpoint(path)
    if ck["n"] != problem.n or ck["N"] != problem.grid.N:
        raise ValueError(f"{path}: checkpoint is n={ck['n']}, N={ck['N']} but problem is "
                         f"n={problem.n}, N={problem.grid.N}")
    return initial_state(problem, ctrl or StepControl(), u0=ck["u"], t0=ck["t"], dt=ck["dt"])
