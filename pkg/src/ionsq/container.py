"""Binary container for states and trajectory snapshots.

Layout: 8-byte little-endian unsigned header length, UTF-8 JSON header, then
raw little-endian float64 payload. State payloads interleave (re, im) pairs
in basis order; ensemble payloads store the arrays named in the header
back to back in C order.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import IonsqError
from .fockspace import BASIS_ORDER_TAG, SpaceSpec, SpinBosonState

FORMAT_STATE = "ionsq-state"
FORMAT_ENSEMBLE = "ionsq-ensemble"
CONTAINER_VERSION = 1


def _write(path, header: dict, payload: np.ndarray) -> None:
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(raw)))
        fh.write(raw)
        fh.write(np.ascontiguousarray(payload, dtype="<f8").tobytes())


def _read(path) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        payload = np.frombuffer(fh.read(), dtype="<f8")
    return header, payload


def save_state(path, state: SpinBosonState) -> None:
    header = {
        "format": FORMAT_STATE,
        "version": CONTAINER_VERSION,
        "basis_order": BASIS_ORDER_TAG,
        "n_ions": state.spec.n_ions,
        "n_max": state.spec.n_max,
        "mode_ids": list(state.spec.mode_ids),
    }
    interleaved = np.empty(2 * state.amplitudes.size)
    interleaved[0::2] = state.amplitudes.real
    interleaved[1::2] = state.amplitudes.imag
    _write(path, header, interleaved)


def load_state(path) -> SpinBosonState:
    header, payload = _read(path)
    if header.get("format") != FORMAT_STATE:
        raise IonsqError(f"{path}: not a state container")
    if header.get("basis_order") != BASIS_ORDER_TAG:
        raise IonsqError(f"{path}: incompatible basis ordering {header.get('basis_order')!r}")
    spec = SpaceSpec(header["n_ions"], header["n_max"], tuple(header["mode_ids"]))
    if payload.size != 2 * spec.dim:
        raise IonsqError(f"{path}: payload size {payload.size} != 2*dim {2 * spec.dim}")
    amps = payload[0::2] + 1j * payload[1::2]
    return SpinBosonState(spec, np.ascontiguousarray(amps))


def save_ensemble(path, spins: np.ndarray, bosons: np.ndarray, seed: int) -> None:
    """Snapshot of classical trajectories: spins (T, N, 3), bosons (T, slots) complex."""
    header = {
        "format": FORMAT_ENSEMBLE,
        "version": CONTAINER_VERSION,
        "n_traj": int(spins.shape[0]),
        "n_ions": int(spins.shape[1]),
        "n_slots": int(bosons.shape[1]),
        "seed": int(seed),
    }
    payload = np.concatenate(
        [spins.reshape(-1), bosons.real.reshape(-1), bosons.imag.reshape(-1)]
    )
    _write(path, header, payload)


def load_ensemble(path) -> tuple[dict, np.ndarray, np.ndarray]:
    header, payload = _read(path)
    if header.get("format") != FORMAT_ENSEMBLE:
        raise IonsqError(f"{path}: not an ensemble container")
    t, n, k = header["n_traj"], header["n_ions"], header["n_slots"]
    spins = payload[: 3 * t * n].reshape(t, n, 3).copy()
    rest = payload[3 * t * n:]
    bosons = (rest[: t * k] + 1j * rest[t * k:]).reshape(t, k)
    return header, spins, bosons
