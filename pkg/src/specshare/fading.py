"""Block-fading channel model for one PU link and one SU link.

Four independent Rayleigh channels are involved:

========  ==================  ===========
symbol    link                variance key
========  ==================  ===========
``f``     PU-Tx -> PU-Rx      ``var_f``
``e``     SU-Tx -> SU-Rx      ``var_e``
``g``     SU-Tx -> PU-Rx      ``var_g``
``o``     PU-Tx -> SU-Rx      ``var_o``
========  ==================  ===========

Complex gains are drawn as circularly symmetric Gaussians and reduced to
power gains right away. The only complex-valued quantity kept is
``cross_mag2 = |h_p^H h_s|^2`` with ``h_p = [f~, o~]`` and ``h_s = [g~, e~]``,
needed by the fixed-policy MAC bounds in :mod:`specshare.capacity`.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ParameterError, StateError

__all__ = [
    "ChannelDistribution",
    "FadingState",
    "FadingEnsemble",
    "sample_ensemble",
    "populate_effective_gains",
    "save_ensemble",
    "load_ensemble",
    "CHUNK_SIZE",
]

# States per RNG stream. Fixed so that any partition of the work over
# chunks reproduces the same ensemble.
CHUNK_SIZE = 8192


@dataclass(frozen=True)
class ChannelDistribution:
    """Variances of the four CSCG channel gains."""

    var_f: float = 1.0
    var_e: float = 1.0
    var_g: float = 0.5
    var_o: float = 0.01

    def __post_init__(self):
        for name in ("var_f", "var_e", "var_g", "var_o"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ParameterError(f"{name} must be a finite nonnegative real, got {v!r}")
        if self.var_f == 0 or self.var_e == 0:
            raise ParameterError("var_f and var_e must be positive")

    def as_tuple(self):
        return (self.var_f, self.var_e, self.var_g, self.var_o)


@dataclass(frozen=True)
class FadingState:
    """One joint fading state. ``q`` and ``h`` are filled in by the PU policy."""

    f: float
    e: float
    g: float
    o: float
    cross_mag2: float = 0.0
    q: float = 0.0
    h: Optional[float] = None

    def __post_init__(self):
        for name in ("f", "e", "g", "o", "cross_mag2", "q"):
            v = getattr(self, name)
            if not v >= 0:
                raise ParameterError(f"{name} must be nonnegative, got {v!r}")
        if self.h is None:
            object.__setattr__(self, "h", self.e / (1.0 + self.o * self.q))


@dataclass
class FadingEnsemble:
    """Struct-of-arrays collection of fading states.

    Expectations over the fading distribution are (weighted) sample means
    over the states; see :meth:`mean`. ``weights`` is ``None`` for i.i.d.
    Monte Carlo draws and a probability vector for finite-support
    distributions.
    """

    f: np.ndarray
    e: np.ndarray
    g: np.ndarray
    o: np.ndarray
    cross_mag2: np.ndarray
    q: np.ndarray
    h: np.ndarray
    seed: Optional[int] = None
    dist: Optional[ChannelDistribution] = None
    weights: Optional[np.ndarray] = None
    q_populated: bool = False
    _fingerprint: Optional[str] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        arrays = {}
        for name in ("f", "e", "g", "o", "cross_mag2", "q", "h"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if arr.ndim != 1:
                raise ParameterError(f"{name} must be one-dimensional")
            arrays[name] = arr
            setattr(self, name, arr)
        n = arrays["f"].size
        if n < 1:
            raise ParameterError("an ensemble needs at least one state")
        if any(a.size != n for a in arrays.values()):
            raise ParameterError("all per-state arrays must have the same length")
        for name in ("f", "e", "g", "o", "cross_mag2", "q"):
            if np.any(~(arrays[name] >= 0)):
                raise ParameterError(f"{name} must be nonnegative")
        if self.weights is not None:
            w = np.ascontiguousarray(self.weights, dtype=np.float64)
            if w.shape != (n,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise ParameterError("weights must be a probability vector over the states")
            self.weights = w

    @classmethod
    def from_states(cls, states, weights=None, **kwargs) -> "FadingEnsemble":
        states = list(states)
        cols = {k: np.array([getattr(s, k) for s in states], dtype=np.float64)
                for k in ("f", "e", "g", "o", "cross_mag2", "q", "h")}
        return cls(**cols, weights=weights, **kwargs)

    @classmethod
    def from_gains(cls, f, e, g, o, cross_mag2=None, q=None, weights=None, **kwargs):
        """Build an ensemble from power-gain arrays.

        If ``q`` is given, the PU powers count as populated and ``h`` is
        derived from it.
        """
        f = np.atleast_1d(np.asarray(f, dtype=np.float64))
        e, g, o = (np.broadcast_to(np.asarray(x, dtype=np.float64), f.shape).copy()
                   for x in (e, g, o))
        if cross_mag2 is None:
            cross_mag2 = np.zeros_like(f)
        populated = q is not None
        q = np.zeros_like(f) if q is None else np.broadcast_to(
            np.asarray(q, dtype=np.float64), f.shape).copy()
        h = e / (1.0 + o * q)
        return cls(f=f, e=e, g=g, o=o, cross_mag2=np.broadcast_to(cross_mag2, f.shape).copy(),
                   q=q, h=h, weights=weights, q_populated=populated, **kwargs)

    @property
    def n(self) -> int:
        return int(self.f.size)

    def __len__(self):
        return self.n

    def __getitem__(self, i) -> FadingState:
        return FadingState(f=float(self.f[i]), e=float(self.e[i]), g=float(self.g[i]),
                           o=float(self.o[i]), cross_mag2=float(self.cross_mag2[i]),
                           q=float(self.q[i]), h=float(self.h[i]))

    @property
    def states(self):
        return [self[i] for i in range(self.n)]

    @property
    def signal(self) -> np.ndarray:
        """Received PU signal power ``f*q`` per state."""
        return self.f * self.q

    def mean(self, x) -> float:
        """Expectation of a per-state quantity over the ensemble."""
        x = np.asarray(x, dtype=np.float64)
        if self.weights is None:
            return float(np.mean(x))
        # elementwise product + pairwise sum keeps the result independent of BLAS threading
        return float(np.sum(self.weights * x))

    def prob(self) -> np.ndarray:
        """Probability mass of each state."""
        if self.weights is None:
            return np.full(self.n, 1.0 / self.n)
        return self.weights

    def fingerprint(self) -> str:
        """Digest of the gains, PU powers and weights; identifies the ensemble."""
        if self._fingerprint is None:
            digest = hashlib.sha256()
            for arr in (self.f, self.e, self.g, self.o, self.cross_mag2, self.q):
                digest.update(arr.tobytes())
            if self.weights is not None:
                digest.update(self.weights.tobytes())
            self._fingerprint = digest.hexdigest()[:16]
        return self._fingerprint

    def with_pu_power(self, q) -> "FadingEnsemble":
        q = np.broadcast_to(np.asarray(q, dtype=np.float64), self.f.shape).copy()
        ens = replace(self, q=q, q_populated=True, _fingerprint=None)
        return populate_effective_gains(ens)


def _chunk_generator(seed: int, chunk: int) -> np.random.Generator:
    # Philox is counter-based; one independent stream per (seed, chunk).
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(chunk,))))


def _sample_chunk(dist: ChannelDistribution, seed: int, chunk: int, size: int):
    z = _chunk_generator(seed, chunk).standard_normal((size, 8))
    scale = np.sqrt(np.repeat(np.array(dist.as_tuple()) / 2.0, 2))
    z *= scale
    f_c = z[:, 0] + 1j * z[:, 1]
    e_c = z[:, 2] + 1j * z[:, 3]
    g_c = z[:, 4] + 1j * z[:, 5]
    o_c = z[:, 6] + 1j * z[:, 7]
    cross = np.conj(f_c) * g_c + np.conj(o_c) * e_c
    return (np.abs(f_c) ** 2, np.abs(e_c) ** 2, np.abs(g_c) ** 2, np.abs(o_c) ** 2,
            np.abs(cross) ** 2)


def sample_ensemble(dist: ChannelDistribution, n: int, seed: int) -> FadingEnsemble:
    """Draw ``n`` i.i.d. joint fading states.

    Each power gain is ``|CN(0, var)|^2``, i.e. exponential with mean
    ``var``. The draw is a pure function of ``(dist, n, seed)``: states are
    generated in chunks of :data:`CHUNK_SIZE`, each from its own Philox
    stream keyed by the seed and the chunk index.

    Parameters
    ----------
    dist : ChannelDistribution
        Channel variances.
    n : int
        Number of states, at least 1.
    seed : int
        Nonnegative integer seed.

    Returns
    -------
    FadingEnsemble
        Ensemble with ``q = 0`` and ``h = e`` (PU powers not yet applied).
    """
    if not isinstance(dist, ChannelDistribution):
        raise ParameterError("dist must be a ChannelDistribution")
    n = int(n)
    if n < 1:
        raise ParameterError("n must be at least 1")
    if int(seed) < 0:
        raise ParameterError("seed must be a nonnegative integer")
    seed = int(seed)
    parts = [_sample_chunk(dist, seed, k, min(CHUNK_SIZE, n - start))
             for k, start in enumerate(range(0, n, CHUNK_SIZE))]
    f, e, g, o, cross = (np.concatenate(cols) for cols in zip(*parts))
    return FadingEnsemble(f=f, e=e, g=g, o=o, cross_mag2=cross, q=np.zeros(n), h=e.copy(),
                          seed=seed, dist=dist)


def populate_effective_gains(ens: FadingEnsemble) -> FadingEnsemble:
    """Return a copy with ``h = e / (1 + o*q)`` on every state."""
    if not ens.q_populated:
        raise StateError("PU transmit powers are not populated; apply a PU policy first")
    return replace(ens, h=ens.e / (1.0 + ens.o * ens.q), _fingerprint=None)


_COLUMNS = ("f", "e", "g", "o", "cross_mag2")


def save_ensemble(ens: FadingEnsemble, path) -> None:
    """Write the gains as comma-separated columns, one state per row.

    The first line is a ``#`` header carrying the distribution, ``n`` and
    ``seed``; values use 17 significant digits so a round trip is exact.
    """
    dist = ens.dist
    meta = [f"n={ens.n}", f"seed={'' if ens.seed is None else ens.seed}"]
    if dist is not None:
        meta = [f"var_f={dist.var_f!r}", f"var_e={dist.var_e!r}",
                f"var_g={dist.var_g!r}", f"var_o={dist.var_o!r}"] + meta
    data = np.column_stack([getattr(ens, c) for c in _COLUMNS])
    with open(Path(path), "w", encoding="ascii", newline="\n") as fh:
        fh.write("# " + " ".join(meta) + "\n")
        fh.write(",".join(_COLUMNS) + "\n")
        np.savetxt(fh, data, fmt="%.17g", delimiter=",")


def load_ensemble(path) -> FadingEnsemble:
    """Read a file written by :func:`save_ensemble`."""
    path = Path(path)
    with open(path, encoding="ascii") as fh:
        first = fh.readline()
        header = fh.readline().strip()
        if not first.startswith("#") or header != ",".join(_COLUMNS):
            raise ParameterError(f"{path}: not an ensemble file")
        meta = dict(tok.split("=", 1) for tok in first[1:].split())
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape[1] != len(_COLUMNS) or data.shape[0] != int(meta.get("n", data.shape[0])):
        raise ParameterError(f"{path}: malformed ensemble body")
    dist = None
    if "var_f" in meta:
        dist = ChannelDistribution(*(float(meta[k]) for k in ("var_f", "var_e", "var_g", "var_o")))
    seed = int(meta["seed"]) if meta.get("seed") else None
    f, e, g, o, cross = data.T
    return FadingEnsemble(f=f.copy(), e=e.copy(), g=g.copy(), o=o.copy(), cross_mag2=cross.copy(),
                          q=np.zeros(len(f)), h=e.copy(), seed=seed, dist=dist)
