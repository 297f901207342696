"""Seeded, splittable random number handles.

Every stochastic routine in this package draws through an :class:`RngHandle`
(or a bare ``numpy.random.Generator``).  A handle is identified by a 64-bit
seed plus an unsigned stream id; handles with distinct stream ids yield
independent Philox streams, so parallel units (equations, time steps,
replications) can draw without coordination.  The same (seed, stream, call
sequence) always reproduces the same variates bit for bit.
"""

from __future__ import annotations

import numpy as np


class RngHandle:
    """A reproducible random stream keyed by (seed, stream_id).

    Parameters
    ----------
    seed : int
        Base seed, interpreted as an unsigned 64-bit integer.
    stream_id : int, optional
        Index of the independent substream (default 0).
    """

    __slots__ = ("seed", "stream_id", "_gen")

    def __init__(self, seed: int, stream_id: int = 0):
        if seed < 0 or stream_id < 0:
            raise ValueError("seed and stream_id must be nonnegative")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self._gen = None

    @property
    def gen(self) -> np.random.Generator:
        """The live counter-based generator backing this handle."""
        if self._gen is None:
            ss = np.random.SeedSequence(entropy=self.seed,
                                        spawn_key=(self.stream_id,))
            self._gen = np.random.Generator(np.random.Philox(ss))
        return self._gen

    def substream(self, stream_id: int) -> "RngHandle":
        """Fresh handle on a different stream of the same seed."""
        return RngHandle(self.seed, stream_id)

    def split(self, n: int, base: int = 1) -> list["RngHandle"]:
        """n handles on consecutive stream ids starting at stream_id+base."""
        return [RngHandle(self.seed, self.stream_id + base + i) for i in range(n)]

    def __repr__(self) -> str:  # pragma: no cover
        return f"RngHandle(seed={self.seed}, stream_id={self.stream_id})"


def as_generator(rng) -> np.random.Generator:
    """Accept an RngHandle, Generator or integer seed; return a Generator."""
    if isinstance(rng, RngHandle):
        return rng.gen
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RngHandle(int(rng)).gen
    raise TypeError(f"cannot interpret {type(rng).__name__} as a random source")
