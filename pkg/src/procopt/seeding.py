"""Derivation of independent sub-seeds from one master seed.

Every random stream in a run is keyed by ``(master, stream, index)`` and fed
through :class:`numpy.random.SeedSequence`, so the same master seed always
reproduces the same split, trees, network initialisation and exploration,
regardless of the order in which the streams are consumed.
"""

import numpy as np

# Stream identifiers. Append only; renumbering changes every derived seed.
SYNTH = 1
SPLIT = 2
FOREST = 3
CV = 4
AGENT = 5
TREE = 6


def derive_seed(master: int, stream: int, index: int = 0) -> int:
    """Return a 32-bit seed for ``index`` within ``stream`` of ``master``."""
    if master < 0 or stream < 0 or index < 0:
        raise ValueError("seed components must be non-negative")
    ss = np.random.SeedSequence([int(master), int(stream), int(index)])
    return int(ss.generate_state(1)[0])


def rng_for(master: int, stream: int, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, stream, index))
