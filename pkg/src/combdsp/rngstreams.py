"""Counter-based RNG stream derivation.

Every stochastic ingredient of a run draws from its own stream keyed by
(run seed, stream id), so adding channels or stages never perturbs the
realizations of other streams.
"""

import numpy as np

# Stream ids. Known sequences (header, CR pilots) use a fixed seed so they
# are identical across runs and channels.
TX_COMMON_PN = 30
TX_LINE_PN = 31
LO_COMMON_PN = 32
LO_LINE_PN = 33
AWGN_TX = 40
AWGN_RX = 41
ASE_BASE = 100  # + span index


def payload_stream(channel: int) -> int:
    return 10 + channel


def guard_stream(channel: int) -> int:
    return 20 + channel


_KNOWN_SEED = 0x5EED_C0DE


def stream_rng(seed: int, stream_id: int) -> np.random.Generator:
    """Independent generator for (run seed, stream id)."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(stream_id,)))


def known_sequence_rng(which: int) -> np.random.Generator:
    """Generator for run-independent known sequences (header, pilots)."""
    return np.random.default_rng(np.random.SeedSequence(entropy=_KNOWN_SEED, spawn_key=(which,)))
