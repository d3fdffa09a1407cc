"""Counter-based random streams for reproducible parallel ensembles.

Every random draw in the package is addressed, never sequenced: the words
backing one draw are a pure function of ``(seed, component, step, slot)``
where *component* namespaces independent consumers (engine updates, initial
clouds, certification pairs, ...), *step* is the iteration index and *slot*
is the chain / pair / sample index.  Two runs that touch the same addresses
see identical words no matter how the work is partitioned across workers,
which is what makes ensemble output independent of thread count.

The backing generator is Philox (numpy's counter-based bit generator).  The
256-bit counter is laid out as ``step << 192 | component << 128 | block``
with the low 128 bits counting 4-word blocks inside the (step, component)
plane; the 128-bit Philox key carries the master seed.
"""

from __future__ import annotations

import numpy as np

# Component ids: independent consumers of randomness.  Streams with
# different component ids never overlap.
ENGINE = 0
INIT = 1
CERT_PAIRS = 2
CERT_XI = 3
NOISE_MC = 4
PSI_MC = 5
PROBLEM = 6

_WORDS_PER_BLOCK = 4  # Philox-4x64 emits 4 uint64 words per counter tick
_U53 = 2.0 ** -53

# Bound on |gaussian| for the noise families that must stay bounded; see
# bounded_gaussians_from_words.
NOISE_CLIP_SIGMA = 6.0


def _counter(component: int, step: int, block: int) -> int:
    if component < 0 or step < 0 or block < 0:
        raise ValueError("component, step and block must be nonnegative")
    return (int(step) << 192) | (int(component) << 128) | int(block)


def blocks_per_draw(n_words: int) -> int:
    """Blocks reserved per draw; each draw starts on its own block boundary."""
    return max(1, -(-int(n_words) // _WORDS_PER_BLOCK))


def raw_words(seed: int, component: int, step: int, start_block: int, n_words: int) -> np.ndarray:
    """Return ``n_words`` uint64 words at the given stream address."""
    bg = np.random.Philox(counter=_counter(component, step, start_block), key=int(seed))
    return bg.random_raw(int(n_words))


def draw_words(seed: int, component: int, step: int, slot: int, n_words: int) -> np.ndarray:
    """Words backing the single draw at ``(seed, component, step, slot)``."""
    bpd = blocks_per_draw(n_words)
    return raw_words(seed, component, step, slot * bpd, n_words)


def draw_words_batch(
    seed: int, component: int, step: int, slot0: int, n_slots: int, n_words: int
) -> np.ndarray:
    """Words for slots ``slot0 .. slot0+n_slots-1`` as an (n_slots, n_words) array.

    Row ``i`` is bit-identical to ``draw_words(..., slot0 + i, n_words)``, so a
    batch over any contiguous slot range can be recomputed slot by slot.
    """
    if n_slots == 0 or n_words == 0:
        return np.empty((n_slots, n_words), dtype=np.uint64)
    bpd = blocks_per_draw(n_words)
    padded = bpd * _WORDS_PER_BLOCK
    flat = raw_words(seed, component, step, slot0 * bpd, n_slots * padded)
    return flat.reshape(n_slots, padded)[:, :n_words]


def uniforms_from_words(words: np.ndarray) -> np.ndarray:
    """Map uint64 words to doubles in the open interval (0, 1)."""
    return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * _U53


def gaussians_from_words(words: np.ndarray) -> np.ndarray:
    """Standard normals via Box-Muller; consumes words pairwise along the last axis.

    Input length along the last axis must be even; output has the same shape.
    """
    if words.shape[-1] % 2:
        raise ValueError("gaussians_from_words needs an even number of words")
    u = uniforms_from_words(words)
    u1 = u[..., 0::2]
    u2 = u[..., 1::2]
    r = np.sqrt(-2.0 * np.log(u1))
    theta = (2.0 * np.pi) * u2
    out = np.empty_like(u)
    out[..., 0::2] = r * np.cos(theta)
    out[..., 1::2] = r * np.sin(theta)
    return out


def bounded_gaussians_from_words(words: np.ndarray) -> np.ndarray:
    """Standard normals clipped to ±NOISE_CLIP_SIGMA.

    Used by the perturbation families whose maps divide by ||a + xi||^2: the
    clip keeps the noise energy bounded (an event of probability ~2e-9 per
    draw) without disturbing any moment beyond the eighth decimal.
    """
    return np.clip(gaussians_from_words(words), -NOISE_CLIP_SIGMA, NOISE_CLIP_SIGMA)


def gaussian_words_needed(n_gaussians: int) -> int:
    """Words to reserve for ``n_gaussians`` normals (Box-Muller works in pairs)."""
    return 2 * -(-int(n_gaussians) // 2)
