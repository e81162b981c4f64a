"""Seeding helpers.

All randomness in the package flows through numpy's Philox counter-based
generator seeded via SeedSequence, so a single integer seed plus the
configuration fully determines every simulated stream.  Run manifests record
RNG_ALGORITHM so that archived results name the generator they used.
"""

from __future__ import annotations

from numpy.random import Generator, Philox, SeedSequence

RNG_ALGORITHM = "philox4x64 (numpy.random.Philox via SeedSequence)"


def rng_from_seed(seed: int | SeedSequence | Generator | None) -> Generator:
    """Build a Generator from an integer seed, a SeedSequence, or pass one through."""
    if isinstance(seed, Generator):
        return seed
    if isinstance(seed, SeedSequence):
        return Generator(Philox(seed))
    return Generator(Philox(SeedSequence(seed)))


def spawn_seeds(seed: int | SeedSequence | None, n: int) -> list[SeedSequence]:
    """Derive ``n`` independent child seeds (one per trial / component / chunk)."""
    if not isinstance(seed, SeedSequence):
        seed = SeedSequence(seed)
    return seed.spawn(n)
