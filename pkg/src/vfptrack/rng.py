"""Deterministic named RNG substreams derived from one master seed.

Every source of randomness (data generation, parameter init per component,
pair sampling) pulls from its own named stream, so ablations that change
one component leave the draws of every other component untouched.
"""

import zlib

import numpy as np


def substream(seed, name):
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]))
