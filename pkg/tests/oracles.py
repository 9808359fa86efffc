"""Closed-form references shared by the unit and acceptance suites."""

import numpy as np

GEN_4STATE = "1 0 1/7; 0 1 5/7"
GEN_3OUT = ("1 0 1/11; 0 1 01/11", "binary")


def matrix_4state(p):
    """Transition matrix of the 4-state rate-2/3 code in the column-stochastic layout ``pi = M pi``.

    Entry (2,4) reads ``p^3 - 2p^2 + 1`` so that column 4 sums to one.
    """
    q = 1 - p
    return np.array([
        [q**2 * (2 * p + 1), q**2, q**3, 0, 0],
        [p**2 * q, 0, p * q**2, p**3 - 2 * p**2 + 1, q**2],
        [p**2 * q, p * q, p * q**2, 0, 0],
        [p**2 * q, p * q, p * q**2, 0, 0],
        [p**3, p**2, p**2 * (3 - 2 * p), p**2 * (2 - p), p * (2 - p)],
    ])


# supports (1,0,0,0), (1,1,0,0), (1,0,0,1), (1,0,1,0), (1,1,1,1) as state bitmasks
SUPPORTS_4STATE = [0b0001, 0b0011, 0b1001, 0b0101, 0b1111]


def closed_form_3out(p):
    den = p**6 - 4 * p**5 + 6 * p**4 - 6 * p**3 + 5 * p**2 - 2 * p + 1
    f12 = p * (p**5 - 4 * p**4 + 6 * p**3 - 5 * p**2 + 2 * p + 1) / den
    f3 = p**2 * (p**2 - 4 * p + 4) / den
    return np.array([f12, f12, f3])
