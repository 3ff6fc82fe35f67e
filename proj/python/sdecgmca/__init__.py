"""Joint deconvolution and sparse blind source separation on HEALPix maps."""

from ._core import *  # noqa: F401,F403
from ._core import __doc__  # noqa: F401


def aligned(A_star, A, S):
    """Estimate (A, S) permuted and sign-corrected to match A_star."""
    import numpy as np

    perm, signs = align(A_star, A)  # noqa: F405
    A = np.asarray(A)
    S = np.asarray(S)
    A2 = np.stack([s * A[:, p] for p, s in zip(perm, signs)], axis=1)
    S2 = np.stack([s * S[p] for p, s in zip(perm, signs)], axis=0)
    return A2, S2
