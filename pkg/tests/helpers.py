"""Shared test scaffolding: expected projector outputs on polynomial inputs."""

import numpy as np

from vemix import poly


def projector_targets(k: int, h: float, C: np.ndarray) -> dict[str, np.ndarray]:
    """What each projector must return on the DoFs of the polynomials in the columns of C."""
    G = poly.vector_grad_matrix(k, h) @ C
    return {
        "divergence": poly.vector_div_matrix(k, h) @ C,
        "nabla_k": C,
        "eps_k": C,
        "zero_k": C,
        "zero_km1_grad": G,
        "zero_km1_eps": poly.sym_matrix(k - 1) @ G,
    }


def relative_error(out: np.ndarray, target: np.ndarray) -> float:
    """Worst column-wise relative coefficient error in the max norm."""
    scale = np.abs(target).max(axis=0)
    return float((np.abs(out - target).max(axis=0) / scale).max())
