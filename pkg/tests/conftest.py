import numpy as np
import pytest

from cpreject import Example, GaussianMixtureSpec


class FixedTau:
    """Random-source stand-in that always draws the same tie-break value."""

    def __init__(self, tau: float):
        self.tau = float(tau)

    def uniform(self) -> float:
        return self.tau

    def uniforms(self, n: int) -> np.ndarray:
        return np.full(int(n), self.tau)


def make_examples(rows):
    """Build examples from (features, label) tuples."""
    return [Example(np.asarray(obj, dtype=float), label) for obj, label in rows]


@pytest.fixture
def mixture_spec():
    return GaussianMixtureSpec.isotropic(dim=2, separation=2.0, prior1=0.5)
