import numpy as np
import pytest

from steertext.corpus import StopWordList, Tokenizer, Vocabulary
from steertext.embedspace import EmbeddingTable


def make_table(matrix: np.ndarray, words=None) -> EmbeddingTable:
    """Unit-normalize rows and wrap them as an embedding table."""
    matrix = np.asarray(matrix, dtype=np.float64)
    matrix = matrix / np.linalg.norm(matrix, axis=1, keepdims=True)
    words = words or [f"w{i}" for i in range(matrix.shape[0])]
    return EmbeddingTable(
        dim=matrix.shape[1],
        words=list(words),
        vocab={w: i for i, w in enumerate(words)},
        matrix=matrix,
    )


def random_table(n: int, d: int, seed: int = 0) -> EmbeddingTable:
    rng = np.random.default_rng(seed)
    return make_table(rng.normal(size=(n, d)))


def gradcheck(loss_fn, store, probes_per_param: int = 6,
              eps=(1e-4, 1e-5, 1e-6), floor: float = 1e-7,
              seed: int = 0) -> float:
    """Compare analytic gradients with central differences.

    Central differences carry two error terms pulling in opposite directions:
    O(eps^2) truncation on high-curvature coordinates and O(ulp/eps) round-off
    on tiny-gradient ones. No single step size suits both, so each probe is
    scored by its best epsilon. Probes where both estimates fall below `floor`
    are treated as agreeing; at that magnitude the quotient is round-off.
    Returns the worst per-probe relative error.
    """
    if isinstance(eps, float):
        eps = (eps,)
    g, loss = loss_fn()
    store.zero_grads()
    g.backward(loss)
    analytic = {k: v.copy() for k, v in store.grads.items()}
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name in store.names():
        flat = store.params[name].reshape(-1)
        for _ in range(min(probes_per_param, flat.size)):
            i = int(rng.integers(flat.size))
            old = flat[i]
            a = analytic.get(name, np.zeros_like(store.params[name])).reshape(-1)[i]
            best = np.inf
            skip = False
            for e in eps:
                flat[i] = old + e
                _, lp = loss_fn()
                flat[i] = old - e
                _, lm = loss_fn()
                flat[i] = old
                fd = (lp.value - lm.value) / (2 * e)
                m = max(abs(fd), abs(a))
                if m < floor:
                    skip = True
                    break
                best = min(best, abs(fd - a) / m)
            if not skip:
                worst = max(worst, best)
    return worst


@pytest.fixture(scope="session")
def stops() -> StopWordList:
    return StopWordList.default()


@pytest.fixture(scope="session")
def tiny_vocab() -> Vocabulary:
    return Vocabulary(["the", "dog", "ran", "cat", "sun", "moon", ".", "a",
                       "bird", "flew"])


@pytest.fixture(scope="session")
def tiny_tokenizer(tiny_vocab) -> Tokenizer:
    return Tokenizer(tiny_vocab)
