"""Finite-difference gradient checking shared across the test suite."""

from __future__ import annotations

from typing import Callable, List, Sequence

import numpy as np

from consultrank import tensor as T


def finite_diff_check(
    build: Callable[[], "T.Tensor"],
    leaves: Sequence["T.Tensor"],
    rng: np.random.Generator,
    rel_tol: float = 1e-3,
    step: float = 1e-5,
    max_coords: int = 12,
) -> float:
    """Compare analytic gradients of a scalar-valued graph against central
    differences.

    `build` must rerun the full forward pass from the current leaf values.
    Returns the worst relative error seen; raises AssertionError past
    rel_tol.  For large leaves a random coordinate subset is probed.
    """
    loss = build()
    T.backward(loss)
    worst = 0.0
    for leaf in leaves:
        assert leaf.grad is not None, "tracked leaf received no gradient"
        grad = leaf.grad.copy()
        flat = leaf.data.reshape(-1)
        n = flat.size
        coords: List[int] = list(range(n)) if n <= max_coords else sorted(
            rng.choice(n, size=max_coords, replace=False).tolist()
        )
        for i in coords:
            orig = flat[i]
            flat[i] = orig + step
            up = float(build().data)
            flat[i] = orig - step
            down = float(build().data)
            flat[i] = orig
            numeric = (up - down) / (2.0 * step)
            analytic = grad.reshape(-1)[i]
            denom = max(1.0, abs(numeric), abs(analytic))
            err = abs(numeric - analytic) / denom
            worst = max(worst, err)
            assert err < rel_tol, (
                f"gradient mismatch at coord {i}: analytic {analytic:.8g} "
                f"vs numeric {numeric:.8g} (rel err {err:.3g})"
            )
    T.zero_grads(leaves)
    return worst


def tensor_op_trials(rng: np.random.Generator):
    """One randomized scalar-valued graph per op family, as (name, build,
    leaves) triples ready for finite_diff_check."""

    def leaf(*shape):
        return T.Tensor(rng.uniform(-1.0, 1.0, size=shape), requires_grad=True)

    a, b = leaf(3, 4), leaf(4, 2)
    x4, w43 = leaf(4), leaf(4, 3)
    m34, v4 = leaf(3, 4), leaf(4)
    s5, t5 = leaf(5), leaf(5)
    th6 = leaf(6)
    sm7 = leaf(7)
    nl5 = leaf(5)
    table, wvec = leaf(6, 4), leaf(4)
    r1, r2, r3, w42 = leaf(4), leaf(4), leaf(4), leaf(4, 2)
    d1, d2 = leaf(6), leaf(6)
    u5, q5 = leaf(5), leaf(5)
    pk6 = leaf(6)
    factor = float(rng.uniform(0.5, 2.0))
    nll_pos = int(rng.integers(0, 5))
    pick_pos = int(rng.integers(0, 6))
    lookup_idx = [0, 2, 2, 5]

    return [
        ("matmul 2d@2d", lambda: T.l2_norm_sq(T.matmul(a, b)), [a, b]),
        ("matmul 1d@2d", lambda: T.l2_norm_sq(T.tanh(T.matmul(x4, w43))), [x4, w43]),
        ("matmul 2d@1d", lambda: T.nll_index(T.matmul(m34, v4), 1), [m34, v4]),
        ("add+scale", lambda: T.l2_norm_sq(T.add(T.scale(s5, factor), t5)), [s5, t5]),
        ("sub", lambda: T.l2_norm_sq(T.sub(u5, q5)), [u5, q5]),
        ("tanh", lambda: T.l2_norm_sq(T.tanh(th6)), [th6]),
        ("softmax+pick", lambda: T.pick(T.softmax(sm7), 3), [sm7]),
        ("nll_index", lambda: T.nll_index(nl5, nll_pos), [nl5]),
        (
            "embedding+mean_pool",
            lambda: T.dot(T.mean_pool(T.embedding_lookup(table, lookup_idx)), wvec),
            [table, wvec],
        ),
        (
            "concat+matmul",
            lambda: T.l2_norm_sq(T.matmul(T.concat([r1, r2, r3]), w42)),
            [r1, r2, r3, w42],
        ),
        ("dot", lambda: T.dot(d1, d2), [d1, d2]),
        (
            "transpose+row",
            lambda: T.l2_norm_sq(T.row(T.transpose(T.matmul(a, b)), 1)),
            [a, b],
        ),
        (
            "add_bias",
            lambda: T.l2_norm_sq(T.mean_pool(T.tanh(T.add_bias(m34, v4)))),
            [m34, v4],
        ),
        ("pick", lambda: T.pick(T.tanh(pk6), pick_pos), [pk6]),
        ("l2_norm_sq", lambda: T.l2_norm_sq(s5), [s5]),
        ("reused leaf", lambda: T.l2_norm_sq(T.add(t5, t5)), [t5]),
    ]
