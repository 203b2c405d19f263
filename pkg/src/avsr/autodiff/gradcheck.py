"""Central finite-difference gradient checking."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..errors import EvaluationError, NumericalError
from .ops import record_kinks
from .tensor import Tensor, backward, no_grad


@dataclass
class GradCheckReport:
    errors: dict[str, float]
    tol: float
    probes: int
    worst: str | None = field(default=None)
    skipped: int = 0  # probes rejected for straddling a relu kink
    coverage: dict[str, tuple[int, int]] = field(default_factory=dict)  # name -> (probed, size)

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error < self.tol

    def summary(self) -> str:
        state = "PASS" if self.passed else "FAIL"
        return (f"{state} max_rel_err={self.max_error:.3e} worst={self.worst} "
                f"probes={self.probes} kinked={self.skipped}")


def _call(fn: Callable[[], Tensor]) -> Tensor:
    try:
        return fn()
    except EvaluationError:
        raise
    except NumericalError as exc:
        raise EvaluationError(f"gradient check: function evaluation failed: {exc}") from exc


def _evaluate(fn: Callable[[], Tensor]) -> tuple[float, list[np.ndarray]]:
    with no_grad(), record_kinks() as masks:
        out = _call(fn)
    value = out.item()
    if not np.isfinite(value):
        raise EvaluationError("gradient check: function returned a non-finite value")
    return value, masks


def _same_side(a: list[np.ndarray], b: list[np.ndarray]) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def _central(fn, flat: np.ndarray, c: int, eps: float, screen: bool) -> float | None:
    """Central difference at one coordinate; None if the probe straddles a relu kink."""
    orig = flat[c]
    flat[c] = orig + eps
    fp, kp = _evaluate(fn)
    flat[c] = orig - eps
    fm, km = _evaluate(fn)
    flat[c] = orig
    if screen and not _same_side(kp, km):
        return None
    return (fp - fm) / (2 * eps)


def _rel_error(a: np.ndarray, n: np.ndarray) -> float:
    denom = max(np.abs(a).max(initial=0.0), np.abs(n).max(initial=0.0), 1e-8)
    return float(np.abs(a - n).max(initial=0.0) / denom)


def _backprop(fn, params) -> None:
    for p in params:
        p.grad = None
    loss = _call(fn)
    if not np.isfinite(loss.item()):
        raise EvaluationError("gradient check: function returned a non-finite value")
    backward(loss)


def grad_check(fn: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-4,
               tol: float = 1e-4, probes: int = 32, seed: int = 0,
               names: Sequence[str] | None = None, screen_kinks: bool = True) -> GradCheckReport:
    """Compare backprop gradients of ``fn()`` against central differences.

    ``probes`` coordinates are drawn per parameter (all of them when the
    parameter is smaller). The per-parameter error is
    ``max|a - n| / max(max|a|, max|n|, 1e-8)`` over the probed coordinates.
    With ``screen_kinks`` a coordinate whose +eps and -eps evaluations put
    some relu on different sides of zero is replaced by the next candidate.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    names = list(names) if names is not None else [p.name or f"param{i}" for i, p in enumerate(params)]
    _backprop(fn, params)
    rng = np.random.default_rng(seed)
    errors: dict[str, float] = {}
    coverage: dict[str, tuple[int, int]] = {}
    total = skipped = 0
    for name, p in zip(names, params):
        analytic = (np.zeros(p.shape) if p.grad is None else p.grad).reshape(-1)
        flat = p.data.reshape(-1)
        want = min(probes, flat.size)
        a, num = [], []
        for c in rng.permutation(flat.size):
            if len(a) == want:
                break
            n = _central(fn, flat, int(c), eps, screen_kinks)
            if n is None:
                skipped += 1
                continue
            a.append(analytic[c])
            num.append(n)
        errors[name] = _rel_error(np.array(a), np.array(num))
        coverage[name] = (len(a), flat.size)
        total += len(a)
    worst = max(errors, key=errors.get) if errors else None
    return GradCheckReport(errors, tol, total, worst, skipped, coverage)


def grad_check_sampled(fn: Callable[[], Tensor], named_params: Sequence[tuple[str, Tensor]],
                       coords: int = 64, eps: float = 1e-4, tol: float = 1e-4,
                       seed: int = 0, screen_kinks: bool = True) -> GradCheckReport:
    """Probe ``coords`` coordinates drawn uniformly across a whole parameter set.

    Errors are grouped by parameter name using the same relative measure as
    :func:`grad_check`; kinked probes are replaced the same way.
    """
    params = [p for _, p in named_params]
    _backprop(fn, params)
    sizes = np.array([p.size for p in params])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    rng = np.random.default_rng(seed)
    found: dict[int, tuple[list[float], list[float]]] = {}
    done = skipped = 0
    for g in rng.permutation(int(sizes.sum())):
        if done == coords:
            break
        i = int(np.searchsorted(offsets, g, side="right") - 1)
        p = params[i]
        c = int(g - offsets[i])
        n = _central(fn, p.data.reshape(-1), c, eps, screen_kinks)
        if n is None:
            skipped += 1
            continue
        a = 0.0 if p.grad is None else p.grad.reshape(-1)[c]
        found.setdefault(i, ([], []))
        found[i][0].append(a)
        found[i][1].append(n)
        done += 1
    errors = {named_params[i][0]: _rel_error(np.array(a), np.array(n)) for i, (a, n) in found.items()}
    worst = max(errors, key=errors.get) if errors else None
    return GradCheckReport(errors, tol, done, worst, skipped)
