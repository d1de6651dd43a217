"""Score functions over time-aware representations.

Both rules add no parameters of their own. ComplEx reads a length-``2k`` vector
as ``real || imaginary`` halves.
"""

from __future__ import annotations

import torch


def _t(x) -> torch.Tensor:
    return x if isinstance(x, torch.Tensor) else torch.as_tensor(x, dtype=torch.float64)


def distmult(h_s, h_r, h_o) -> torch.Tensor:
    """``sum_i h_s[i] * h_r[i] * h_o[i]`` along the last axis."""
    h_s, h_r, h_o = _t(h_s), _t(h_r), _t(h_o)
    if not (h_s.shape[-1] == h_r.shape[-1] == h_o.shape[-1]):
        raise ValueError(f"dimension mismatch: {h_s.shape[-1]}, {h_r.shape[-1]}, {h_o.shape[-1]}")
    return (h_s * h_r * h_o).sum(-1)


def _halves(x: torch.Tensor, name: str):
    if x.shape[-1] % 2:
        raise ValueError(f"complex scoring needs an even dimension, {name} has {x.shape[-1]}")
    k = x.shape[-1] // 2
    return x[..., :k], x[..., k:]


def complex_score(h_s, h_r, h_o) -> torch.Tensor:
    """``Re(<h_s, h_r, conj(h_o)>)``."""
    h_s, h_r, h_o = _t(h_s), _t(h_r), _t(h_o)
    if not (h_s.shape[-1] == h_r.shape[-1] == h_o.shape[-1]):
        raise ValueError(f"dimension mismatch: {h_s.shape[-1]}, {h_r.shape[-1]}, {h_o.shape[-1]}")
    sr, si = _halves(h_s, "h_s")
    rr, ri = _halves(h_r, "h_r")
    or_, oi = _halves(h_o, "h_o")
    return (sr * rr * or_ + si * rr * oi + sr * ri * oi - si * ri * or_).sum(-1)


def score_matrix(h_s: torch.Tensor, h_r: torch.Tensor, candidates: torch.Tensor, score_fn: str) -> torch.Tensor:
    """Scores of ``(batch, d)`` queries against ``(n, d)`` candidates -> ``(batch, n)``.

    Same values as applying the elementwise rule to every pair.
    """
    if score_fn == "distmult":
        return (h_s * h_r) @ candidates.T
    if score_fn == "complex":
        sr, si = _halves(h_s, "h_s")
        rr, ri = _halves(h_r, "h_r")
        cr, ci = _halves(candidates, "candidates")
        # Re((s*r) conj(c)) = Re(s*r) cr + Im(s*r) ci
        re = sr * rr - si * ri
        im = sr * ri + si * rr
        return re @ cr.T + im @ ci.T
    raise ValueError(f"unknown score function {score_fn!r}")


SCORE_FUNCTIONS = {"distmult": distmult, "complex": complex_score}
