"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class LindstedtError(Exception):
    """Base class; every error carries a machine-readable ``info`` dict."""

    kind = "error"

    def __init__(self, message: str, **info):
        super().__init__(message)
        self.info = info

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "message": str(self)}
        for key, val in self.info.items():
            out[key] = _jsonable(val)
        return out


class ShapeError(LindstedtError, ValueError):
    kind = "domain_shape"


class ConsistencyError(LindstedtError):
    kind = "internal_consistency"


class SingularJetError(LindstedtError, ZeroDivisionError):
    kind = "singular_jet"


class NearResonanceError(LindstedtError):
    kind = "near_resonance"


class DiophantineError(LindstedtError):
    kind = "diophantine"


class DegenerateError(LindstedtError):
    """Degenerate embedding, frame, or spectrum."""

    kind = "degenerate"


class SeedError(LindstedtError):
    kind = "bad_seed"


class ObstructionError(LindstedtError):
    """An average that no free unknown can absorb did not vanish."""

    kind = "obstruction"


class HistoryError(LindstedtError):
    kind = "insufficient_history"


class ConvergenceError(LindstedtError):
    kind = "no_convergence"


class ManifestError(LindstedtError):
    kind = "manifest"


def _jsonable(val):
    try:
        import numpy as np
    except ImportError:  # pragma: no cover
        np = None
    if np is not None and isinstance(val, np.ndarray):
        return val.tolist()
    if np is not None and isinstance(val, np.generic):
        return val.item()
    if isinstance(val, (list, tuple)):
        return [_jsonable(v) for v in val]
    if isinstance(val, complex):
        return [val.real, val.imag]
    return val
